// Command-line front end: qap {particle|string} <command> --config FILE, qap sweep --config FILE.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qap/cli_io.hpp"

namespace {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::filesystem::path resolve_config(const std::string& name) {
    std::filesystem::path p(name);
    if (p.is_relative() && !std::filesystem::exists(p)) {
        if (const char* dir = std::getenv("QAP_CONFIG_DIR")) {
            const auto candidate = std::filesystem::path(dir) / p;
            if (std::filesystem::exists(candidate)) return candidate;
        }
    }
    return p;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read config file '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<long long> parse_occupations(const std::string& text) {
    std::vector<long long> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw qap::ConfigError("occupations: '" + item + "' is not an integer", "occupations");
        }
    }
    return out;
}

struct Options {
    std::string config;
    std::string out;
    std::string format;
    int workers = 0;
    std::string occupations;
    bool occupations_given = false;
};

int execute(const std::string& system, const std::string& command, const Options& opt) {
    try {
        auto config = qap::parse_config(read_file(resolve_config(opt.config)));
        if (!system.empty()) config.system = system;
        config.command = command;
        if (!opt.format.empty()) config.output.format = opt.format;
        if (!opt.out.empty()) config.output.path = opt.out;
        if (opt.workers > 0) config.workers = opt.workers;
        if (opt.occupations_given) config.occupations = parse_occupations(opt.occupations);
        qap::validate_config(config);

        const auto text = qap::emit(qap::run(config), config.output.format);
        if (config.output.path.empty()) {
            std::cout << text;
        } else {
            std::ofstream out(config.output.path, std::ios::binary);
            if (!out) throw IoError("cannot write output file '" + config.output.path + "'");
            out << text;
            if (!out) throw IoError("failed while writing '" + config.output.path + "'");
        }
        return 0;
    } catch (const qap::ConfigError& e) {
        std::cerr << qap::error_object(e.kind(), e.what(), 2, &e);
        return 2;
    } catch (const qap::Error& e) {
        const int code = qap::exit_code_for(e);
        std::cerr << qap::error_object(e.kind(), e.what(), code);
        return code;
    } catch (const IoError& e) {
        std::cerr << qap::error_object("IoError", e.what(), 4);
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << qap::error_object("IoError", e.what(), 4);
        return 4;
    } catch (const std::exception& e) {
        std::cerr << qap::error_object("InternalError", e.what(), 3);
        return 3;
    }
}

void add_common(CLI::App* app, Options& opt) {
    app->add_option("--config", opt.config, "Run configuration (JSON); relative paths also searched in $QAP_CONFIG_DIR")
        ->required();
    app->add_option("--out", opt.out, "Output file (default: standard output)");
    app->add_option("--format", opt.format, "csv or json (default: csv for tables and sweeps, json otherwise)")
        ->check(CLI::IsMember({"csv", "json", "auto"}));
    app->add_option("--workers", opt.workers, "Concurrent sweep entries")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum action principle engine for the relativistic particle and the closed bosonic string"};
    app.require_subcommand(1);
    Options opt;
    std::string system, command;

    auto* particle = app.add_subcommand("particle", "Relativistic particle");
    particle->require_subcommand(1);
    for (const char* name : {"classical", "phase", "action", "stationary"}) {
        auto* sub = particle->add_subcommand(name);
        add_common(sub, opt);
        sub->callback([&, name] { system = "particle", command = name; });
    }

    auto* string = app.add_subcommand("string", "Closed bosonic string");
    string->require_subcommand(1);
    for (const char* name : {"action", "spectrum", "stationary"}) {
        auto* sub = string->add_subcommand(name);
        add_common(sub, opt);
        sub->add_option("--occupations", opt.occupations, "Comma-separated occupation numbers, ascending frequency")
            ->each([&](const std::string&) { opt.occupations_given = true; });
        sub->callback([&, name] { system = "string", command = name; });
    }

    auto* sweep = app.add_subcommand("sweep", "Parameter sweep described by the config's sweep block");
    add_common(sweep, opt);
    sweep->add_option("--occupations", opt.occupations, "Comma-separated occupation numbers")
        ->each([&](const std::string&) { opt.occupations_given = true; });
    sweep->callback([&] { command = "sweep"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return execute(system, command, opt);
}
