// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qap/qap.hpp"

using namespace qap;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

char buf[512];

template <class... A>
std::string fmt(const char* f, A... a) {
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

ParticleScenario particle(double mass, Vector p, double x0) {
    ParticleScenario s;
    s.dim_space = static_cast<int>(p.size());
    s.mass = mass;
    s.p_spatial = std::move(p);
    s.x0_final = x0;
    return s;
}

Vector random_vector(int n, double lo, double hi) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = oracle::uniform(lo, hi);
    return v;
}

StringScenario wavy(int M, int K, double gamma) {
    auto s = StringScenario::uniform(M, K, gamma, 1.0, 1.0, 0.0);
    const Vector sig = s.sigma();
    for (int j = 0; j < M; ++j) {
        s.N1(j) = 1.0 + 0.3 * std::cos(2 * sig(j)) + 0.05 * std::sin(6 * sig(j));
        s.N2(j) = 0.8 + 0.2 * std::sin(2 * sig(j));
        s.x0_final(j) = 1.0 + 0.5 * std::cos(2 * sig(j)) - 0.2 * std::sin(4 * sig(j));
    }
    return s;
}

Outcome particle_closed_form() {
    double worst = 0.0, worst_T = 0.0;
    for (int i = 0; i < 100; ++i) {
        Vector p = random_vector(3, -1.0, 1.0);
        p *= oracle::uniform(0.0, 5.0) / p.norm();
        const double x0 = 10.0 - oracle::uniform(0.0, 10.0);
        const auto s = particle(oracle::uniform(0.0, 5.0), p, x0);
        const auto r = stationary_particle(s);
        const double E = std::sqrt(s.mass * s.mass + s.p_spatial.squaredNorm());
        worst = std::max(worst, std::abs(r.lambda_star - E * x0) / (E * x0));
        worst_T = std::max(worst_T, std::abs(r.T_star - x0 / (2.0 * E)) / (x0 / (2.0 * E)));
    }
    return {worst <= 1e-8, fmt("100 scenarios, worst relative error %.2e (argmin T within %.2e)", worst, worst_T)};
}

Outcome particle_proper_time() {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double m = oracle::uniform(0.2, 4.0), dt = oracle::uniform(0.5, 10.0);
        Vector a = random_vector(4, -2.0, 2.0);
        Vector dir = random_vector(3, -1.0, 1.0);
        dir.normalize();
        Vector b = a;
        b(0) += dt;
        b.tail(3) += oracle::uniform(0.0, 0.95) * dt * dir;
        const auto s = particle(m, Vector::Zero(3), dt);
        const double T = stationary_proper_time(a, b, s);
        const double tau = std::sqrt(minkowski_square(b - a));
        worst = std::max({worst, std::abs(T - tau / (2.0 * m)) / T, std::abs(minimize_constant_lapse(a, b, s) - T) / T});
    }
    return {worst <= 1e-6, fmt("50 separations, worst relative error %.2e", worst)};
}

Outcome particle_gradient() {
    const int K = 200;
    const auto s = particle(1.2, (Vector(3) << 0.3, -0.4, 0.5).finished(), 2.5);
    const Vector N = (0.8 + 0.3 * tau_grid(K).array().cos()).matrix();
    const auto star = stationary_path(s, N);
    Vector x(2 * (K + 1) + 1);
    x << star.d, star.lam, star.p0;
    auto f = [&](const Vector& v) {
        MultiplierPath p = star;
        p.d = v.head(K + 1);
        p.lam = v.segment(K + 1, K + 1);
        p.p0 = v(2 * (K + 1));
        return quantum_action_particle(p, s).lambda;
    };
    const double g = oracle::central_gradient(f, x, 1e-5).cwiseAbs().maxCoeff();
    const double rel = g / std::abs(f(x));
    // The same probe must see a gradient once the multipliers leave the stationary point.
    Vector off = x;
    off.segment(K + 1, K + 1).array() += 0.01;
    const double moved = oracle::central_gradient(f, off, 1e-5).cwiseAbs().maxCoeff() / std::abs(f(x));
    return {rel <= 1e-6 && moved > 1e-4, fmt("max |dLambda| / |Lambda| = %.2e over %d unknowns (%.2e off the point)",
                                             rel, static_cast<int>(x.size()), moved)};
}

Outcome transport_accuracy() {
    const int M = 64;
    const double gamma = 0.25, n1 = 0.8, n2 = 0.5;
    auto error = [&](int K) {
        auto s = StringScenario::uniform(M, K, gamma, n1, n2, 0.0);
        const Vector sig = s.sigma();
        const Vector p0 = ((2.0 * sig).array().cos() + 0.5 * (20.0 * sig).array().sin()).matrix();
        const auto a = lambda_advect(s, p0, {TransportConvention::derived, AdvectionScheme::rk4});
        const auto b = lambda_advect(s, p0, {TransportConvention::derived, AdvectionScheme::characteristic});
        return std::max((a.lam1 - b.lam1).cwiseAbs().maxCoeff(), (a.lam2 - b.lam2).cwiseAbs().maxCoeff());
    };
    const double e400 = error(400), e200 = error(200);
    const double order = std::log2(e200 / e400);
    return {e400 <= 1e-6 && order >= 3.9, fmt("error %.2e at K=400, observed order %.2f", e400, order)};
}

Outcome kkt_stationarity() {
    const auto s = wavy(32, 100, 0.3);
    const auto r = stationary_x0_solve(s);
    const auto n = static_cast<Eigen::Index>(s.K + 1) * s.M;
    Vector x(4 * n + s.M);
    auto flat = [](const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()).eval(); };
    x << flat(r.field.d1), flat(r.field.d2), flat(r.field.lam1), flat(r.field.lam2), r.field.p0;
    auto f = [&](const Vector& v) {
        LambdaField g;
        auto mat = [&](Eigen::Index off) { return Eigen::Map<const Matrix>(v.data() + off, s.K + 1, s.M).eval(); };
        g.d1 = mat(0);
        g.d2 = mat(n);
        g.lam1 = mat(2 * n);
        g.lam2 = mat(3 * n);
        g.p0 = v.tail(s.M);
        return action_x0(s, g);
    };
    const double grad = oracle::central_gradient(f, x, 1e-3).cwiseAbs().maxCoeff() / std::abs(r.lambda_star);
    const double transport = transport_residual(s, r.field, TransportConvention::derived).max();
    const Matrix rel1 = 2.0 * (r.field.d1.array().rowwise() * s.N1.transpose().array()).matrix() + r.field.lam1;
    const Matrix rel2 = 2.0 * (r.field.d2.array().rowwise() * s.N2.transpose().array()).matrix() + r.field.lam2;
    const double elim = std::max(rel1.cwiseAbs().maxCoeff(), rel2.cwiseAbs().maxCoeff());
    const double constraint = boundary_constraint_residual(s, r.field).cwiseAbs().maxCoeff();
    return {grad <= 1e-7 && transport <= 1e-10 && elim <= 1e-12 && constraint <= 1e-10,
            fmt("gradient %.2e, transport %.2e, d + lambda/2N %.2e, constraint %.2e", grad, transport, elim,
                constraint)};
}

Outcome homogeneity() {
    const std::vector<double> scales{0.5, 1, 2, 4, 10};
    std::vector<std::pair<double, double>> slopes;  // (measured, expected)

    const auto p = particle(1.3, (Vector(3) << 0.2, 0.7, 0.0).finished(), 1.7);
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = p;
                              t.x0_final *= k;
                              return stationary_particle(t).lambda_star;
                          },
                          scales),
                      1.0});

    const auto w = wavy(16, 40, 0.5);
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = w;
                              t.x0_final *= k;
                              return stationary_x0_solve(t).lambda_star;
                          },
                          scales),
                      2.0});
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = w;
                              t.N1 *= k;
                              t.N2 *= k;
                              t.gamma /= k;
                              return stationary_x0_solve(t).lambda_star;
                          },
                          scales),
                      -1.0});

    const auto u = StringScenario::uniform(16, 40, 0.5, 1.1, 0.7, 2.0);
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = u;
                              t.N1 *= k;
                              t.N2 *= k;
                              return stationary_x0_solve(t).lambda_star;
                          },
                          scales),
                      -1.0});
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = w;
                              t.x0_final *= k;
                              return stationary_x0_solve(t).field.p0.cwiseAbs().sum();
                          },
                          scales),
                      1.0});
    const OccupationVector occ{1, 0, 2, 1};
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = w;
                              t.N1 *= k;
                              t.N2 *= k;
                              return normal_modes(t, build_hamiltonian_matrix(t, 1)).frequencies.front();
                          },
                          scales),
                      1.0});
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = w;
                              t.N1 *= k;
                              t.N2 *= k;
                              return energy(normal_modes(t, build_hamiltonian_matrix(t, 1)), occ);
                          },
                          scales),
                      1.0});
    slopes.push_back({scaling_probe(
                          [&](double k) {
                              auto t = u;
                              t.x0_final *= k;
                              return find_stationary_N(t, occ).lambda_star;
                          },
                          scales),
                      1.0});

    double worst = 0.0;
    std::string listing;
    for (const auto& [got, want] : slopes) {
        worst = std::max(worst, std::abs(got - want));
        listing += fmt(" %.6f", got);
    }
    return {worst <= 1e-6, "slopes" + listing + fmt(", worst deviation %.2e", worst)};
}

Outcome spectrum_oracle() {
    double worst = 0.0;
    int cases = 0;
    for (int M : {2, 4, 6, 8, 10, 12, 14, 16}) {
        for (int trial = 0; trial < 3; ++trial, ++cases) {
            auto s = StringScenario::uniform(M, 10, oracle::uniform(0.2, 2.0), 1.0, 1.0, 0.0);
            s.N1 = random_vector(M, 0.3, 2.0);
            s.N2 = random_vector(M, 0.3, 2.0);
            const auto A = build_hamiltonian_matrix(s, 1);
            const auto sp = normal_modes(s, A);
            const auto ref = oracle::symplectic_frequencies(A.block);
            if (ref.size() != sp.size()) return {false, fmt("M=%d: %zu modes vs oracle %zu", M, sp.size(), ref.size())};
            for (std::size_t i = 0; i < ref.size(); ++i)
                worst = std::max(worst, std::abs(sp.frequencies[i] - ref[i]) / ref[i]);
        }
    }
    double ladder = 0.0;
    for (int M : {4, 8, 16}) {
        const double N = 0.7, gamma = 1.3;
        auto s = StringScenario::uniform(M, 10, gamma, N, N, 0.0);
        const auto sp = normal_modes(s, build_hamiltonian_matrix(s, 2));
        if (sp.size() != static_cast<std::size_t>(2 * (M - 1))) return {false, fmt("M=%d: wrong mode count", M)};
        for (int d = 0; d < 2; ++d)
            for (int k = 1; k < M / 2; ++k)
                for (auto fam : {ModeFamily::left, ModeFamily::right}) {
                    const int i = mode_index(sp, fam, k, d);
                    if (i < 0) return {false, fmt("M=%d: mode k=%d missing", M, k)};
                    ladder = std::max(ladder, std::abs(sp.frequencies[i] - 8.0 * gamma * N * k) / (8.0 * gamma * N * k));
                }
    }
    return {worst <= 1e-10 && ladder <= 1e-10,
            fmt("%d random lapses, worst relative deviation %.2e; uniform ladder deviation %.2e", cases, worst, ladder)};
}

Outcome square_root_law() {
    const auto s = StringScenario::uniform(8, 40, 0.5, 1.0, 1.0, 2.0);
    std::vector<double> ns{1, 4, 16, 64};
    const double slope = scaling_probe(
        [&](double n) { return find_stationary_N(s, OccupationVector{static_cast<long long>(n)}).W_n; }, ns);
    double worst = 0.0;
    for (double n : ns) {
        const OccupationVector occ{static_cast<long long>(n)};
        const auto r = find_stationary_N(s, occ);
        const auto parts = action_parts(s, occ);
        const double identity = 2.0 * std::sqrt(std::abs(parts.x0) * std::abs(parts.energy));
        worst = std::max({worst, std::abs(r.lambda_star - identity) / identity,
                          std::abs(r.lambda_star - r.closed_form) / r.closed_form});
    }
    return {std::abs(slope - 0.5) <= 0.02 && worst <= 1e-10,
            fmt("slope %.6f, closed-form deviation %.2e", slope, worst)};
}

Outcome particle_limit() {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double n1 = oracle::uniform(0.2, 3.0), n2 = oracle::uniform(0.2, 3.0), x0 = oracle::uniform(0.1, 5.0);
        const auto s = StringScenario::uniform(1, 30, oracle::uniform(0.0, 2.0), n1, n2, x0);
        const auto r = stationary_x0_solve(s);
        const double T = (n1 + n2) / std::numbers::pi;
        const double expect = reduced_action(T, particle(0.0, Vector::Zero(3), x0));
        worst = std::max({worst, std::abs(r.lambda_star - expect) / expect,
                          std::abs(std::numbers::pi * r.field.p0(0) - x0 / (2.0 * T)) / (x0 / (2.0 * T))});
    }
    return {worst <= 1e-10, fmt("20 single-site strings, worst relative deviation %.2e", worst)};
}

Outcome determinism() {
    const std::string text = R"({"system": "string", "command": "sweep",
      "string": {"M": 8, "K": 20, "gamma": 0.5, "x0_final": 2.0},
      "occupations": [1, 1],
      "sweep": {"parameter": "gamma", "values": [0.25, 0.5, 1.0, 2.0], "command": "stationary"}})";
    auto c = parse_config(text);
    const bool round_trip = parse_config(emit_config(c)) == c && emit_config(parse_config(emit_config(c))) == emit_config(c);
    const auto first = emit(run(c), "csv");
    c.workers = 4;
    const auto second = emit(run(c), "csv");
    const auto third = emit(run(parse_config(emit_config(c))), "csv");
    return {round_trip && first == second && second == third,
            fmt("round trip %s, repeated sweeps %s", round_trip ? "exact" : "differs",
                first == second && second == third ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"particle stationary action matches closed form", particle_closed_form},
        {"proper time matches Lagrangian minimum", particle_proper_time},
        {"particle action stationary under all variations", particle_gradient},
        {"multiplier transport accuracy and order", transport_accuracy},
        {"string x0 stationary point", kkt_stationarity},
        {"homogeneity degrees", homogeneity},
        {"normal-mode spectrum matches dense oracle", spectrum_oracle},
        {"square-root law and closed form", square_root_law},
        {"single-site string is the massless particle", particle_limit},
        {"deterministic output and config round trip", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("%s %2zu %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
