#ifndef QAP_STATIONARITY_HPP
#define QAP_STATIONARITY_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qap/errors.hpp"
#include "qap/grid.hpp"
#include "qap/string_action.hpp"
#include "qap/string_spectrum.hpp"

namespace qap {

struct SpectrumSettings {
    int dim_transverse = 1;
    bool include_zero_point = false;
};

struct ActionParts {
    double x0;      // stationary Lambda_{x0}
    double energy;  // E_n
    double xi;      // -E_n
    double total() const { return x0 + xi; }
};

inline ModeSpectrum spectrum_of(const StringScenario& s, SpectrumSettings settings) {
    return normal_modes(s, build_hamiltonian_matrix(s, settings.dim_transverse),
                        {.include_zero_point = settings.include_zero_point});
}

template <class Occupations>
ActionParts action_parts(const StringScenario& s, const Occupations& occ, SpectrumSettings settings = {},
                         X0SolveOptions solve = {}) {
    const double x0 = stationary_x0_solve(s, solve).lambda_star;
    const double e = energy(spectrum_of(s, settings), occ);
    return {x0, e, action_xi(e)};
}

/// Lambda = Lambda*_{x0} + Lambda_{x^i}, with Lambda_{x^i} = -E_n.
inline double total_action(const StringScenario& s, const OccupationVector& occ, SpectrumSettings settings = {}) {
    return action_parts(s, occ, settings).total();
}

/// Least-squares slope of log f(s) against log s.
inline double scaling_probe(const std::function<double(double)>& evaluator, const std::vector<double>& scales) {
    if (scales.size() < 2) throw DomainError("scaling probe needs at least two scales");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(scales.size()), 2);
    Vector y(static_cast<Eigen::Index>(scales.size()));
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (!(scales[i] > 0.0)) throw DomainError("scales must be positive");
        const double v = evaluator(scales[i]);
        if (!(v > 0.0) || !std::isfinite(v))
            throw DomainError("scaling probe needs positive values; got " + std::to_string(v) + " at scale " +
                              std::to_string(scales[i]));
        const auto r = static_cast<Eigen::Index>(i);
        X(r, 0) = std::log(scales[i]);
        X(r, 1) = 1.0;
        y(r) = std::log(v);
    }
    return X.colPivHouseholderQr().solve(y)(0);
}

// ---------------------------------------------------------------------------
// Stationary point over the lapse multipliers

enum class StationarityMode {
    uniform_scale,  // N1 = s N1_0, N2 = s N2_0
    two_scalars,    // N1 = a N1_0, N2 = b N2_0
    sigma_fields,   // every N1(sigma_j), N2(sigma_j) free
};

inline const char* mode_name(StationarityMode m) {
    switch (m) {
    case StationarityMode::uniform_scale: return "uniform-scale";
    case StationarityMode::two_scalars: return "two-scalars";
    case StationarityMode::sigma_fields: return "sigma-fields";
    }
    return "?";
}

struct EngineOptions {
    StationarityMode mode = StationarityMode::uniform_scale;
    SpectrumSettings spectrum;
    /// Converged when every |q_start dLambda/dq| <= tolerance * |Lambda*|.
    double tolerance = 1e-7;
    double max_log_step = 0.5;
    int max_iterations = 50;
    double gradient_step = 1e-5;  // in log q
    double hessian_step = 1e-3;   // in log q
    /// Refuse sigma-fields runs above this many free multipliers.
    int max_sigma_unknowns = 16;
};

struct HessianSignature {
    int positive = 0;
    int negative = 0;
    int zero = 0;
};

struct StationaryResult {
    Vector N1_star, N2_star;
    double lambda_star = 0.0;
    double lambda_x0 = 0.0;
    double lambda_xi = 0.0;  // as entered the stationary functional (see spatial_sign_flipped)
    double energy = 0.0;
    /// Lambda*/x0 when x0_final is constant and nonzero; NaN otherwise.
    double W_n = std::numeric_limits<double>::quiet_NaN();
    /// 2 sqrt(|Lambda_{x0}(N0)| |Lambda_{x^i}(N0)|) at the template lapse.
    double closed_form = 0.0;
    /// Uniform scale applied to the template at the starting point.
    double start_scale = 0.0;
    HessianSignature hessian_signature;
    bool converged = false;
    double gradient_norm = 0.0;
    /// -E_n and Lambda*_{x0} > 0 admit no interior stationary scale; the
    /// spatial term then enters as +E_n.
    bool spatial_sign_flipped = false;
    int iterations = 0;
    long evaluations = 0;
    std::vector<double> gradient_trace;
    StationarityMode mode = StationarityMode::uniform_scale;
    EngineOptions options;
};

namespace detail {

class LapseObjective {
public:
    LapseObjective(const StringScenario& base, const OccupationVector& occ, const EngineOptions& options, double sign)
        : base_(base), occ_(label_occupations(spectrum_of(base, options.spectrum), occ)), options_(options),
          sign_(sign) {}

    int dimension() const {
        switch (options_.mode) {
        case StationarityMode::uniform_scale: return 1;
        case StationarityMode::two_scalars: return 2;
        case StationarityMode::sigma_fields: return 2 * base_.M;
        }
        return 0;
    }

    StringScenario scenario_at(const Vector& u) const {
        StringScenario s = base_;
        switch (options_.mode) {
        case StationarityMode::uniform_scale:
            s.N1 *= std::exp(u(0));
            s.N2 *= std::exp(u(0));
            break;
        case StationarityMode::two_scalars:
            s.N1 *= std::exp(u(0));
            s.N2 *= std::exp(u(1));
            break;
        case StationarityMode::sigma_fields:
            s.N1 = (base_.N1.array() * u.head(base_.M).array().exp()).matrix();
            s.N2 = (base_.N2.array() * u.tail(base_.M).array().exp()).matrix();
            break;
        }
        return s;
    }

    ActionParts parts(const Vector& u) {
        ++evaluations;
        return action_parts(scenario_at(u), occ_, options_.spectrum);
    }

    double operator()(const Vector& u) {
        const auto p = parts(u);
        return p.x0 + sign_ * p.xi;
    }

    Vector gradient(const Vector& u) {
        const double h = options_.gradient_step;
        Vector g(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            Vector up = u, dn = u;
            up(i) += h;
            dn(i) -= h;
            g(i) = ((*this)(up) - (*this)(dn)) / (2.0 * h);
        }
        return g;
    }

    Matrix hessian(const Vector& u, double centre) {
        const double h = options_.hessian_step;
        const auto n = u.size();
        Matrix H(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vector up = u, dn = u;
            up(i) += h;
            dn(i) -= h;
            H(i, i) = ((*this)(up) - 2.0 * centre + (*this)(dn)) / (h * h);
            for (Eigen::Index j = 0; j < i; ++j) {
                Vector pp = u, pm = u, mp = u, mm = u;
                pp(i) += h, pp(j) += h;
                pm(i) += h, pm(j) -= h;
                mp(i) -= h, mp(j) += h;
                mm(i) -= h, mm(j) -= h;
                H(i, j) = H(j, i) = ((*this)(pp) - (*this)(pm) - (*this)(mp) + (*this)(mm)) / (4.0 * h * h);
            }
        }
        return H;
    }

    long evaluations = 0;

private:
    StringScenario base_;
    std::vector<LabelledOccupation> occ_;
    EngineOptions options_;
    double sign_;
};

inline HessianSignature classify(const Matrix& H, double relative) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(H, Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    HessianSignature sig;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) <= relative * scale) ++sig.zero;
        else if (ev(i) > 0.0) ++sig.positive;
        else ++sig.negative;
    }
    return sig;
}

inline Vector pseudo_solve(const Matrix& H, const Vector& g, double relative) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
    const Vector& ev = eig.eigenvalues();
    const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    Vector coeff = eig.eigenvectors().transpose() * g;
    for (Eigen::Index i = 0; i < ev.size(); ++i) coeff(i) = std::abs(ev(i)) > relative * scale ? coeff(i) / ev(i) : 0.0;
    return eig.eigenvectors() * coeff;
}

}  // namespace detail

/// Stationary point of Lambda over the lapse multipliers, searched in
/// logarithmic coordinates by damped Newton iteration with finite-difference
/// derivatives, starting from the uniform rescaling s* = sqrt(|A|/|B|) of the
/// template (A = Lambda*_{x0}, B = E_n at the template).
inline StationaryResult find_stationary_N(const StringScenario& base, const OccupationVector& occ,
                                          EngineOptions options = {}) {
    base.validate();
    if (options.mode == StationarityMode::sigma_fields && 2 * base.M > options.max_sigma_unknowns)
        throw DomainError("sigma-fields mode with " + std::to_string(2 * base.M) +
                          " free multipliers exceeds max_sigma_unknowns = " +
                          std::to_string(options.max_sigma_unknowns));

    const auto reference = action_parts(base, occ, options.spectrum);
    const double A = reference.x0, B = reference.energy;
    if (A == 0.0) throw DegenerateScaleError("Lambda*_{x0} vanishes at the template (x0_final = 0): no stationary scale");
    if (B == 0.0)
        throw DegenerateScaleError("spatial action vanishes (E_n = 0): A/s has no interior stationary scale");

    StationaryResult out;
    out.mode = options.mode;
    out.options = options;
    // Interior stationary scale of A/s + c B s exists only when A and c B share a sign.
    const double printed_coefficient = -B;
    out.spatial_sign_flipped = (A > 0.0) != (printed_coefficient > 0.0);
    const double sign = out.spatial_sign_flipped ? -1.0 : 1.0;
    out.closed_form = 2.0 * std::sqrt(std::abs(A) * std::abs(B));
    out.start_scale = std::sqrt(std::abs(A) / std::abs(B));

    detail::LapseObjective objective(base, occ, options, sign);
    const int n = objective.dimension();
    Vector u = Vector::Constant(n, std::log(out.start_scale));

    const Vector u_start = u;
    // Gradient measured as q_start * dLambda/dq: in pure log coordinates a
    // multiplier drifting to zero would fake convergence.
    auto measured = [&](const Vector& at, const Vector& grad) {
        return (grad.array() * (u_start - at).array().exp()).abs().maxCoeff();
    };
    auto converged = [&](const Vector& at, const Vector& grad, double v) {
        return measured(at, grad) <= options.tolerance * std::abs(v);
    };

    double value = objective(u);
    Vector g = objective.gradient(u);
    out.gradient_trace.push_back(measured(u, g));
    int it = 0;
    while (!converged(u, g, value) && it < options.max_iterations) {
        ++it;
        const Matrix H = objective.hessian(u, value);
        Vector step = -detail::pseudo_solve(H, g, 1e-8);
        const double longest = step.cwiseAbs().maxCoeff();
        if (longest == 0.0 || !std::isfinite(longest)) break;
        if (longest > options.max_log_step) step *= options.max_log_step / longest;
        const double g_norm = measured(u, g);
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30 && !accepted; ++ls, t *= 0.5) {
            const Vector trial = u + t * step;
            try {
                const double v = objective(trial);
                const Vector gt = objective.gradient(trial);
                if (measured(trial, gt) < g_norm || converged(trial, gt, v)) {
                    u = trial;
                    value = v;
                    g = gt;
                    accepted = true;
                }
            } catch (const Error&) {
                // Trial left the region where the spectrum can be labelled; shrink.
            }
        }
        out.gradient_trace.push_back(measured(u, g));
        if (!accepted) break;
    }
    out.iterations = it;
    if (!converged(u, g, value)) {
        throw NoStationaryPointError(std::string("no stationary lapse found in ") + mode_name(options.mode) +
                                         " mode: gradient stalled at " + std::to_string(measured(u, g)) +
                                         " (|Lambda| = " + std::to_string(std::abs(value)) + ")",
                                     out.gradient_trace);
    }

    const auto star = objective.scenario_at(u);
    const auto parts = objective.parts(u);
    out.N1_star = star.N1;
    out.N2_star = star.N2;
    out.lambda_x0 = parts.x0;
    out.energy = parts.energy;
    out.lambda_xi = sign * parts.xi;
    out.lambda_star = out.lambda_x0 + out.lambda_xi;
    out.converged = true;
    out.gradient_norm = measured(u, g);
    out.hessian_signature = detail::classify(objective.hessian(u, value), 1e-6);
    out.evaluations = objective.evaluations;
    if (is_constant(base.x0_final) && base.x0_final(0) != 0.0) out.W_n = out.lambda_star / base.x0_final(0);
    return out;
}

}  // namespace qap

#endif  // QAP_STATIONARITY_HPP
