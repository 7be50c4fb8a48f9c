#ifndef QAP_PARTICLE_HPP
#define QAP_PARTICLE_HPP

// Relativistic particle: classical Lagrangian checks, evolution of the
// quadratic phase of the x0 wave packet, the quantum action as a functional
// of the multipliers (N, lambda, d, p0), and its delayed stationary point.
//
// Conventions: signature (+,-,-,-); tau in [0,1]; all tau integrals use the
// trapezoid rule on the path's uniform grid.

#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>

#include "qap/errors.hpp"
#include "qap/grid.hpp"
#include "qap/minimize.hpp"

namespace qap {

struct ParticleScenario {
    int dim_space = 3;
    double mass = 0.0;
    Vector p_spatial = Vector::Zero(3);
    double x0_final = 0.0;
    double hbar = 1.0;
    double c = 1.0;

    void validate() const {
        if (dim_space < 1) throw DomainError("dim_space must be >= 1");
        if (!(mass >= 0.0) || !std::isfinite(mass)) throw DomainError("mass must be a finite nonnegative number");
        if (!(hbar > 0.0)) throw DomainError("hbar must be positive");
        if (!(c > 0.0)) throw DomainError("c must be positive");
        if (p_spatial.size() != dim_space)
            throw ShapeError("p_spatial has length " + std::to_string(p_spatial.size()) + ", expected dim_space = " +
                             std::to_string(dim_space));
        if (!p_spatial.allFinite() || !std::isfinite(x0_final)) throw DomainError("momenta and x0_final must be finite");
    }

    double momentum_squared() const { return p_spatial.squaredNorm(); }
    /// p_i^2 + m^2 c^2, the coefficient of T in the reduced action.
    double dispersion() const { return momentum_squared() + mass * mass * c * c; }
};

/// (dx^0)^2 - sum_i (dx^i)^2.
inline double minkowski_square(const Vector& dx) {
    if (dx.size() < 1) throw ShapeError("a Minkowski vector needs a time component");
    return dx(0) * dx(0) - dx.tail(dx.size() - 1).squaredNorm();
}

/// Multiplier profiles N(tau), lambda(tau), d(tau) on a uniform grid, plus p0.
struct MultiplierPath {
    Vector tau;
    Vector N;
    Vector lam;
    Vector d;
    double p0 = 0.0;

    static MultiplierPath zeros(int steps) {
        MultiplierPath p;
        p.tau = tau_grid(steps);
        p.N = p.lam = p.d = Vector::Zero(steps + 1);
        return p;
    }

    int steps() const { return static_cast<int>(tau.size()) - 1; }

    void validate() const {
        if (tau.size() < 2) throw ShapeError("multiplier path needs at least two tau samples");
        if (N.size() != tau.size() || lam.size() != tau.size() || d.size() != tau.size())
            throw ShapeError("N, lam and d must share the tau grid length");
        if (tau(0) != 0.0 || tau(tau.size() - 1) != 1.0) throw ShapeError("tau grid must run from 0 to 1");
        const double dt = 1.0 / steps();
        for (Eigen::Index k = 0; k < tau.size(); ++k)
            if (std::abs(tau(k) - k * dt) > 1e-12) throw ShapeError("tau grid must be uniform");
        if (!N.allFinite() || !lam.allFinite() || !d.allFinite() || !std::isfinite(p0))
            throw DomainError("multiplier path contains non-finite values");
    }

    /// T = int_0^1 N dtau.
    double proper_time() const { return trapezoid(N); }
};

// ---------------------------------------------------------------------------
// Classical checks

/// Straight worldline between two events, sampled on K+1 tau points; rows are
/// tau samples, columns are x^0..x^D.
inline Matrix straight_worldline(const Vector& x_start, const Vector& x_end, int steps) {
    if (x_start.size() != x_end.size()) throw ShapeError("worldline endpoints differ in dimension");
    const Vector t = tau_grid(steps);
    Matrix path(steps + 1, x_start.size());
    for (int k = 0; k <= steps; ++k) path.row(k) = (x_start + t(k) * (x_end - x_start)).transpose();
    return path;
}

namespace detail {

// Second-order finite-difference tau derivative (exact for polynomials of degree <= 2).
inline Matrix tau_derivative(const Matrix& x) {
    const Eigen::Index n = x.rows();
    const double inv_dt = static_cast<double>(n - 1);
    Matrix dx(n, x.cols());
    if (n == 2) {
        dx.row(0) = dx.row(1) = (x.row(1) - x.row(0)) * inv_dt;
        return dx;
    }
    dx.row(0) = (-3.0 * x.row(0) + 4.0 * x.row(1) - x.row(2)) * (0.5 * inv_dt);
    for (Eigen::Index k = 1; k + 1 < n; ++k) dx.row(k) = (x.row(k + 1) - x.row(k - 1)) * (0.5 * inv_dt);
    dx.row(n - 1) = (3.0 * x.row(n - 1) - 4.0 * x.row(n - 2) + x.row(n - 3)) * (0.5 * inv_dt);
    return dx;
}

}  // namespace detail

/// Lagrangian form of the classical action, int_0^1 [xdot^2/(4N) + m^2 c^2 N].
inline double classical_action_lagrangian(const Matrix& worldline, const Vector& N, const ParticleScenario& scenario) {
    scenario.validate();
    if (worldline.rows() < 2) throw ShapeError("worldline needs at least two tau samples");
    if (worldline.rows() != N.size()) throw ShapeError("worldline and N sampled on different tau grids");
    if (worldline.cols() != scenario.dim_space + 1) throw ShapeError("worldline must have dim_space + 1 columns");
    if ((N.array() <= 0.0).any()) throw DomainError("lapse N must be strictly positive");

    const Matrix xdot = detail::tau_derivative(worldline);
    const double mc2 = scenario.mass * scenario.mass * scenario.c * scenario.c;
    Vector integrand(N.size());
    for (Eigen::Index k = 0; k < N.size(); ++k)
        integrand(k) = minkowski_square(xdot.row(k).transpose()) / (4.0 * N(k)) + mc2 * N(k);
    return trapezoid(integrand);
}

/// Reparameterization-invariant T = sqrt((x1-x0)^2) / (2 m c) that makes the
/// Lagrangian action stationary in N.
inline double stationary_proper_time(const Vector& x_start, const Vector& x_end, const ParticleScenario& scenario) {
    scenario.validate();
    if (x_start.size() != scenario.dim_space + 1 || x_end.size() != scenario.dim_space + 1)
        throw ShapeError("events must have dim_space + 1 components");
    const double interval = minkowski_square(x_end - x_start);
    if (interval < 0.0) throw DomainError("spacelike separation: (dx)^2 < 0");
    if (scenario.mass == 0.0) throw DomainError("stationary proper time is singular for m = 0");
    return std::sqrt(interval) / (2.0 * scenario.mass * scenario.c);
}

/// Numerical argmin over constant N of the discretized Lagrangian action along
/// the straight worldline. Independent of the closed form above.
inline double minimize_constant_lapse(const Vector& x_start, const Vector& x_end, const ParticleScenario& scenario,
                                      int steps = 200) {
    const Matrix path = straight_worldline(x_start, x_end, steps);
    auto action = [&](double n) { return classical_action_lagrangian(path, Vector::Constant(steps + 1, n), scenario); };
    return minimize_positive(action, 1.0).argument;
}

// ---------------------------------------------------------------------------
// Phase of the x0 wave packet

struct PhaseCoefficients {
    std::complex<double> chi0;
    std::complex<double> chi1;
    std::complex<double> chi2;
    double epsilon;

    /// chi(x0) = chi0 + chi1 x0 + chi2 x0^2 / 2.
    std::complex<double> at(double x0) const { return chi0 + chi1 * x0 + 0.5 * chi2 * x0 * x0; }
};

/// Coefficients of the quadratic phase chi(tau, x0) evolved from the initial
/// packet i hbar x0^2/(4 eps^2) + p0 x0 under the x0 Schroedinger equation.
///
/// chi2 stays i hbar/(2 eps^2); chi1 = p0 + chi2 int_0^tau lambda. The constant
/// term is -int[N d^2 + lambda (d - p0)] + chi2 int_0^tau lambda(t) L(t) dt with
/// L(t) = int_0^t lambda; the lambda(t) factor in the nested integral is what
/// the coefficient comparison produces, and it makes -Im chi/hbar at tau = 1
/// reproduce the damping functional R.
inline PhaseCoefficients phase_evolution(const MultiplierPath& path, double epsilon, double tau, double hbar = 1.0) {
    path.validate();
    if (!(epsilon > 0.0)) throw DomainError("wave-packet width epsilon must be positive");
    if (!(hbar > 0.0)) throw DomainError("hbar must be positive");
    const std::complex<double> chi2{0.0, hbar / (2.0 * epsilon * epsilon)};

    const Vector running_lambda = cumulative_trapezoid(path.lam);
    const double lambda_to_tau = integrate_to(path.lam, tau);

    const Vector real_integrand =
        (path.N.array() * path.d.array().square() + path.lam.array() * (path.d.array() - path.p0)).matrix();
    const Vector nested_integrand = (path.lam.array() * running_lambda.array()).matrix();

    PhaseCoefficients out;
    out.chi2 = chi2;
    out.chi1 = path.p0 + chi2 * lambda_to_tau;
    out.chi0 = -integrate_to(real_integrand, tau) + chi2 * integrate_to(nested_integrand, tau);
    out.epsilon = epsilon;
    return out;
}

// ---------------------------------------------------------------------------
// Quantum action

struct ParticleAction {
    /// Real phase Lambda without the plane-wave term -p_i x^i.
    double lambda;
    /// x0_final + int_0^1 lambda; the eps -> 0 limit demands it vanish.
    double constraint_residual;
    /// -p_i x^i, reported separately because it carries no multiplier dependence.
    double plane_wave_phase;

    /// R = -(constraint_residual)^2 / (4 eps^2).
    double damping(double epsilon) const {
        if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
        return -constraint_residual * constraint_residual / (4.0 * epsilon * epsilon);
    }
};

inline ParticleAction quantum_action_particle(const MultiplierPath& path, const ParticleScenario& scenario,
                                              const std::optional<Vector>& x_spatial = std::nullopt) {
    path.validate();
    scenario.validate();
    const Vector x0_integrand =
        (path.N.array() * path.d.array().square() + path.lam.array() * (path.d.array() - path.p0)).matrix();

    ParticleAction out{};
    out.lambda = -trapezoid(x0_integrand) + path.p0 * scenario.x0_final + path.proper_time() * scenario.dispersion();
    out.constraint_residual = scenario.x0_final + trapezoid(path.lam);
    if (x_spatial) {
        if (x_spatial->size() != scenario.dim_space) throw ShapeError("x_spatial must have dim_space components");
        out.plane_wave_phase = -scenario.p_spatial.dot(*x_spatial);
    } else {
        out.plane_wave_phase = 0.0;
    }
    return out;
}

/// The stationary substitution d = p0, lambda = -2 N d with p0 = x0_final/(2T)
/// for a given lapse profile.
inline MultiplierPath stationary_path(const ParticleScenario& scenario, const Vector& N) {
    scenario.validate();
    MultiplierPath path;
    path.tau = tau_grid(static_cast<int>(N.size()) - 1);
    path.N = N;
    const double T = trapezoid(N);
    if (!(T > 0.0)) throw DomainError("stationary substitution needs T = int N > 0");
    path.p0 = scenario.x0_final / (2.0 * T);
    path.d = Vector::Constant(N.size(), path.p0);
    path.lam = -2.0 * path.p0 * N;
    return path;
}

/// Quantum action after eliminating d, lambda and p0: x0^2/(4T) + T (p^2 + m^2 c^2).
inline double reduced_action(double T, const ParticleScenario& scenario) {
    if (!(T > 0.0)) throw DomainError("reduced action needs T > 0");
    return scenario.x0_final * scenario.x0_final / (4.0 * T) + T * scenario.dispersion();
}

struct ParticleStationary {
    double T_star;
    double p0_star;
    /// Minimum found numerically over T.
    double lambda_star;
    /// x0_final * sqrt(p^2 + m^2 c^2).
    double lambda_closed_form;
    /// p = 0 and m = 0: Lambda* = 0 is an infimum with no interior T.
    bool degenerate_dispersion = false;
    std::uintmax_t evaluations = 0;
};

inline ParticleStationary stationary_particle(const ParticleScenario& scenario) {
    scenario.validate();
    if (scenario.x0_final < 0.0) throw DomainError("x0_final < 0 (past-directed boundary) is not supported");
    const double e2 = scenario.dispersion();
    const double energy = std::sqrt(e2);
    ParticleStationary out{};
    out.lambda_closed_form = scenario.x0_final * energy;

    if (e2 == 0.0) {
        out.degenerate_dispersion = true;
        out.T_star = std::numeric_limits<double>::quiet_NaN();
        out.p0_star = 0.0;
        out.lambda_star = 0.0;
        return out;
    }
    if (scenario.x0_final == 0.0) {
        // Infimum at T -> 0; p0 = x0/(2T) tends to sqrt(p^2 + m^2 c^2) along the stationary family.
        out.T_star = 0.0;
        out.p0_star = energy;
        out.lambda_star = 0.0;
        return out;
    }

    const auto min = minimize_positive([&](double T) { return reduced_action(T, scenario); }, 1.0);
    out.T_star = min.argument;
    out.p0_star = scenario.x0_final / (2.0 * out.T_star);
    out.lambda_star = min.value;
    out.evaluations = min.evaluations;
    return out;
}

}  // namespace qap

#endif  // QAP_PARTICLE_HPP
