#ifndef QAP_STRING_ACTION_HPP
#define QAP_STRING_ACTION_HPP

// x0 sector of the closed bosonic string on a (tau, sigma) grid:
// tau in [0,1] with K steps (trapezoid), sigma in [0,pi) with M periodic
// points (Riemann sum, spectral derivative).
//
// Fields are stored as (K+1) x M matrices, row k = tau_k, column j = sigma_j.
// Lapses N1, N2 are tau-independent.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "qap/errors.hpp"
#include "qap/grid.hpp"

namespace qap {

struct StringScenario {
    int M = 64;
    int K = 200;
    double gamma = 1.0;
    Vector N1 = Vector::Ones(64);
    Vector N2 = Vector::Ones(64);
    Vector x0_final = Vector::Zero(64);
    double hbar = 1.0;

    /// Scenario with sigma-constant lapses and boundary distribution.
    static StringScenario uniform(int M, int K, double gamma, double n1, double n2, double x0) {
        StringScenario s;
        s.M = M;
        s.K = K;
        s.gamma = gamma;
        s.N1 = Vector::Constant(M, n1);
        s.N2 = Vector::Constant(M, n2);
        s.x0_final = Vector::Constant(M, x0);
        return s;
    }

    double dsigma() const { return std::numbers::pi / M; }
    double dtau() const { return 1.0 / K; }
    Vector sigma() const { return sigma_grid(M); }
    bool uniform_lapse() const { return is_constant(N1) && is_constant(N2); }

    void validate() const {
        check_sigma_points(M);
        if (K < 1) throw DomainError("K must be >= 1");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be a finite nonnegative number");
        if (!(hbar > 0.0)) throw DomainError("hbar must be positive");
        if (N1.size() != M || N2.size() != M || x0_final.size() != M)
            throw ShapeError("N1, N2 and x0_final must have length M = " + std::to_string(M));
        if (!(N1.array() > 0.0).all() || !(N2.array() > 0.0).all())
            throw DomainError("N1 and N2 must be strictly positive");
        if (!N1.allFinite() || !N2.allFinite() || !x0_final.allFinite())
            throw DomainError("scenario fields must be finite");
    }
};

struct LambdaField {
    Matrix lam1, lam2, d1, d2;
    Vector p0;

    static LambdaField zeros(int K, int M) {
        LambdaField f;
        f.lam1 = f.lam2 = f.d1 = f.d2 = Matrix::Zero(K + 1, M);
        f.p0 = Vector::Zero(M);
        return f;
    }

    void check_shape(const StringScenario& s) const {
        const auto rows = s.K + 1;
        auto bad = [&](const Matrix& m) { return m.rows() != rows || m.cols() != s.M; };
        if (bad(lam1) || bad(lam2) || bad(d1) || bad(d2))
            throw ShapeError("field arrays must be (K+1) x M = " + std::to_string(rows) + " x " + std::to_string(s.M));
        if (p0.size() != s.M) throw ShapeError("p0 must have length M");
    }
};

/// Sets d1, d2 from lam1, lam2 through 2 N d + lambda = 0.
inline void fill_d_from_lambda(const StringScenario& s, LambdaField& f) {
    f.d1 = -0.5 * (f.lam1.array().rowwise() / s.N1.transpose().array()).matrix();
    f.d2 = -0.5 * (f.lam2.array().rowwise() / s.N2.transpose().array()).matrix();
}

// ---------------------------------------------------------------------------
// Phase of the x0 functional wave packet

struct StringPhase {
    std::complex<double> chi0;
    Eigen::VectorXcd chi1;
    /// Symmetric; (i hbar / 2 eps^2) times the grid delta, i.e. identity / dsigma.
    Eigen::MatrixXcd chi2;
    double epsilon;

    /// chi[x0] = chi0 + sum h chi1 x0 + 1/2 sum h^2 chi2 x0 x0.
    std::complex<double> at(const Vector& x0, double dsigma) const {
        const Eigen::VectorXcd xc = x0.cast<std::complex<double>>();
        return chi0 + dsigma * chi1.dot(xc) + 0.5 * dsigma * dsigma * xc.dot(chi2 * xc);
    }
};

/// Coefficients of the quadratic phase chi[tau, x0(sigma)] after evolving to `tau`.
inline StringPhase string_phase_evolution(const StringScenario& s, const LambdaField& f, double epsilon, double tau) {
    s.validate();
    f.check_shape(s);
    if (!(epsilon > 0.0)) throw DomainError("wave-packet width epsilon must be positive");
    const std::complex<double> c{0.0, s.hbar / (2.0 * epsilon * epsilon)};
    const double h = s.dsigma();
    const Matrix D = spectral_derivative(s.M);

    const Matrix sum = f.lam1 + f.lam2;
    const Matrix grad = (f.lam1 - f.lam2) * D.transpose();  // lambda1' - lambda2'
    const Matrix running_grad = cumulative_trapezoid_rows(grad);
    const Matrix running_sum = cumulative_trapezoid_rows(sum);

    const Matrix quad = (s.N1.transpose().replicate(s.K + 1, 1).array() * f.d1.array().square() +
                         s.N2.transpose().replicate(s.K + 1, 1).array() * f.d2.array().square() +
                         f.lam1.array() * f.d1.array() + f.lam2.array() * f.d2.array())
                            .matrix();
    const Matrix coupling = (sum.array().rowwise() * f.p0.transpose().array()).matrix();
    const Matrix transport = (sum.array() * running_grad.array()).matrix();
    const Matrix spread = (sum.array() * running_sum.array()).matrix();

    StringPhase out;
    out.epsilon = epsilon;
    out.chi2 = Eigen::MatrixXcd::Identity(s.M, s.M) * (c / h);
    const Vector grad_to_tau = integrate_rows_to(grad, tau);
    const Vector sum_to_tau = integrate_rows_to(sum, tau);
    out.chi1 = (f.p0 - s.gamma * grad_to_tau).cast<std::complex<double>>() + c * sum_to_tau.cast<std::complex<double>>();
    const double real_part = h * (-integrate_rows_to(quad, tau).sum() + integrate_rows_to(coupling, tau).sum() -
                                  s.gamma * integrate_rows_to(transport, tau).sum());
    out.chi0 = real_part + c * (h * integrate_rows_to(spread, tau).sum());
    return out;
}

// ---------------------------------------------------------------------------
// Quantum action of the x0 sector

/// Discretized Lambda_{x0}: all five terms by trapezoid in tau and Riemann sum in sigma.
inline double action_x0(const StringScenario& s, const LambdaField& f) {
    s.validate();
    f.check_shape(s);
    const double h = s.dsigma();
    const Vector w = trapezoid_weights(s.K);
    const Matrix grad = (f.lam1 - f.lam2) * spectral_derivative(s.M).transpose();  // rows: D (lambda1 - lambda2)
    const Matrix running = cumulative_trapezoid_rows(grad);
    const Matrix sum = f.lam1 + f.lam2;

    const Matrix q = (f.d1.array().square().rowwise() * s.N1.transpose().array() +
                      f.d2.array().square().rowwise() * s.N2.transpose().array() + f.lam1.array() * f.d1.array() +
                      f.lam2.array() * f.d2.array())
                         .matrix();
    const double quadratic = w.dot(q.rowwise().sum());
    const double coupling = w.dot(sum * f.p0);
    const double transport = w.dot(sum.cwiseProduct(running).rowwise().sum());
    const double boundary_transport = w.dot(grad * s.x0_final);
    return h * (-quadratic + coupling + f.p0.dot(s.x0_final) - s.gamma * transport - s.gamma * boundary_transport);
}

/// Bracket of R_{x0} per sigma point: x0_final + int_0^1 (lambda1 + lambda2).
inline Vector boundary_constraint_residual(const StringScenario& s, const LambdaField& f) {
    f.check_shape(s);
    const Vector w = trapezoid_weights(s.K);
    return s.x0_final + ((f.lam1 + f.lam2).transpose() * w);
}

// ---------------------------------------------------------------------------
// Transport of the multipliers lambda1, lambda2

/// Orientation and initial data of the lambda transport pair.
///
/// `derived` is what stationarity of the discretized action actually yields:
///   d/dtau lambda1 = +4 gamma N1 lambda1',  d/dtau lambda2 = -4 gamma N2 lambda2',
///   lambda1(0) = -2 N1 p0,  lambda2(0) = -2 N2 p0.
/// `printed` is the literal reading of the published relations:
///   d/dtau lambda1 = -4 gamma N1 lambda1',  d/dtau lambda2 = +4 gamma N2 lambda2',
///   lambda1(0) = -2 N1 p0,  lambda2(0) = +2 N2 p0.
enum class TransportConvention { derived, printed };

enum class AdvectionScheme {
    automatic,       // characteristic for sigma-constant lapse, rk4 otherwise
    rk4,             // classical RK4 on the pseudo-spectral semi-discretization
    characteristic,  // exact phase shift; sigma-constant lapse only
    upwind,          // first-order upwind differences, cross-check only
};

struct AdvectionOptions {
    TransportConvention convention = TransportConvention::derived;
    AdvectionScheme scheme = AdvectionScheme::automatic;
};

struct TransportSigns {
    double velocity1;  // sign s1 in d/dtau lambda1 = s1 * 4 gamma N1 lambda1'
    double velocity2;
    double initial1;   // lambda1(0) = initial1 * 2 N1 p0
    double initial2;
};

inline TransportSigns transport_signs(TransportConvention c) {
    if (c == TransportConvention::derived) return {+1.0, -1.0, -1.0, -1.0};
    return {-1.0, +1.0, -1.0, +1.0};
}

namespace detail {

// Generator A of d/dtau lambda = A lambda on the sigma grid: A = v diag(N) D.
inline Matrix transport_generator(const StringScenario& s, const Vector& N, double sign) {
    return (sign * 4.0 * s.gamma) * (N.asDiagonal() * spectral_derivative(s.M));
}

inline Matrix advect_rk4(const Matrix& A, const Vector& initial, int K) {
    const double dt = 1.0 / K;
    Matrix out(K + 1, initial.size());
    Vector y = initial;
    out.row(0) = y.transpose();
    for (int k = 1; k <= K; ++k) {
        const Vector k1 = A * y;
        const Vector k2 = A * (y + 0.5 * dt * k1);
        const Vector k3 = A * (y + 0.5 * dt * k2);
        const Vector k4 = A * (y + dt * k3);
        y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.row(k) = y.transpose();
    }
    return out;
}

// Exact solution of d/dtau lambda = v lambda' for constant v: lambda(tau, sigma) =
// lambda(0, sigma + v tau). The Nyquist component is frozen, matching the
// spectral derivative that annihilates it.
inline Matrix advect_characteristic(double velocity, const Vector& initial, int M, int K) {
    const FourierBasis basis(M);
    const Vector coeffs = basis.columns.transpose() * initial;
    Matrix out(K + 1, M);
    for (int k = 0; k <= K; ++k) {
        const double shift = velocity * k / static_cast<double>(K);
        Vector rotated = coeffs;
        for (const auto& b : basis.blocks) {
            if (b.size != 2) continue;
            const double theta = 2.0 * b.harmonic * shift;
            const double a = coeffs(b.start), bb = coeffs(b.start + 1);
            rotated(b.start) = a * std::cos(theta) + bb * std::sin(theta);
            rotated(b.start + 1) = bb * std::cos(theta) - a * std::sin(theta);
        }
        out.row(k) = (basis.columns * rotated).transpose();
    }
    return out;
}

inline Matrix advect_upwind(const Vector& velocity, const Vector& initial, int K) {
    const auto M = initial.size();
    const double h = std::numbers::pi / static_cast<double>(M);
    const double dt = 1.0 / K;
    Matrix out(K + 1, M);
    Vector y = initial;
    out.row(0) = y.transpose();
    for (int k = 1; k <= K; ++k) {
        Vector next(M);
        for (Eigen::Index j = 0; j < M; ++j) {
            const Eigen::Index right = (j + 1) % M, left = (j + M - 1) % M;
            const double slope = velocity(j) > 0.0 ? (y(right) - y(j)) / h : (y(j) - y(left)) / h;
            next(j) = y(j) + dt * velocity(j) * slope;
        }
        y = next;
        out.row(k) = y.transpose();
    }
    return out;
}

}  // namespace detail

/// Integrates the lambda transport pair from the initial data fixed by p0.
/// d1, d2 of the result follow from 2 N d + lambda = 0.
inline LambdaField lambda_advect(const StringScenario& s, const Vector& p0, AdvectionOptions options = {}) {
    s.validate();
    if (p0.size() != s.M) throw ShapeError("p0 must have length M");
    const auto signs = transport_signs(options.convention);
    const Vector init1 = signs.initial1 * 2.0 * (s.N1.array() * p0.array()).matrix();
    const Vector init2 = signs.initial2 * 2.0 * (s.N2.array() * p0.array()).matrix();

    AdvectionScheme scheme = options.scheme;
    if (scheme == AdvectionScheme::automatic)
        scheme = s.uniform_lapse() ? AdvectionScheme::characteristic : AdvectionScheme::rk4;

    LambdaField f;
    f.p0 = p0;
    const double speed = 4.0 * s.gamma;
    switch (scheme) {
    case AdvectionScheme::characteristic: {
        if (!s.uniform_lapse()) throw DomainError("characteristic propagator needs sigma-constant N1, N2");
        f.lam1 = detail::advect_characteristic(signs.velocity1 * speed * s.N1(0), init1, s.M, s.K);
        f.lam2 = detail::advect_characteristic(signs.velocity2 * speed * s.N2(0), init2, s.M, s.K);
        break;
    }
    case AdvectionScheme::rk4: {
        // Largest resolved wavenumber is M - 2; RK4 is stable on the imaginary axis up to 2 sqrt(2).
        const double rate = speed * std::max(s.N1.maxCoeff(), s.N2.maxCoeff()) * std::max(0, s.M - 2);
        constexpr double rk4_limit = 2.8;
        if (rate * s.dtau() > rk4_limit) {
            const int suggested = static_cast<int>(std::ceil(rate / 2.5));
            throw StepSizeError("RK4 transport unstable: rate*dtau = " + std::to_string(rate * s.dtau()) +
                                    "; use K >= " + std::to_string(suggested),
                                suggested);
        }
        f.lam1 = detail::advect_rk4(detail::transport_generator(s, s.N1, signs.velocity1), init1, s.K);
        f.lam2 = detail::advect_rk4(detail::transport_generator(s, s.N2, signs.velocity2), init2, s.K);
        break;
    }
    case AdvectionScheme::upwind: {
        const double courant = speed * std::max(s.N1.maxCoeff(), s.N2.maxCoeff()) * s.dtau() / s.dsigma();
        if (courant > 1.0) {
            const int suggested = static_cast<int>(std::ceil(courant * s.K));
            throw StepSizeError("upwind transport violates CFL: Courant number " + std::to_string(courant) +
                                    "; use K >= " + std::to_string(suggested),
                                suggested);
        }
        f.lam1 = detail::advect_upwind(signs.velocity1 * speed * s.N1, init1, s.K);
        f.lam2 = detail::advect_upwind(signs.velocity2 * speed * s.N2, init2, s.K);
        break;
    }
    case AdvectionScheme::automatic:
        break;
    }
    fill_d_from_lambda(s, f);
    return f;
}

// ---------------------------------------------------------------------------
// Diagnostics of lambda fields against the transport pair

struct TransportResidual {
    double lam1;
    double lam2;
    double max() const { return std::max(lam1, lam2); }
};

/// Largest Crank-Nicolson residual of the transport pair over the tau cells
/// [tau_k, tau_k+1] with 1 <= k <= K-2, normalized by max|lambda|. Cells
/// touching tau = 0 or tau = 1 are excluded: the half weights of the trapezoid
/// rule leave an O(1) boundary layer there in the stationary fields.
inline TransportResidual transport_residual(const StringScenario& s, const LambdaField& f,
                                            TransportConvention convention) {
    s.validate();
    f.check_shape(s);
    if (s.K < 3) throw DomainError("transport residual needs K >= 3");
    const auto signs = transport_signs(convention);
    auto residual = [&](const Matrix& lam, const Vector& N, double sign) {
        const Matrix A = detail::transport_generator(s, N, sign);
        const double dt = s.dtau();
        double worst = 0.0;
        for (int k = 1; k + 1 < s.K; ++k) {
            const Vector a = lam.row(k).transpose(), b = lam.row(k + 1).transpose();
            const Vector r = (b - a) - 0.5 * dt * (A * (a + b));
            worst = std::max(worst, r.cwiseAbs().maxCoeff());
        }
        const double scale = lam.cwiseAbs().maxCoeff();
        return scale > 0.0 ? worst / scale : worst;
    };
    return {residual(f.lam1, s.N1, signs.velocity1), residual(f.lam2, s.N2, signs.velocity2)};
}

/// Mismatch between the lambda data extrapolated back to tau = 0 (one
/// Crank-Nicolson step from tau_1) and the initial map from p0, normalized by
/// max|lambda|. O(dtau^2) when the convention is the right one.
inline TransportResidual initial_data_residual(const StringScenario& s, const LambdaField& f,
                                               TransportConvention convention) {
    s.validate();
    f.check_shape(s);
    const auto signs = transport_signs(convention);
    const double dt = s.dtau();
    auto residual = [&](const Matrix& lam, const Vector& N, double vsign, double isign) {
        const Matrix A = detail::transport_generator(s, N, vsign);
        const Matrix I = Matrix::Identity(s.M, s.M);
        const Vector back = (I + 0.5 * dt * A).partialPivLu().solve((I - 0.5 * dt * A) * lam.row(1).transpose());
        const Vector expected = isign * 2.0 * (N.array() * f.p0.array()).matrix();
        const double scale = lam.cwiseAbs().maxCoeff();
        const double err = (back - expected).cwiseAbs().maxCoeff();
        return scale > 0.0 ? err / scale : err;
    };
    return {residual(f.lam1, s.N1, signs.velocity1, signs.initial1),
            residual(f.lam2, s.N2, signs.velocity2, signs.initial2)};
}

// ---------------------------------------------------------------------------
// Stationarity of Lambda_{x0}: the KKT system

namespace detail {

struct ReducedKkt {
    Matrix H;
    Vector b;
};

/// Hessian H and linear term b of Lambda_{x0} after eliminating d = -lambda/(2N),
/// in the unknowns (lambda1, lambda2, p0). Index of lambda(k, j) is k*m + j.
///
/// The sigma space is given abstractly: `dsig` is the derivative restricted to an
/// invariant subspace of dimension m (the full grid, or one Fourier block),
/// `inv_n1`, `inv_n2` the diagonal of 1/N there and `x0` the boundary data.
/// The measure is h * (euclidean product), valid for the grid and for any
/// orthonormal change of sigma basis.
///
/// p0 enters Lambda only through p0 . (x0 + int (lambda1 + lambda2)), so the
/// p0 rows are exactly the boundary constraints and p0 plays the role of their
/// multiplier; the matrix is the saddle-point (KKT) matrix of the constrained
/// quadratic problem in lambda.
inline ReducedKkt assemble_reduced_kkt(int K, double h, double gamma, const Matrix& dsig, const Vector& inv_n1,
                                       const Vector& inv_n2, const Vector& x0) {
    const auto m = dsig.rows();
    const Eigen::Index rows = K + 1;
    const Eigen::Index n = rows * m;
    const Vector w = trapezoid_weights(K);
    const double dt = 1.0 / K;

    // Cumulative trapezoid operator C (row k integrates up to tau_k).
    Matrix C = Matrix::Zero(rows, rows);
    for (Eigen::Index k = 1; k < rows; ++k) {
        C(k, 0) = 0.5 * dt;
        for (Eigen::Index i = 1; i < k; ++i) C(k, i) = dt;
        C(k, k) = 0.5 * dt;
    }
    const Matrix WC = w.asDiagonal() * C;
    const Matrix CW = C.transpose() * w.asDiagonal();
    const Matrix minus = WC - CW;
    const Matrix plus = WC + CW;

    ReducedKkt sys;
    sys.H = Matrix::Zero(2 * n + m, 2 * n + m);
    sys.b = Vector::Zero(2 * n + m);
    const double gh = gamma * h;
    for (Eigen::Index k = 0; k < rows; ++k) {
        for (Eigen::Index kp = 0; kp < rows; ++kp) {
            const double a = minus(k, kp), p = plus(k, kp);
            if (a == 0.0 && p == 0.0 && k != kp) continue;
            for (Eigen::Index j = 0; j < m; ++j) {
                for (Eigen::Index jp = 0; jp < m; ++jp) {
                    const double dv = dsig(j, jp);
                    const Eigen::Index r = k * m + j, c = kp * m + jp;
                    sys.H(r, c) += -gh * a * dv;
                    sys.H(n + r, n + c) += gh * a * dv;
                    sys.H(r, n + c) += gh * p * dv;
                    sys.H(n + c, r) += gh * p * dv;
                }
            }
        }
    }
    const Vector dx = dsig.transpose() * x0;
    for (Eigen::Index k = 0; k < rows; ++k) {
        for (Eigen::Index j = 0; j < m; ++j) {
            const Eigen::Index r = k * m + j;
            sys.H(r, r) += 0.5 * h * w(k) * inv_n1(j);
            sys.H(n + r, n + r) += 0.5 * h * w(k) * inv_n2(j);
            sys.H(r, 2 * n + j) = sys.H(2 * n + j, r) = h * w(k);
            sys.H(n + r, 2 * n + j) = sys.H(2 * n + j, n + r) = h * w(k);
            sys.b(r) = -gh * w(k) * dx(j);
            sys.b(n + r) = gh * w(k) * dx(j);
        }
    }
    for (Eigen::Index j = 0; j < m; ++j) sys.b(2 * n + j) = h * x0(j);
    return sys;
}

struct KktSolution {
    Matrix lam1, lam2;  // (K+1) x m
    Vector p0;
    double rcond;
};

inline KktSolution solve_reduced_kkt(const ReducedKkt& sys, int K, Eigen::Index m, double rcond_floor) {
    const Eigen::PartialPivLU<Matrix> lu(sys.H);
    const double rc = lu.rcond();
    if (!(rc > rcond_floor)) {
        Eigen::FullPivLU<Matrix> full(sys.H);
        full.setThreshold(std::max(rcond_floor, 1e-14));
        const auto null_dim = static_cast<std::size_t>(full.dimensionOfKernel());
        throw DegenerateSystemError("stationarity (KKT) matrix is singular: rcond = " + std::to_string(rc) +
                                        ", null-space dimension " + std::to_string(null_dim),
                                    null_dim);
    }
    const Vector y = lu.solve(-sys.b);
    const Eigen::Index n = (K + 1) * m;
    KktSolution out;
    out.lam1 = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(y.data(), K + 1, m);
    out.lam2 =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(y.data() + n, K + 1, m);
    out.p0 = y.segment(2 * n, m);
    out.rcond = rc;
    return out;
}

}  // namespace detail

enum class KktRoute {
    automatic,  // fourier when the lapse is sigma-constant, dense otherwise
    dense,      // one system over the whole sigma grid
    fourier,    // one small system per invariant Fourier block
};

struct X0SolveOptions {
    KktRoute route = KktRoute::automatic;
    double rcond_floor = 1e-13;
    /// Refuse the dense route above this many unknowns (memory ~ 8 n^2 bytes).
    Eigen::Index max_dense_unknowns = 16000;
};

struct X0Stationary {
    LambdaField field;
    double lambda_star;
    KktRoute route;
    Eigen::Index unknowns;  // including d1, d2
    double min_rcond;
};

/// Stationary point of Lambda_{x0} in (d1, d2, lambda1, lambda2, p0) subject to
/// x0_final = -int_0^1 (lambda1 + lambda2). The d block is diagonal and is
/// eliminated exactly before the linear solve.
inline X0Stationary stationary_x0_solve(const StringScenario& s, X0SolveOptions options = {}) {
    s.validate();
    KktRoute route = options.route;
    if (route == KktRoute::automatic) route = s.uniform_lapse() ? KktRoute::fourier : KktRoute::dense;
    if (route == KktRoute::fourier && !s.uniform_lapse())
        throw DomainError("the Fourier-block KKT route needs sigma-constant N1, N2");

    const double h = s.dsigma();
    const Matrix D = spectral_derivative(s.M);
    X0Stationary out;
    out.route = route;
    out.unknowns = 4 * static_cast<Eigen::Index>(s.K + 1) * s.M + s.M;
    out.min_rcond = std::numeric_limits<double>::infinity();
    out.field = LambdaField::zeros(s.K, s.M);

    if (route == KktRoute::dense) {
        const Eigen::Index n = 2 * static_cast<Eigen::Index>(s.K + 1) * s.M + s.M;
        if (n > options.max_dense_unknowns)
            throw DomainError("dense KKT system with " + std::to_string(n) +
                              " unknowns exceeds the configured limit; coarsen the grid or use a sigma-constant lapse");
        const auto sys = detail::assemble_reduced_kkt(s.K, h, s.gamma, D, s.N1.cwiseInverse(), s.N2.cwiseInverse(),
                                                      s.x0_final);
        const auto sol = detail::solve_reduced_kkt(sys, s.K, s.M, options.rcond_floor);
        out.field.lam1 = sol.lam1;
        out.field.lam2 = sol.lam2;
        out.field.p0 = sol.p0;
        out.min_rcond = sol.rcond;
    } else {
        const FourierBasis basis(s.M);
        const Matrix& Q = basis.columns;
        const Matrix D_hat = Q.transpose() * D * Q;
        const Vector x_hat = Q.transpose() * s.x0_final;
        Matrix lam1_hat = Matrix::Zero(s.K + 1, s.M), lam2_hat = Matrix::Zero(s.K + 1, s.M);
        Vector p0_hat = Vector::Zero(s.M);
        for (const auto& blk : basis.blocks) {
            const Vector xb = x_hat.segment(blk.start, blk.size);
            // A block without boundary data has the zero solution.
            if (xb.cwiseAbs().maxCoeff() == 0.0) continue;
            const Matrix db = D_hat.block(blk.start, blk.start, blk.size, blk.size);
            const auto sys = detail::assemble_reduced_kkt(s.K, h, s.gamma, db, Vector::Constant(blk.size, 1.0 / s.N1(0)),
                                                          Vector::Constant(blk.size, 1.0 / s.N2(0)), xb);
            const auto sol = detail::solve_reduced_kkt(sys, s.K, blk.size, options.rcond_floor);
            lam1_hat.middleCols(blk.start, blk.size) = sol.lam1;
            lam2_hat.middleCols(blk.start, blk.size) = sol.lam2;
            p0_hat.segment(blk.start, blk.size) = sol.p0;
            out.min_rcond = std::min(out.min_rcond, sol.rcond);
        }
        out.field.lam1 = lam1_hat * Q.transpose();
        out.field.lam2 = lam2_hat * Q.transpose();
        out.field.p0 = Q * p0_hat;
    }
    fill_d_from_lambda(s, out.field);
    out.lambda_star = action_x0(s, out.field);
    return out;
}

/// Discrepancy report: how well the stationary fields satisfy each reading of
/// the transport pair and its initial data.
struct SignAdjudication {
    TransportResidual transport_derived;
    TransportResidual transport_printed;
    TransportResidual initial_derived;
    TransportResidual initial_printed;

    TransportConvention preferred() const {
        return transport_derived.max() <= transport_printed.max() ? TransportConvention::derived
                                                                  : TransportConvention::printed;
    }
};

inline SignAdjudication adjudicate_transport(const StringScenario& s, const LambdaField& stationary) {
    return {transport_residual(s, stationary, TransportConvention::derived),
            transport_residual(s, stationary, TransportConvention::printed),
            initial_data_residual(s, stationary, TransportConvention::derived),
            initial_data_residual(s, stationary, TransportConvention::printed)};
}

}  // namespace qap

#endif  // QAP_STRING_ACTION_HPP
