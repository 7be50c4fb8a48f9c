#ifndef QAP_GRID_HPP
#define QAP_GRID_HPP

// Quadrature and differentiation on the two grids used throughout:
// a uniform tau grid on [0,1] (trapezoid rule) and a periodic sigma grid on
// [0,pi) with spectral differentiation.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qap/errors.hpp"

namespace qap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Uniform grid tau_k = k/K, k = 0..K.
inline Vector tau_grid(int steps) {
    if (steps < 1) throw DomainError("tau grid needs at least one step");
    return Vector::LinSpaced(steps + 1, 0.0, 1.0);
}

/// Trapezoid weights for K steps on [0,1].
inline Vector trapezoid_weights(int steps) {
    if (steps < 1) throw DomainError("tau grid needs at least one step");
    const double dt = 1.0 / steps;
    Vector w = Vector::Constant(steps + 1, dt);
    w(0) = w(steps) = 0.5 * dt;
    return w;
}

inline double trapezoid(const Vector& f) {
    if (f.size() < 2) throw ShapeError("trapezoid needs at least two samples");
    return trapezoid_weights(static_cast<int>(f.size()) - 1).dot(f);
}

/// Running integral F_k = int_0^{tau_k} f, trapezoid rule.
inline Vector cumulative_trapezoid(const Vector& f) {
    const Eigen::Index n = f.size();
    if (n < 2) throw ShapeError("cumulative trapezoid needs at least two samples");
    const double half_dt = 0.5 / static_cast<double>(n - 1);
    Vector out(n);
    out(0) = 0.0;
    for (Eigen::Index k = 1; k < n; ++k) out(k) = out(k - 1) + half_dt * (f(k - 1) + f(k));
    return out;
}

/// Column-wise running integral over the tau axis (rows).
inline Matrix cumulative_trapezoid_rows(const Matrix& f) {
    const Eigen::Index n = f.rows();
    if (n < 2) throw ShapeError("cumulative trapezoid needs at least two samples");
    const double half_dt = 0.5 / static_cast<double>(n - 1);
    Matrix out(n, f.cols());
    out.row(0).setZero();
    for (Eigen::Index k = 1; k < n; ++k) out.row(k) = out.row(k - 1) + half_dt * (f.row(k - 1) + f.row(k));
    return out;
}

namespace detail {

struct CellPosition {
    Eigen::Index cell;
    double offset;  // tau - tau_cell
    double frac;    // offset / dt
};

inline CellPosition locate(Eigen::Index samples, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("tau must lie in [0,1]");
    const Eigen::Index steps = samples - 1;
    const double dt = 1.0 / static_cast<double>(steps);
    auto cell = static_cast<Eigen::Index>(std::floor(tau / dt));
    cell = std::clamp<Eigen::Index>(cell, 0, steps - 1);
    const double offset = tau - static_cast<double>(cell) * dt;
    return {cell, offset, offset / dt};
}

}  // namespace detail

/// int_0^tau f for arbitrary tau in [0,1]: trapezoid over whole cells plus the
/// exact integral of the linear interpolant over the partial cell.
inline double integrate_to(const Vector& f, double tau) {
    if (f.size() < 2) throw ShapeError("integration needs at least two samples");
    const Vector cum = cumulative_trapezoid(f);
    const auto pos = detail::locate(f.size(), tau);
    const double f0 = f(pos.cell);
    const double ft = f0 + pos.frac * (f(pos.cell + 1) - f0);
    return cum(pos.cell) + 0.5 * pos.offset * (f0 + ft);
}

/// Row-vector of int_0^tau f(., sigma_j) for each column j.
inline Vector integrate_rows_to(const Matrix& f, double tau) {
    if (f.rows() < 2) throw ShapeError("integration needs at least two samples");
    const Matrix cum = cumulative_trapezoid_rows(f);
    const auto pos = detail::locate(f.rows(), tau);
    const Vector f0 = f.row(pos.cell).transpose();
    const Vector ft = f0 + pos.frac * (f.row(pos.cell + 1).transpose() - f0);
    return cum.row(pos.cell).transpose() + 0.5 * pos.offset * (f0 + ft);
}

/// Linear interpolation of a tau-sampled quantity.
inline double interpolate_at(const Vector& f, double tau) {
    const auto pos = detail::locate(f.size(), tau);
    return f(pos.cell) + pos.frac * (f(pos.cell + 1) - f(pos.cell));
}

// ---------------------------------------------------------------------------
// Periodic sigma grid

inline void check_sigma_points(int points) {
    if (points < 1 || (points > 1 && points % 2 != 0))
        throw DomainError("sigma grid size M must be 1 or even, got " + std::to_string(points));
}

/// sigma_j = j*pi/M.
inline Vector sigma_grid(int points) {
    check_sigma_points(points);
    Vector s(points);
    for (int j = 0; j < points; ++j) s(j) = j * std::numbers::pi / points;
    return s;
}

/// Fourier differentiation matrix for period pi on M (even) points. The
/// Nyquist mode is annihilated, so the matrix is antisymmetric. M = 1 gives
/// the 1x1 zero matrix.
inline Matrix spectral_derivative(int points) {
    check_sigma_points(points);
    Matrix d = Matrix::Zero(points, points);
    if (points == 1) return d;
    for (int j = 0; j < points; ++j) {
        for (int l = 0; l < points; ++l) {
            if (j == l) continue;
            const int diff = j - l;
            const double sign = (diff % 2 == 0) ? 1.0 : -1.0;
            d(j, l) = sign / std::tan(diff * std::numbers::pi / points);
        }
    }
    return d;
}

/// Orthonormal real Fourier basis of the periodic grid. Columns are grouped
/// in blocks that the derivative (and any circulant operator) leaves
/// invariant: the constant (size 1), each wavenumber 2m as a cos/sin pair
/// (size 2), and the Nyquist pattern (-1)^j (size 1).
struct FourierBasis {
    struct Block {
        int start;
        int size;
        int harmonic;  // m: the block holds cos(2 m sigma), sin(2 m sigma)
    };

    Matrix columns;
    std::vector<Block> blocks;

    explicit FourierBasis(int points) {
        check_sigma_points(points);
        columns = Matrix::Zero(points, points);
        const Vector s = sigma_grid(points);
        columns.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(points)));
        blocks.push_back({0, 1, 0});
        if (points == 1) return;
        const double norm = std::sqrt(2.0 / points);
        int col = 1;
        for (int m = 1; m < points / 2; ++m) {
            for (int j = 0; j < points; ++j) {
                columns(j, col) = norm * std::cos(2.0 * m * s(j));
                columns(j, col + 1) = norm * std::sin(2.0 * m * s(j));
            }
            blocks.push_back({col, 2, m});
            col += 2;
        }
        for (int j = 0; j < points; ++j) columns(j, col) = ((j % 2 == 0) ? 1.0 : -1.0) / std::sqrt(static_cast<double>(points));
        blocks.push_back({col, 1, points / 2});
    }

    int size() const { return static_cast<int>(columns.rows()); }
    bool is_nyquist(const Block& b) const { return size() > 1 && b.start == size() - 1; }
};

inline bool is_constant(const Vector& v, double rel_tol = 0.0) {
    if (v.size() == 0) return true;
    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    return (v.array() - v(0)).abs().maxCoeff() <= rel_tol * scale;
}

}  // namespace qap

#endif  // QAP_GRID_HPP
