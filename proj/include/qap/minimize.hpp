#ifndef QAP_MINIMIZE_HPP
#define QAP_MINIMIZE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include <boost/math/tools/minima.hpp>

#include "qap/errors.hpp"

namespace qap {

struct ScalarMinimum {
    double argument;
    double value;
    std::uintmax_t evaluations;
};

/// Minimizes f over t > 0. Works in u = log t so scale never matters, brackets
/// the minimum by geometric expansion from `start`, then polishes with Brent.
template <class F>
ScalarMinimum minimize_positive(F&& f, double start = 1.0) {
    if (!(start > 0.0)) throw DomainError("minimize_positive needs a positive starting point");
    auto g = [&](double u) { return f(std::exp(u)); };
    std::uintmax_t evals = 0;

    double step = 1.0;
    double mid = std::log(start);
    double f_mid = g(mid);
    double lo = mid - step, hi = mid + step;
    double f_lo = g(lo), f_hi = g(hi);
    evals += 3;
    constexpr int max_expansions = 200;
    int expansions = 0;
    while (!(f_mid <= f_lo && f_mid <= f_hi)) {
        if (++expansions > max_expansions)
            throw DomainError("minimize_positive: no interior minimum found (objective unbounded below or monotone)");
        step *= 2.0;
        if (f_lo < f_hi) {
            hi = mid;
            f_hi = f_mid;
            mid = lo;
            f_mid = f_lo;
            lo = mid - step;
            f_lo = g(lo);
        } else {
            lo = mid;
            f_lo = f_mid;
            mid = hi;
            f_mid = f_hi;
            hi = mid + step;
            f_hi = g(hi);
        }
        ++evals;
        if (!std::isfinite(f_mid)) throw DomainError("minimize_positive: objective is not finite");
    }

    std::uintmax_t iterations = 500;
    const int bits = std::numeric_limits<double>::digits / 2;
    auto [u, value] = boost::math::tools::brent_find_minima(g, lo, hi, bits, iterations);
    return {std::exp(u), value, evals + iterations};
}

}  // namespace qap

#endif  // QAP_MINIMIZE_HPP
