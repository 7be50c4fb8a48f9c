#ifndef QAP_STRING_SPECTRUM_HPP
#define QAP_STRING_SPECTRUM_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "qap/errors.hpp"
#include "qap/grid.hpp"
#include "qap/string_action.hpp"

namespace qap {

/// Quadratic form H = 1/2 z^T A z of one transverse direction in canonical
/// coordinates z = (x_j, P_j) with P_j = h p_j. The directions decouple, so
/// only one block is stored.
struct HamiltonianMatrix {
    Matrix block;
    int dim_transverse = 1;
    int M = 1;

    Matrix dense() const {
        const auto n = block.rows();
        Matrix out = Matrix::Zero(n * dim_transverse, n * dim_transverse);
        for (int i = 0; i < dim_transverse; ++i) out.block(i * n, i * n, n, n) = block;
        return out;
    }
};

/// Grid form of int dsigma [N1 (p + gamma x')^2 + N2 (p - gamma x')^2].
///
/// The spectral derivative annihilates the Nyquist pattern (-1)^j, which would
/// leave that mode free. It is given the potential of its continuum wavenumber
/// M instead, through the rank-one term 2 gamma^2 S v v^T with
/// S = h sum(N1 + N2), so that it oscillates at 2 gamma (N1 + N2) M for
/// sigma-constant lapse.
inline HamiltonianMatrix build_hamiltonian_matrix(const StringScenario& s, int dim_transverse) {
    s.validate();
    if (dim_transverse < 1) throw DomainError("dim_transverse must be >= 1");
    const int M = s.M;
    const double h = s.dsigma();
    const Matrix D = spectral_derivative(M);
    const Matrix I = Matrix::Identity(M, M);

    Matrix L(M, 2 * M), R(M, 2 * M);
    L << s.gamma * D, I / h;
    R << -s.gamma * D, I / h;
    HamiltonianMatrix H;
    H.M = M;
    H.dim_transverse = dim_transverse;
    H.block = 2.0 * h * (L.transpose() * s.N1.asDiagonal() * L + R.transpose() * s.N2.asDiagonal() * R);
    if (M > 1) {
        Vector v(M);
        for (int j = 0; j < M; ++j) v(j) = (j % 2 == 0) ? 1.0 : -1.0;
        const double S = h * (s.N1.sum() + s.N2.sum());
        H.block.topLeftCorner(M, M) += 2.0 * s.gamma * s.gamma * S * (v * v.transpose());
    }
    H.block = 0.5 * (H.block + H.block.transpose());
    return H;
}

enum class ModeFamily { left, right, left_nyquist };

inline const char* family_name(ModeFamily f) {
    switch (f) {
    case ModeFamily::left: return "left";
    case ModeFamily::right: return "right";
    case ModeFamily::left_nyquist: return "left-nyquist";
    }
    return "?";
}

struct ModeSpectrum {
    /// Oscillator frequencies, ascending, over all transverse directions.
    std::vector<double> frequencies;
    std::vector<ModeFamily> families;
    /// Rank of the mode inside its family and direction (1-based); M/2 for Nyquist.
    std::vector<int> k;
    std::vector<int> direction;
    int dim_transverse = 1;
    /// Zero-frequency phase-space directions (2M per direction minus two per oscillator).
    int zero_modes = 0;
    bool include_zero_point = false;

    std::size_t size() const { return frequencies.size(); }
    bool is_nyquist(std::size_t i) const { return families.at(i) == ModeFamily::left_nyquist; }
};

namespace detail {

/// Positive frequencies of one transverse direction: eigenvalues of K^T K with
/// K = L^T J L and A = L L^T are omega^2, each twice.
inline std::vector<double> symplectic_frequencies(const Matrix& A, int& zero_modes, double tol) {
    const auto n = A.rows();
    const auto m = n / 2;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
    if (eig.info() != Eigen::Success) throw NotAHamiltonianError("eigen-decomposition of the quadratic form failed");
    const Vector& a = eig.eigenvalues();
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
    if (a.minCoeff() < -tol * scale)
        throw NotAHamiltonianError("quadratic form is indefinite: smallest eigenvalue " + std::to_string(a.minCoeff()));

    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < n; ++i)
        if (a(i) > tol * scale) kept.push_back(i);
    Matrix Lr(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t c = 0; c < kept.size(); ++c)
        Lr.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(kept[c]) * std::sqrt(a(kept[c]));

    // J z = (P, -x): rows of the momentum half move up, position half move down with a sign.
    Matrix JL(n, Lr.cols());
    JL.topRows(m) = Lr.bottomRows(m);
    JL.bottomRows(m) = -Lr.topRows(m);
    const Matrix K = Lr.transpose() * JL;
    Eigen::SelfAdjointEigenSolver<Matrix> sq(K.transpose() * K, Eigen::EigenvaluesOnly);
    std::vector<double> w2(sq.eigenvalues().data(), sq.eigenvalues().data() + sq.eigenvalues().size());
    std::sort(w2.begin(), w2.end(), std::greater<>());

    std::vector<double> out;
    const double w2_scale = scale * scale;
    for (std::size_t i = 0; i + 1 < w2.size(); i += 2) {
        const double mean = 0.5 * (w2[i] + w2[i + 1]);
        if (mean <= tol * w2_scale) break;
        out.push_back(std::sqrt(mean));
    }
    std::sort(out.begin(), out.end());
    zero_modes = static_cast<int>(n) - 2 * static_cast<int>(out.size());
    return out;
}

/// Transport frequencies of one mover family: |eig(4 gamma sqrt(N) D sqrt(N))|,
/// one per conjugate pair.
inline std::vector<double> family_frequencies(const StringScenario& s, const Vector& N) {
    if (s.M < 4 || s.gamma == 0.0) return {};
    const Vector r = N.cwiseSqrt();
    const Matrix S = 4.0 * s.gamma * (r.asDiagonal() * spectral_derivative(s.M) * r.asDiagonal());
    Eigen::SelfAdjointEigenSolver<Matrix> sq(S.transpose() * S, Eigen::EigenvaluesOnly);
    std::vector<double> w2(sq.eigenvalues().data(), sq.eigenvalues().data() + sq.eigenvalues().size());
    std::sort(w2.begin(), w2.end(), std::greater<>());
    std::vector<double> out;
    const std::size_t pairs = static_cast<std::size_t>(s.M / 2 - 1);
    for (std::size_t i = 0; i < pairs; ++i) out.push_back(std::sqrt(std::max(0.0, 0.5 * (w2[2 * i] + w2[2 * i + 1]))));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

struct NormalModeOptions {
    double tolerance = 1e-11;
    bool include_zero_point = false;
};

/// Symplectic normal modes of the transverse Hamiltonian, labelled by family.
/// Labels come from matching against the left (N1) and right (N2) transport
/// spectra; the frequency left over is the Nyquist mode.
inline ModeSpectrum normal_modes(const StringScenario& s, const HamiltonianMatrix& H, NormalModeOptions options = {}) {
    int zero_per_direction = 0;
    const auto omegas = detail::symplectic_frequencies(H.block, zero_per_direction, options.tolerance);

    struct Candidate {
        double omega;
        ModeFamily family;
        int k;
    };
    std::vector<Candidate> candidates;
    const auto left = detail::family_frequencies(s, s.N1);
    const auto right = detail::family_frequencies(s, s.N2);
    for (std::size_t i = 0; i < left.size(); ++i) candidates.push_back({left[i], ModeFamily::left, static_cast<int>(i) + 1});
    for (std::size_t i = 0; i < right.size(); ++i) candidates.push_back({right[i], ModeFamily::right, static_cast<int>(i) + 1});

    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < omegas.size(); ++a)
        for (std::size_t c = 0; c < candidates.size(); ++c)
            pairs.emplace_back(std::abs(omegas[a] - candidates[c].omega), a, c);
    std::sort(pairs.begin(), pairs.end());
    std::vector<int> label(omegas.size(), -1);
    std::vector<bool> used(candidates.size(), false);
    for (const auto& [dist, a, c] : pairs) {
        if (label[a] >= 0 || used[c]) continue;
        label[a] = static_cast<int>(c);
        used[c] = true;
    }

    ModeSpectrum out;
    out.dim_transverse = H.dim_transverse;
    out.include_zero_point = options.include_zero_point;
    out.zero_modes = zero_per_direction * H.dim_transverse;
    struct Row {
        double omega;
        ModeFamily family;
        int k;
        int direction;
    };
    std::vector<Row> rows;
    for (int d = 0; d < H.dim_transverse; ++d) {
        for (std::size_t a = 0; a < omegas.size(); ++a) {
            if (label[a] >= 0) {
                const auto& c = candidates[static_cast<std::size_t>(label[a])];
                rows.push_back({omegas[a], c.family, c.k, d});
            } else {
                rows.push_back({omegas[a], ModeFamily::left_nyquist, s.M / 2, d});
            }
        }
    }
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.omega < y.omega; });
    // Degenerate frequencies are ordered by direction, then family, then k.
    for (std::size_t start = 0; start < rows.size();) {
        std::size_t end = start + 1;
        while (end < rows.size() && rows[end].omega - rows[start].omega <= 1e-9 * rows[start].omega) ++end;
        std::sort(rows.begin() + static_cast<std::ptrdiff_t>(start), rows.begin() + static_cast<std::ptrdiff_t>(end),
                  [](const Row& x, const Row& y) {
                      return std::tie(x.direction, x.family, x.k) < std::tie(y.direction, y.family, y.k);
                  });
        start = end;
    }
    for (const auto& r : rows) {
        out.frequencies.push_back(r.omega);
        out.families.push_back(r.family);
        out.k.push_back(r.k);
        out.direction.push_back(r.direction);
    }
    return out;
}

using OccupationVector = std::vector<long long>;

/// Occupations aligned with a spectrum. Shorter lists are padded with zeros.
inline OccupationVector align_occupations(const ModeSpectrum& spectrum, OccupationVector occ) {
    if (occ.size() > spectrum.size())
        throw ShapeError("occupation vector has " + std::to_string(occ.size()) + " entries but the spectrum has " +
                         std::to_string(spectrum.size()) + " oscillators");
    for (auto n : occ)
        if (n < 0) throw DomainError("occupation numbers must be nonnegative");
    occ.resize(spectrum.size(), 0);
    return occ;
}

/// E_n = sum omega_k (n_k + zeta/2), hbar = 1.
inline double energy(const ModeSpectrum& spectrum, const OccupationVector& occ) {
    const auto n = align_occupations(spectrum, occ);
    const double zeta = spectrum.include_zero_point ? 0.5 : 0.0;
    double e = 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) e += spectrum.frequencies[i] * (static_cast<double>(n[i]) + zeta);
    return e;
}

/// Occupation attached to a mode identity rather than to a position in the
/// sorted spectrum, so that it follows the mode when the lapse changes.
struct LabelledOccupation {
    ModeFamily family;
    int k;
    int direction;
    long long n;
};

inline std::vector<LabelledOccupation> label_occupations(const ModeSpectrum& spectrum, const OccupationVector& occ) {
    const auto n = align_occupations(spectrum, occ);
    std::vector<LabelledOccupation> out;
    for (std::size_t i = 0; i < n.size(); ++i)
        if (n[i] != 0) out.push_back({spectrum.families[i], spectrum.k[i], spectrum.direction[i], n[i]});
    return out;
}

inline double energy(const ModeSpectrum& spectrum, const std::vector<LabelledOccupation>& occ) {
    const double zeta = spectrum.include_zero_point ? 0.5 : 0.0;
    double e = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) e += zeta * spectrum.frequencies[i];
    for (const auto& o : occ) {
        int found = -1;
        for (std::size_t i = 0; i < spectrum.size() && found < 0; ++i)
            if (spectrum.families[i] == o.family && spectrum.k[i] == o.k && spectrum.direction[i] == o.direction)
                found = static_cast<int>(i);
        if (found < 0) throw ShapeError(std::string("no ") + family_name(o.family) + " mode k = " + std::to_string(o.k));
        e += spectrum.frequencies[static_cast<std::size_t>(found)] * static_cast<double>(o.n);
    }
    return e;
}

/// Spatial part of the quantum action over the unit tau interval.
inline double action_xi(double energy_n) { return -energy_n; }

/// Index of the j-th oscillator (0-based) of a family in direction 0, or -1.
inline int mode_index(const ModeSpectrum& spectrum, ModeFamily family, int k, int direction = 0) {
    for (std::size_t i = 0; i < spectrum.size(); ++i)
        if (spectrum.families[i] == family && spectrum.k[i] == k && spectrum.direction[i] == direction)
            return static_cast<int>(i);
    return -1;
}

}  // namespace qap

#endif  // QAP_STRING_SPECTRUM_HPP
