#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qap/string_spectrum.hpp"

using namespace qap;

namespace {

StringScenario wavy_lapse(int M, double gamma) {
    auto s = StringScenario::uniform(M, 10, gamma, 1.0, 1.0, 0.0);
    const Vector sig = s.sigma();
    for (int j = 0; j < M; ++j) {
        s.N1(j) = 1.0 + 0.4 * std::cos(2 * sig(j)) + 0.1 * std::sin(6 * sig(j));
        s.N2(j) = 0.7 + 0.2 * std::sin(2 * sig(j));
    }
    return s;
}

std::vector<double> direction0(const ModeSpectrum& sp) {
    std::vector<double> out;
    for (std::size_t i = 0; i < sp.size(); ++i)
        if (sp.direction[i] == 0) out.push_back(sp.frequencies[i]);
    return out;
}

}  // namespace

TEST(Hamiltonian, SymmetricAndLinearInLapse) {
    const auto s = wavy_lapse(8, 1.3);
    const auto A = build_hamiltonian_matrix(s, 2);
    EXPECT_LT((A.block - A.block.transpose()).cwiseAbs().maxCoeff(), 1e-14 * A.block.cwiseAbs().maxCoeff());
    EXPECT_EQ(A.dense().rows(), 32);
    auto t = s;
    t.N1 *= 3.0;
    t.N2 *= 3.0;
    EXPECT_LT((build_hamiltonian_matrix(t, 2).block - 3.0 * A.block).cwiseAbs().maxCoeff(),
              1e-12 * A.block.cwiseAbs().maxCoeff());
}

TEST(Hamiltonian, NoTensionMeansPureKinetic) {
    const auto s = wavy_lapse(8, 0.0);
    const auto A = build_hamiltonian_matrix(s, 1);
    EXPECT_EQ(A.block.topLeftCorner(8, 8).cwiseAbs().maxCoeff(), 0.0);
    // H = int (N1 + N2) p^2 with P = h p: the momentum block is 2 (N1 + N2) / h.
    const Vector diag = A.block.bottomRightCorner(8, 8).diagonal();
    EXPECT_LT((diag - 2.0 * (s.N1 + s.N2) / s.dsigma()).cwiseAbs().maxCoeff(), 1e-12);

    const auto sp = normal_modes(s, A);
    EXPECT_EQ(sp.size(), 0u);
    EXPECT_EQ(sp.zero_modes, 16);
    EXPECT_THROW(build_hamiltonian_matrix(s, 0), DomainError);
}

TEST(NormalModes, TwoSitesNyquist) {
    const double N = 0.6, gamma = 1.5;
    auto s = StringScenario::uniform(2, 10, gamma, N, N, 0.0);
    const auto sp = normal_modes(s, build_hamiltonian_matrix(s, 1));
    ASSERT_EQ(sp.size(), 1u);
    EXPECT_NEAR(sp.frequencies[0], 8.0 * gamma * N, 1e-12);
    EXPECT_TRUE(sp.is_nyquist(0));
    EXPECT_EQ(sp.zero_modes, 2);
}

TEST(NormalModes, UniformLapseLadder) {
    auto s = StringScenario::uniform(8, 10, 1.0, 1.0, 1.0, 0.0);
    const auto sp = normal_modes(s, build_hamiltonian_matrix(s, 1));
    const std::vector<double> expect{8, 8, 16, 16, 24, 24, 32};
    ASSERT_EQ(sp.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(sp.frequencies[i], expect[i], 1e-10);
    for (int k = 1; k <= 3; ++k) {
        EXPECT_GE(mode_index(sp, ModeFamily::left, k), 0);
        EXPECT_GE(mode_index(sp, ModeFamily::right, k), 0);
    }
    EXPECT_TRUE(sp.is_nyquist(6));
    EXPECT_EQ(sp.zero_modes, 2);
}

TEST(NormalModes, UnequalLapsesSplitFamilies) {
    auto s = StringScenario::uniform(8, 10, 1.0, 1.0, 0.5, 0.0);
    const auto sp = normal_modes(s, build_hamiltonian_matrix(s, 1));
    for (int k = 1; k <= 3; ++k) {
        EXPECT_NEAR(sp.frequencies[mode_index(sp, ModeFamily::left, k)], 8.0 * k, 1e-10);
        EXPECT_NEAR(sp.frequencies[mode_index(sp, ModeFamily::right, k)], 4.0 * k, 1e-10);
    }
    std::vector<double> oracle = oracle::symplectic_frequencies(build_hamiltonian_matrix(s, 1).block);
    std::vector<double> expect{4, 8, 8, 12, 16, 24, 24};
    ASSERT_EQ(oracle.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(oracle[i], expect[i], 1e-9);
}

TEST(NormalModes, MatchesDenseOracle) {
    for (int M : {2, 4, 8, 12, 16}) {
        const auto s = wavy_lapse(M, 0.8);
        const auto A = build_hamiltonian_matrix(s, 1);
        const auto prod = direction0(normal_modes(s, A));
        const auto ref = oracle::symplectic_frequencies(A.block);
        ASSERT_EQ(prod.size(), ref.size()) << "M = " << M;
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(prod[i], ref[i], 1e-10 * ref[i]) << "M = " << M;
    }
}

TEST(NormalModes, CountPerDirection) {
    for (int M : {4, 8, 16}) {
        auto s = StringScenario::uniform(M, 10, 1.0, 1.0, 1.0, 0.0);
        const auto sp = normal_modes(s, build_hamiltonian_matrix(s, 3));
        EXPECT_EQ(sp.size(), static_cast<std::size_t>(3 * (M - 1)));
        EXPECT_EQ(sp.zero_modes, 3 * 2);
        int nyquist = 0;
        for (std::size_t i = 0; i < sp.size(); ++i) nyquist += sp.is_nyquist(i);
        EXPECT_EQ(nyquist, 3);
    }
}

TEST(NormalModes, CyclicRelabelingInvariance) {
    const auto s = wavy_lapse(12, 0.9);
    const auto base = normal_modes(s, build_hamiltonian_matrix(s, 1)).frequencies;
    auto t = s;
    for (int j = 0; j < 12; ++j) {
        t.N1(j) = s.N1((j + 5) % 12);
        t.N2(j) = s.N2((j + 5) % 12);
    }
    const auto shifted = normal_modes(t, build_hamiltonian_matrix(t, 1)).frequencies;
    ASSERT_EQ(base.size(), shifted.size());
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(base[i], shifted[i], 1e-10 * base[i]);
}

TEST(NormalModes, DegreeOneInLapse) {
    const auto s = wavy_lapse(8, 1.1);
    const auto base = normal_modes(s, build_hamiltonian_matrix(s, 1)).frequencies;
    for (double k : {0.5, 2.0, 10.0}) {
        auto t = s;
        t.N1 *= k;
        t.N2 *= k;
        const auto sc = normal_modes(t, build_hamiltonian_matrix(t, 1)).frequencies;
        for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(sc[i], k * base[i], 1e-10 * k * base[i]);
    }
}

TEST(NormalModes, IndefiniteFormRejected) {
    auto s = StringScenario::uniform(4, 10, 1.0, 1.0, 1.0, 0.0);
    auto A = build_hamiltonian_matrix(s, 1);
    A.block(0, 0) = -50.0;
    EXPECT_THROW(normal_modes(s, A), NotAHamiltonianError);
}

TEST(Energy, Examples) {
    const double N = 0.75, gamma = 0.5;
    auto s = StringScenario::uniform(8, 10, gamma, N, N, 0.0);
    const auto sp = normal_modes(s, build_hamiltonian_matrix(s, 1));
    EXPECT_EQ(energy(sp, OccupationVector{}), 0.0);
    EXPECT_NEAR(energy(sp, OccupationVector{1}), 8.0 * gamma * N, 1e-12);
    EXPECT_THROW(energy(sp, OccupationVector{-1}), DomainError);
    EXPECT_THROW(energy(sp, OccupationVector(sp.size() + 1, 0)), ShapeError);

    auto zp = normal_modes(s, build_hamiltonian_matrix(s, 1), {.include_zero_point = true});
    double half = 0.0;
    for (double w : zp.frequencies) half += 0.5 * w;
    EXPECT_NEAR(energy(zp, OccupationVector{}), half, 1e-12);
}

TEST(Energy, DegreeOneInLapse) {
    const auto s = wavy_lapse(8, 0.7);
    const OccupationVector n{2, 0, 1, 3, 0, 0, 1};
    const double base = energy(normal_modes(s, build_hamiltonian_matrix(s, 1)), n);
    auto t = s;
    t.N1 *= 4.0;
    t.N2 *= 4.0;
    EXPECT_NEAR(energy(normal_modes(t, build_hamiltonian_matrix(t, 1)), n), 4.0 * base, 1e-10 * base);
}

TEST(Energy, LabelledOccupationsFollowModes) {
    auto s = StringScenario::uniform(8, 10, 1.0, 1.0, 1.0, 0.0);
    const auto sp = normal_modes(s, build_hamiltonian_matrix(s, 1));
    const auto labels = label_occupations(sp, OccupationVector{0, 1});
    ASSERT_EQ(labels.size(), 1u);
    auto t = s;
    t.N2 *= 0.5;
    const auto moved = normal_modes(t, build_hamiltonian_matrix(t, 1));
    EXPECT_NEAR(energy(moved, labels), labels[0].family == ModeFamily::left ? 8.0 : 4.0, 1e-10);
}

TEST(ActionXi, SignConvention) {
    EXPECT_EQ(action_xi(0.0), 0.0);
    EXPECT_EQ(action_xi(5.0), -5.0);
}
