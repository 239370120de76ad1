// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "pdpalign/ofdm.hpp"
#include "pdpalign/pdp.hpp"

using namespace pdpalign;

TEST_CASE("unitary_dft matches the closed form and is unitary") {
    Mat f2 = unitary_dft(2);
    const double s = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(f2(0, 0) - cxd{s, 0}) < 1e-14);
    CHECK(std::abs(f2(0, 1) - cxd{s, 0}) < 1e-14);
    CHECK(std::abs(f2(1, 0) - cxd{s, 0}) < 1e-14);
    CHECK(std::abs(f2(1, 1) - cxd{-s, 0}) < 1e-14);

    // entry (2,2) in 1-based terms: exp(-j pi/2)/2 = -j/2
    Mat f4 = unitary_dft(4);
    CHECK(std::abs(f4(1, 1) - cxd{0.0, -0.5}) < 1e-14);

    for (int n : {1, 3, 8, 17}) {
        Mat f = unitary_dft(n);
        CHECK((f * f.adjoint() - Mat::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
    }

    CHECK_THROWS_AS(unitary_dft(0), std::invalid_argument);
}

TEST_CASE("unitary_dft of a delta at tap n is the n-th DFT column") {
    const int n = 8;
    Mat f = unitary_dft(n);
    for (int tap : {0, 3, 7}) {
        Vec delta = Vec::Zero(n);
        delta(tap) = 1.0;
        CHECK((f * delta - f.col(tap)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("base_sequence is deterministic quadratic-phase with unit modulus") {
    CHECK(std::abs(base_sequence(1)(0) - cxd{1, 0}) < 1e-14);

    Vec s4 = base_sequence(4);
    CHECK(std::abs(s4(2) - cxd{-1, 0}) < 1e-12);  // exp(-j pi 4/4)

    Vec s = base_sequence(37);
    for (int n = 0; n < s.size(); ++n) CHECK(std::abs(std::abs(s(n)) - 1.0) < 1e-12);

    CHECK_THROWS_AS(base_sequence(0), std::invalid_argument);
}

TEST_CASE("shifted_sequence applies the cyclic-shift phase ramp") {
    Vec base = base_sequence(8);

    PilotSequence p0 = shifted_sequence(base, 0);
    CHECK((p0.values - base).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(p0.shift == 0);
    CHECK(p0.tone_set.size() == 8);

    // second entry under tau = 4: base(1) * exp(j pi) = -base(1)
    PilotSequence p4 = shifted_sequence(base, 4);
    CHECK(std::abs(p4.values(1) + base(1)) < 1e-12);

    for (int n = 0; n < 8; ++n) CHECK(std::abs(std::abs(p4.values(n)) - 1.0) < 1e-12);

    CHECK_THROWS_AS(shifted_sequence(base, 8), std::invalid_argument);
    CHECK_THROWS_AS(shifted_sequence(base, -1), std::invalid_argument);
}

TEST_CASE("composing shifts adds modulo the length") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        int length = 4 + static_cast<int>(rng.uniform() * 12);
        Vec base = base_sequence(length);
        int t1 = static_cast<int>(rng.uniform() * length);
        int t2 = static_cast<int>(rng.uniform() * length);
        Vec once = shifted_sequence(base, t1).values;
        Vec twice = shifted_sequence(once, t2).values;
        Vec direct = shifted_sequence(base, (t1 + t2) % length).values;
        CHECK((twice - direct).cwiseAbs().maxCoeff() < 1e-11);
    }
}

TEST_CASE("shift_operator structure matches the derotated pilot product") {
    SECTION("zero relative shift is the identity") {
        Mat t = shift_operator(3, 3, 8).matrix();
        CHECK((t - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("first column has the single 1 at row L - dt") {
        ShiftOperator op = shift_operator(3, 0, 8);
        REQUIRE(op.delta_tau == 3);
        Vec col = op.matrix().col(0);
        for (int n = 0; n < 8; ++n)
            CHECK(std::abs(col(n) - (n == 5 ? cxd{1, 0} : cxd{0, 0})) < 1e-15);
    }

    SECTION("unitary") {
        Mat t = shift_operator(5, 2, 8).matrix();
        CHECK((t * t.adjoint() - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("equals F' Su' Sk F for common-base sequences") {
        Rng rng(11);
        for (int length : {4, 8, 16}) {
            Vec base = base_sequence(length);
            Mat f = unitary_dft(length);
            for (int trial = 0; trial < 5; ++trial) {
                int tu = static_cast<int>(rng.uniform() * length);
                int tk = static_cast<int>(rng.uniform() * length);
                Mat su = shifted_sequence(base, tu).values.asDiagonal();
                Mat sk = shifted_sequence(base, tk).values.asDiagonal();
                Mat direct = f.adjoint() * su.adjoint() * sk * f;
                Mat sparse = shift_operator(tk, tu, length).matrix();
                CHECK((direct - sparse).cwiseAbs().maxCoeff() < 1e-10);
            }
        }
    }

    SECTION("conjugation rotates a diagonal by minus the relative shift") {
        const int length = 8;
        Eigen::VectorXd d(length);
        for (int n = 0; n < length; ++n) d(n) = n + 1;
        ShiftOperator op = shift_operator(3, 0, length);
        Mat t = op.matrix();
        Mat rotated = t * d.cast<cxd>().asDiagonal().toDenseMatrix() * t.adjoint();
        for (int n = 0; n < length; ++n) {
            for (int k = 0; k < length; ++k) {
                cxd expect = (n == k) ? cxd{d((n + 3) % length), 0} : cxd{0, 0};
                CHECK(std::abs(rotated(n, k) - expect) < 1e-12);
            }
        }

        // the PDP view of the same rotation
        PowerDelayProfile pdp = PowerDelayProfile::from_powers(d);
        PowerDelayProfile shifted = pdp.shifted(3);
        for (int n = 0; n < length; ++n) CHECK(shifted.powers(n) == d((n + 3) % length));
    }
}

TEST_CASE("OfdmConfig validates the numerology") {
    OfdmConfig c = OfdmConfig::lte_default();
    CHECK(c.n_tones == 128);
    CHECK(c.n_cp == 8);
    CHECK(c.symbol_duration == Catch::Approx(66.67e-6));
    CHECK(c.chip_duration * c.n_tones == Catch::Approx(c.symbol_duration).epsilon(1e-12));
    CHECK(c.tone_groups() == 16);

    CHECK_THROWS_AS(OfdmConfig::make(0, 1, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(OfdmConfig::make(8, 9, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(OfdmConfig::make(8, 0, 1e-3), std::invalid_argument);

    OfdmConfig bad = c;
    bad.chip_duration = c.chip_duration * 1.001;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("tone_group_tones builds interleaved combs") {
    auto g0 = tone_group_tones(0, 128, 8);
    REQUIRE(g0.size() == 8);
    CHECK(g0.front() == 0);
    CHECK(g0[1] == 16);
    auto g3 = tone_group_tones(3, 128, 8);
    CHECK(g3.front() == 3);
    CHECK(g3.back() == 3 + 7 * 16);
    CHECK_THROWS_AS(tone_group_tones(16, 128, 8), std::invalid_argument);
    CHECK_THROWS_AS(tone_group_tones(0, 127, 8), std::invalid_argument);
}
