// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "pdpalign/covariance.hpp"
#include "pdpalign/plan.hpp"
#include "pdpalign/scene.hpp"

using namespace pdpalign;

namespace {

Topology two_cell_pair_topology() {
    Topology t;
    t.n_cells = 2;
    t.users_per_cell = {1, 1};
    t.shared_pairs = {{UserRef{0, 0}, UserRef{1, 0}, {}}};
    return t;
}

std::vector<std::vector<PowerDelayProfile>> stock_pdps(const Topology& topo, PdpKind kind,
                                                       int n, int ncp) {
    std::vector<std::vector<PowerDelayProfile>> pdps(topo.n_cells);
    for (int l = 0; l < topo.n_cells; ++l)
        for (int k = 0; k < topo.n_users(l); ++k)
            pdps[l].push_back(make_pdp(kind, n, ncp, 1.0));
    return pdps;
}

double normalized_inner(double cos1, double cos2, int m) {
    ArrayConfig a = ArrayConfig::make(m, 0.5);
    Vec v1 = steering_vector(std::acos(cos1), a);
    Vec v2 = steering_vector(std::acos(cos2), a);
    return std::abs((v1.adjoint() * v2)(0)) / m;
}

}  // namespace

TEST_CASE("steering_vector closed forms") {
    ArrayConfig a = ArrayConfig::make(4, 0.5);

    Vec broadside = steering_vector(kPi / 2, a);
    for (int m = 0; m < 4; ++m) CHECK(std::abs(broadside(m) - cxd{1, 0}) < 1e-12);

    ArrayConfig single = ArrayConfig::make(1, 0.5);
    CHECK(std::abs(steering_vector(0.7, single)(0) - cxd{1, 0}) < 1e-15);

    // theta -> 0+ with half-wavelength spacing: [1, -1]
    ArrayConfig pair = ArrayConfig::make(2, 0.5);
    Vec endfire = steering_vector(1e-9, pair);
    CHECK(std::abs(endfire(0) - cxd{1, 0}) < 1e-12);
    CHECK(std::abs(endfire(1) - cxd{-1, 0}) < 1e-12);
}

TEST_CASE("ArrayConfig enforces sub-half-wavelength spacing") {
    CHECK_THROWS_AS(ArrayConfig::make(4, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(ArrayConfig::make(0, 0.5), std::invalid_argument);
    ArrayConfig d = ArrayConfig::default_ula();
    CHECK(d.n_antennas == 50);
    CHECK(d.spacing_over_wavelength == 0.5);
}

TEST_CASE("steering vectors from distinct angles decorrelate as M grows") {
    // fixed cos-separations chosen inside the usable sector, away from the
    // Dirichlet-kernel zeros of the small arrays
    for (double sep : {0.23, 0.41, 0.55}) {
        double v10 = normalized_inner(sep / 2, -sep / 2, 10);
        double v100 = normalized_inner(sep / 2, -sep / 2, 100);
        double v1000 = normalized_inner(sep / 2, -sep / 2, 1000);
        CHECK(v10 > v100);
        CHECK(v100 > v1000);
        for (auto [m, v] : {std::pair{10, v10}, {100, v100}, {1000, v1000}}) {
            double bound = 3.0 / (m * std::abs(std::sin(kPi * 0.5 * sep)) * kPi / 3.0);
            CHECK(v < bound);
        }
    }
    for (double sep = 0.2; sep < 1.85; sep += 0.2)
        CHECK(normalized_inner(sep / 2, -sep / 2, 1000) < 0.05);
}

TEST_CASE("draw_scene is deterministic and respects the angle spread") {
    Topology topo = two_cell_pair_topology();
    auto pdps = stock_pdps(topo, PdpKind::exponential, 128, 8);

    SpatialScene s1 = draw_scene(42, topo, 0.2, pdps, 20);
    SpatialScene s2 = draw_scene(42, topo, 0.2, pdps, 20);
    SpatialScene s3 = draw_scene(43, topo, 0.2, pdps, 20);

    bool any_diff = false;
    for (int l = 0; l < 2; ++l)
        for (int b = 0; b < 2; ++b)
            for (int tap : pdps[l][0].support) {
                const PathGeometry* g1 = s1.path(l, 0, b, tap);
                const PathGeometry* g2 = s2.path(l, 0, b, tap);
                const PathGeometry* g3 = s3.path(l, 0, b, tap);
                REQUIRE(g1 != nullptr);
                CHECK(g1->center_aoa == g2->center_aoa);
                CHECK(g1->subpath_aoas == g2->subpath_aoas);
                any_diff = any_diff || (g1->center_aoa != g3->center_aoa);
                CHECK(g1->subpath_aoas.size() == 20);
                CHECK(g1->center_aoa > 0.0);
                CHECK(g1->center_aoa < kPi);
                for (double th : g1->subpath_aoas) {
                    CHECK(th >= std::max(1e-9, g1->center_aoa - 0.1));
                    CHECK(th <= std::min(kPi - 1e-9, g1->center_aoa + 0.1));
                }
            }
    CHECK(any_diff);
}

TEST_CASE("zero angle spread collapses all sub-paths onto the center") {
    Topology topo = two_cell_pair_topology();
    auto pdps = stock_pdps(topo, PdpKind::uniform, 16, 4);
    SpatialScene s = draw_scene(7, topo, 0.0, pdps, 8);
    const PathGeometry* g = s.path(0, 0, 1, 2);
    REQUIRE(g != nullptr);
    for (double th : g->subpath_aoas) CHECK(th == Catch::Approx(g->center_aoa));
}

TEST_CASE("shared-scatterer users see identical angles with their own powers") {
    Topology topo = two_cell_pair_topology();
    std::vector<std::vector<PowerDelayProfile>> pdps(2);
    pdps[0].push_back(make_pdp(PdpKind::exponential, 32, 8, 1.0));
    pdps[1].push_back(make_pdp(PdpKind::exponential, 32, 8, 2.0));
    SpatialScene s = draw_scene(5, topo, 0.15, pdps, 10);
    for (int b = 0; b < 2; ++b)
        for (int tap = 0; tap < 8; ++tap) {
            const PathGeometry* ga = s.path(0, 0, b, tap);
            const PathGeometry* gb = s.path(1, 0, b, tap);
            REQUIRE(ga != nullptr);
            REQUIRE(gb != nullptr);
            CHECK(ga->center_aoa == gb->center_aoa);
            CHECK(ga->subpath_aoas == gb->subpath_aoas);
            CHECK(gb->power == Catch::Approx(2.0 * ga->power));
        }
}

TEST_CASE("topology rejects malformed shared pairs") {
    Topology t;
    t.n_cells = 2;
    t.users_per_cell = {2, 2};

    t.shared_pairs = {{UserRef{0, 0}, UserRef{0, 0}, {}}};
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);

    t.shared_pairs = {{UserRef{0, 0}, UserRef{2, 0}, {}}};
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);

    // chained: the reusing user lends its geometry onward
    t.shared_pairs = {{UserRef{0, 0}, UserRef{1, 0}, {}},
                      {UserRef{1, 0}, UserRef{1, 1}, {}}};
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);

    // one user reusing from two sources
    t.shared_pairs = {{UserRef{0, 0}, UserRef{1, 0}, {}},
                      {UserRef{0, 1}, UserRef{1, 0}, {}}};
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);

    t.shared_pairs = {{UserRef{0, 0}, UserRef{1, 0}, {}},
                      {UserRef{0, 1}, UserRef{1, 1}, {}}};
    CHECK_NOTHROW(t.validate());
}

TEST_CASE("shared-scatterer tap_map permutes the reused scatterers") {
    Topology topo = two_cell_pair_topology();
    std::vector<int> sup{0, 1};
    std::vector<std::vector<PowerDelayProfile>> pdps(2);
    pdps[0].push_back(make_pdp(PdpKind::sparse, 8, 8, 1.0, &sup));
    pdps[1].push_back(make_pdp(PdpKind::sparse, 8, 8, 1.0, &sup));
    topo.shared_pairs[0].tap_map = {1, 0};  // crossed pairing
    SpatialScene s = draw_scene(11, topo, 0.0, pdps, 4);
    CHECK(s.path(1, 0, 0, 0)->center_aoa == s.path(0, 0, 0, 1)->center_aoa);
    CHECK(s.path(1, 0, 0, 1)->center_aoa == s.path(0, 0, 0, 0)->center_aoa);
}

TEST_CASE("tap_covariance basics") {
    Topology topo = two_cell_pair_topology();
    auto pdps = stock_pdps(topo, PdpKind::exponential, 64, 8);
    ArrayConfig array = ArrayConfig::make(6, 0.5);

    SECTION("outside the support the covariance is zero") {
        SpatialScene s = draw_scene(3, topo, 0.1, pdps, 20);
        TapCovariance c = tap_covariance(s, 0, 0, 1, 20, array);
        CHECK(c.matrix.norm() == 0.0);
    }

    SECTION("zero spread gives the rank-1 outer product") {
        SpatialScene s = draw_scene(3, topo, 0.0, pdps, 20);
        const PathGeometry* g = s.path(0, 0, 1, 0);
        Mat c = tap_covariance(s, 0, 0, 1, 0, array).matrix;
        Vec a = steering_vector(g->center_aoa, array);
        Mat expect = g->power * (a * a.adjoint());
        CHECK((c - expect).norm() < 1e-10 * expect.norm());
        Eigen::SelfAdjointEigenSolver<Mat> es(c);
        int rank = 0;
        for (int i = 0; i < es.eigenvalues().size(); ++i)
            if (es.eigenvalues()(i) > 1e-9 * es.eigenvalues().maxCoeff()) ++rank;
        CHECK(rank == 1);
    }

    SECTION("Hermitian PSD with trace M * P_n") {
        SpatialScene s = draw_scene(9, topo, 0.2, pdps, 20);
        for (int tap : {0, 3, 7}) {
            Mat c = tap_covariance(s, 1, 0, 0, tap, array).matrix;
            CHECK((c - c.adjoint()).norm() < 1e-10 * c.norm());
            Eigen::SelfAdjointEigenSolver<Mat> es(c);
            CHECK(es.eigenvalues().minCoeff() > -1e-8 * es.eigenvalues().maxCoeff());
            double p = s.pdp(1, 0).powers(tap);
            CHECK(c.trace().real() == Catch::Approx(array.n_antennas * p).epsilon(1e-8));
        }
    }
}

namespace {

AlignmentPlan simple_plan(int seq_length, std::vector<std::vector<int>> shifts) {
    AlignmentPlan p;
    p.scheme = AlignScheme::exhaustive;
    p.seq_length = seq_length;
    p.shifts = std::move(shifts);
    return p;
}

}  // namespace

TEST_CASE("aggregate_tap_covariance composes shifted user covariances") {
    Topology topo;
    topo.n_cells = 2;
    topo.users_per_cell = {2, 1};
    std::vector<int> sup_a{0, 1};
    std::vector<int> sup_b{3};
    std::vector<std::vector<PowerDelayProfile>> pdps(2);
    pdps[0].push_back(make_pdp(PdpKind::sparse, 8, 8, 1.0, &sup_a));
    pdps[0].push_back(make_pdp(PdpKind::sparse, 8, 8, 0.5, &sup_b));
    pdps[1].push_back(make_pdp(PdpKind::uniform, 8, 4, 1.0));
    ArrayConfig array = ArrayConfig::make(4, 0.5);
    SpatialScene s = draw_scene(17, topo, 0.1, pdps, 8);

    SECTION("single user with zero shift equals its tap covariance") {
        AlignmentPlan plan = simple_plan(8, {{0, 0}, {0}});
        TapCovariance agg = aggregate_tap_covariance(s, plan, 1, 0, 2, {1.0}, array);
        Mat direct = tap_covariance(s, 1, 0, 0, 2, array).matrix;
        CHECK((agg.matrix - direct).norm() < 1e-12);
    }

    SECTION("disjoint shifted supports leave only the contributing user") {
        // user 0 supports {0,1}, user 1 supports {3}; with shifts (0,0) tap 3
        // only sees user 1
        AlignmentPlan plan = simple_plan(8, {{0, 0}, {0}});
        TapCovariance agg = aggregate_tap_covariance(s, plan, 0, 1, 3, {2.0, 3.0}, array);
        Mat direct = 3.0 * tap_covariance(s, 0, 1, 1, 3, array).matrix;
        CHECK((agg.matrix - direct).norm() < 1e-12);
    }

    SECTION("additive in users, invariant to ordering, trace bookkeeping") {
        AlignmentPlan plan = simple_plan(8, {{2, 5}, {0}});
        TapCovariance agg = aggregate_tap_covariance(s, plan, 0, 1, 6, {2.0, 3.0}, array);
        Mat sum = Mat::Zero(4, 4);
        double contributing_power = 0;
        for (int k : {1, 0}) {  // reversed order
            double rho = k == 0 ? 2.0 : 3.0;
            int src = (6 + plan.shift(0, k)) % 8;
            sum += rho * tap_covariance(s, 0, k, 1, src, array).matrix;
            contributing_power += rho * s.pdp(0, k).powers(src);
        }
        CHECK((agg.matrix - sum).norm() < 1e-12);
        CHECK(agg.matrix.trace().real() ==
              Catch::Approx(4 * contributing_power).epsilon(1e-6).margin(1e-12));
    }

    SECTION("shifting any user by a full period changes nothing") {
        AlignmentPlan plan = simple_plan(8, {{2, 5}, {0}});
        AlignmentPlan wrapped = simple_plan(8, {{2 + 8, 5}, {0}});
        for (int n = 0; n < 8; ++n) {
            Mat a = aggregate_tap_covariance(s, plan, 0, 0, n, {1.0, 1.0}, array).matrix;
            Mat b = aggregate_tap_covariance(s, wrapped, 0, 0, n, {1.0, 1.0}, array).matrix;
            CHECK((a - b).norm() == 0.0);
        }
    }
}

TEST_CASE("realize_cir matches its second-order statistics") {
    Topology topo = two_cell_pair_topology();
    std::vector<int> sup{0, 2};
    std::vector<std::vector<PowerDelayProfile>> pdps(2);
    pdps[0].push_back(make_pdp(PdpKind::sparse, 8, 8, 1.0, &sup));
    pdps[1].push_back(make_pdp(PdpKind::sparse, 8, 8, 1.0, &sup));
    ArrayConfig array = ArrayConfig::make(4, 0.5);
    SpatialScene s = draw_scene(23, topo, 0.15, pdps, 10);

    SECTION("zero columns outside the support, deterministic per seed") {
        Mat h1 = realize_cir(s, 0, 0, 1, array, 99);
        Mat h2 = realize_cir(s, 0, 0, 1, array, 99);
        Mat h3 = realize_cir(s, 0, 0, 1, array, 100);
        CHECK((h1 - h2).norm() == 0.0);
        CHECK((h1 - h3).norm() > 0.0);
        for (int n = 0; n < 8; ++n) {
            if (n == 0 || n == 2) continue;
            CHECK(h1.col(n).norm() == 0.0);
        }
    }

    SECTION("M=1, Q=1: tap modulus is exactly the tap power") {
        Topology solo;
        solo.n_cells = 1;
        solo.users_per_cell = {1};
        std::vector<std::vector<PowerDelayProfile>> p1(1);
        p1[0].push_back(make_pdp(PdpKind::sparse, 4, 4, 0.7, &sup));
        ArrayConfig one = ArrayConfig::make(1, 0.5);
        SpatialScene sc = draw_scene(31, solo, 0.0, p1, 1);
        Mat h = realize_cir(sc, 0, 0, 0, one, 5);
        CHECK(std::norm(h(0, 0)) == Catch::Approx(sc.pdp(0, 0).powers(0)).epsilon(1e-12));
    }

    SECTION("sample covariance of a tap approaches tap_covariance") {
        const int trials = 10000;
        Mat acc = Mat::Zero(4, 4);
        for (int t = 0; t < trials; ++t) {
            Mat h = realize_cir(s, 0, 0, 1, array, derive_seed(1234, {static_cast<std::uint64_t>(t)}));
            acc.noalias() += h.col(2) * h.col(2).adjoint();
        }
        acc /= trials;
        Mat expect = tap_covariance(s, 0, 0, 1, 2, array).matrix;
        CHECK((acc - expect).norm() < 0.05 * expect.norm());
    }
}

TEST_CASE("aggregate covariance matches realized aggregate taps") {
    Topology topo;
    topo.n_cells = 1;
    topo.users_per_cell = {2};
    std::vector<int> sup_a{0, 1};
    std::vector<int> sup_b{1, 3};
    std::vector<std::vector<PowerDelayProfile>> pdps(1);
    pdps[0].push_back(make_pdp(PdpKind::sparse, 8, 8, 1.0, &sup_a));
    pdps[0].push_back(make_pdp(PdpKind::sparse, 8, 8, 0.8, &sup_b));
    ArrayConfig array = ArrayConfig::make(4, 0.5);
    SpatialScene s = draw_scene(77, topo, 0.1, pdps, 8);

    AlignmentPlan plan = simple_plan(8, {{0, 3}});
    std::vector<double> rho{1.0, 1.5};

    const int trials = 10000;
    const int tap = 1;
    Mat acc = Mat::Zero(4, 4);
    for (int t = 0; t < trials; ++t) {
        Vec agg = Vec::Zero(4);
        for (int k = 0; k < 2; ++k) {
            Mat h = realize_cir(s, 0, k, 0, array,
                                derive_seed(555, {static_cast<std::uint64_t>(t),
                                                  static_cast<std::uint64_t>(k)}));
            agg += std::sqrt(rho[k]) * h.col((tap + plan.shift(0, k)) % 8);
        }
        acc.noalias() += agg * agg.adjoint();
    }
    acc /= trials;
    Mat expect = aggregate_tap_covariance(s, plan, 0, 0, tap, rho, array).matrix;
    CHECK((acc - expect).norm() < 0.05 * expect.norm());
}
