#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "kmfg/equilibrium.hpp"
#include "oracle_helpers.hpp"

using kmfg::FrequencyDistribution;
using kmfg::ModelParams;
using kmfg::OrderParameters;
using kmfg::TorusGrid;

namespace {
const TorusGrid kGrid(256);
}

TEST_CASE("F_kappa fixes the origin") {
    ModelParams p(2.0, 1.0, 1.0);
    auto dist = FrequencyDistribution::two_dirac(2.0);
    auto F = kmfg::F_kappa(p, dist, OrderParameters{0.0, 0.0}, kGrid);
    CHECK(std::abs(F.alpha1) < 1e-12);
    CHECK(std::abs(F.alpha2) < 1e-12);
}

TEST_CASE("symmetric distributions keep the second component zero") {
    ModelParams p(3.0, 1.0, 1.0);
    for (const auto& dist :
         {FrequencyDistribution::two_dirac(2.0), FrequencyDistribution::gaussian(0.0, 1.0, 16)}) {
        auto F = kmfg::F_kappa(p, dist, OrderParameters{0.5, 0.0}, kGrid);
        CHECK(std::abs(F.alpha2) < 1e-10);
    }
}

TEST_CASE("F_kappa is bounded by kappa componentwise") {
    ModelParams p(2.5, 1.0, 1.0);
    auto dist = FrequencyDistribution::two_dirac(2.0);
    for (double a : {0.2, 1.0, 2.4}) {
        auto F = kmfg::F_kappa(p, dist, OrderParameters{a, 0.0}, kGrid);
        CHECK(std::abs(F.alpha1) <= p.kappa);
        CHECK(std::abs(F.alpha2) <= p.kappa);
    }
}

TEST_CASE("G_kappa at 0 and the FD slope kappa/kappa_c") {
    SECTION("two-dirac benchmark") {
        ModelParams p(9.0, 1.0, 1.0);
        auto dist = FrequencyDistribution::two_dirac(2.0);
        CHECK(std::abs(kmfg::G_kappa(p, dist, 0.0, kGrid)) < 1e-12);
        kmfg::GMapEvaluator G(p, dist, kGrid);
        double h = 1e-4;
        double slope = (G(h) - G(0.0)) / h;
        double expect = p.kappa / kmfg::kappa_c(dist, p);
        CHECK(std::abs(slope - expect) < 1e-3 * expect);
    }
    SECTION("gaussian benchmark") {
        ModelParams p(5.0, 1.0, 2.0);
        auto dist = FrequencyDistribution::gaussian(0.0, 1.0, 32);
        kmfg::GMapEvaluator G(p, dist, TorusGrid(128));
        double h = 1e-4;
        double slope = (G(h) - G(0.0)) / h;
        double expect = p.kappa / kmfg::kappa_c(dist, p);
        CHECK(std::abs(slope - expect) < 1e-3 * expect);
    }
}

TEST_CASE("dF at the origin") {
    SECTION("delta0 gives (kappa/(gamma sigma^2)) I") {
        ModelParams p(3.0, 1.0, 1.0);
        auto M = kmfg::dF_origin(p, FrequencyDistribution::delta0());
        double expect = p.kappa / (p.gamma() * p.sigma * p.sigma);
        CHECK(M(0, 0) == Catch::Approx(expect).margin(1e-14));
        CHECK(M(1, 1) == Catch::Approx(expect).margin(1e-14));
        CHECK(M(0, 1) == 0.0);
        CHECK(M(1, 0) == 0.0);
    }
    SECTION("symmetric dist: diagonal kappa/kappa_c, zero off-diagonal") {
        ModelParams p(3.0, 0.8, 1.3);
        for (const auto& dist : {FrequencyDistribution::two_dirac(1.7),
                                 FrequencyDistribution::gaussian(0.0, 2.0)}) {
            auto M = kmfg::dF_origin(p, dist);
            double expect = p.kappa / kmfg::kappa_c(dist, p);
            CHECK(std::abs(M(0, 0) - expect) < 1e-12);
            CHECK(std::abs(M(1, 1) - expect) < 1e-12);
            CHECK(std::abs(M(0, 1)) < 1e-12);
            CHECK(std::abs(M(1, 0)) < 1e-12);
        }
    }
    SECTION("matches central finite differences of F_kappa") {
        ModelParams p(2.0, 1.0, 1.0);
        auto dist = FrequencyDistribution::two_dirac(2.0);
        auto M = kmfg::dF_origin(p, dist);
        double h = 1e-4;
        auto Fpp = kmfg::F_kappa(p, dist, {h, 0.0}, kGrid);
        auto Fpm = kmfg::F_kappa(p, dist, {-h, 0.0}, kGrid);
        auto Fqp = kmfg::F_kappa(p, dist, {0.0, h}, kGrid);
        auto Fqm = kmfg::F_kappa(p, dist, {0.0, -h}, kGrid);
        Eigen::Matrix2d FD;
        FD << (Fpp.alpha1 - Fpm.alpha1) / (2 * h), (Fqp.alpha1 - Fqm.alpha1) / (2 * h),
            (Fpp.alpha2 - Fpm.alpha2) / (2 * h), (Fqp.alpha2 - Fqm.alpha2) / (2 * h);
        CHECK((M - FD).cwiseAbs().maxCoeff() < 1e-3 * M.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("kappa=9 benchmark has exactly three fixed points") {
    ModelParams p(9.0, 1.0, 1.0);
    auto dist = FrequencyDistribution::two_dirac(2.0);
    kmfg::FixedPointScan scan;
    scan.alpha_max = 9.0;
    scan.step = 9.0 / 63.0;
    auto rep = kmfg::find_fixed_points(p, dist, scan, kGrid);
    REQUIRE(rep.fixed_points.size() == 3);
    CHECK(rep.fixed_points[0].alpha.alpha1 == 0.0);
    // frozen from an independent scan of the same map at fine resolution
    CHECK(rep.fixed_points[1].alpha.alpha1 == Catch::Approx(4.1675).margin(2e-3));
    CHECK(rep.fixed_points[2].alpha.alpha1 == Catch::Approx(7.3396).margin(2e-3));
    for (const auto& e : rep.fixed_points) CHECK(e.residual < 1e-8);
    CHECK_FALSE(rep.failure_boundary.has_value());
}

TEST_CASE("kappa=1 two-dirac has only the trivial fixed point") {
    ModelParams p(1.0, 1.0, 1.0);
    auto dist = FrequencyDistribution::two_dirac(2.0);
    kmfg::FixedPointScan scan;
    scan.step = 0.01;
    auto rep = kmfg::find_fixed_points(p, dist, scan, TorusGrid(128));
    REQUIRE(rep.fixed_points.size() == 1);
    CHECK(rep.fixed_points[0].alpha.alpha1 == 0.0);
}

TEST_CASE("delta0 above threshold has a nonzero fixed point") {
    ModelParams p(3.0, 1.0, 1.0);  // kappa_c(delta0) = 1.5
    auto dist = FrequencyDistribution::delta0();
    auto rep = kmfg::find_fixed_points(p, dist, {}, TorusGrid(128));
    REQUIRE(rep.fixed_points.size() >= 2);
    CHECK(rep.fixed_points.back().alpha.alpha1 > 0.0);
    CHECK(rep.fixed_points.back().residual < 1e-8);
}

TEST_CASE("origin slope is stable below threshold for delta0") {
    ModelParams p(1.0, 1.0, 1.0);  // kappa < kappa_c = 1.5
    auto rep = kmfg::find_fixed_points(p, FrequencyDistribution::delta0(), {}, TorusGrid(128));
    REQUIRE(!rep.fixed_points.empty());
    CHECK(std::abs(rep.fixed_points[0].g_prime) < 1.0);
    CHECK(rep.derivative_at_zero(0, 0) < 1.0);
}

TEST_CASE("2-D Newton refines fixed points off the symmetric line") {
    ModelParams p(9.0, 1.0, 1.0);
    auto dist = FrequencyDistribution::two_dirac(2.0);
    kmfg::FixedPointScan scan;
    scan.alpha_max = 9.0;
    scan.step = 9.0 / 63.0;
    auto rep = kmfg::find_fixed_points(p, dist, scan, kGrid);
    REQUIRE(rep.fixed_points.size() == 3);
    double alpha_star = rep.fixed_points.back().alpha.alpha1;

    // start slightly off the line; rotation invariance means the limit may sit
    // anywhere on the circle of radius ~alpha_star, so only the residual and
    // the radius are pinned
    OrderParameters guess{alpha_star + 0.02, 0.03};
    auto root = kmfg::refine_fixed_point_2d(p, dist, guess, kGrid);
    auto F = kmfg::F_kappa(p, dist, root, kGrid);
    CHECK(std::abs(F.alpha1 - root.alpha1) < 1e-8);
    CHECK(std::abs(F.alpha2 - root.alpha2) < 1e-8);
    double radius = std::hypot(root.alpha1, root.alpha2);
    CHECK(radius == Catch::Approx(alpha_star).margin(1e-4));
}

TEST_CASE("scan respects G <= kappa and the report stays sorted") {
    ModelParams p(9.0, 1.0, 1.0);
    auto dist = FrequencyDistribution::two_dirac(2.0);
    kmfg::GMapEvaluator G(p, dist, kGrid);
    for (double a : {0.5, 3.0, 6.0, 9.0}) CHECK(G(a) <= p.kappa + 1e-9);

    kmfg::FixedPointScan scan;
    scan.alpha_max = 9.0;
    scan.step = 0.5;
    auto rep = kmfg::find_fixed_points(p, dist, scan, kGrid);
    for (std::size_t i = 1; i < rep.fixed_points.size(); ++i)
        CHECK(rep.fixed_points[i - 1].alpha.alpha1 < rep.fixed_points[i].alpha.alpha1);
}
