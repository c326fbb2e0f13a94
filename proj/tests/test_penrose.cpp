#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "kmfg/penrose.hpp"
#include "oracle_helpers.hpp"

using kmfg::Complex;
using kmfg::FrequencyDistribution;
using kmfg::ModelParams;

TEST_CASE("strip domain is enforced") {
    ModelParams p(1.0, 1.0, 1.0);
    auto d = FrequencyDistribution::delta0();
    CHECK_THROWS_AS(kmfg::P(d, p, Complex(1.5, 0.0)), kmfg::domain_error);
    CHECK_THROWS_AS(kmfg::P(d, p, Complex(-0.5, 0.0)), kmfg::domain_error);
    CHECK_NOTHROW(kmfg::P(d, p, Complex(0.0, 3.0)));
}

TEST_CASE("delta0 closed form P(i theta) = 1/(gamma sigma^2/2 + theta^2 + i beta theta)") {
    ModelParams p(1.0, 1.0, 1.0);
    auto d = FrequencyDistribution::delta0();
    auto gen = oracle::rng(3);
    std::uniform_real_distribution<double> U(-20.0, 20.0);
    for (int i = 0; i < 20; ++i) {
        double th = U(gen);
        Complex expect =
            1.0 / Complex(p.gamma() * p.sigma * p.sigma / 2.0 + th * th, p.beta * th);
        Complex got = kmfg::P(d, p, Complex(0.0, th));
        CHECK(std::abs(got - expect) < 1e-14);
    }
}

TEST_CASE("P(0) = 2/kappa_c for symmetric distributions") {
    auto gen = oracle::rng(17);
    std::uniform_real_distribution<double> Uw(0.1, 6.0), Up(0.3, 2.5), Uwt(0.05, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        ModelParams p(1.0, Up(gen), Up(gen));
        int pairs = 1 + static_cast<int>(Uw(gen)) % 3;
        std::vector<std::pair<double, double>> nodes;
        std::vector<double> raw;
        for (int k = 0; k < pairs; ++k) raw.push_back(Uwt(gen));
        double tot = 2.0 * std::accumulate(raw.begin(), raw.end(), 0.0);
        for (int k = 0; k < pairs; ++k) {
            double w = Uw(gen);
            nodes.push_back({w, raw[k] / tot});
            nodes.push_back({-w, raw[k] / tot});
        }
        auto d = FrequencyDistribution::dirac(nodes);
        double kc = kmfg::kappa_c(d, p);
        Complex p0 = kmfg::P(d, p, Complex(0.0, 0.0));
        CHECK(std::abs(p0 - Complex(2.0 / kc, 0.0)) < 1e-10);
    }
    ModelParams p(1.0, 1.0, 2.0);
    for (const auto& d : {FrequencyDistribution::gaussian(0.0, 1.0),
                          FrequencyDistribution::uniform_interval(1.5)}) {
        double kc = kmfg::kappa_c(d, p);
        CHECK(std::abs(kmfg::P(d, p, Complex(0.0, 0.0)) - Complex(2.0 / kc, 0.0)) < 1e-8);
    }
}

TEST_CASE("conjugate symmetry P(conj z) = conj P(z)") {
    ModelParams p(1.0, 1.0, 1.0);
    auto d = FrequencyDistribution::two_dirac(2.0);
    auto gen = oracle::rng(23);
    std::uniform_real_distribution<double> Ux(-0.45, 1.45), Uy(-10.0, 10.0);
    for (int i = 0; i < 10; ++i) {
        Complex z(Ux(gen), Uy(gen));
        CHECK(std::abs(kmfg::P(d, p, std::conj(z)) - std::conj(kmfg::P(d, p, z))) < 1e-12);
    }
}

TEST_CASE("beta/2 reflection symmetry of P") {
    ModelParams p(1.0, 1.0, 1.0);
    auto d = FrequencyDistribution::two_dirac(2.0);
    for (double y : {0.3, 1.7}) {
        Complex z(0.2, y);
        Complex lhs = kmfg::P(d, p, z + 0.5 * p.beta);
        Complex rhs = kmfg::P(d, p, -z + 0.5 * p.beta);
        CHECK(std::abs(lhs - rhs) < 1e-13);
    }
}

TEST_CASE("curve tracing: delta0 has exactly one crossing, at theta = 0") {
    ModelParams p(1.0, 1.0, 1.0);
    auto curve = kmfg::trace_curve(FrequencyDistribution::delta0(), p);
    REQUIRE(curve.crossings.size() == 1);
    CHECK(std::abs(curve.crossings[0].theta) < 1e-10);
    CHECK(curve.crossings[0].re_p ==
          Catch::Approx(2.0 / (p.gamma() * p.sigma * p.sigma)).margin(1e-10));
}

TEST_CASE("curve tracing: two-dirac crossing structure") {
    ModelParams p(1.0, 1.0, 1.0);
    auto curve = kmfg::trace_curve(FrequencyDistribution::two_dirac(2.0), p);
    int positive = 0;
    for (const auto& c : curve.crossings)
        if (c.re_p > 0) ++positive;
    CHECK(positive >= 2);
    // crossings are theta-symmetric
    for (const auto& c : curve.crossings) {
        bool found = false;
        for (const auto& c2 : curve.crossings)
            if (std::abs(c2.theta + c.theta) < 1e-6) found = true;
        CHECK(found);
    }
    // endpoints decayed below 1e-3
    CHECK(std::abs(curve.values.front()) < 1e-3);
    CHECK(std::abs(curve.values.back()) < 1e-3);
}

TEST_CASE("kappa_P values") {
    SECTION("delta0: kappa_P == kappa_c == gamma sigma^2") {
        ModelParams p(1.0, 1.0, 1.0);
        double kp = kmfg::kappa_P(FrequencyDistribution::delta0(), p);
        CHECK(std::abs(kp - 1.5) < 1e-8);
    }
    SECTION("two-dirac omega0=2: ~2.88, below kappa_c ~11.18") {
        ModelParams p(1.0, 1.0, 1.0);
        auto d = FrequencyDistribution::two_dirac(2.0);
        double kp = kmfg::kappa_P(d, p);
        CHECK(kp > 2.85);
        CHECK(kp < 2.95);
        CHECK(kp == Catch::Approx(2.8781778).margin(1e-4));  // frozen from a fine bisection scan
        CHECK(kp <= kmfg::kappa_c(d, p) + 1e-9);
    }
    SECTION("gaussian: observed equal to kappa_c (loose assert, observational)") {
        ModelParams p(1.0, 1.0, 2.0);
        auto d = FrequencyDistribution::gaussian(0.0, 1.0);
        double kp = kmfg::kappa_P(d, p);
        double kc = kmfg::kappa_c(d, p);
        CHECK(std::abs(kp - kc) < 1e-2 * kc);
        CHECK(kp <= kc + 1e-9);
    }
    SECTION("kappa_P <= kappa_c for symmetric dists") {
        ModelParams p(1.0, 0.7, 1.2);
        for (const auto& d :
             {FrequencyDistribution::two_dirac(1.0), FrequencyDistribution::uniform_interval(2.0),
              FrequencyDistribution::gaussian(0.0, 0.5)}) {
            CHECK(kmfg::kappa_P(d, p) <= kmfg::kappa_c(d, p) + 1e-9);
        }
    }
}

TEST_CASE("decay bound on the sampled boundary") {
    ModelParams p(1.0, 1.0, 1.0);
    for (const auto& d : {FrequencyDistribution::two_dirac(2.0),
                          FrequencyDistribution::gaussian(0.0, 1.0)}) {
        double tm = kmfg::default_theta_max(d, p);
        for (double x : {0.0, 0.5 * p.beta, p.beta}) {
            CHECK(std::abs(kmfg::P(d, p, Complex(x, tm))) < 1e-3);
            CHECK(std::abs(kmfg::P(d, p, Complex(x, -tm))) < 1e-3);
        }
    }
}

TEST_CASE("holomorphy proxy: Cauchy-Riemann via finite differences") {
    ModelParams p(1.0, 1.0, 1.0);
    auto d = FrequencyDistribution::two_dirac(2.0);
    auto gen = oracle::rng(31);
    std::uniform_real_distribution<double> Ux(-0.4, 1.4), Uy(-5.0, 5.0);
    double h = 1e-6;
    for (int i = 0; i < 8; ++i) {
        Complex z(Ux(gen), Uy(gen));
        Complex dx = (kmfg::P(d, p, z + h) - kmfg::P(d, p, z - h)) / (2.0 * h);
        Complex dy = (kmfg::P(d, p, z + Complex(0, h)) - kmfg::P(d, p, z - Complex(0, h))) /
                     Complex(0.0, 2.0 * h);
        CHECK(std::abs(dx - dy) < 1e-5);
    }
}

TEST_CASE("P_prime checks") {
    ModelParams p(1.0, 1.0, 1.0);
    auto d = FrequencyDistribution::two_dirac(2.0);
    SECTION("symmetric dist: P'(beta/2) = 0") {
        CHECK(std::abs(kmfg::P_prime(d, p, Complex(0.5 * p.beta, 0.0))) < 1e-13);
    }
    SECTION("delta0 closed-form derivative") {
        auto d0 = FrequencyDistribution::delta0();
        auto gen = oracle::rng(37);
        std::uniform_real_distribution<double> Uy(-8.0, 8.0);
        for (int i = 0; i < 10; ++i) {
            Complex z(0.3, Uy(gen));
            // d/dz of (den)^-1 with den = (gamma - z)(sigma^2/2 + z): P' = -den'/den^2
            Complex den = (p.gamma() - z) * (0.5 * p.sigma * p.sigma + z);
            Complex denp = -(0.5 * p.sigma * p.sigma + z) + (p.gamma() - z);
            Complex expect = -denp / (den * den);
            CHECK(std::abs(kmfg::P_prime(d0, p, z) - expect) < 1e-12);
        }
    }
    SECTION("FD consistency at random strip points") {
        auto gen = oracle::rng(41);
        std::uniform_real_distribution<double> Ux(-0.4, 1.4), Uy(-6.0, 6.0);
        double h = 1e-6;
        for (int i = 0; i < 10; ++i) {
            Complex z(Ux(gen), Uy(gen));
            Complex fd = (kmfg::P(d, p, z + h) - kmfg::P(d, p, z - h)) / (2.0 * h);
            Complex an = kmfg::P_prime(d, p, z);
            CHECK(std::abs(fd - an) < 1e-6 * std::max(1.0, std::abs(an)));
        }
    }
}

TEST_CASE("count_zeros basics") {
    ModelParams p(1.0, 1.0, 1.0);
    auto d = FrequencyDistribution::two_dirac(2.0);
    CHECK(kmfg::count_zeros(d, p, 0.0, 0.0, p.beta) == 0);
    SECTION("below kappa_P: no zeros on [0, beta]") {
        for (double kap : {1.0, 2.0, 2.5})
            CHECK(kmfg::count_zeros(d, p, kap, 0.0, p.beta) == 0);
    }
    SECTION("above kappa_P: zeros appear") {
        for (double kap : {3.5, 5.0})
            CHECK(kmfg::count_zeros(d, p, kap, 0.0, p.beta) >= 1);
    }
    SECTION("strip validation") {
        CHECK_THROWS_AS(kmfg::count_zeros(d, p, 1.0, -1.0, p.beta), kmfg::domain_error);
        CHECK_THROWS_AS(kmfg::count_zeros(d, p, 1.0, 0.0, 2.0), kmfg::domain_error);
    }
    SECTION("zero on the contour is rejected") {
        // at kappa = kappa_P the zero of 1-(kappa/2)P sits on Re z = 0
        double kp = kmfg::kappa_P(d, p);
        CHECK_THROWS_AS(kmfg::count_zeros(d, p, kp, 0.0, p.beta), kmfg::numerical_error);
    }
}

TEST_CASE("count_zeros agrees with quartic root locations") {
    ModelParams p(1.0, 1.0, 1.0);
    double w0 = 2.0;
    auto d = FrequencyDistribution::two_dirac(w0);
    for (double kap : {1.0, 2.0, 2.5, 3.5, 5.0}) {
        auto quartic = kmfg::N_quartic(p, w0, kap);
        int inside = 0;
        for (const auto& r : quartic.roots)
            if (r.real() >= 0.0 && r.real() <= p.beta) ++inside;
        CHECK(kmfg::count_zeros(d, p, kap, 0.0, p.beta) == inside);
    }
}

TEST_CASE("N_quartic structure") {
    ModelParams p(1.0, 1.0, 1.0);
    double w0 = 2.0;
    SECTION("kappa=0: roots are the Q zeros") {
        auto rep = kmfg::N_quartic(p, w0, 0.0);
        std::vector<Complex> expect = {Complex(p.gamma(), w0), Complex(p.gamma(), -w0),
                                       Complex(-0.5 * p.sigma * p.sigma, w0),
                                       Complex(-0.5 * p.sigma * p.sigma, -w0)};
        for (const auto& e : expect) {
            double best = 1e9;
            for (const auto& r : rep.roots) best = std::min(best, std::abs(r - e));
            CHECK(best < 1e-9);
        }
    }
    SECTION("roots are symmetric about Re = beta/2, pairwise") {
        for (double kap : {0.5, 2.0, 4.0, 8.0}) {
            auto rep = kmfg::N_quartic(p, w0, kap);
            for (const auto& r : rep.roots) {
                Complex mirror(p.beta - r.real(), r.imag());
                double best = 1e9;
                for (const auto& r2 : rep.roots)
                    best = std::min(best, std::abs(std::conj(r2) - mirror));
                // N has real coefficients: mirror of a root matches a conjugate root
                double best2 = 1e9;
                for (const auto& r2 : rep.roots) best2 = std::min(best2, std::abs(r2 - mirror));
                CHECK(std::min(best, best2) < 1e-7);
            }
        }
    }
    SECTION("kappa=2: no root with real part inside [0, beta]") {
        auto rep = kmfg::N_quartic(p, w0, 2.0);
        for (const auto& r : rep.roots) {
            bool inside = r.real() >= 0.0 && r.real() <= p.beta;
            CHECK_FALSE(inside);
        }
        CHECK(rep.case_kind == kmfg::QuarticCase::complex_pair);
        CHECK(rep.max_penrose_deviation < 1e-9);
    }
    SECTION("frozen roots for the kappa=2 benchmark") {
        auto rep = kmfg::N_quartic(p, w0, 2.0);
        // from an independent numpy companion-matrix solve of the same quartic
        double found = 0;
        for (const auto& r : rep.roots) {
            if (std::abs(r - Complex(1.1971857554, 1.9965139562)) < 1e-8) ++found;
            if (std::abs(r - Complex(-0.1971857554, -1.9965139562)) < 1e-8) ++found;
        }
        CHECK(found == 2);
    }
}
