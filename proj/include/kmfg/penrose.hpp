#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "kmfg/common.hpp"
#include "kmfg/model.hpp"
#include "kmfg/parallel.hpp"

namespace kmfg {

using Complex = std::complex<double>;

// Q(z, omega) = (z + sigma^2/2 - i omega)(gamma + i omega - z)
inline Complex Q_factor(const ModelParams& p, Complex z, double omega) {
    Complex iw(0.0, omega);
    return (z + 0.5 * p.sigma * p.sigma - iw) * (p.gamma() + iw - z);
}

inline bool in_strip(const ModelParams& p, Complex z) {
    return z.real() > -0.5 * p.sigma * p.sigma && z.real() < p.gamma();
}

// P(z) = ∫ 1/Q(z, omega) g(domega) on the strip Re(z) in (-sigma^2/2, gamma).
inline Complex P(const FrequencyDistribution& dist, const ModelParams& p, Complex z) {
    if (!in_strip(p, z)) {
        std::ostringstream os;
        os << "P: Re(z)=" << z.real() << " outside the strip (" << -0.5 * p.sigma * p.sigma
           << ", " << p.gamma() << ")";
        throw domain_error(os.str());
    }
    return dist.integrate([&](double w) { return 1.0 / Q_factor(p, z, w); });
}

// P'(z) = ∫ (1/Q)(1/(gamma+i omega-z) - 1/(sigma^2/2+z-i omega)) g(domega)
inline Complex P_prime(const FrequencyDistribution& dist, const ModelParams& p, Complex z) {
    if (!in_strip(p, z)) {
        std::ostringstream os;
        os << "P_prime: Re(z)=" << z.real() << " outside the strip";
        throw domain_error(os.str());
    }
    return dist.integrate([&](double w) {
        Complex iw(0.0, w);
        Complex f1 = p.gamma() + iw - z;
        Complex f2 = 0.5 * p.sigma * p.sigma + z - iw;
        return (1.0 / (f1 * f2)) * (1.0 / f1 - 1.0 / f2);
    });
}

// theta beyond which the decay bound guarantees |P(i theta)| < tol.
// Computable stand-in C' = 2/(gamma sigma^2) + beta for the decay constant,
// validated empirically by the boundary check in the tests.
inline double default_theta_max(const FrequencyDistribution& dist, const ModelParams& p,
                                double tol = 1e-3) {
    double m2 = dist.second_moment();
    double cprime = 2.0 / (p.gamma() * p.sigma * p.sigma) + p.beta;
    return std::sqrt(cprime * (1.0 + m2) / tol);
}

struct PenroseCrossing {
    double theta;
    double re_p;
};

struct PenroseCurve {
    std::vector<double> thetas;
    std::vector<Complex> values;
    std::vector<PenroseCrossing> crossings;  // Im P(i theta*) = 0, refined
    double theta_max = 0.0;
};

// Sample P(i theta) on [-theta_max, theta_max] and refine every sign change
// of Im P by secant iteration.
inline PenroseCurve trace_curve(const FrequencyDistribution& dist, const ModelParams& p,
                                double theta_max = -1.0, int samples = 4001) {
    if (theta_max <= 0.0) theta_max = default_theta_max(dist, p);
    if (samples < 16) throw domain_error("trace_curve: need at least 16 samples");

    PenroseCurve curve;
    curve.theta_max = theta_max;
    curve.thetas.resize(samples);
    curve.values.resize(samples);
    parallel_for(samples, [&](std::size_t i) {
        double th = -theta_max + 2.0 * theta_max * static_cast<double>(i) / (samples - 1);
        curve.thetas[i] = th;
        curve.values[i] = P(dist, p, Complex(0.0, th));
    });

    auto im_p = [&](double th) { return P(dist, p, Complex(0.0, th)).imag(); };

    for (int i = 0; i + 1 < samples; ++i) {
        double fa = curve.values[i].imag();
        double fb = curve.values[i + 1].imag();
        double a = curve.thetas[i], b = curve.thetas[i + 1];
        bool bracket = (fa == 0.0) || (std::signbit(fa) != std::signbit(fb));
        if (!bracket) continue;
        // secant refinement, falling back to the midpoint when the update
        // leaves the bracket
        double x0 = a, x1 = b, f0 = fa, f1 = fb;
        if (fa == 0.0) {
            x1 = a;
            f1 = 0.0;
        }
        for (int it = 0; it < 50 && std::abs(f1) > 1e-12; ++it) {
            double dx = (f1 - f0);
            double x2 = (dx != 0.0) ? x1 - f1 * (x1 - x0) / dx : 0.5 * (a + b);
            if (!(x2 >= a - 1e-9 && x2 <= b + 1e-9)) x2 = 0.5 * (x0 + x1);
            x0 = x1;
            f0 = f1;
            x1 = x2;
            f1 = im_p(x1);
        }
        double theta_star = x1;
        bool dup = false;
        for (const auto& c : curve.crossings)
            if (std::abs(c.theta - theta_star) < 1e-8) dup = true;
        if (!dup && std::abs(f1) < 1e-10)
            curve.crossings.push_back({theta_star, P(dist, p, Complex(0.0, theta_star)).real()});
    }
    std::sort(curve.crossings.begin(), curve.crossings.end(),
              [](const PenroseCrossing& a, const PenroseCrossing& b) { return a.theta < b.theta; });
    return curve;
}

// kappa_P(g) = 2 / max{ Re P(i theta*) > 0 }; +inf when the curve never
// crosses the positive real axis.
inline double kappa_P(const FrequencyDistribution& dist, const ModelParams& p,
                      double theta_max = -1.0, int samples = 4001) {
    PenroseCurve curve = trace_curve(dist, p, theta_max, samples);
    double pstar = 0.0;
    for (const auto& c : curve.crossings) pstar = std::max(pstar, c.re_p);
    if (pstar <= 0.0) return std::numeric_limits<double>::infinity();
    return 2.0 / pstar;
}

namespace detail {

// Gauss(7)/Kronrod(15) pair on [-1, 1] (QUADPACK dqk15 constants).
inline const double gk15_nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline const double gk15_wk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline const double gk15_wg[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

// Gauss nodes are the odd-index Kronrod nodes plus the center.
template <typename Fn>
void gk15(Fn&& f, double a, double b, Complex& kronrod, double& err) {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    Complex fc = f(c);
    Complex resk = gk15_wk[7] * fc;
    Complex resg = gk15_wg[3] * fc;
    for (int i = 0; i < 7; ++i) {
        double x = gk15_nodes[i];
        Complex v = f(c - h * x) + f(c + h * x);
        resk += gk15_wk[i] * v;
        if (i % 2 == 1) resg += gk15_wg[i / 2] * v;
    }
    kronrod = resk * h;
    err = std::abs(resg * h - kronrod);
}

template <typename Fn>
Complex adaptive_gk(Fn&& f, double a, double b, double tol, int depth = 0) {
    Complex k;
    double err;
    gk15(f, a, b, k, err);
    if (err < tol || depth > 28) return k;
    double m = 0.5 * (a + b);
    return adaptive_gk(f, a, m, 0.5 * tol, depth + 1) +
           adaptive_gk(f, m, b, 0.5 * tol, depth + 1);
}

}  // namespace detail

// Argument-principle count of zeros of 1 - (kappa/2) P(z) inside the
// rectangle [x_lo, x_hi] x [-theta_cap, theta_cap].
inline int count_zeros(const FrequencyDistribution& dist, const ModelParams& p, double kappa,
                       double x_lo, double x_hi, double theta_cap = -1.0) {
    if (!(x_lo < x_hi)) throw domain_error("count_zeros: empty strip");
    if (!(x_lo > -0.5 * p.sigma * p.sigma) || !(x_hi < p.gamma()))
        throw domain_error("count_zeros: strip must be inside (-sigma^2/2, gamma)");
    if (kappa == 0.0) return 0;
    if (theta_cap <= 0.0) {
        double m2 = dist.second_moment();
        double cprime = 2.0 / (p.gamma() * p.sigma * p.sigma) + p.beta;
        theta_cap = std::sqrt(2.0 * cprime * (1.0 + m2) * std::max(kappa, 1.0));
        theta_cap = std::max(theta_cap, 10.0);
    }

    // min |1-(kappa/2)P| is tracked at every contour evaluation; the adaptive
    // refinement concentrates nodes near any pole sitting on the boundary, so
    // boundary zeros are detected even between the coarse probe points.
    double min_abs = std::numeric_limits<double>::infinity();
    auto f_of = [&](Complex z) {
        Complex f = 1.0 - 0.5 * kappa * P(dist, p, z);
        min_abs = std::min(min_abs, std::abs(f));
        return f;
    };
    auto integrand = [&](Complex z) {
        return -0.5 * kappa * P_prime(dist, p, z) / f_of(z);
    };

    const int probe = 160;
    Complex corners[4] = {Complex(x_lo, -theta_cap), Complex(x_hi, -theta_cap),
                          Complex(x_hi, theta_cap), Complex(x_lo, theta_cap)};
    for (int s = 0; s < 4; ++s) {
        Complex z0 = corners[s], z1 = corners[(s + 1) % 4];
        for (int i = 0; i <= probe; ++i)
            f_of(z0 + (z1 - z0) * (static_cast<double>(i) / probe));
    }
    auto boundary_check = [&]() {
        if (min_abs < 1e-6) {
            std::ostringstream os;
            os << "count_zeros: |1-(kappa/2)P| = " << min_abs
               << " on the contour; zero too close to the boundary";
            throw numerical_error(os.str());
        }
    };
    boundary_check();

    Complex total(0.0, 0.0);
    for (int s = 0; s < 4; ++s) {
        Complex z0 = corners[s], z1 = corners[(s + 1) % 4];
        auto g = [&](double t) { return integrand(z0 + (z1 - z0) * t) * (z1 - z0); };
        total += detail::adaptive_gk(g, 0.0, 1.0, 2.5e-5);
        boundary_check();
    }
    double winding = (total / Complex(0.0, two_pi)).real();
    double rounded = std::round(winding);
    if (std::abs(winding - rounded) > 0.1) {
        std::ostringstream os;
        os << "count_zeros: winding integral " << winding
           << " is not close to an integer (theta_cap too small?)";
        throw numerical_error(os.str());
    }
    return static_cast<int>(rounded);
}

enum class QuarticCase { complex_pair, four_real, double_real };

inline const char* quartic_case_name(QuarticCase c) {
    switch (c) {
        case QuarticCase::complex_pair: return "complex-pair";
        case QuarticCase::four_real: return "four-real";
        case QuarticCase::double_real: return "double-real";
    }
    return "?";
}

struct QuarticReport {
    // coefficients of N(z) = c4 z^4 + ... + c0 (real)
    std::array<double, 5> coeffs;  // c0..c4
    std::array<Complex, 4> roots;
    QuarticCase case_kind;
    double max_penrose_deviation;  // max |2 - kappa P(r)| over roots off the poles
};

// N(z) = 4 Q(z,w0) Q(z,-w0) - kappa (Q(z,w0) + Q(z,-w0)); quartic with real
// coefficients, roots via the companion matrix.
inline QuarticReport N_quartic(const ModelParams& p, double omega0, double kappa) {
    if (omega0 < 0.0) throw domain_error("N_quartic: omega0 must be >= 0");
    double g = p.gamma(), b = p.beta, a = 0.5 * p.sigma * p.sigma;
    double m = g * a + omega0 * omega0;  // Re of constant term of Q
    double t = b * omega0;               // -Im of constant term of Q
    // Q(z, w)  = -z^2 + (b + 2iw) z + (m - i t)   [w = +omega0]
    // Q(z,-w)  = -z^2 + (b - 2iw) z + (m + i t)
    // product (real): z^4 - 2b z^3 + (b^2 + 4w^2 - 2m) z^2 + (2bm - 4wt) z + m^2 + t^2
    double w0 = omega0;
    std::array<double, 5> prod = {m * m + t * t, 2.0 * b * m - 4.0 * w0 * t,
                                  b * b + 4.0 * w0 * w0 - 2.0 * m, -2.0 * b, 1.0};
    // Q(z,w)+Q(z,-w) = -2 z^2 + 2b z + 2m
    QuarticReport rep;
    rep.coeffs = {4.0 * prod[0] - 2.0 * kappa * m, 4.0 * prod[1] - 2.0 * kappa * b,
                  4.0 * prod[2] + 2.0 * kappa, 4.0 * prod[3], 4.0 * prod[4]};

    // companion matrix of the monic quartic
    Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
    for (int i = 0; i < 3; ++i) C(i + 1, i) = 1.0;
    for (int i = 0; i < 4; ++i) C(i, 3) = -rep.coeffs[i] / rep.coeffs[4];
    Eigen::EigenSolver<Eigen::Matrix4d> es(C);
    for (int i = 0; i < 4; ++i) rep.roots[i] = es.eigenvalues()(i);
    std::sort(rep.roots.begin(), rep.roots.end(), [](Complex u, Complex v) {
        if (u.real() != v.real()) return u.real() < v.real();
        return u.imag() < v.imag();
    });

    // classification: conjugate quadruple / four real / double real
    double max_im = 0.0;
    for (auto& r : rep.roots) max_im = std::max(max_im, std::abs(r.imag()));
    if (max_im > 1e-7) {
        rep.case_kind = QuarticCase::complex_pair;
    } else {
        std::array<double, 4> xs;
        for (int i = 0; i < 4; ++i) xs[i] = rep.roots[i].real();
        std::sort(xs.begin(), xs.end());
        bool doubled = (std::abs(xs[1] - xs[0]) < 1e-7 && std::abs(xs[3] - xs[2]) < 1e-7 &&
                        std::abs(xs[2] - xs[1]) > 1e-7);
        rep.case_kind = doubled ? QuarticCase::double_real : QuarticCase::four_real;
    }

    // each root off the poles of P must be a zero of 2 - kappa P
    rep.max_penrose_deviation = 0.0;
    if (kappa != 0.0) {
        for (auto& r : rep.roots) {
            Complex qp = Q_factor(p, r, omega0), qm = Q_factor(p, r, -omega0);
            double qscale = std::max(1.0, std::max(std::abs(qp), std::abs(qm)));
            if (std::abs(qp) < 1e-8 * qscale || std::abs(qm) < 1e-8 * qscale) continue;
            Complex two_minus = 2.0 - kappa * (0.5 / qp + 0.5 / qm);
            rep.max_penrose_deviation = std::max(rep.max_penrose_deviation, std::abs(two_minus));
        }
        if (rep.max_penrose_deviation > 1e-6)
            throw numerical_error("N_quartic: roots inconsistent with zeros of 2 - kappa P");
    }
    return rep;
}

}  // namespace kmfg
