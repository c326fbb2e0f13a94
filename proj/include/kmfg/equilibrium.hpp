#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "kmfg/common.hpp"
#include "kmfg/hjb.hpp"
#include "kmfg/model.hpp"
#include "kmfg/parallel.hpp"
#include "kmfg/torus.hpp"

namespace kmfg {

// F_kappa(alpha) = kappa * (∬ cos nu^omega g, ∬ sin nu^omega g) where nu^omega
// is the invariant measure of the optimally controlled diffusion at alpha.
inline OrderParameters F_kappa(const ModelParams& p, const FrequencyDistribution& dist,
                               const OrderParameters& alpha, const TorusGrid& grid,
                               std::vector<TorusField>* warm = nullptr) {
    const auto& omegas = dist.nodes();
    const auto& weights = dist.weights();
    const std::size_t m = omegas.size();
    std::vector<double> cmom(m), smom(m);
    std::vector<TorusField> solutions(m);
    std::exception_ptr err;
    parallel_for(m, [&](std::size_t i) {
        const TorusField* start =
            (warm && warm->size() == m && (*warm)[i].grid.n == grid.n) ? &(*warm)[i] : nullptr;
        TorusField v = solve_stationary_hjb(p, omegas[i], alpha, grid, start);
        TorusField nu = invariant_measure(p, omegas[i], v);
        cmom[i] = cos_moment(nu);
        smom[i] = sin_moment(nu);
        solutions[i] = std::move(v);
    });
    if (warm) *warm = std::move(solutions);
    double C = 0.0, S = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        C += weights[i] * cmom[i];
        S += weights[i] * smom[i];
    }
    return OrderParameters{p.kappa * C, p.kappa * S};
}

// Symmetric scalar reduction G_kappa(alpha) = F_kappa(alpha, 0)_1.
// Holds per-omega warm starts so scans and bisections reuse nearby solves.
class GMapEvaluator {
public:
    GMapEvaluator(const ModelParams& p, const FrequencyDistribution& dist, const TorusGrid& grid)
        : params_(p), dist_(dist), grid_(grid) {
        if (!dist.symmetric()) throw domain_error("G_kappa: distribution must be symmetric");
    }

    double operator()(double alpha) {
        OrderParameters F = F_kappa(params_, dist_, OrderParameters{alpha, 0.0}, grid_, &warm_);
        return F.alpha1;
    }

    void reset() { warm_.clear(); }

private:
    ModelParams params_;
    FrequencyDistribution dist_;
    TorusGrid grid_;
    std::vector<TorusField> warm_;
};

inline double G_kappa(const ModelParams& p, const FrequencyDistribution& dist, double alpha,
                      const TorusGrid& grid) {
    GMapEvaluator g(p, dist, grid);
    return g(alpha);
}

// dF_kappa(0,0): g-integral of
//   kappa/((gamma^2+omega^2)(sigma^4+4omega^2)) *
//   [ gamma sigma^2 + 2 omega^2,  (sigma^2-2gamma) omega ;
//     (2gamma-sigma^2) omega,     gamma sigma^2 + 2 omega^2 ]
inline Eigen::Matrix2d dF_origin(const ModelParams& p, const FrequencyDistribution& dist) {
    double g = p.gamma(), s2 = p.sigma * p.sigma;
    double a11 = dist.integrate([&](double w) {
        return (g * s2 + 2.0 * w * w) / ((g * g + w * w) * (s2 * s2 + 4.0 * w * w));
    });
    double a12 = dist.integrate([&](double w) {
        return (s2 - 2.0 * g) * w / ((g * g + w * w) * (s2 * s2 + 4.0 * w * w));
    });
    Eigen::Matrix2d M;
    M << a11, a12, -a12, a11;
    return p.kappa * M;
}

// Full 2-D Newton on F_kappa(alpha) - alpha = 0 with a finite-difference
// Jacobian. Rotation invariance makes nonzero roots non-isolated (they come
// in circles), so the step uses a least-squares solve; the iteration settles
// on some point of the circle near the initial guess.
inline OrderParameters refine_fixed_point_2d(const ModelParams& p,
                                             const FrequencyDistribution& dist,
                                             OrderParameters guess, const TorusGrid& grid,
                                             double tol = 1e-8, int max_iter = 30) {
    const double h = 1e-6 * std::max(1.0, p.kappa);
    std::vector<TorusField> warm;
    for (int it = 0; it < max_iter; ++it) {
        OrderParameters F = F_kappa(p, dist, guess, grid, &warm);
        Eigen::Vector2d r(F.alpha1 - guess.alpha1, F.alpha2 - guess.alpha2);
        if (r.cwiseAbs().maxCoeff() < tol) return guess;
        Eigen::Matrix2d J;
        for (int c = 0; c < 2; ++c) {
            OrderParameters up = guess, dn = guess;
            (c == 0 ? up.alpha1 : up.alpha2) += h;
            (c == 0 ? dn.alpha1 : dn.alpha2) -= h;
            OrderParameters Fu = F_kappa(p, dist, up, grid, &warm);
            OrderParameters Fd = F_kappa(p, dist, dn, grid, &warm);
            J(0, c) = (Fu.alpha1 - Fd.alpha1) / (2 * h);
            J(1, c) = (Fu.alpha2 - Fd.alpha2) / (2 * h);
        }
        J -= Eigen::Matrix2d::Identity();
        Eigen::Vector2d step = J.completeOrthogonalDecomposition().solve(-r);
        guess.alpha1 += step(0);
        guess.alpha2 += step(1);
    }
    OrderParameters F = F_kappa(p, dist, guess, grid, &warm);
    double res = std::max(std::abs(F.alpha1 - guess.alpha1), std::abs(F.alpha2 - guess.alpha2));
    if (res >= tol)
        throw convergence_error("refine_fixed_point_2d: Newton did not converge", res);
    return guess;
}

struct FixedPointEntry {
    OrderParameters alpha;        // symmetric line: (alpha, 0)
    double residual = 0.0;        // |G(alpha) - alpha|
    double g_prime = 0.0;         // finite-difference G' at the point (reported, not interpreted)
    bool tangency_suspected = false;
};

struct FixedPointScan {
    double alpha_max = -1.0;  // <0: default kappa
    double step = -1.0;       // <0: default 0.05*kappa
};

struct FixedPointReport {
    double kappa = 0.0;
    std::vector<FixedPointEntry> fixed_points;  // sorted ascending by alpha1
    Eigen::Matrix2d derivative_at_zero;
    // alpha where the scan had to stop because the HJB solver diverged (if any)
    std::optional<double> failure_boundary;
};

// Scan alpha -> G(alpha) - alpha on [0, alpha_max], bracket sign changes and
// refine each by bisection. alpha = 0 is always a fixed point and is always
// included. Tangencies (|G-alpha| dipping below 1e-6 without a sign change)
// are reported with a flag.
inline FixedPointReport find_fixed_points(const ModelParams& p, const FrequencyDistribution& dist,
                                          FixedPointScan scan, const TorusGrid& grid) {
    if (!dist.symmetric())
        throw domain_error("find_fixed_points: distribution must be symmetric");
    double alpha_max = scan.alpha_max > 0 ? scan.alpha_max : p.kappa;
    double step = scan.step > 0 ? scan.step : 0.05 * p.kappa;
    if (alpha_max > p.kappa) alpha_max = p.kappa;  // G <= kappa, nothing beyond

    FixedPointReport report;
    report.kappa = p.kappa;
    report.derivative_at_zero = dF_origin(p, dist);

    GMapEvaluator G(p, dist, grid);
    const double fd_step = 1e-4 * std::max(1.0, p.kappa);

    auto add_point = [&](double a, double residual, bool tangency) {
        for (const auto& e : report.fixed_points)
            if (std::abs(e.alpha.alpha1 - a) < 1e-6 * std::max(1.0, alpha_max)) return;
        FixedPointEntry e;
        e.alpha = OrderParameters{a, 0.0};
        e.residual = residual;
        e.tangency_suspected = tangency;
        double lo = std::max(0.0, a - fd_step);
        e.g_prime = (G(a + fd_step) - G(lo)) / (a + fd_step - lo);
        report.fixed_points.push_back(e);
    };

    add_point(0.0, std::abs(G(0.0)), false);

    int nsteps = static_cast<int>(std::ceil(alpha_max / step));
    std::vector<double> alphas, d;
    double prev_alpha = 0.0, prev_d = 0.0;  // G(0) - 0 = 0
    bool have_prev = true;
    for (int k = 1; k <= nsteps; ++k) {
        double a = std::min(alpha_max, k * step);
        double dk;
        try {
            dk = G(a) - a;
        } catch (const convergence_error&) {
            report.failure_boundary = a;
            break;
        }
        alphas.push_back(a);
        d.push_back(dk);
        if (have_prev && prev_d != 0.0 && dk != 0.0 && std::signbit(prev_d) != std::signbit(dk)) {
            // bisection refinement
            double lo = prev_alpha, hi = a, dlo = prev_d;
            double mid = 0.5 * (lo + hi), dm = 0.0;
            for (int it = 0; it < 80; ++it) {
                mid = 0.5 * (lo + hi);
                dm = G(mid) - mid;
                if (std::abs(dm) < 1e-9) break;
                if (std::signbit(dm) == std::signbit(dlo)) {
                    lo = mid;
                    dlo = dm;
                } else {
                    hi = mid;
                }
            }
            add_point(mid, std::abs(dm), false);
        }
        prev_alpha = a;
        prev_d = dk;
        have_prev = true;
    }

    // Tangency sweep: local minima of |d| below 1e-6 that produced no crossing.
    for (std::size_t i = 1; i + 1 < d.size(); ++i) {
        double ad = std::abs(d[i]);
        if (ad < 1e-6 && ad <= std::abs(d[i - 1]) && ad <= std::abs(d[i + 1]) &&
            std::signbit(d[i - 1]) == std::signbit(d[i + 1])) {
            add_point(alphas[i], ad, true);
        }
    }

    std::sort(report.fixed_points.begin(), report.fixed_points.end(),
              [](const FixedPointEntry& a, const FixedPointEntry& b) {
                  return a.alpha.alpha1 < b.alpha.alpha1;
              });
    return report;
}

}  // namespace kmfg
