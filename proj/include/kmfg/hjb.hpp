#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "kmfg/common.hpp"
#include "kmfg/model.hpp"
#include "kmfg/torus.hpp"

namespace kmfg {

// Order parameters (alpha1, alpha2) of the mean-field cost
// kappa*c(x, alpha) = kappa - alpha1*cos(x) - alpha2*sin(x).
struct OrderParameters {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
};

inline Eigen::VectorXd cost_profile(const ModelParams& p, const OrderParameters& a,
                                    const TorusGrid& grid) {
    Eigen::VectorXd c(grid.n);
    for (int j = 0; j < grid.n; ++j) {
        double x = grid.point(j);
        c(j) = p.kappa - a.alpha1 * std::cos(x) - a.alpha2 * std::sin(x);
    }
    return c;
}

// Max-norm residual of the stationary HJB
//   omega v' + (sigma^2/2) v'' + kappa c(x,alpha) - (v')^2/2 - beta v
// with spectral derivatives.
inline double hjb_residual(const ModelParams& p, double omega, const OrderParameters& a,
                           const TorusField& v) {
    const auto& ops = detail::spectral_ops(v.grid.n);
    Eigen::VectorXd vx = ops.d1 * v.values;
    Eigen::VectorXd r = omega * vx + 0.5 * p.sigma * p.sigma * (ops.d2 * v.values) +
                        cost_profile(p, a, v.grid) - 0.5 * vx.cwiseProduct(vx) -
                        p.beta * v.values;
    return r.cwiseAbs().maxCoeff();
}

struct HjbOptions {
    int max_iterations = 50;
    double tolerance = 1e-11;
    double min_step = 1e-4;
};

// Fourier-collocation Newton solve of the stationary HJB, damped line search,
// initial guess v = kappa/beta (or a caller-supplied warm start).
inline TorusField solve_stationary_hjb(const ModelParams& p, double omega,
                                       const OrderParameters& a, const TorusGrid& grid,
                                       const TorusField* warm_start = nullptr,
                                       const HjbOptions& opt = {}) {
    const int n = grid.n;
    const auto& ops = detail::spectral_ops(n);
    Eigen::VectorXd c = cost_profile(p, a, grid);
    Eigen::MatrixXd A0 = omega * ops.d1 + 0.5 * p.sigma * p.sigma * ops.d2;
    A0.diagonal().array() -= p.beta;

    Eigen::VectorXd v = (warm_start && warm_start->grid.n == n)
                            ? warm_start->values
                            : Eigen::VectorXd::Constant(n, p.kappa / p.beta);

    auto residual = [&](const Eigen::VectorXd& vv) -> Eigen::VectorXd {
        Eigen::VectorXd vx = ops.d1 * vv;
        return A0 * vv + c - 0.5 * vx.cwiseProduct(vx).eval();
    };

    Eigen::VectorXd R = residual(v);
    double rnorm = R.cwiseAbs().maxCoeff();
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (rnorm < opt.tolerance) return TorusField(grid, v);
        Eigen::VectorXd vx = ops.d1 * v;
        Eigen::MatrixXd J = A0 - vx.asDiagonal() * ops.d1;
        Eigen::VectorXd step = J.partialPivLu().solve(-R);
        if (!step.allFinite())
            throw convergence_error("solve_stationary_hjb: singular Newton system", rnorm);

        double s = 1.0;
        Eigen::VectorXd vn;
        Eigen::VectorXd Rn;
        double rn = rnorm;
        while (true) {
            vn = v + s * step;
            Rn = residual(vn);
            rn = Rn.cwiseAbs().maxCoeff();
            if (rn <= (1.0 - 0.5 * s) * rnorm || s <= opt.min_step) break;
            s *= 0.5;
        }
        if (rn >= rnorm && rnorm < 1e3 * opt.tolerance) {
            // stagnated at roundoff floor; accept if already essentially converged
            return TorusField(grid, v);
        }
        v = vn;
        R = Rn;
        rnorm = rn;
    }
    if (rnorm < opt.tolerance) return TorusField(grid, v);
    std::ostringstream os;
    os << "solve_stationary_hjb: Newton did not converge (omega=" << omega
       << ", alpha=(" << a.alpha1 << "," << a.alpha2 << "), residual=" << rnorm << ")";
    throw convergence_error(os.str(), rnorm);
}

// log xi^omega = -(2/sigma^2)(omega x - v(x)); kept in log space because the
// linear term reaches hundreds for large |omega|/sigma^2.
inline TorusField xi_log(const ModelParams& p, double omega, const TorusField& v) {
    double c = 2.0 / (p.sigma * p.sigma);
    TorusField out(v.grid);
    for (int j = 0; j < v.grid.n; ++j)
        out.values(j) = -c * (omega * v.grid.point(j) - v.values(j));
    return out;
}

// Invariant probability density of dX = (omega - v_x) dt + sigma dB on the torus.
//
// Writing xi = e^{-lambda x} p(x) with lambda = 2 omega/sigma^2 and
// p = e^{(2/sigma^2) v}, the wrapped-antiderivative form of the invariant
// density is nu(x) ∝ p(x)^{-1} ∫_0^{2pi} e^{-lambda u} p(x+u) du, which is
// evaluated mode-by-mode: the u-integral of e^{-lambda u} e^{iku} is
// (1 - e^{-2pi lambda})/(lambda - ik), exact for each Fourier mode of p.
// This is algebraically the bracket of the direct formula
//   nu ∝ xi^{-1} [ ∫_0^{2pi} xi + (e^{-4pi omega/sigma^2} - 1) ∫_0^x xi ]
// but avoids its catastrophic cancellation at large |omega|/sigma^2.
inline TorusField invariant_measure(const ModelParams& p, double omega, const TorusField& v) {
    const int n = v.grid.n;
    const double lambda = 2.0 * omega / (p.sigma * p.sigma);

    Eigen::VectorXd s = (2.0 / (p.sigma * p.sigma)) * v.values;
    s.array() -= s.maxCoeff();
    std::vector<std::complex<double>> ph(n);
    Eigen::VectorXd pvals(n);
    for (int j = 0; j < n; ++j) {
        pvals(j) = std::exp(s(j));
        ph[j] = pvals(j);
    }
    detail::fft_inplace(ph, false);
    for (auto& z : ph) z /= static_cast<double>(n);

    // Mode weights W_k; a common positive factor is dropped for lambda < 0
    // (it cancels in the normalization).
    auto weight = [&](int k) -> std::complex<double> {
        std::complex<double> den(lambda, -static_cast<double>(k));
        if (lambda == 0.0)
            return (k == 0) ? std::complex<double>(two_pi, 0.0) : std::complex<double>(0.0, 0.0);
        double num = (lambda > 0.0) ? -std::expm1(-two_pi * lambda) : std::expm1(two_pi * lambda);
        return num / den;
    };

    std::vector<std::complex<double>> q(n);
    for (int idx = 0; idx < n; ++idx) {
        int k = (idx <= n / 2) ? idx : idx - n;  // FFT bin -> signed frequency
        if (idx == n / 2) {
            // Nyquist bin: split symmetrically between +n/2 and -n/2
            q[idx] = ph[idx] * (0.5 * (weight(n / 2) + weight(-n / 2)));
        } else {
            q[idx] = ph[idx] * weight(k);
        }
    }
    detail::fft_inplace(q, true);
    for (auto& z : q) z *= static_cast<double>(n);

    TorusField nu(v.grid);
    for (int j = 0; j < n; ++j) nu.values(j) = q[j].real() / pvals(j);

    double mass = trapezoid(nu);
    if (!(mass > 0.0) || !std::isfinite(mass))
        throw numerical_error("invariant_measure: non-positive total mass");
    nu.values /= mass;

    double mn = nu.values.minCoeff();
    if (mn < -1e-12) {
        std::ostringstream os;
        os << "invariant_measure: negative density " << mn << " (inconsistent v?)";
        throw numerical_error(os.str());
    }
    return nu;
}

// Max-norm of the stationary Kolmogorov-Fokker-Planck operator
//   d/dx((omega - v_x) nu) - (sigma^2/2) nu_xx
// applied to nu, spectral derivatives throughout.
inline double fp_residual(const ModelParams& p, double omega, const TorusField& v,
                          const TorusField& nu) {
    if (!(v.grid == nu.grid)) throw domain_error("fp_residual: fields on different grids");
    const auto& ops = detail::spectral_ops(v.grid.n);
    Eigen::VectorXd vx = ops.d1 * v.values;
    Eigen::VectorXd flux = (omega - vx.array()).matrix().cwiseProduct(nu.values);
    Eigen::VectorXd r = ops.d1 * flux - 0.5 * p.sigma * p.sigma * (ops.d2 * nu.values);
    return r.cwiseAbs().maxCoeff();
}

}  // namespace kmfg
