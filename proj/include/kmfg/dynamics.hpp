#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "kmfg/common.hpp"
#include "kmfg/hjb.hpp"
#include "kmfg/model.hpp"
#include "kmfg/parallel.hpp"
#include "kmfg/torus.hpp"

namespace kmfg {

// Picard stagnation; carries the residual history of the failed run.
class picard_error : public convergence_error {
public:
    picard_error(const std::string& what, std::vector<double> history)
        : convergence_error(what, history.empty() ? 0.0 : history.back()),
          history_(std::move(history)) {}
    const std::vector<double>& residual_history() const { return history_; }

private:
    std::vector<double> history_;
};

// Pseudo-distance to uniformity: max of the four first/second-harmonic
// moments of a normalized density.
inline double gm_distance(const TorusField& density) {
    return std::max(std::max(std::abs(cos_moment(density, 1)), std::abs(cos_moment(density, 2))),
                    std::max(std::abs(sin_moment(density, 1)), std::abs(sin_moment(density, 2))));
}

// Potential of the interaction cost via the harmonic identity
// Phi = 1/2 - (C^2 + S^2)/2 with C, S the first harmonics of the x-marginal.
inline double potential_phi(const std::vector<TorusField>& densities,
                            const FrequencyDistribution& dist) {
    if (densities.size() != dist.nodes().size())
        throw domain_error("potential_phi: one density per quadrature node required");
    double C = 0.0, S = 0.0;
    for (std::size_t i = 0; i < densities.size(); ++i) {
        C += dist.weights()[i] * cos_moment(densities[i]);
        S += dist.weights()[i] * sin_moment(densities[i]);
    }
    return 0.5 - 0.5 * (C * C + S * S);
}

struct MfgTrajectory {
    double horizon = 0.0;
    int steps = 0;
    std::vector<double> omegas;   // quadrature nodes of g
    std::vector<double> weights;  // quadrature weights of g
    // densities[node][step] on the torus grid
    std::vector<std::vector<TorusField>> densities;
    std::vector<double> h1, h2;      // order-parameter path, steps+1 entries
    std::vector<double> gm_max;      // max_omega gm(mu^omega_t)
    std::vector<double> phi;         // potential along the path
    std::vector<double> picard_residuals;
    bool converged = false;

    double time(int k) const { return horizon * k / steps; }
};

struct DecayFit {
    double lambda_fit = 0.0;
    double c_fit = 0.0;
    double r_squared = 0.0;
};

struct EvolveOptions {
    double horizon = -1.0;   // <0: default 20/beta
    int steps = 2000;
    double damping = 0.5;
    int max_sweeps = 200;
    double tolerance = 1e-7;
    // Terminal value v(T); empty = uniform stationary value kappa/beta.
    // Runs seeded at a non-uniform equilibrium should pass the matching
    // stationary value functions, otherwise the terminal layer dominates.
    std::vector<TorusField> terminal_values;
    // Initial guess for the order-parameter path (constant), default 0.
    OrderParameters h_initial{0.0, 0.0};
};

namespace detail {

inline double bernoulli_B(double w) {
    // w/(e^w - 1), stable near 0
    if (std::abs(w) < 1e-10) return 1.0 - 0.5 * w;
    return w / std::expm1(w);
}

// Periodic tridiagonal solve (Thomas + Sherman-Morrison).
// Rows: diag d[i], upper u[i] (to i+1), lower l[i] (to i-1), wraparound
// corner entries l[0] (to n-1) and u[n-1] (to 0).
class CyclicTridiag {
public:
    void solve(const Eigen::VectorXd& d, const Eigen::VectorXd& l, const Eigen::VectorXd& u,
               Eigen::VectorXd& x, const Eigen::VectorXd& rhs) {
        const int n = static_cast<int>(d.size());
        double gamma = -d(0);
        dd_.resize(n);
        dd_ = d;
        dd_(0) -= gamma;
        dd_(n - 1) -= l(0) * u(n - 1) / gamma;
        x = thomas(dd_, l, u, rhs);
        Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
        q(0) = gamma;
        q(n - 1) = u(n - 1);
        Eigen::VectorXd zq = thomas(dd_, l, u, q);
        double fact = (x(0) + l(0) * x(n - 1) / gamma) /
                      (1.0 + zq(0) + l(0) * zq(n - 1) / gamma);
        x -= fact * zq;
    }

private:
    Eigen::VectorXd thomas(const Eigen::VectorXd& d, const Eigen::VectorXd& l,
                           const Eigen::VectorXd& u, const Eigen::VectorXd& r) {
        const int n = static_cast<int>(d.size());
        cp_.resize(n);
        dp_.resize(n);
        cp_(0) = u(0) / d(0);
        dp_(0) = r(0) / d(0);
        for (int i = 1; i < n; ++i) {
            double m = d(i) - l(i) * cp_(i - 1);
            cp_(i) = (i + 1 < n) ? u(i) / m : 0.0;
            dp_(i) = (r(i) - l(i) * dp_(i - 1)) / m;
        }
        Eigen::VectorXd x(n);
        x(n - 1) = dp_(n - 1);
        for (int i = n - 2; i >= 0; --i) x(i) = dp_(i) - cp_(i) * x(i + 1);
        return x;
    }

    Eigen::VectorXd dd_, cp_, dp_;
};

}  // namespace detail

// Damped Picard iteration on the coupled backward-HJB / forward-KFP system.
//  (i)  backward HJB per quadrature omega, implicit in the linear terms,
//       lagged quadratic gradient, terminal value kappa/beta (or supplied);
//  (ii) forward KFP per omega in Scharfetter-Gummel/Chang-Cooper flux form
//       (exponential fitting via exact potential differences), implicit Euler:
//       positivity- and mass-preserving for any step size;
//  (iii) h <- (1-delta) h + delta * kappa(moments), until sup_t |Phi(h)-h| < tol.
inline MfgTrajectory evolve_mfg(const ModelParams& p, const FrequencyDistribution& dist,
                                const std::vector<TorusField>& initial,
                                const EvolveOptions& opt = {}) {
    const auto& omegas = dist.nodes();
    const auto& weights = dist.weights();
    const std::size_t m = omegas.size();
    if (initial.size() != m)
        throw domain_error("evolve_mfg: one initial density per quadrature node required");
    const TorusGrid grid = initial[0].grid;
    const int n = grid.n;
    for (const auto& f : initial) {
        if (f.grid.n != n) throw domain_error("evolve_mfg: initial densities on mixed grids");
        if (std::abs(trapezoid(f) - 1.0) > 1e-8)
            throw domain_error("evolve_mfg: initial densities must be normalized");
        if (f.values.minCoeff() < -1e-12)
            throw domain_error("evolve_mfg: initial densities must be nonnegative");
    }
    if (!opt.terminal_values.empty() && opt.terminal_values.size() != m)
        throw domain_error("evolve_mfg: terminal_values size mismatch");

    const double T = opt.horizon > 0 ? opt.horizon : 20.0 / p.beta;
    const int steps = opt.steps;
    if (steps < 8) throw domain_error("evolve_mfg: need at least 8 time steps");
    const double dt = T / steps;
    const double hx = grid.spacing();
    const double D = 0.5 * p.sigma * p.sigma;
    const auto& ops = detail::spectral_ops(n);

    Eigen::VectorXd cosx(n), sinx(n);
    for (int j = 0; j < n; ++j) {
        cosx(j) = std::cos(grid.point(j));
        sinx(j) = std::sin(grid.point(j));
    }

    // per-omega implicit HJB matrix LU (constant in time and across sweeps)
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> hjb_lu(m);
    parallel_for(m, [&](std::size_t i) {
        Eigen::MatrixXd A = -D * ops.d2 - omegas[i] * ops.d1;
        A.diagonal().array() += 1.0 / dt + p.beta;
        hjb_lu[i] = Eigen::PartialPivLU<Eigen::MatrixXd>(A);
    });

    std::vector<double> h1(steps + 1, opt.h_initial.alpha1);
    std::vector<double> h2(steps + 1, opt.h_initial.alpha2);

    // v paths per node (steps+1 x n); reused across sweeps
    std::vector<Eigen::MatrixXd> vpath(m, Eigen::MatrixXd(steps + 1, n));
    std::vector<Eigen::MatrixXd> mupath(m, Eigen::MatrixXd(steps + 1, n));
    std::vector<double> residual_history;

    std::vector<double> c1_acc(steps + 1), s1_acc(steps + 1);
    bool converged = false;

    for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
        // (i) backward HJB
        parallel_for(m, [&](std::size_t i) {
            Eigen::VectorXd v = opt.terminal_values.empty()
                                    ? Eigen::VectorXd::Constant(n, p.kappa / p.beta)
                                    : opt.terminal_values[i].values;
            vpath[i].row(steps) = v.transpose();
            for (int k = steps - 1; k >= 0; --k) {
                Eigen::VectorXd vx = ops.d1 * v;
                Eigen::VectorXd rhs = v / dt - 0.5 * vx.cwiseProduct(vx);
                rhs.array() += p.kappa;
                rhs -= h1[k] * cosx + h2[k] * sinx;
                v = hjb_lu[i].solve(rhs);
                vpath[i].row(k) = v.transpose();
            }
        });

        // (ii) forward KFP, Scharfetter-Gummel faces from exact potential
        // differences: w_{j+1/2} = (omega*hx - (v_{j+1} - v_j))/D
        parallel_for(m, [&](std::size_t i) {
            detail::CyclicTridiag solver;
            Eigen::VectorXd mu = initial[i].values;
            mupath[i].row(0) = mu.transpose();
            Eigen::VectorXd diag(n), lower(n), upper(n), w(n), Bp(n), Bm(n);
            const double cfl = dt * D / (hx * hx);
            for (int k = 0; k < steps; ++k) {
                for (int j = 0; j < n; ++j) {
                    int jp = (j + 1) % n;
                    double dv = vpath[i](k + 1, jp) - vpath[i](k + 1, j);
                    w(j) = (omegas[i] * hx - dv) / D;
                    Bp(j) = detail::bernoulli_B(w(j));
                    Bm(j) = detail::bernoulli_B(-w(j));
                }
                for (int j = 0; j < n; ++j) {
                    int jm = (j - 1 + n) % n;
                    diag(j) = 1.0 + cfl * (Bm(j) + Bp(jm));
                    upper(j) = -cfl * Bp(j);      // couples to j+1
                    lower(j) = -cfl * Bm(jm);     // couples to j-1
                }
                Eigen::VectorXd next(n);
                solver.solve(diag, lower, upper, next, mu);
                mu = next;
                mupath[i].row(k + 1) = mu.transpose();
            }
        });

        // (iii) order-parameter update
        std::fill(c1_acc.begin(), c1_acc.end(), 0.0);
        std::fill(s1_acc.begin(), s1_acc.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (int k = 0; k <= steps; ++k) {
                double C = hx * (mupath[i].row(k).transpose().cwiseProduct(cosx)).sum();
                double S = hx * (mupath[i].row(k).transpose().cwiseProduct(sinx)).sum();
                c1_acc[k] += weights[i] * C;
                s1_acc[k] += weights[i] * S;
            }
        }
        double res = 0.0;
        for (int k = 0; k <= steps; ++k) {
            double n1 = p.kappa * c1_acc[k], n2 = p.kappa * s1_acc[k];
            res = std::max(res, std::max(std::abs(n1 - h1[k]), std::abs(n2 - h2[k])));
        }
        residual_history.push_back(res);
        if (res < opt.tolerance) {
            converged = true;
        } else {
            for (int k = 0; k <= steps; ++k) {
                h1[k] = (1.0 - opt.damping) * h1[k] + opt.damping * p.kappa * c1_acc[k];
                h2[k] = (1.0 - opt.damping) * h2[k] + opt.damping * p.kappa * s1_acc[k];
            }
        }
    }

    if (!converged) {
        std::ostringstream os;
        os << "evolve_mfg: Picard stagnation after " << opt.max_sweeps
           << " sweeps, residual " << residual_history.back()
           << " (kappa too large for contraction at this horizon?)";
        throw picard_error(os.str(), residual_history);
    }

    MfgTrajectory traj;
    traj.horizon = T;
    traj.steps = steps;
    traj.omegas = omegas;
    traj.weights = weights;
    traj.h1 = h1;
    traj.h2 = h2;
    traj.picard_residuals = residual_history;
    traj.converged = true;
    traj.densities.resize(m);
    traj.gm_max.assign(steps + 1, 0.0);
    traj.phi.assign(steps + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        traj.densities[i].reserve(steps + 1);
        for (int k = 0; k <= steps; ++k) {
            TorusField f(grid, mupath[i].row(k).transpose());
            double mass = trapezoid(f);
            if (std::abs(mass - 1.0) > 1e-10)
                throw numerical_error("evolve_mfg: mass drift beyond 1e-10");
            if (f.values.minCoeff() < -1e-10)
                throw numerical_error("evolve_mfg: negative density in trajectory");
            traj.gm_max[k] = std::max(traj.gm_max[k], gm_distance(f));
            traj.densities[i].push_back(std::move(f));
        }
    }
    for (int k = 0; k <= steps; ++k) {
        std::vector<TorusField> snap;
        snap.reserve(m);
        for (std::size_t i = 0; i < m; ++i) snap.push_back(traj.densities[i][k]);
        traj.phi[k] = potential_phi(snap, dist);
    }
    return traj;
}

// Least squares of log(max_omega gm) against t over the second half of the
// horizon, restricted to steps where gm > 1e-12.
inline DecayFit fit_decay_rate(const MfgTrajectory& traj) {
    std::vector<double> ts, ys;
    for (int k = 0; k <= traj.steps; ++k) {
        double t = traj.time(k);
        if (t < 0.5 * traj.horizon) continue;
        if (traj.gm_max[k] > 1e-12) {
            ts.push_back(t);
            ys.push_back(std::log(traj.gm_max[k]));
        }
    }
    if (ts.size() < 8)
        throw numerical_error("fit_decay_rate: fewer than 8 usable points");
    double n = static_cast<double>(ts.size());
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        st += ts[i];
        sy += ys[i];
        stt += ts[i] * ts[i];
        sty += ts[i] * ys[i];
    }
    double denom = n * stt - st * st;
    double slope = (n * sty - st * sy) / denom;
    double intercept = (sy - slope * st) / n;
    double ss_res = 0, ss_tot = 0, ymean = sy / n;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        double pred = intercept + slope * ts[i];
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
    }
    DecayFit fit;
    fit.lambda_fit = -slope;
    fit.c_fit = std::exp(intercept);
    fit.r_squared = (ss_tot > 0) ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

}  // namespace kmfg
