#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "kmfg/common.hpp"
#include "kmfg/model.hpp"
#include "kmfg/parallel.hpp"
#include "kmfg/penrose.hpp"

namespace kmfg {

// Uniform grid on [0, T] for exponentially weighted signals.
struct TimeGrid {
    double horizon;
    int n;

    TimeGrid(double T, int n_) : horizon(T), n(n_) {
        if (!(T > 0.0)) throw domain_error("TimeGrid: horizon must be > 0");
        if (n < 64) throw domain_error("TimeGrid: n must be >= 64");
    }

    static TimeGrid defaults(const ModelParams& p, int n = 2048) {
        return TimeGrid(std::max(40.0 / (p.sigma * p.sigma), 20.0 / p.beta), n);
    }

    double spacing() const { return horizon / (n - 1); }
    double node(int i) const { return horizon * i / (n - 1); }
    bool operator==(const TimeGrid& o) const { return horizon == o.horizon && n == o.n; }
};

// Signal in L^inf_lambda: norm sup_i |k(t_i)| e^{lambda t_i}.
struct WeightedSignal {
    TimeGrid grid;
    Eigen::VectorXd values;
    double lambda = 0.0;

    WeightedSignal(TimeGrid g, double lam)
        : grid(g), values(Eigen::VectorXd::Zero(g.n)), lambda(lam) {
        if (!(lam >= 0.0) || !std::isfinite(lam))
            throw domain_error("WeightedSignal: lambda must be >= 0");
    }
    WeightedSignal(TimeGrid g, Eigen::VectorXd v, double lam)
        : grid(g), values(std::move(v)), lambda(lam) {
        if (values.size() != grid.n) throw domain_error("WeightedSignal: size mismatch");
    }

    template <typename Fn>
    static WeightedSignal sample(TimeGrid g, double lam, Fn&& f) {
        WeightedSignal s(g, lam);
        for (int i = 0; i < g.n; ++i) s.values(i) = f(g.node(i));
        return s;
    }

    double weighted_norm() const {
        double m = 0.0;
        for (int i = 0; i < grid.n; ++i)
            m = std::max(m, std::abs(values(i)) * std::exp(lambda * grid.node(i)));
        return m;
    }
};

// K(t, u) = ∫_0^{u∧t} e^{-(sigma^2/2)(t-θ)} e^{-gamma(u-θ)} dθ, evaluated as
// e^{-(sigma^2/2)(t-m) - gamma(u-m)} (1 - e^{-(sigma^2/2+gamma) m})/(sigma^2/2+gamma)
// with m = u∧t; every exponent is <= 0, so no overflow at any (t, u).
inline double kernel_K(const ModelParams& p, double t, double u) {
    if (t < 0.0 || u < 0.0) throw domain_error("kernel_K: t, u must be >= 0");
    double a = 0.5 * p.sigma * p.sigma, g = p.gamma();
    double m = std::min(t, u);
    return std::exp(-a * (t - m) - g * (u - m)) * (-std::expm1(-(a + g) * m)) / (a + g);
}

namespace detail {

// Quadrature matrix of k |-> (1/2)∫_0^T K(t,u) ĝ(i(t-u)) k(u) du on the grid:
// trapezoid weights plus Euler-Maclaurin h^2/12 corrections for the kernel
// kink at u = t and for both endpoints. The corrections keep row integrals
// accurate to O(h^4); plain trapezoid overshoots the norm envelope.
inline Eigen::MatrixXd build_L_matrix(const ModelParams& p, const FrequencyDistribution& dist,
                                      const TimeGrid& grid) {
    if (!dist.symmetric()) throw domain_error("operator L: distribution must be symmetric");
    const int n = grid.n;
    const double h = grid.spacing();
    const double a = 0.5 * p.sigma * p.sigma, g = p.gamma();
    const double T = grid.horizon;

    Eigen::MatrixXd M(n, n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
        const int i = static_cast<int>(ii);
        const double t = grid.node(i);
        for (int j = 0; j < n; ++j) {
            double u = grid.node(j);
            double w = (j == 0 || j == n - 1) ? 0.5 * h : h;
            M(i, j) = 0.5 * w * kernel_K(p, t, u) * dist.fourier(t - u);
        }
        // d/du of m(t,u) = (1/2) K(t,u) ĝ(i(t-u)):
        //   u < t: K_u = a K + e^{-a(t-u)-(a+g)u};  u > t: K_u = -g K
        auto ghat = [&](double s) { return dist.fourier(s); };
        auto ghat_prime = [&](double s) {
            return dist.integrate([&](double om) { return -om * std::sin(om * s); });
        };
        const double Ktt = kernel_K(p, t, t);
        const double c12 = h * h / 12.0;
        // kink at u = t (node j = i): jump of m_u across u = t
        double jump = 0.5 * ((a * Ktt + std::exp(-(a + g) * t)) - (-g * Ktt)) * ghat(0.0);
        M(i, i) -= c12 * jump;
        // endpoint u = 0: K(t,0) = 0, K_u(t,0) = e^{-a t}
        double mu0 = 0.5 * std::exp(-a * t) * ghat(t);
        M(i, 0) += c12 * mu0;
        // endpoint u = T (u >= t there): m_u = 0.5(-g K ĝ - K ĝ'(t-T))
        double KT = kernel_K(p, t, T);
        double muT = 0.5 * (-g * KT * ghat(t - T) - KT * ghat_prime(t - T));
        M(i, n - 1) -= c12 * muT;
    });
    return M;
}

}  // namespace detail

// Discretized operator L of the linearized equilibrium map. Immutable;
// reusable across apply/norm/resolvent calls on the same grid.
class LOperator {
public:
    LOperator(const ModelParams& p, const FrequencyDistribution& dist, const TimeGrid& grid)
        : grid_(grid), matrix_(detail::build_L_matrix(p, dist, grid)) {}

    const TimeGrid& grid() const { return grid_; }
    const Eigen::MatrixXd& matrix() const { return matrix_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& k) const { return matrix_ * k; }

    // Operator norm under the weighted sup norm: max_i sum_j |M_ij| e^{lambda(t_i - u_j)}.
    double weighted_norm(double lambda) const {
        const int n = grid_.n;
        double best = 0.0;
        for (int i = 0; i < n; ++i) {
            double row = 0.0;
            for (int j = 0; j < n; ++j)
                row += std::abs(matrix_(i, j)) *
                       std::exp(lambda * (grid_.node(i) - grid_.node(j)));
            best = std::max(best, row);
        }
        return best;
    }

private:
    TimeGrid grid_;
    Eigen::MatrixXd matrix_;
};

inline WeightedSignal apply_L(const ModelParams& p, const FrequencyDistribution& dist,
                              const WeightedSignal& k) {
    LOperator L(p, dist, k.grid);
    return WeightedSignal(k.grid, L.apply(k.values), k.lambda);
}

// Envelope bound ||L|| <= 1/((gamma+lambda)(sigma^2-2lambda)), from |ghat| <= 1.
inline double op_norm_bound(const ModelParams& p, double lambda) {
    if (!(lambda >= 0.0 && lambda < 0.5 * p.sigma * p.sigma))
        throw domain_error("op_norm_bound: lambda must be in [0, sigma^2/2)");
    return 1.0 / ((p.gamma() + lambda) * (p.sigma * p.sigma - 2.0 * lambda));
}

// Exact norm for nonnegative Fourier transforms:
// ∫ ((sigma^2-2lambda)(lambda+gamma)+2w^2) /
//   (((sigma^2-2lambda)^2+4w^2)((lambda+gamma)^2+w^2)) g(dw).
// At lambda = 0 the integrand coincides with the 1/kappa_c integrand.
inline double op_norm_closed_form(const ModelParams& p, const FrequencyDistribution& dist,
                                  double lambda) {
    if (!(lambda >= 0.0 && lambda < 0.5 * p.sigma * p.sigma))
        throw domain_error("op_norm_closed_form: lambda must be in [0, sigma^2/2)");
    double s2l = p.sigma * p.sigma - 2.0 * lambda;
    double gl = p.gamma() + lambda;
    return dist.integrate([&](double w) {
        return (s2l * gl + 2.0 * w * w) / ((s2l * s2l + 4.0 * w * w) * (gl * gl + w * w));
    });
}

inline double op_norm_L(const ModelParams& p, const FrequencyDistribution& dist, double lambda,
                        const TimeGrid& grid) {
    if (!(lambda > 0.0 && lambda < 0.5 * p.sigma * p.sigma))
        throw domain_error("op_norm_L: lambda must be in (0, sigma^2/2)");
    return LOperator(p, dist, grid).weighted_norm(lambda);
}

// Solve k = phi + kappa L k. Neumann iteration while the contraction holds,
// dense LU otherwise. The returned k always satisfies the residual check.
inline WeightedSignal solve_resolvent(const ModelParams& p, const FrequencyDistribution& dist,
                                      double kappa, const WeightedSignal& phi,
                                      const LOperator* prebuilt = nullptr) {
    std::optional<LOperator> owned;
    const LOperator* L = prebuilt;
    if (!L) {
        owned.emplace(p, dist, phi.grid);
        L = &*owned;
    }
    const Eigen::MatrixXd& M = L->matrix();
    const int n = phi.grid.n;

    double lam = std::min(phi.lambda, 0.49 * p.sigma * p.sigma);
    double norm = L->weighted_norm(std::max(lam, 0.0));
    Eigen::VectorXd k;
    if (kappa * norm < 0.9) {
        k = phi.values;
        Eigen::VectorXd prev;
        for (int it = 0; it < 400; ++it) {
            prev = k;
            k = phi.values + kappa * (M * k);
            if ((k - prev).cwiseAbs().maxCoeff() < 1e-12) break;
        }
    } else {
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - kappa * M;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
        k = lu.solve(phi.values);
        if (!k.allFinite())
            throw numerical_error("solve_resolvent: dense solve produced non-finite values "
                                  "(kappa at/near loss of invertibility?)");
    }
    double res = (k - phi.values - kappa * (M * k)).cwiseAbs().maxCoeff();
    if (!(res < 1e-8)) {
        std::ostringstream os;
        os << "solve_resolvent: residual " << res
           << " too large (kappa at/near loss of invertibility?)";
        throw numerical_error(os.str());
    }
    return WeightedSignal(phi.grid, std::move(k), phi.lambda);
}

// ∫_0^T e^{-zt} k(t) dt with Euler-Maclaurin endpoint corrections
// (finite-difference endpoint slopes; O(h^4) for smooth k).
inline Complex laplace_of_signal(const WeightedSignal& k, Complex z) {
    if (!(z.real() > -k.lambda))
        throw domain_error("laplace_of_signal: need Re z > -lambda");
    double decay = z.real() + k.lambda;
    double tail = std::exp(-decay * k.grid.horizon) * k.weighted_norm() / decay;
    if (!(tail < 1e-8)) {
        std::ostringstream os;
        os << "laplace_of_signal: truncation tail bound " << tail
           << " exceeds 1e-8; increase the horizon T";
        throw domain_error(os.str());
    }
    const int n = k.grid.n;
    const double h = k.grid.spacing();
    std::vector<Complex> f(n);
    for (int i = 0; i < n; ++i)
        f[i] = std::exp(-z * k.grid.node(i)) * k.values(i);
    Complex s(0.0, 0.0);
    for (int i = 0; i < n; ++i) s += f[i];
    s -= 0.5 * (f[0] + f[n - 1]);
    s *= h;
    Complex fp0 = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    Complex fpT = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    return s - h * h / 12.0 * (fpT - fp0);
}

struct LaplaceSolution {
    Complex a;  // ĥ(gamma + i omega0)
    Complex b;  // ĥ(gamma - i omega0)
    QuarticCase case_kind;
    std::array<Complex, 4> roots;
    std::function<Complex(Complex)> hhat;  // valid on Re z > -lambda
};

// Laplace-domain solve of (I - kappa L) h = phi for g = (delta_{w0}+delta_{-w0})/2:
// pick the pair of N-roots right of the strip, solve the 2x2 system of the
// matching case for (a, b), and assemble
//   ĥ(z) = φ̂(z) + kappa [Q(z,w0)(φ̂(z)-b) + Q(z,-w0)(φ̂(z)-a)] / N(z).
inline LaplaceSolution two_dirac_laplace_solve(const ModelParams& p, double omega0, double kappa,
                                               const std::function<Complex(Complex)>& phihat,
                                               double lambda = -1.0) {
    if (lambda <= 0.0) lambda = 0.01 * p.sigma * p.sigma;
    if (!(lambda < 0.5 * p.sigma * p.sigma))
        throw domain_error("two_dirac_laplace_solve: lambda must be < sigma^2/2");

    FrequencyDistribution dist = FrequencyDistribution::two_dirac(omega0);
    // Penrose condition on [-lambda, beta+lambda]
    int zeros = count_zeros(dist, p, kappa, -lambda, p.beta + lambda);
    if (zeros != 0) {
        std::ostringstream os;
        os << "two_dirac_laplace_solve: Penrose condition fails (" << zeros
           << " zeros of 1-(kappa/2)P in the strip)";
        throw numerical_error(os.str());
    }

    QuarticReport quartic = N_quartic(p, omega0, kappa);

    auto Qp = [&](Complex z) { return Q_factor(p, z, omega0); };
    auto Qm = [&](Complex z) { return Q_factor(p, z, -omega0); };
    auto Msum = [&](Complex z) { return Qp(z) + Qm(z); };
    auto N_of = [&](Complex z) { return 4.0 * Qp(z) * Qm(z) - kappa * Msum(z); };

    // roots right of the strip (Re > beta/2 by the beta/2 symmetry)
    std::vector<Complex> right;
    for (const auto& r : quartic.roots)
        if (r.real() > 0.5 * p.beta) right.push_back(r);
    if (right.size() != 2)
        throw numerical_error("two_dirac_laplace_solve: unexpected root configuration");

    Eigen::Matrix2cd A;
    Eigen::Vector2cd rhs;
    if (quartic.case_kind == QuarticCase::complex_pair) {
        Complex z1 = (right[0].imag() > 0.0) ? right[0] : right[1];
        Complex z1c = std::conj(z1);
        A << Qm(z1), Qp(z1), Qm(z1c), Qp(z1c);
        rhs << Msum(z1) * phihat(z1), Msum(z1c) * phihat(z1c);
    } else if (quartic.case_kind == QuarticCase::four_real) {
        double x3 = std::min(right[0].real(), right[1].real());
        double x4 = std::max(right[0].real(), right[1].real());
        A << Qm(x3), Qp(x3), Qm(x4), Qp(x4);
        rhs << Msum(x3) * phihat(x3), Msum(x4) * phihat(x4);
    } else {
        // double real root x2: require Psi(x2) = Psi'(x2) = 0
        Complex x2(0.5 * (right[0].real() + right[1].real()), 0.0);
        double fd = 1e-5 * std::max(1.0, std::abs(x2));
        Complex phi_p = (phihat(x2 + fd) - phihat(x2 - fd)) / (2.0 * fd);
        auto Qprime = [&](Complex z, double w) {
            // d/dz (z + s2/2 - iw)(g + iw - z) = (g + iw - z) - (z + s2/2 - iw)
            Complex iw(0.0, w);
            return (p.gamma() + iw - z) - (z + 0.5 * p.sigma * p.sigma - iw);
        };
        A << Qm(x2), Qp(x2), Qprime(x2, -omega0), Qprime(x2, omega0);
        rhs << Msum(x2) * phihat(x2),
            (Qprime(x2, omega0) + Qprime(x2, -omega0)) * phihat(x2) + Msum(x2) * phi_p;
    }

    Complex det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
    double scale = std::max({std::abs(A(0, 0)) * std::abs(A(1, 1)),
                             std::abs(A(0, 1)) * std::abs(A(1, 0)), 1.0});
    if (std::abs(det) < 1e-12 * scale)
        throw numerical_error("two_dirac_laplace_solve: singular case system "
                              "(case misclassification or Penrose violation)");

    Eigen::Vector2cd ab = A.lu().solve(rhs);

    LaplaceSolution sol;
    sol.a = ab(0);
    sol.b = ab(1);
    sol.case_kind = quartic.case_kind;
    sol.roots = quartic.roots;
    // self-contained evaluator (no dangling references to locals)
    const ModelParams params_copy = p;
    const double w0 = omega0, kap = kappa;
    const Complex a_ = sol.a, b_ = sol.b;
    const std::function<Complex(Complex)> ph = phihat;
    sol.hhat = [params_copy, w0, kap, a_, b_, ph](Complex z) -> Complex {
        Complex qp = Q_factor(params_copy, z, w0);
        Complex qm = Q_factor(params_copy, z, -w0);
        Complex N = 4.0 * qp * qm - kap * (qp + qm);
        Complex pz = ph(z);
        return pz + kap * (qp * (pz - b_) + qm * (pz - a_)) / N;
    };
    return sol;
}

}  // namespace kmfg
