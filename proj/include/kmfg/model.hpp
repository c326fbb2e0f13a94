#pragma once

#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kmfg/common.hpp"

namespace kmfg {

// Scalar configuration of the game. gamma is always derived, never stored.
struct ModelParams {
    double kappa;
    double beta;
    double sigma;

    ModelParams(double kappa_, double beta_, double sigma_)
        : kappa(kappa_), beta(beta_), sigma(sigma_) {
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw domain_error("ModelParams: beta must be > 0");
        if (!(sigma > 0.0) || !std::isfinite(sigma))
            throw domain_error("ModelParams: sigma must be > 0");
        if (!(kappa >= 0.0) || !std::isfinite(kappa))
            throw domain_error("ModelParams: kappa must be >= 0");
    }

    double gamma() const { return beta + 0.5 * sigma * sigma; }

    ModelParams with_kappa(double k) const { return ModelParams(k, beta, sigma); }
};

enum class DistKind { dirac_mixture, gaussian, uniform_interval, quadrature_table };

inline const char* dist_kind_name(DistKind k) {
    switch (k) {
        case DistKind::dirac_mixture: return "dirac";
        case DistKind::gaussian: return "gaussian";
        case DistKind::uniform_interval: return "uniform";
        case DistKind::quadrature_table: return "table";
    }
    return "?";
}

namespace detail {

// Golub-Welsch: nodes/weights from the symmetric Jacobi matrix of the
// orthogonal-polynomial recurrence.
inline void golub_welsch(const Eigen::VectorXd& offdiag, double weight_total,
                         std::vector<double>& nodes, std::vector<double>& weights) {
    const int n = static_cast<int>(offdiag.size()) + 1;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        J(i, i + 1) = offdiag(i);
        J(i + 1, i) = offdiag(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
        nodes[i] = es.eigenvalues()(i);
        double v0 = es.eigenvectors()(0, i);
        weights[i] = weight_total * v0 * v0;
    }
}

// Gauss-Hermite for weight e^{-x^2}/sqrt(pi) (already normalized to mass 1).
inline void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(k / 2.0);
    golub_welsch(off, 1.0, nodes, weights);
}

// Gauss-Legendre on [-1, 1] normalized to mass 1 (weights sum to 1).
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    golub_welsch(off, 1.0, nodes, weights);
}

inline double sinc(double x) {
    if (std::abs(x) < 1e-4) {
        double x2 = x * x;
        return 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0);
    }
    return std::sin(x) / x;
}

inline bool finite(double v) { return std::isfinite(v); }
inline bool finite(std::complex<double> v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
}

}  // namespace detail

// Intrinsic-frequency law g. Immutable after construction; integration is an
// exact weighted sum for point masses and a fixed Gauss rule for the
// continuous kinds. Symmetry is declared up front and validated, not inferred.
class FrequencyDistribution {
public:
    static FrequencyDistribution dirac(std::vector<std::pair<double, double>> nodes_weights,
                                       bool symmetric = true) {
        FrequencyDistribution d;
        d.kind_ = DistKind::dirac_mixture;
        for (auto& [w, p] : nodes_weights) {
            d.nodes_.push_back(w);
            d.weights_.push_back(p);
        }
        d.symmetric_ = symmetric;
        d.validate();
        return d;
    }

    static FrequencyDistribution delta0() { return dirac({{0.0, 1.0}}); }

    static FrequencyDistribution two_dirac(double omega0) {
        return dirac({{omega0, 0.5}, {-omega0, 0.5}});
    }

    static FrequencyDistribution gaussian(double mean, double variance, int node_count = 64) {
        if (!(variance > 0.0)) throw domain_error("gaussian: variance must be > 0");
        if (node_count < 2) throw domain_error("gaussian: node_count must be >= 2");
        FrequencyDistribution d;
        d.kind_ = DistKind::gaussian;
        d.mean_ = mean;
        d.variance_ = variance;
        std::vector<double> x, w;
        detail::gauss_hermite(node_count, x, w);
        double scale = std::sqrt(2.0 * variance);
        for (int i = 0; i < node_count; ++i) {
            d.nodes_.push_back(mean + scale * x[i]);
            d.weights_.push_back(w[i]);
        }
        d.symmetric_ = (mean == 0.0);
        d.validate();
        return d;
    }

    static FrequencyDistribution uniform_interval(double a, int node_count = 64) {
        if (!(a > 0.0)) throw domain_error("uniform: half-width a must be > 0");
        if (node_count < 2) throw domain_error("uniform: node_count must be >= 2");
        FrequencyDistribution d;
        d.kind_ = DistKind::uniform_interval;
        d.half_width_ = a;
        std::vector<double> x, w;
        detail::gauss_legendre(node_count, x, w);
        for (int i = 0; i < node_count; ++i) {
            d.nodes_.push_back(a * x[i]);
            d.weights_.push_back(w[i]);
        }
        d.symmetric_ = true;
        d.validate();
        return d;
    }

    // Escape hatch for arbitrary g: treated numerically as a point-mass mixture.
    static FrequencyDistribution quadrature_table(std::vector<double> nodes,
                                                  std::vector<double> weights,
                                                  bool symmetric) {
        if (nodes.size() != weights.size())
            throw domain_error("quadrature_table: node/weight size mismatch");
        FrequencyDistribution d;
        d.kind_ = DistKind::quadrature_table;
        d.nodes_ = std::move(nodes);
        d.weights_ = std::move(weights);
        d.symmetric_ = symmetric;
        d.validate();
        return d;
    }

    DistKind kind() const { return kind_; }
    bool symmetric() const { return symmetric_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }
    double gaussian_mean() const { return mean_; }
    double gaussian_variance() const { return variance_; }
    double uniform_half_width() const { return half_width_; }

    // ∫ f(ω) g(dω). Works for real- and complex-valued f.
    template <typename Fn>
    auto integrate(Fn&& f) const -> decltype(f(0.0)) {
        using R = decltype(f(0.0));
        R sum{};
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            R v = f(nodes_[i]);
            if (!detail::finite(v)) {
                std::ostringstream os;
                os << "integrate_g: non-finite integrand at node " << i
                   << " (omega=" << nodes_[i] << ")";
                throw numerical_error(os.str());
            }
            sum += weights_[i] * v;
        }
        return sum;
    }

    // ∫ cos(ωt) g(dω); real because g is symmetric. Closed forms for the
    // continuous kinds, exact sums for mixtures.
    double fourier(double t) const {
        if (!symmetric_)
            throw domain_error("fourier_g: distribution is not symmetric; complex transform not exposed");
        switch (kind_) {
            case DistKind::gaussian:
                return std::exp(-0.5 * variance_ * t * t);
            case DistKind::uniform_interval:
                return detail::sinc(half_width_ * t);
            default: {
                double s = 0.0;
                for (std::size_t i = 0; i < nodes_.size(); ++i)
                    s += weights_[i] * std::cos(nodes_[i] * t);
                return s;
            }
        }
    }

    double first_moment() const {
        switch (kind_) {
            case DistKind::gaussian: return mean_;
            case DistKind::uniform_interval: return 0.0;
            default: {
                double s = 0.0;
                for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * nodes_[i];
                return s;
            }
        }
    }

    // Finite second moment; required whenever the Penrose machinery is used.
    double second_moment() const {
        switch (kind_) {
            case DistKind::gaussian: return variance_ + mean_ * mean_;
            case DistKind::uniform_interval: return half_width_ * half_width_ / 3.0;
            default: {
                double s = 0.0;
                for (std::size_t i = 0; i < nodes_.size(); ++i)
                    s += weights_[i] * nodes_[i] * nodes_[i];
                return s;
            }
        }
    }

    // Mirror image ω -> -ω (same kind, reflected nodes).
    FrequencyDistribution reflected() const {
        FrequencyDistribution d(*this);
        for (auto& w : d.nodes_) w = -w;
        return d;
    }

private:
    FrequencyDistribution() = default;

    void validate() const {
        double wsum = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w))
                throw domain_error("FrequencyDistribution: weights must be nonnegative");
            wsum += w;
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw domain_error("FrequencyDistribution: weights must sum to 1 within 1e-12");
        for (double w : nodes_) {
            if (!std::isfinite(w))
                throw domain_error("FrequencyDistribution: non-finite node");
        }
        if (symmetric_) {
            double scale = 1.0;
            for (std::size_t i = 0; i < nodes_.size(); ++i)
                scale = std::max(scale, std::abs(nodes_[i]));
            if (std::abs(first_moment()) > 1e-10 * scale)
                throw domain_error("FrequencyDistribution: declared symmetric but first moment != 0");
            for (double t : {0.37, 1.13, 2.71}) {
                double s = 0.0;
                for (std::size_t i = 0; i < nodes_.size(); ++i)
                    s += weights_[i] * std::sin(nodes_[i] * t);
                if (std::abs(s) > 1e-9)
                    throw domain_error(
                        "FrequencyDistribution: declared symmetric but sin-moment != 0");
            }
        }
    }

    DistKind kind_ = DistKind::dirac_mixture;
    bool symmetric_ = false;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    double mean_ = 0.0, variance_ = 0.0, half_width_ = 0.0;
};

// Integrand of 1/kappa_c: (γσ² + 2ω²) / ((γ²+ω²)(σ⁴+4ω²)).
inline double kappa_c_integrand(const ModelParams& p, double omega) {
    double g = p.gamma(), s2 = p.sigma * p.sigma, w2 = omega * omega;
    return (g * s2 + 2.0 * w2) / ((g * g + w2) * (s2 * s2 + 4.0 * w2));
}

// The critical threshold kappa_c(g): reciprocal g-integral of the integrand.
inline double kappa_c(const FrequencyDistribution& dist, const ModelParams& params) {
    if (!dist.symmetric()) throw domain_error("kappa_c: distribution must be symmetric");
    double I = dist.integrate([&](double w) { return kappa_c_integrand(params, w); });
    if (!(I > 0.0)) throw numerical_error("kappa_c: integral not positive");
    return 1.0 / I;
}

}  // namespace kmfg
