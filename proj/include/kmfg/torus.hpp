#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

#include "kmfg/common.hpp"

namespace kmfg {

// Uniform periodic grid x_j = 2*pi*j/n, n a power of two.
struct TorusGrid {
    int n;

    explicit TorusGrid(int n_ = 256) : n(n_) {
        if (n < 16) throw domain_error("TorusGrid: n must be >= 16");
        if ((n & (n - 1)) != 0) throw domain_error("TorusGrid: n must be a power of two");
    }

    double spacing() const { return two_pi / n; }
    double point(int j) const { return two_pi * j / n; }

    bool operator==(const TorusGrid& o) const { return n == o.n; }
};

struct TorusField {
    TorusGrid grid;
    Eigen::VectorXd values;

    TorusField() : grid(256), values(Eigen::VectorXd::Zero(256)) {}
    explicit TorusField(TorusGrid g) : grid(g), values(Eigen::VectorXd::Zero(g.n)) {}
    TorusField(TorusGrid g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.n) throw domain_error("TorusField: size mismatch");
    }

    static TorusField constant(TorusGrid g, double c) {
        return TorusField(g, Eigen::VectorXd::Constant(g.n, c));
    }
};

// Trapezoid rule on the periodic grid (= spacing * sum).
inline double trapezoid(const TorusField& f) { return f.grid.spacing() * f.values.sum(); }

inline double cos_moment(const TorusField& f, int harmonic = 1) {
    double s = 0.0;
    for (int j = 0; j < f.grid.n; ++j) s += std::cos(harmonic * f.grid.point(j)) * f.values(j);
    return f.grid.spacing() * s;
}

inline double sin_moment(const TorusField& f, int harmonic = 1) {
    double s = 0.0;
    for (int j = 0; j < f.grid.n; ++j) s += std::sin(harmonic * f.grid.point(j)) * f.values(j);
    return f.grid.spacing() * s;
}

namespace detail {

// Dense spectral differentiation matrices for the uniform periodic grid
// (Trefethen's circulant formulas, even n). Cached per grid size.
struct SpectralOps {
    Eigen::MatrixXd d1;
    Eigen::MatrixXd d2;
};

inline const SpectralOps& spectral_ops(int n) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<SpectralOps>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return *it->second;

    auto ops = std::make_unique<SpectralOps>();
    const double h = two_pi / n;
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(n);
    c2(0) = -(M_PI * M_PI) / (3.0 * h * h) - 1.0 / 6.0;
    for (int k = 1; k < n; ++k) {
        double sgn = (k % 2 == 0) ? 1.0 : -1.0;
        c1(k) = 0.5 * sgn / std::tan(0.5 * k * h);
        c2(k) = -0.5 * sgn / (std::sin(0.5 * k * h) * std::sin(0.5 * k * h));
    }
    ops->d1.resize(n, n);
    ops->d2.resize(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            int k = ((i - j) % n + n) % n;
            ops->d1(i, j) = c1(k);
            ops->d2(i, j) = c2(k);
        }
    }
    const SpectralOps& ref = *ops;
    cache.emplace(n, std::move(ops));
    return ref;
}

// Iterative radix-2 FFT; n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = two_pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& z : a) z /= static_cast<double>(n);
    }
}

}  // namespace detail

// Spectral derivative of given order (1 or 2).
inline TorusField derivative(const TorusField& f, int order = 1) {
    const auto& ops = detail::spectral_ops(f.grid.n);
    if (order == 1) return TorusField(f.grid, ops.d1 * f.values);
    if (order == 2) return TorusField(f.grid, ops.d2 * f.values);
    throw domain_error("derivative: order must be 1 or 2");
}

}  // namespace kmfg
