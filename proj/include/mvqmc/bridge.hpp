#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvqmc {

inline constexpr double kProbabilityFloor = 0x1.0p-52;

inline double clamp_probability(double u) noexcept {
    return std::min(std::max(u, kProbabilityFloor), 1.0 - kProbabilityFloor);
}

namespace detail {

inline double inv_norm_central(double q) noexcept {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
}

inline double inv_norm_tail(double p, double q) noexcept {
    double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

} // namespace detail

// Wichura's AS241 (PPND16), relative accuracy about 1e-16 over (0,1).
inline double inv_norm_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inv_norm_cdf: argument must lie in (0,1)");
    const double q = p - 0.5;
    return std::fabs(q) <= 0.425 ? detail::inv_norm_central(q) : detail::inv_norm_tail(p, q);
}

// out[i] = inv_norm_cdf(clamp_probability(u[i])) for u in [0,1]. The central
// branch runs over the whole block first so it vectorises; tails are patched.
inline void inv_norm_cdf_clamped(std::span<const double> u, std::span<double> out) {
    bool in_range = true;
    for (double v : u) in_range &= (v >= 0.0) & (v <= 1.0);
    if (!in_range) throw std::domain_error("inv_norm_cdf: uniform input outside [0,1]");
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = detail::inv_norm_central(clamp_probability(u[i]) - 0.5);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double p = clamp_probability(u[i]), q = p - 0.5;
        if (std::fabs(q) > 0.425) out[i] = detail::inv_norm_tail(p, q);
    }
}

// Values of a Wiener path on the uniform grid t_i = i T / n, n a power of two.
class WienerPath {
public:
    WienerPath() = default;
    WienerPath(double horizon, std::vector<double> nodes) : horizon_(horizon), nodes_(std::move(nodes)) {}

    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return nodes_.empty() ? 0 : nodes_.size() - 1; }
    const std::vector<double>& nodes() const noexcept { return nodes_; }
    double time(std::size_t i) const noexcept { return horizon_ * static_cast<double>(i) / static_cast<double>(steps()); }
    double operator[](std::size_t i) const { return nodes_.at(i); }

private:
    double horizon_ = 0.0;
    std::vector<double> nodes_;
};

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

// Precomputed fill order: coordinate 0 sets W(T); coordinate j >= 1 sets the
// midpoint node `mid[j]` between `left[j]` and `right[j]`, level by level and
// in ascending time within a level.
class BridgePlan {
public:
    BridgePlan(std::size_t n, double horizon) : n_(n), horizon_(horizon) {
        if (!is_power_of_two(n)) throw std::invalid_argument("bridge: n must be a power of two, got " + std::to_string(n));
        if (!(horizon > 0.0)) throw std::invalid_argument("bridge: horizon must be positive");
        left_.assign(n, 0);
        right_.assign(n, 0);
        mid_.assign(n, 0);
        sd_.assign(n, 0.0);
        mid_[0] = n;
        sd_[0] = std::sqrt(horizon);
        std::size_t j = 1;
        for (std::size_t width = n; width >= 2; width /= 2) {
            for (std::size_t l = 0; l < n; l += width) {
                left_[j] = l;
                right_[j] = l + width;
                mid_[j] = l + width / 2;
                sd_[j] = 0.5 * std::sqrt(horizon * static_cast<double>(width) / static_cast<double>(n));
                ++j;
            }
        }
    }

    std::size_t steps() const noexcept { return n_; }
    double horizon() const noexcept { return horizon_; }

    // nodes must hold n + 1 values; v must hold n values in [0,1]
    void fill(std::span<const double> v, std::span<double> nodes) const {
        if (v.size() != n_) throw std::invalid_argument("bridge: expected " + std::to_string(n_) + " uniforms");
        std::vector<double> z(n_);
        inv_norm_cdf_clamped(v, z);
        fill_normals(z, nodes);
    }

    // same, from standard normals already computed
    void fill_normals(std::span<const double> z, std::span<double> nodes) const {
        nodes[0] = 0.0;
        nodes[n_] = sd_[0] * z[0];
        for (std::size_t j = 1; j < n_; ++j)
            nodes[mid_[j]] = 0.5 * (nodes[left_[j]] + nodes[right_[j]]) + sd_[j] * z[j];
    }

private:

    std::size_t n_;
    double horizon_;
    std::vector<std::size_t> left_, right_, mid_;
    std::vector<double> sd_;
};

inline WienerPath bridge_path(std::span<const double> v, double horizon) {
    const BridgePlan plan(v.size(), horizon);
    std::vector<double> nodes(v.size() + 1);
    plan.fill(v, nodes);
    return WienerPath(horizon, std::move(nodes));
}

inline std::vector<double> increments(const WienerPath& path, std::size_t N) {
    const std::size_t n = path.steps();
    if (N == 0 || n % N != 0) throw std::invalid_argument("increments: N must divide the path resolution");
    const std::size_t stride = n / N;
    std::vector<double> dw(N);
    for (std::size_t i = 0; i < N; ++i) dw[i] = path.nodes()[(i + 1) * stride] - path.nodes()[i * stride];
    return dw;
}

} // namespace mvqmc
