#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace mvqmc {

inline double mean_of(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("mean_of: empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Unbiased (M - 1) sample variance; undefined for a single value.
inline std::optional<double> sample_variance_of(std::span<const double> x) {
    if (x.size() < 2) return std::nullopt;
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

// Percentile bootstrap interval for the sample variance, deterministic in seed.
inline std::pair<double, double> bootstrap_variance_ci(std::span<const double> x, std::size_t resamples = 400,
                                                       double level = 0.95, std::uint64_t seed = 0) {
    if (x.size() < 2) return {0.0, 0.0};
    const CounterRng rng(seed, Stream::shift, 0xb007, x.size());
    std::vector<double> stats(resamples), draw(x.size());
    std::uint64_t c = 0;
    for (std::size_t b = 0; b < resamples; ++b) {
        for (auto& d : draw) d = x[static_cast<std::size_t>(rng.uniform(c++) * static_cast<double>(x.size()))];
        stats[b] = *sample_variance_of(draw);
    }
    std::sort(stats.begin(), stats.end());
    const double a = 0.5 * (1.0 - level);
    auto at = [&](double q) {
        const auto i = static_cast<std::size_t>(std::clamp(q * static_cast<double>(resamples - 1), 0.0,
                                                           static_cast<double>(resamples - 1)));
        return stats[i];
    };
    return {at(a), at(1.0 - a)};
}

} // namespace mvqmc
