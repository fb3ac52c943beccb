#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowdisc.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "particle.hpp"
#include "stats.hpp"

namespace mvqmc {

// Level l uses N_l = 2^(n0 + l) steps and P_l = 2^(p0 + l) particles. The top
// generating vector has dimension k_aux + 1 + 2 N_L; level l points are the
// lattice of P_l points generated by that vector cut L - l times.
struct LevelConfig {
    std::size_t L = 0;
    unsigned n0 = 1;
    unsigned p0 = 1;
    std::vector<std::size_t> samples; // M_l, one per level
    double horizon = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t korobov_base = kDefaultKorobovBase;
    KernelEvaluation kernel = KernelEvaluation::automatic;
    unsigned threads = 1;
    bool share_shift = true; // diagnostic: false gives Psi its own shift
    CutRule cut_rule = CutRule::every_other;

    std::size_t steps(std::size_t l) const { return std::size_t{1} << (n0 + l); }
    std::size_t particles(std::size_t l) const { return std::size_t{1} << (p0 + l); }

    void validate() const {
        if (n0 < 1 || p0 < 1) throw std::invalid_argument("LevelConfig: n0 and p0 must be >= 1");
        if (n0 + L + 1 > 40 || p0 + L > 40) throw std::invalid_argument("LevelConfig: hierarchy too deep");
        if (!samples.empty() && samples.size() != L + 1)
            throw std::invalid_argument("LevelConfig: need one sample count per level (" + std::to_string(L + 1) + ")");
        for (auto m : samples)
            if (m < 1) throw std::invalid_argument("LevelConfig: sample counts must be >= 1");
        if (!(horizon > 0.0)) throw std::invalid_argument("LevelConfig: T must be positive");
    }
};

struct LevelStats {
    std::size_t level = 0;
    double mean = 0.0;
    double variance = 0.0;
    double cost = 0.0; // kernel interactions per sample of this level
    std::size_t samples = 0;
    double wall_seconds = 0.0;
};

struct LevelSample {
    double phi = 0.0;
    double psi = 0.0; // 0 on level 0
    double difference() const noexcept { return phi - psi; }
};

struct MlqmcResult {
    double estimate = 0.0;
    double variance = 0.0; // sum_l V_l / M_l
    std::vector<LevelStats> levels;
};

inline CoordinateLayout level_layout(const ModelSpec& model, const LevelConfig& cfg, std::size_t l) {
    return {model.aux_arity, model.has_noise() ? 2 * cfg.steps(l) : 0, cfg.cut_rule};
}

inline GeneratingVector top_generating_vector(const ModelSpec& model, const LevelConfig& cfg) {
    return korobov_vector(cfg.korobov_base, level_layout(model, cfg, cfg.L).dimension());
}

// Lattice for level l: the top vector with L - l cuts.
inline PointSet level_points(const ModelSpec& model, const LevelConfig& cfg, std::size_t l) {
    if (l > cfg.L) throw std::invalid_argument("level_points: level beyond L");
    GeneratingVector z = top_generating_vector(model, cfg);
    for (std::size_t c = cfg.L; c > l; --c) z = cut_generating_vector(z, level_layout(model, cfg, c));
    return lattice_points(z, cfg.particles(l));
}

// Interaction count of one level sample: Phi runs P_l particles over 2N_l and
// N_l steps; Psi runs two halves of P_l / 2 over N_l and N_{l-1} steps.
inline std::uint64_t level_sample_interactions(const LevelConfig& cfg, std::size_t l) {
    const std::uint64_t N = cfg.steps(l), P = cfg.particles(l);
    std::uint64_t c = 3 * N * P * P;
    if (l > 0) c += 2 * N * (P / 2) * (P / 2) + 2 * (N / 2) * (P / 2) * (P / 2);
    return c;
}

namespace detail {

inline double system_average(const ModelSpec& model, const PointSet& points, std::span<const double> shift,
                             std::size_t steps, double horizon, KernelEvaluation kernel, CostCounter& cost) {
    auto run = euler_maruyama_system(model, points, shift, steps, horizon, kernel);
    cost += run.cost;
    return empirical_average(model, run.states);
}

} // namespace detail

// Phi^l = 2 A(zeta, 2N_l; P_l) - A(zeta_:2, N_l; P_l)
inline double phi_level(const ModelSpec& model, const LevelConfig& cfg, std::size_t l, const PointSet& points,
                        const Shift& shift, CostCounter& cost) {
    const CoordinateLayout layout = level_layout(model, cfg, l);
    const std::size_t N = cfg.steps(l);
    const double fine = detail::system_average(model, points, shift.u, 2 * N, cfg.horizon, cfg.kernel, cost);
    const PointSet coarse_pts = layout.bridge ? cut_points(points, layout) : points;
    const std::vector<double> coarse_shift = layout.bridge ? cut_coordinates<double>(shift.u, layout) : shift.u;
    const double coarse = detail::system_average(model, coarse_pts, coarse_shift, N, cfg.horizon, cfg.kernel, cost);
    return 2.0 * fine - coarse;
}

// Psi^l: the once-cut points split into even/odd halves of P_{l-1} points run
// over N_l steps with U_:2, minus the twice-cut halves over N_{l-1} steps with
// U_:2:2. Cut first, then split.
inline double psi_level(const ModelSpec& model, const LevelConfig& cfg, std::size_t l, const PointSet& points,
                        const Shift& shift, CostCounter& cost) {
    if (l == 0) throw std::invalid_argument("psi_level: level 0 has no coarse partner");
    const CoordinateLayout layout = level_layout(model, cfg, l);
    const std::size_t N = cfg.steps(l);
    PointSet once = points, twice = points;
    std::vector<double> u1 = shift.u, u2 = shift.u;
    if (layout.bridge) {
        once = cut_points(points, layout);
        u1 = cut_coordinates<double>(shift.u, layout);
        twice = cut_points(once, layout.cut());
        u2 = cut_coordinates<double>(u1, layout.cut());
    }
    auto [e1, o1] = split_even_odd(once);
    auto [e2, o2] = split_even_odd(twice);
    const double fine = 0.5 * (detail::system_average(model, e1, u1, N, cfg.horizon, cfg.kernel, cost) +
                               detail::system_average(model, o1, u1, N, cfg.horizon, cfg.kernel, cost));
    const double coarse = 0.5 * (detail::system_average(model, e2, u2, N / 2, cfg.horizon, cfg.kernel, cost) +
                                 detail::system_average(model, o2, u2, N / 2, cfg.horizon, cfg.kernel, cost));
    return 2.0 * fine - coarse;
}

inline Shift level_shift(const ModelSpec& model, const LevelConfig& cfg, std::size_t l, std::uint64_t j) {
    return make_shift(level_layout(model, cfg, l).dimension(), cfg.seed, l, j);
}

// M samples of (Phi^l, Psi^l), sharing the shift within a sample.
inline std::vector<LevelSample> level_samples(const ModelSpec& model, const LevelConfig& cfg, std::size_t l,
                                              std::size_t M, CostCounter* total_cost = nullptr) {
    cfg.validate();
    model.validate();
    const PointSet points = level_points(model, cfg, l);
    std::vector<LevelSample> out(M);
    std::vector<CostCounter> costs(M);
    parallel_for(M, cfg.threads, [&](std::size_t j) {
        const Shift s = level_shift(model, cfg, l, j);
        out[j].phi = phi_level(model, cfg, l, points, s, costs[j]);
        if (l > 0) {
            const Shift s_psi = cfg.share_shift ? s : level_shift(model, cfg, l, j + (std::uint64_t{1} << 40));
            out[j].psi = psi_level(model, cfg, l, points, s_psi, costs[j]);
        }
    });
    if (total_cost)
        for (const auto& c : costs) *total_cost += c;
    return out;
}

inline LevelStats level_statistics(const std::vector<LevelSample>& samples, const LevelConfig& cfg, std::size_t l) {
    std::vector<double> d(samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j) d[j] = samples[j].difference();
    LevelStats st;
    st.level = l;
    st.mean = mean_of(d);
    st.variance = sample_variance_of(d).value_or(0.0);
    st.cost = static_cast<double>(level_sample_interactions(cfg, l));
    st.samples = samples.size();
    return st;
}

inline std::vector<LevelStats> level_variance_study(const ModelSpec& model, const LevelConfig& cfg,
                                                    std::size_t M_probe) {
    std::vector<LevelStats> stats;
    for (std::size_t l = 0; l <= cfg.L; ++l) {
        const auto t0 = std::chrono::steady_clock::now();
        auto st = level_statistics(level_samples(model, cfg, l, M_probe), cfg, l);
        st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        stats.push_back(st);
    }
    return stats;
}

// M_l proportional to sqrt(V_l / C_l), scaled so that sum_l V_l / M_l <= tol^2 / 2.
inline std::vector<std::size_t> allocate_samples(const std::vector<LevelStats>& probe, double tolerance,
                                                 std::size_t minimum = 2) {
    if (!(tolerance > 0.0)) throw std::invalid_argument("allocate_samples: tolerance must be positive");
    double s = 0.0;
    for (const auto& st : probe) s += std::sqrt(st.variance * st.cost);
    std::vector<std::size_t> m;
    for (const auto& st : probe) {
        const double ml = 2.0 / (tolerance * tolerance) * std::sqrt(st.variance / st.cost) * s;
        m.push_back(std::max<std::size_t>(minimum, static_cast<std::size_t>(std::ceil(ml))));
    }
    return m;
}

inline MlqmcResult mlqmc_estimator(const ModelSpec& model, const LevelConfig& cfg) {
    cfg.validate();
    if (cfg.samples.size() != cfg.L + 1) throw std::invalid_argument("mlqmc_estimator: samples per level required");
    MlqmcResult r;
    for (std::size_t l = 0; l <= cfg.L; ++l) {
        const auto t0 = std::chrono::steady_clock::now();
        auto st = level_statistics(level_samples(model, cfg, l, cfg.samples[l]), cfg, l);
        st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r.estimate += st.mean;
        r.variance += st.variance / static_cast<double>(st.samples);
        r.levels.push_back(st);
    }
    return r;
}

} // namespace mvqmc
