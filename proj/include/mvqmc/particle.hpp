#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridge.hpp"
#include "lowdisc.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace mvqmc {

enum class Mode { qmc_coupled, iid_mc };

// direct: O(P^2) pairwise kernel calls per step.
// factorized: uses ModelSpec::kernel1_separable when present, O(rank P).
// automatic: factorized if available, else direct.
enum class KernelEvaluation { direct, factorized, automatic };

struct SimulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CostCounter {
    std::uint64_t kernel_evaluations = 0;  // pairwise kernel calls actually made
    std::uint64_t feature_evaluations = 0; // separable-feature calls
    std::uint64_t pair_interactions = 0;   // logical particle pairs, N P^2 per run
    std::uint64_t drift_evaluations = 0;

    CostCounter& operator+=(const CostCounter& o) noexcept {
        kernel_evaluations += o.kernel_evaluations;
        feature_evaluations += o.feature_evaluations;
        pair_interactions += o.pair_interactions;
        drift_evaluations += o.drift_evaluations;
        return *this;
    }
    friend bool operator==(const CostCounter&, const CostCounter&) = default;
};

struct SystemConfig {
    std::size_t particles = 1; // P
    std::size_t steps = 1;     // N
    double horizon = 1.0;      // T
    std::size_t samples = 1;   // M
    std::uint64_t seed = 0;
    Mode mode = Mode::qmc_coupled;
    KernelEvaluation kernel = KernelEvaluation::direct;
    std::uint64_t korobov_base = kDefaultKorobovBase;
    std::uint64_t level = 0; // shift / random stream index
    unsigned threads = 1;

    void validate() const {
        if (particles < 1) throw std::invalid_argument("SystemConfig: P must be >= 1");
        if (steps < 1) throw std::invalid_argument("SystemConfig: N must be >= 1");
        if (samples < 1) throw std::invalid_argument("SystemConfig: M must be >= 1");
        if (!(horizon > 0.0)) throw std::invalid_argument("SystemConfig: T must be positive");
    }
};

inline CoordinateLayout layout_for(const ModelSpec& model, std::size_t steps) {
    return {model.aux_arity, model.has_noise() ? steps : 0};
}

struct SystemRun {
    std::vector<double> states;
    CostCounter cost;
};

struct EstimateResult {
    std::vector<double> per_shift;
    double mean = 0.0;
    std::optional<double> sample_variance; // absent when M == 1
    CostCounter cost;
    double wall_seconds = 0.0;
    bool convergence_guaranteed = true; // false for multiplicative noise

    double variance_or_zero() const noexcept { return sample_variance.value_or(0.0); }
    double std_error() const noexcept {
        return std::sqrt(variance_or_zero() / static_cast<double>(per_shift.empty() ? 1 : per_shift.size()));
    }
};

inline EstimateResult summarize(std::vector<double> values) {
    EstimateResult r;
    r.mean = mean_of(values);
    r.sample_variance = sample_variance_of(values);
    r.per_shift = std::move(values);
    return r;
}

// Called with (step index n, states at t_n) for n = 0..N.
using StepObserver = std::function<void(std::size_t, std::span<const double>)>;

namespace detail {

inline bool use_factorized(const ModelSpec& model, KernelEvaluation k) {
    if (k == KernelEvaluation::direct) return false;
    if (!model.kernel1_separable) {
        if (k == KernelEvaluation::factorized)
            throw std::invalid_argument("model '" + model.name + "' has no separable kernel form");
        return false;
    }
    return true;
}

// Euler-Maruyama on P particles. dw is step-major (dw[n * P + p]) and empty
// for models without noise. States are updated in place.
inline CostCounter evolve(const ModelSpec& model, std::vector<double>& x, const std::vector<double>& aux,
                          const std::vector<double>& dw, std::size_t N, double dt, KernelEvaluation kernel,
                          const StepObserver& observer = {}) {
    const std::size_t P = x.size();
    const double invP = 1.0 / static_cast<double>(P);
    const bool factorized = use_factorized(model, kernel);
    const bool noise = model.has_noise();
    const bool has_k2 = static_cast<bool>(model.kernel2);
    const std::size_t rank = factorized ? model.kernel1_separable->rank : 0;
    std::vector<double> m1(P), m2(has_k2 ? P : 0), drift(P), left(rank * P), right(rank), rbar(rank);
    CostCounter cost;

    for (std::size_t n = 0; n < N; ++n) {
        if (observer) observer(n, x);
        if (factorized) {
            const auto& sep = *model.kernel1_separable;
            if (sep.batch) {
                sep.batch(x, left, rbar);
            } else {
                std::fill(rbar.begin(), rbar.end(), 0.0);
                for (std::size_t p = 0; p < P; ++p) {
                    sep.features(x[p], left.data() + p * rank, right.data());
                    for (std::size_t r = 0; r < rank; ++r) rbar[r] += right[r];
                }
            }
            for (std::size_t p = 0; p < P; ++p) {
                double s = 0.0;
                for (std::size_t r = 0; r < rank; ++r) s += left[p * rank + r] * rbar[r];
                m1[p] = s * invP;
            }
            cost.feature_evaluations += P;
        } else {
            for (std::size_t p = 0; p < P; ++p) {
                double s = 0.0;
                for (std::size_t j = 0; j < P; ++j) s += model.kernel1(x[p], x[j]);
                m1[p] = s * invP;
            }
            cost.kernel_evaluations += static_cast<std::uint64_t>(P) * P;
        }
        if (has_k2) {
            for (std::size_t p = 0; p < P; ++p) {
                double s = 0.0;
                for (std::size_t j = 0; j < P; ++j) s += model.kernel2(x[p], x[j]);
                m2[p] = s * invP;
            }
            cost.kernel_evaluations += static_cast<std::uint64_t>(P) * P;
        }
        cost.pair_interactions += static_cast<std::uint64_t>(P) * P;

        if (model.drift_batch) {
            model.drift_batch(x, m1, aux, drift);
        } else {
            for (std::size_t p = 0; p < P; ++p) drift[p] = model.drift(x[p], m1[p], aux.empty() ? 0.0 : aux[p]);
        }
        cost.drift_evaluations += P;

        bool finite = true;
        if (!noise) {
            for (std::size_t p = 0; p < P; ++p) {
                x[p] += drift[p] * dt;
                finite &= std::isfinite(x[p]);
            }
        } else if (model.constant_diffusion && !has_k2) {
            const double sigma = *model.constant_diffusion;
            const double* w = dw.data() + n * P;
            for (std::size_t p = 0; p < P; ++p) {
                x[p] += drift[p] * dt + sigma * w[p];
                finite &= std::isfinite(x[p]);
            }
        } else {
            const double* w = dw.data() + n * P;
            for (std::size_t p = 0; p < P; ++p) {
                x[p] += drift[p] * dt + model.diffusion(x[p], has_k2 ? m2[p] : 0.0) * w[p];
                finite &= std::isfinite(x[p]);
            }
        }
        if (!finite) {
            std::size_t p = 0;
            while (p < P && std::isfinite(x[p])) ++p;
            throw SimulationError("non-finite particle state at step " + std::to_string(n + 1) + ", particle " +
                                  std::to_string(p));
        }
    }
    if (observer) observer(N, x);
    return cost;
}

} // namespace detail

// One run of the particle system driven by the shifted point set: particle p
// reads v = {points[p] + u}; aux from v[0..k), xi = H(v[k]) and its Wiener
// path from the bridge over the next N coordinates.
inline SystemRun euler_maruyama_system(const ModelSpec& model, const PointSet& points, std::span<const double> shift,
                                       std::size_t steps, double horizon,
                                       KernelEvaluation kernel = KernelEvaluation::direct,
                                       const StepObserver& observer = {}) {
    model.validate();
    if (steps < 1) throw std::invalid_argument("euler_maruyama_system: N must be >= 1");
    const CoordinateLayout layout = layout_for(model, steps);
    const std::size_t d = points.dimension(), P = points.count();
    if (model.has_noise() ? d != layout.dimension() : d < layout.dimension())
        throw std::invalid_argument("euler_maruyama_system: point dimension " + std::to_string(d) +
                                    " does not match layout dimension " + std::to_string(layout.dimension()));
    if (shift.size() != d) throw std::invalid_argument("euler_maruyama_system: shift dimension mismatch");
    if (model.has_noise() && !is_power_of_two(steps))
        throw std::invalid_argument("euler_maruyama_system: N must be a power of two for the bridge");

    const std::size_t k = layout.aux;
    std::vector<double> x(P), aux(k ? P : 0), dw(model.has_noise() ? steps * P : 0);
    std::optional<BridgePlan> plan;
    if (model.has_noise()) plan.emplace(steps, horizon);
    for (double u : shift)
        if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("euler_maruyama_system: shift outside [0,1)");
    std::vector<double> v(d), z(steps), nodes(steps + 1);
    for (std::size_t p = 0; p < P; ++p) {
        const auto row = points[p];
        // both summands lie in [0,1), so one conditional subtraction is frac
        for (std::size_t j = 0; j < d; ++j) {
            const double s = row[j] + shift[j];
            v[j] = s >= 1.0 ? s - 1.0 : s;
        }
        if (k) aux[p] = v[0];
        x[p] = model.initial(v[k]);
        if (plan) {
            inv_norm_cdf_clamped(std::span<const double>(v).subspan(k + 1, steps), z);
            plan->fill_normals(z, nodes);
            for (std::size_t n = 0; n < steps; ++n) dw[n * P + p] = nodes[n + 1] - nodes[n];
        }
    }
    SystemRun run;
    run.cost = detail::evolve(model, x, aux, dw, steps, horizon / static_cast<double>(steps), kernel, observer);
    run.states = std::move(x);
    return run;
}

// Same system with independent pseudo-random inputs.
inline SystemRun iid_particle_system(const ModelSpec& model, std::size_t P, std::size_t steps, double horizon,
                                     std::uint64_t seed, std::uint64_t level, std::uint64_t sample,
                                     KernelEvaluation kernel = KernelEvaluation::direct) {
    model.validate();
    if (P < 1 || steps < 1) throw std::invalid_argument("iid_particle_system: P and N must be >= 1");
    const CounterRng init(seed, Stream::iid_initial, level, sample), noise(seed, Stream::iid_noise, level, sample),
        auxr(seed, Stream::iid_aux, level, sample);
    const double dt = horizon / static_cast<double>(steps), sdt = std::sqrt(dt);
    std::vector<double> x(P), aux(model.aux_arity ? P : 0), dw(model.has_noise() ? steps * P : 0);
    for (std::size_t p = 0; p < P; ++p) {
        x[p] = model.initial(init.uniform(p));
        if (!aux.empty()) aux[p] = auxr.uniform(p);
    }
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] = sdt * inv_norm_cdf(clamp_probability(noise.uniform(i)));
    SystemRun run;
    run.cost = detail::evolve(model, x, aux, dw, steps, dt, kernel);
    run.states = std::move(x);
    return run;
}

inline double empirical_average(const ModelSpec& model, const std::vector<double>& states) {
    double s = 0.0;
    for (double v : states) s += model.observable(v);
    return s / static_cast<double>(states.size());
}

inline PointSet default_points(const ModelSpec& model, const SystemConfig& cfg) {
    return lattice_points(korobov_vector(cfg.korobov_base, layout_for(model, cfg.steps).dimension()), cfg.particles);
}

// Randomly shifted single-level estimator over M shifts (or M independent
// i.i.d. systems in iid_mc mode).
inline EstimateResult single_level_estimator(const ModelSpec& model, const SystemConfig& cfg,
                                             const std::optional<PointSet>& points_override = std::nullopt) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> values(cfg.samples);
    std::vector<CostCounter> costs(cfg.samples);
    if (cfg.mode == Mode::qmc_coupled) {
        const PointSet points = points_override ? *points_override : default_points(model, cfg);
        if (points.count() != cfg.particles) throw std::invalid_argument("single_level_estimator: point count != P");
        parallel_for(cfg.samples, cfg.threads, [&](std::size_t i) {
            const Shift s = make_shift(points.dimension(), cfg.seed, cfg.level, i);
            try {
                auto run = euler_maruyama_system(model, points, s.u, cfg.steps, cfg.horizon, cfg.kernel);
                values[i] = empirical_average(model, run.states);
                costs[i] = run.cost;
            } catch (const SimulationError& e) {
                throw SimulationError("shift " + std::to_string(i) + ": " + e.what());
            }
        });
    } else {
        parallel_for(cfg.samples, cfg.threads, [&](std::size_t i) {
            auto run = iid_particle_system(model, cfg.particles, cfg.steps, cfg.horizon, cfg.seed, cfg.level, i,
                                           cfg.kernel);
            values[i] = empirical_average(model, run.states);
            costs[i] = run.cost;
        });
    }
    EstimateResult r = summarize(std::move(values));
    for (const auto& c : costs) r.cost += c;
    r.convergence_guaranteed = model.additive_noise;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline EstimateResult iid_mc_system(const ModelSpec& model, SystemConfig cfg) {
    cfg.mode = Mode::iid_mc;
    return single_level_estimator(model, cfg);
}

inline double richardson_in_P(double estimate_P, double estimate_2P) { return 2.0 * estimate_2P - estimate_P; }

} // namespace mvqmc
