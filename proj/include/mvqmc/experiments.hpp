#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowdisc.hpp"
#include "mlqmc.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "particle.hpp"
#include "stats.hpp"

namespace mvqmc {

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0; // RMS of the fit residuals in log2 units
    std::size_t points = 0;
};

namespace detail {

inline RateFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 3) throw std::invalid_argument("fit_rate: need at least 3 points, got " + std::to_string(n));
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_rate: abscissae must not all coincide");
    RateFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        r2 += r * r;
    }
    f.residual = std::sqrt(r2 / static_cast<double>(n));
    f.points = n;
    return f;
}

inline double checked_log2(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("fit_rate: ") + what + " values must be positive and finite");
    return std::log2(v);
}

} // namespace detail

// Slope of log2 y against log2 x.
inline RateFit fit_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("fit_rate: xs and ys differ in length");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        lx.push_back(detail::checked_log2(xs[i], "x"));
        ly.push_back(detail::checked_log2(ys[i], "y"));
    }
    return detail::least_squares(lx, ly);
}

// Slope of log2 y against x itself (x already an exponent, e.g. a level).
inline RateFit fit_log2_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("fit_rate: xs and ys differ in length");
    std::vector<double> ly;
    for (double y : ys) ly.push_back(detail::checked_log2(y, "y"));
    return detail::least_squares(xs, ly);
}

// 17 significant digits round-trips every double.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::out_of_range("table has no column '" + name + "'");
    }

    void add_row(std::vector<double> r) {
        if (r.size() != columns.size())
            throw std::invalid_argument("table row has " + std::to_string(r.size()) + " values, expected " +
                                        std::to_string(columns.size()));
        rows.push_back(std::move(r));
    }

    std::vector<double> column(const std::string& name) const {
        const std::size_t j = index_of(name);
        std::vector<double> c;
        for (const auto& r : rows) c.push_back(r[j]);
        return c;
    }

    void write_csv(std::ostream& os) const {
        for (std::size_t j = 0; j < columns.size(); ++j) os << (j ? "," : "") << columns[j];
        os << '\n';
        for (const auto& r : rows) {
            for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "," : "") << format_number(r[j]);
            os << '\n';
        }
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write '" + path + "'");
        write_csv(f);
        if (!f) throw std::runtime_error("error writing '" + path + "'");
    }
};

struct Reference {
    double value = 0.0;
    double std_error = 0.0; // 0 for closed forms
    std::string source;
};

enum class ReferenceSource { exact_ou, exact_ou_discrete, cached_mc_reference, none };

// High-accuracy i.i.d. particle run used where no closed form exists.
struct McReferenceConfig {
    std::size_t particles = std::size_t{1} << 13;
    std::size_t steps = std::size_t{1} << 9;
    std::size_t samples = 1024;
    std::uint64_t seed = 0x5eed;
    std::string cache_path; // empty: no caching
};

enum class Experiment { weak_error, variance, richardson, mlqmc_variance, mfode_rates };

struct SweepSpec {
    Experiment experiment = Experiment::weak_error;
    std::string model = "ou";
    ModelParams params;
    std::string observable; // empty: model default
    std::string variable = "P";
    std::vector<std::size_t> values;

    // fixed configuration
    std::size_t particles = 256; // used when sweeping N
    std::size_t steps = 128;     // used when sweeping P
    std::vector<std::size_t> samples{128}; // one M, or one per value
    double horizon = 1.0;
    Mode mode = Mode::qmc_coupled;
    KernelEvaluation kernel = KernelEvaluation::automatic;
    unsigned n0 = 2, p0 = 2; // level sweeps
    bool share_shift = true;
    CutRule cut_rule = CutRule::every_other;
    std::uint64_t korobov_base = kDefaultKorobovBase;
    std::size_t reference_particles = std::size_t{1} << 13; // mean-field ODE reference
    std::size_t reference_steps = std::size_t{1} << 12;

    ReferenceSource reference = ReferenceSource::none;
    McReferenceConfig mc_reference;

    std::uint64_t seed = 1;
    std::string output;
    unsigned threads = 1;

    std::size_t samples_at(std::size_t i) const {
        if (samples.size() == 1) return samples[0];
        if (samples.size() != values.size())
            throw std::invalid_argument("sweep: M must be a single value or one per sweep value");
        return samples.at(i);
    }

    ModelSpec build_model() const {
        ModelSpec m = model_by_name(model, params);
        return observable.empty() ? m : with_observable(std::move(m), observable);
    }

    void validate() const {
        if (values.empty()) throw std::invalid_argument("sweep: empty value list");
        for (std::size_t i = 0; i < values.size(); ++i) (void)samples_at(i);
        if (variable != "P" && variable != "N" && variable != "level")
            throw std::invalid_argument("sweep: variable must be P, N or level");
        if (variable == "level") {
            if (experiment != Experiment::mlqmc_variance)
                throw std::invalid_argument("sweep: only the mlqmc-variance experiment sweeps levels");
        } else {
            for (auto v : values)
                if (!is_power_of_two(v))
                    throw std::invalid_argument("sweep: " + variable + " values must be powers of two, got " +
                                                std::to_string(v));
        }
    }
};

struct SweepResult {
    Table table;
    std::map<std::string, RateFit> fits; // keyed by the fitted column
};

inline Reference exact_ou_reference(const ModelParams& p, double horizon) {
    return {ou_exact_moment2(ou_params(p), horizon), 0.0, "exact-ou"};
}

inline Reference exact_ou_discrete_reference(const ModelParams& p, double horizon, std::size_t steps) {
    return {ou_euler_moment2(ou_params(p), horizon, steps), 0.0, "exact-ou-discrete"};
}

// i.i.d. particle reference; mean and standard error over independent systems.
inline Reference mc_reference(const ModelSpec& model, const McReferenceConfig& rc, double horizon, unsigned threads,
                              KernelEvaluation kernel = KernelEvaluation::automatic) {
    SystemConfig cfg;
    cfg.particles = rc.particles;
    cfg.steps = rc.steps;
    cfg.samples = rc.samples;
    cfg.horizon = horizon;
    cfg.seed = rc.seed;
    cfg.mode = Mode::iid_mc;
    cfg.kernel = kernel;
    cfg.level = 0xfeed;
    cfg.threads = threads;
    const auto r = single_level_estimator(model, cfg);
    return {r.mean, r.std_error(), "cached-mc-reference"};
}

// Provider for the cached reference; set by the configuration layer, which
// owns the on-disk cache format.
using ReferenceProvider = std::function<Reference(const SweepSpec&)>;

inline Reference resolve_reference(const SweepSpec& spec, std::size_t steps, const ReferenceProvider& cached = {}) {
    switch (spec.reference) {
    case ReferenceSource::exact_ou:
        if (spec.model != "ou") throw std::invalid_argument("exact-ou reference requires the ou model");
        return exact_ou_reference(spec.params, spec.horizon);
    case ReferenceSource::exact_ou_discrete:
        if (spec.model != "ou") throw std::invalid_argument("exact-ou-discrete reference requires the ou model");
        return exact_ou_discrete_reference(spec.params, spec.horizon, steps);
    case ReferenceSource::cached_mc_reference:
        if (cached) return cached(spec);
        return mc_reference(spec.build_model(), spec.mc_reference, spec.horizon, spec.threads, spec.kernel);
    case ReferenceSource::none:
        break;
    }
    throw std::invalid_argument("sweep: this experiment needs a reference");
}

inline SystemConfig sweep_system(const SweepSpec& spec, std::size_t i) {
    SystemConfig cfg;
    cfg.particles = spec.variable == "P" ? spec.values[i] : spec.particles;
    cfg.steps = spec.variable == "N" ? spec.values[i] : spec.steps;
    cfg.samples = spec.samples_at(i);
    cfg.horizon = spec.horizon;
    cfg.seed = spec.seed;
    cfg.mode = spec.mode;
    cfg.kernel = spec.kernel;
    cfg.level = i; // independent shift streams per sweep point
    cfg.threads = spec.threads;
    cfg.korobov_base = spec.korobov_base;
    return cfg;
}

// Errors smaller than three reference standard errors are reported but
// flagged unresolved and kept out of the rate fit.
inline bool error_resolved(double error, const Reference& ref) { return error >= 3.0 * ref.std_error; }

// Rows (x, error, std_error, ...) of |estimate - reference| along P or N.
inline SweepResult run_weak_error_sweep(const SweepSpec& spec, const ReferenceProvider& cached = {}) {
    spec.validate();
    const ModelSpec model = spec.build_model();
    SweepResult out;
    out.table.columns = {spec.variable, "error", "std_error", "estimate", "reference", "reference_std_error",
                         "resolved", "M"};
    std::optional<Reference> shared;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        const SystemConfig cfg = sweep_system(spec, i);
        Reference ref;
        if (spec.reference == ReferenceSource::exact_ou_discrete) {
            ref = resolve_reference(spec, cfg.steps, cached);
        } else {
            if (!shared) shared = resolve_reference(spec, cfg.steps, cached);
            ref = *shared;
        }
        const auto r = single_level_estimator(model, cfg);
        const double err = std::fabs(r.mean - ref.value);
        const bool ok = error_resolved(err, ref);
        out.table.add_row({static_cast<double>(spec.values[i]), err, r.std_error(), r.mean, ref.value, ref.std_error,
                           ok ? 1.0 : 0.0, static_cast<double>(cfg.samples)});
        if (ok && err > 0.0) {
            xs.push_back(static_cast<double>(spec.values[i]));
            ys.push_back(err);
        }
    }
    if (xs.size() >= 3) out.fits["error"] = fit_rate(xs, ys);
    return out;
}

// Rows (P, variance over shifts, bootstrap CI) for the QMC or i.i.d. estimator.
inline SweepResult run_variance_sweep(const SweepSpec& spec) {
    spec.validate();
    const ModelSpec model = spec.build_model();
    SweepResult out;
    out.table.columns = {spec.variable, "variance", "ci_low", "ci_high", "mean", "M"};
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        const SystemConfig cfg = sweep_system(spec, i);
        if (cfg.samples < 32) throw std::invalid_argument("variance sweep: needs M >= 32 shifts");
        const auto r = single_level_estimator(model, cfg);
        const auto [lo, hi] = bootstrap_variance_ci(r.per_shift, 400, 0.95, spec.seed + i);
        out.table.add_row({static_cast<double>(spec.values[i]), r.variance_or_zero(), lo, hi, r.mean,
                           static_cast<double>(cfg.samples)});
    }
    const auto v = out.table.column("variance");
    bool positive = true;
    for (double x : v) positive &= x > 0.0;
    if (positive && v.size() >= 3) out.fits["variance"] = fit_rate(out.table.column(spec.variable), v);
    return out;
}

// Richardson extrapolation in P on independent i.i.d. systems: per sample
// R = 2 I_{2P} - I_P. The squared error of R against the reference is the
// per-sample quantity whose mean (bias^2 + variance) carries the rate.
inline SweepResult run_richardson_sweep(const SweepSpec& spec, const ReferenceProvider& cached = {}) {
    spec.validate();
    if (spec.variable != "P") throw std::invalid_argument("richardson sweep: variable must be P");
    const ModelSpec model = spec.build_model();
    const Reference ref = resolve_reference(spec, spec.steps, cached);
    SweepResult out;
    out.table.columns = {"P",        "mean_squared_error", "abs_error", "variance", "std_error",
                         "estimate", "plain_mean_squared_error", "plain_variance", "M"};
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        const std::size_t P = spec.values[i], M = spec.samples_at(i);
        if (M < 32) throw std::invalid_argument("richardson sweep: needs M >= 32 samples");
        std::vector<double> rich(M), plain(M);
        parallel_for(M, spec.threads, [&](std::size_t j) {
            const auto a = iid_particle_system(model, P, spec.steps, spec.horizon, spec.seed, 2 * i, j, spec.kernel);
            const auto b = iid_particle_system(model, 2 * P, spec.steps, spec.horizon, spec.seed, 2 * i + 1, j,
                                               spec.kernel);
            plain[j] = empirical_average(model, a.states);
            rich[j] = richardson_in_P(plain[j], empirical_average(model, b.states));
        });
        auto mse = [&](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += (x - ref.value) * (x - ref.value);
            return s / static_cast<double>(v.size());
        };
        const double mean = mean_of(rich), var = *sample_variance_of(rich);
        out.table.add_row({static_cast<double>(P), mse(rich), std::fabs(mean - ref.value), var,
                           std::sqrt(var / static_cast<double>(M)), mean, mse(plain), *sample_variance_of(plain),
                           static_cast<double>(M)});
    }
    const auto P = out.table.column("P");
    if (P.size() >= 3) {
        out.fits["mean_squared_error"] = fit_rate(P, out.table.column("mean_squared_error"));
        out.fits["variance"] = fit_rate(P, out.table.column("variance"));
    }
    return out;
}

inline LevelConfig sweep_levels(const SweepSpec& spec) {
    LevelConfig cfg;
    std::size_t L = 0;
    for (auto v : spec.values) L = std::max(L, v);
    cfg.L = L;
    cfg.n0 = spec.n0;
    cfg.p0 = spec.p0;
    cfg.horizon = spec.horizon;
    cfg.seed = spec.seed;
    cfg.kernel = spec.kernel;
    cfg.threads = spec.threads;
    cfg.share_shift = spec.share_shift;
    cfg.cut_rule = spec.cut_rule;
    cfg.korobov_base = spec.korobov_base;
    return cfg;
}

// Rows (level, variance of Phi - Psi, cost per sample) for the listed levels.
inline SweepResult run_mlqmc_variance_sweep(const SweepSpec& spec) {
    spec.validate();
    if (spec.variable != "level") throw std::invalid_argument("mlqmc variance sweep: variable must be level");
    const ModelSpec model = spec.build_model();
    const LevelConfig cfg = sweep_levels(spec);
    SweepResult out;
    out.table.columns = {"level", "variance", "cost", "mean", "phi_mean", "psi_mean", "samples"};
    std::vector<double> ls, vs;
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        const std::size_t l = spec.values[i], M = spec.samples_at(i);
        if (M < 32) throw std::invalid_argument("mlqmc variance sweep: needs M_probe >= 32");
        const auto samples = level_samples(model, cfg, l, M);
        const LevelStats st = level_statistics(samples, cfg, l);
        std::vector<double> phi, psi;
        for (const auto& s : samples) {
            phi.push_back(s.phi);
            psi.push_back(s.psi);
        }
        out.table.add_row({static_cast<double>(l), st.variance, st.cost, st.mean, mean_of(phi), mean_of(psi),
                           static_cast<double>(M)});
        if (l >= 1 && st.variance > 0.0) {
            ls.push_back(static_cast<double>(l));
            vs.push_back(st.variance);
        }
    }
    if (ls.size() >= 3) out.fits["variance"] = fit_log2_rate(ls, vs);
    return out;
}

// Deterministic fine solve of a noise-free model: equidistant midpoint
// lattice of P_ref points, Richardson-extrapolated in time from N_ref / 2 and
// N_ref steps. The per-step mean right features of the N_ref run give the
// interaction field used for strong errors.
struct MeanFieldReference {
    double observable_mean = 0.0; // extrapolated in time
    std::size_t steps = 0;        // N_ref
    std::vector<double> right_means; // (N_ref + 1) x rank, step-major
};

inline MeanFieldReference mean_field_reference(const ModelSpec& model, std::size_t P_ref, std::size_t N_ref,
                                               double horizon) {
    if (model.has_noise()) throw std::invalid_argument("mean-field reference: model must be noise free");
    if (!model.kernel1_separable) throw std::invalid_argument("mean-field reference: needs a separable kernel");
    if (N_ref < 2 || N_ref % 2) throw std::invalid_argument("mean-field reference: N_ref must be even");
    const auto& sep = *model.kernel1_separable;
    const std::size_t d = layout_for(model, N_ref).dimension();
    const PointSet pts = lattice_points(korobov_vector(kDefaultKorobovBase, d), P_ref);
    const std::vector<double> mid(d, 0.5 / static_cast<double>(P_ref));
    MeanFieldReference ref;
    ref.steps = N_ref;
    ref.right_means.assign((N_ref + 1) * sep.rank, 0.0);
    std::vector<double> left(P_ref * sep.rank), rbar(sep.rank);
    const StepObserver record = [&](std::size_t n, std::span<const double> x) {
        sep.batch(x, left, rbar);
        for (std::size_t r = 0; r < sep.rank; ++r)
            ref.right_means[n * sep.rank + r] = rbar[r] / static_cast<double>(x.size());
    };
    const auto fine = euler_maruyama_system(model, pts, mid, N_ref, horizon, KernelEvaluation::factorized, record);
    const auto coarse = euler_maruyama_system(model, pts, mid, N_ref / 2, horizon, KernelEvaluation::factorized);
    ref.observable_mean = 2.0 * empirical_average(model, fine.states) - empirical_average(model, coarse.states);
    return ref;
}

// Euler solution of dX = a(X, sum_r l_r(X) rbar_r(t)) dt from x0, driven by a
// recorded mean-field interaction.
inline double mean_field_trajectory(const ModelSpec& model, const MeanFieldReference& ref, double x0, double horizon) {
    const auto& sep = *model.kernel1_separable;
    const double dt = horizon / static_cast<double>(ref.steps);
    std::vector<double> l(sep.rank), r(sep.rank);
    double x = x0;
    for (std::size_t n = 0; n < ref.steps; ++n) {
        sep.features(x, l.data(), r.data());
        double m = 0.0;
        for (std::size_t k = 0; k < sep.rank; ++k) m += l[k] * ref.right_means[n * sep.rank + k];
        x += model.drift(x, m, 0.0) * dt;
    }
    return x;
}

// Rows (P, weak error, RMS strong error, variance, sup shifted discrepancy)
// for a noise-free model on the 1-D equidistant lattice. Estimates use the
// same time extrapolation as the reference, so only the P error remains.
using PointFactory = std::function<PointSet(std::size_t P)>;

inline PointSet equidistant_points(std::size_t P) { return lattice_points(korobov_vector(kDefaultKorobovBase, 1), P); }

inline SweepResult run_mfode_rate_tests(const SweepSpec& spec, const PointFactory& make_points = equidistant_points) {
    spec.validate();
    if (spec.variable != "P") throw std::invalid_argument("mean-field ODE rates: variable must be P");
    const ModelSpec model = spec.build_model();
    if (model.has_noise() || model.aux_arity != 0)
        throw std::invalid_argument("mean-field ODE rates: model '" + model.name + "' is not a noise-free ODE");
    if (spec.reference_particles < (std::size_t{1} << 13) || spec.reference_steps < (std::size_t{1} << 12))
        throw std::invalid_argument("mean-field ODE rates: reference needs P_ref >= 2^13 and N_ref >= 2^12");
    const std::size_t N = spec.reference_steps;
    const MeanFieldReference ref = mean_field_reference(model, spec.reference_particles, N, spec.horizon);
    SweepResult out;
    out.table.columns = {"P", "weak_error", "strong_error", "variance", "discrepancy", "mean", "M"};
    for (std::size_t i = 0; i < spec.values.size(); ++i) {
        const std::size_t P = spec.values[i], M = spec.samples_at(i);
        if (M < 2) throw std::invalid_argument("mean-field ODE rates: needs M >= 2 shifts");
        const PointSet pts = make_points(P);
        if (pts.count() != P || pts.dimension() != 1)
            throw std::invalid_argument("mean-field ODE rates: expected " + std::to_string(P) + " one-dimensional points");
        const auto col = column(pts, 0);
        if (!is_cyclic_group_1d(col))
            throw std::invalid_argument("mean-field ODE rates: point set is not a finite subgroup of the torus");
        std::vector<double> est(M), strong2(M);
        parallel_for(M, spec.threads, [&](std::size_t j) {
            const Shift s = make_shift(1, spec.seed, i, j);
            const auto fine = euler_maruyama_system(model, pts, s.u, N, spec.horizon, KernelEvaluation::factorized);
            const auto coarse =
                euler_maruyama_system(model, pts, s.u, N / 2, spec.horizon, KernelEvaluation::factorized);
            est[j] = 2.0 * empirical_average(model, fine.states) - empirical_average(model, coarse.states);
            double e2 = 0.0;
            for (std::size_t p = 0; p < P; ++p) {
                const double x0 = model.initial(frac(pts[p][0] + s.u[0]));
                const double d = fine.states[p] - mean_field_trajectory(model, ref, x0, spec.horizon);
                e2 += d * d;
            }
            strong2[j] = e2 / static_cast<double>(P);
        });
        out.table.add_row({static_cast<double>(P), std::fabs(mean_of(est) - ref.observable_mean),
                           std::sqrt(mean_of(strong2)), *sample_variance_of(est), sup_shifted_discrepancy_1d(col),
                           mean_of(est), static_cast<double>(M)});
    }
    const auto P = out.table.column("P");
    if (P.size() >= 3)
        for (const char* c : {"weak_error", "strong_error", "variance"}) {
            // Errors that hit exactly zero at the roundoff floor carry no rate information.
            const auto y = out.table.column(c);
            std::vector<double> px, py;
            for (std::size_t i = 0; i < y.size(); ++i)
                if (y[i] > 0.0) {
                    px.push_back(P[i]);
                    py.push_back(y[i]);
                }
            if (px.size() >= 3) out.fits[c] = fit_rate(px, py);
        }
    return out;
}

inline SweepResult run_sweep(const SweepSpec& spec, const ReferenceProvider& cached = {}) {
    switch (spec.experiment) {
    case Experiment::weak_error: return run_weak_error_sweep(spec, cached);
    case Experiment::variance: return run_variance_sweep(spec);
    case Experiment::richardson: return run_richardson_sweep(spec, cached);
    case Experiment::mlqmc_variance: return run_mlqmc_variance_sweep(spec);
    case Experiment::mfode_rates: return run_mfode_rate_tests(spec);
    }
    throw std::invalid_argument("unknown experiment");
}

} // namespace mvqmc
