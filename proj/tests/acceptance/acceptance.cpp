// One PASS/FAIL line per acceptance criterion; exit code 1 if any fails.
// Sweep criteria run the shipped configs, so the CSVs they leave behind are
// the same ones the CLI produces.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvqmc/config.hpp"
#include "mvqmc/mvqmc.hpp"

using namespace mvqmc;

namespace {

struct Context {
    std::string configs = MVQMC_CONFIG_DIR;
    std::string results = "acceptance_results";
    std::string cache = "cache";
    unsigned threads = 1;
    std::vector<std::string> only;
};

int failures = 0;

std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void report(const std::string& name, bool pass, const std::string& detail, double seconds) {
    std::printf("%s %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

void info(const std::string& name, const std::string& detail) {
    std::printf("INFO %s: %s\n", name.c_str(), detail.c_str());
    std::fflush(stdout);
}

// Runs a criterion body returning {pass, detail}; exceptions count as failures.
template <class F>
void criterion(const Context& ctx, const std::string& name, F&& body) {
    if (!ctx.only.empty() && std::find(ctx.only.begin(), ctx.only.end(), name) == ctx.only.end()) return;
    const auto t0 = std::chrono::steady_clock::now();
    std::pair<bool, std::string> r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r = {false, std::string("error: ") + e.what()};
    }
    report(name, r.first, r.second, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

SweepResult run_config(const Context& ctx, const std::string& name) {
    SweepSpec spec = load_sweep_spec(ctx.configs + "/" + name + ".json");
    spec.threads = ctx.threads;
    if (!spec.mc_reference.cache_path.empty())
        spec.mc_reference.cache_path =
            (std::filesystem::path(ctx.cache) / std::filesystem::path(spec.mc_reference.cache_path).filename())
                .string();
    SweepResult r = run_sweep(spec, cached_reference);
    std::filesystem::create_directories(ctx.results);
    r.table.save((std::filesystem::path(ctx.results) / (name + ".csv")).string());
    return r;
}

std::string slope_text(const SweepResult& r, const std::string& column) {
    const auto it = r.fits.find(column);
    if (it == r.fits.end()) return column + " slope n/a";
    return fmt("%s slope %.3f over %zu points", column.c_str(), it->second.slope, it->second.points);
}

bool slope_at_most(const SweepResult& r, const std::string& column, double bound) {
    const auto it = r.fits.find(column);
    return it != r.fits.end() && it->second.slope <= bound;
}

bool slope_within(const SweepResult& r, const std::string& column, double lo, double hi) {
    const auto it = r.fits.find(column);
    return it != r.fits.end() && it->second.slope >= lo && it->second.slope <= hi;
}

double grid_star_discrepancy(const std::vector<double>& x, std::size_t grid) {
    double d = 0.0;
    const double P = static_cast<double>(x.size());
    for (std::size_t i = 0; i <= grid; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(grid);
        std::size_t below = 0, at_or_below = 0;
        for (double v : x) {
            below += v < t;
            at_or_below += v <= t;
        }
        d = std::max({d, std::fabs(static_cast<double>(below) / P - t), std::fabs(static_cast<double>(at_or_below) / P - t)});
    }
    return d;
}

std::pair<bool, std::string> split_identity() {
    const CoordinateLayout layout{1, 32};
    const auto z = korobov_vector(kDefaultKorobovBase, layout.dimension());
    double worst = 0.0;
    bool cut_exact = true;
    for (std::size_t P = 8; P <= 1024; P *= 2) {
        auto [even, odd] = split_even_odd(lattice_points(z, P));
        std::vector<double> zp(layout.dimension());
        for (std::size_t j = 0; j < zp.size(); ++j)
            zp[j] = static_cast<double>(z.components[j] % P) / static_cast<double>(P);
        const auto moved = shift_points(even, zp);
        for (std::size_t i = 0; i < moved.values().size(); ++i) {
            const double d = std::fabs(moved.values()[i] - odd.values()[i]);
            worst = std::max(worst, std::min(d, 1.0 - d));
        }
        cut_exact &= cut_points(even, layout).values() ==
                     lattice_points(cut_generating_vector(z, layout), P / 2).values();
    }
    const bool pass = worst <= std::ldexp(1.0, -50) && cut_exact;
    return {pass, fmt("max shift mismatch %.3g (<= 2^-50), cut even half %s", worst,
                      cut_exact ? "equals half lattice" : "differs")};
}

std::pair<bool, std::string> discrepancy() {
    // Exact for P a power of two; other P cannot be represented on the grid.
    std::size_t exact_misses = 0;
    double worst_other = 0.0;
    for (std::size_t P = 2; P <= 1024; ++P) {
        std::vector<double> x(P);
        for (std::size_t i = 0; i < P; ++i) x[i] = static_cast<double>(i) / static_cast<double>(P);
        const double d = star_discrepancy_1d(x), expect = 1.0 / static_cast<double>(P);
        if ((P & (P - 1)) == 0)
            exact_misses += d != expect;
        else
            worst_other = std::max(worst_other, std::fabs(d - expect));
    }
    const CounterRng rng(2024, Stream::bridge_test, 78, 0);
    std::uint64_t c = 0;
    double worst_grid = 0.0;
    for (int set = 0; set < 50; ++set) {
        const std::size_t P = 1 + rng.bits(c++) % 64;
        std::vector<double> x(P);
        for (auto& v : x) v = rng.uniform(c++);
        worst_grid = std::max(worst_grid, std::fabs(star_discrepancy_1d(x) - grid_star_discrepancy(x, 100000)));
    }
    const bool pass = exact_misses == 0 && worst_other <= std::ldexp(1.0, -51) && worst_grid <= 1e-5;
    return {pass, fmt("powers of two exact (%zu misses), other P within %.2g of 1/P, grid oracle within %.2g",
                      exact_misses, worst_other, worst_grid)};
}

std::pair<bool, std::string> bridge_distribution(unsigned threads) {
    const std::size_t n = 8, paths = 100000;
    std::vector<std::vector<double>> nodes(paths);
    parallel_for(paths, threads, [&](std::size_t k) {
        const CounterRng rng(31, Stream::bridge_test, 0, k);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(i);
        nodes[k] = bridge_path(v, 1.0).nodes();
    });
    double mean_z = 0.0, var_rel = 0.0, cov_rel = 0.0;
    for (std::size_t s = 1; s <= n; ++s) {
        std::vector<double> ws(paths);
        for (std::size_t k = 0; k < paths; ++k) ws[k] = nodes[k][s];
        const double m = mean_of(ws), v = *sample_variance_of(ws);
        mean_z = std::max(mean_z, std::fabs(m) / std::sqrt(v / static_cast<double>(paths)));
        const double ts = static_cast<double>(s) / static_cast<double>(n);
        var_rel = std::max(var_rel, std::fabs(v - ts) / ts);
        for (std::size_t t = s + 1; t <= n; ++t) {
            double mt = 0.0, c = 0.0;
            for (std::size_t k = 0; k < paths; ++k) mt += nodes[k][t];
            mt /= static_cast<double>(paths);
            for (std::size_t k = 0; k < paths; ++k) c += (nodes[k][s] - m) * (nodes[k][t] - mt);
            c /= static_cast<double>(paths - 1);
            cov_rel = std::max(cov_rel, std::fabs(c - ts) / ts);
        }
    }
    // Locality: coordinate j only moves nodes strictly inside its interval.
    bool local = true;
    const CounterRng rng(32, Stream::bridge_test, 1, 0);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(i);
    const auto base = bridge_path(v, 1.0);
    std::size_t j = 1;
    for (std::size_t width = n; width >= 2; width /= 2)
        for (std::size_t a = 0; a < n; a += width, ++j) {
            auto w = v;
            w[j] = 1.0 - 0.5 * w[j];
            const auto moved = bridge_path(w, 1.0);
            for (std::size_t i = 0; i <= n; ++i)
                if ((i <= a || i >= a + width) && moved[i] != base[i]) local = false;
        }
    const bool pass = mean_z <= 4.0 && var_rel <= 0.05 && cov_rel <= 0.05 && local;
    return {pass, fmt("max |mean|/SE %.2f (<= 4), max var rel err %.4f, max cov rel err %.4f (<= 0.05), locality %s",
                      mean_z, var_rel, cov_rel, local ? "exact" : "violated")};
}

std::pair<bool, std::string> ou_exact_moment(unsigned threads) {
    SystemConfig c;
    c.particles = 256;
    c.steps = 64;
    c.samples = 64;
    c.seed = 2718;
    c.kernel = KernelEvaluation::factorized;
    c.threads = threads;
    const auto r = single_level_estimator(ou_model(OUParams{1.0, 0.5, 1.0}), c);
    const double exact = ou_exact_moment2(OUParams{1.0, 0.5, 1.0}, 1.0);
    const double dev = std::fabs(r.mean - exact);
    return {dev <= 3.0 * r.std_error(),
            fmt("mean %.6f vs %.10f, |diff| %.2e, 3 SE %.2e", r.mean, exact, dev, 3.0 * r.std_error())};
}

std::pair<bool, std::string> telescoping(unsigned threads) {
    double worst = 0.0;
    std::string detail;
    for (const char* name : {"ou", "kuramoto"}) {
        const ModelSpec m = model_by_name(name);
        LevelConfig c;
        c.L = 2;
        c.n0 = 2;
        c.p0 = 2;
        c.seed = 4242;
        c.kernel = KernelEvaluation::factorized;
        c.threads = threads;
        for (std::size_t l = 1; l <= 2; ++l) {
            const auto fine = level_samples(m, c, l, 256), coarse = level_samples(m, c, l - 1, 256);
            std::vector<double> psi, phi;
            for (const auto& s : fine) psi.push_back(s.psi);
            for (const auto& s : coarse) phi.push_back(s.phi);
            const double se = std::hypot(std::sqrt(*sample_variance_of(psi) / 256.0),
                                         std::sqrt(*sample_variance_of(phi) / 256.0));
            const double z = std::fabs(mean_of(psi) - mean_of(phi)) / se;
            worst = std::max(worst, z);
            detail += fmt("%s l=%zu %.2f SE; ", name, l, z);
        }
    }
    return {worst <= 4.0, detail + fmt("max %.2f (<= 4)", worst)};
}

std::pair<bool, std::string> cost_accounting() {
    bool ok = true;
    const ModelSpec m = kuramoto_model(KuramotoParams{});
    for (std::size_t P : {8u, 32u})
        for (std::size_t N : {4u, 16u}) {
            SystemConfig c;
            c.particles = P;
            c.steps = N;
            c.samples = 3;
            c.kernel = KernelEvaluation::direct;
            const auto r = single_level_estimator(m, c);
            ok &= r.cost.kernel_evaluations == 3 * N * P * P && r.cost.pair_interactions == 3 * N * P * P;
        }
    LevelConfig lc;
    lc.L = 3;
    lc.kernel = KernelEvaluation::direct;
    for (std::size_t l = 0; l <= 3; ++l) {
        CostCounter cost;
        level_samples(m, lc, l, 2, &cost);
        const std::uint64_t N = lc.steps(l), P = lc.particles(l);
        const std::uint64_t per_sample = l == 0 ? 3 * N * P * P : 15 * N * P * P / 4;
        ok &= level_sample_interactions(lc, l) == per_sample && cost.kernel_evaluations == 2 * per_sample;
        if (l >= 2) ok &= level_sample_interactions(lc, l) == 8 * level_sample_interactions(lc, l - 1);
    }
    return {ok, "single level N P^2 per shift; level sample 3 N P^2 (l = 0), 15/4 N P^2 (l >= 1); ratio 8 per level"};
}

} // namespace

int main(int argc, char** argv) {
    Context ctx;
    if (const char* c = std::getenv("MVQMC_CACHE_DIR")) ctx.cache = c;
    CLI::App app{"acceptance checks"};
    app.add_option("--configs", ctx.configs, "directory of sweep configs")->capture_default_str();
    app.add_option("--results", ctx.results, "directory for result CSVs")->capture_default_str();
    app.add_option("--cache", ctx.cache, "reference cache directory")->capture_default_str();
    app.add_option("--threads", ctx.threads, "worker threads (0: hardware)")->capture_default_str();
    app.add_option("--only", ctx.only, "run only the named criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    if (ctx.threads == 0) ctx.threads = std::max(1u, std::thread::hardware_concurrency());

    criterion(ctx, "split-identity", split_identity);
    criterion(ctx, "star-discrepancy", discrepancy);
    criterion(ctx, "bridge-distribution", [&] { return bridge_distribution(ctx.threads); });
    criterion(ctx, "ou-exact-moment", [&] { return ou_exact_moment(ctx.threads); });
    criterion(ctx, "ou-weak-rate", [&] {
        const auto r = run_config(ctx, "ou_weak");
        return std::pair{slope_at_most(r, "error", -1.7), slope_text(r, "error") + " (<= -1.7)"};
    });
    criterion(ctx, "ou-variance-rate", [&] {
        const auto q = run_config(ctx, "ou_variance"), i = run_config(ctx, "ou_variance_iid");
        return std::pair{slope_at_most(q, "variance", -1.7) && slope_within(i, "variance", -1.35, -0.65),
                         "qmc " + slope_text(q, "variance") + " (<= -1.7); iid " + slope_text(i, "variance") +
                             " (in [-1.35, -0.65])"};
    });
    criterion(ctx, "richardson-iid", [&] {
        const auto r = run_config(ctx, "ou_richardson");
        return std::pair{slope_within(r, "mean_squared_error", -1.35, -0.65) &&
                             slope_within(r, "variance", -1.35, -0.65),
                         slope_text(r, "mean_squared_error") + ", " + slope_text(r, "variance") +
                             " (both in [-1.35, -0.65])"};
    });
    criterion(ctx, "kuramoto-weak-rate", [&] {
        const auto r = run_config(ctx, "kuramoto_weak");
        const auto resolved = r.table.column("resolved");
        const auto n = static_cast<std::size_t>(std::count(resolved.begin(), resolved.end(), 1.0));
        return std::pair{slope_at_most(r, "error", -1.6),
                         slope_text(r, "error") + fmt(" (<= -1.6); %zu of %zu errors resolved", n, resolved.size())};
    });
    criterion(ctx, "mlqmc-telescoping", [&] { return telescoping(ctx.threads); });
    criterion(ctx, "mlqmc-level-variance", [&] {
        const auto r = run_config(ctx, "mlqmc_kuramoto");
        const auto p = run_config(ctx, "mlqmc_kuramoto_prefix");
        info("mlqmc-level-variance", "bridge-prefix cut: " + slope_text(p, "variance"));
        return std::pair{slope_at_most(r, "variance", -3.3), "every-other cut: " + slope_text(r, "variance") +
                                                                 " (<= -3.3)"};
    });
    criterion(ctx, "mfode-rates", [&] {
        const auto r = run_config(ctx, "mfode_sin");
        const auto c = run_config(ctx, "mfode_c1");
        info("mfode-rates", "C1 initial map: " + slope_text(c, "weak_error") + ", " + slope_text(c, "strong_error") +
                                ", " + slope_text(c, "variance"));
        return std::pair{slope_at_most(r, "weak_error", -1.7) && slope_at_most(r, "strong_error", -0.85) &&
                             slope_at_most(r, "variance", -1.7),
                         "sin initial map: " + slope_text(r, "weak_error") + " (<= -1.7), " +
                             slope_text(r, "strong_error") + " (<= -0.85), " + slope_text(r, "variance") +
                             " (<= -1.7)"};
    });
    criterion(ctx, "cost-accounting", cost_accounting);

    std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
