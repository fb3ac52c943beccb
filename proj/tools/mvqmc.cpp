#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "mvqmc/config.hpp"
#include "mvqmc/mvqmc.hpp"

namespace {

using namespace mvqmc;

// Writes to the named file, or to stdout when the name is empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw std::runtime_error("cannot write '" + path + "'");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }
    bool is_stdout() const { return !file_; }

private:
    std::unique_ptr<std::ofstream> file_;
};

void emit_summary(const json& j, const std::string& path, bool csv_on_stdout) {
    if (!path.empty()) {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write '" + path + "'");
        f << j.dump(2) << '\n';
    } else {
        (csv_on_stdout ? std::cerr : std::cout) << j.dump(2) << '\n';
    }
}

struct Common {
    unsigned threads = 1;
    std::string kernel = "auto";
};

struct ModelOptions {
    std::string model = "ou";
    std::string observable;
    std::optional<double> kappa, sigma, xi_second_moment, xi_variance;

    void attach(CLI::App* app) {
        app->add_option("--model", model, "ou, kuramoto, mfode-sin or mfode-sin-c1")->capture_default_str();
        app->add_option("--observable", observable, "moment2, moment1, gauss, cos or constant");
        app->add_option("--kappa", kappa, "OU mean-reversion rate");
        app->add_option("--sigma", sigma, "noise level");
        app->add_option("--xi-second-moment", xi_second_moment, "OU initial second moment");
        app->add_option("--xi-variance", xi_variance, "Kuramoto initial variance");
    }

    ModelParams params() const { return {kappa, sigma, xi_second_moment, xi_variance}; }

    ModelSpec build() const {
        ModelSpec m = model_by_name(model, params());
        return observable.empty() ? m : with_observable(std::move(m), observable);
    }
};

int run(int argc, char** argv) {
    CLI::App app{"McKean-Vlasov particle systems with lattice-coupled noise"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--threads", common.threads, "worker threads (0: hardware concurrency)")->capture_default_str();
    app.add_option("--kernel", common.kernel, "kernel evaluation: direct, factorized or auto")->capture_default_str();

    // points
    auto* pts = app.add_subcommand("points", "rank-1 lattice points as CSV c1..cd");
    std::size_t pts_P = 16, pts_d = 2;
    std::uint64_t pts_base = kDefaultKorobovBase;
    std::optional<std::uint64_t> pts_seed;
    std::string pts_out;
    pts->add_option("--P", pts_P, "number of points")->capture_default_str();
    pts->add_option("--d", pts_d, "dimension")->capture_default_str();
    pts->add_option("--base", pts_base, "Korobov base g")->capture_default_str();
    pts->add_option("--shift-seed", pts_seed, "apply the random shift drawn from this seed");
    pts->add_option("--output", pts_out, "CSV path (default stdout)");

    // bridge-test
    auto* br = app.add_subcommand("bridge-test", "Brownian bridge path from uniforms as CSV t,value");
    std::size_t br_n = 8;
    double br_T = 1.0;
    std::vector<double> br_u;
    std::uint64_t br_seed = 0;
    std::string br_out;
    br->add_option("--n", br_n, "number of steps (power of two)")->capture_default_str();
    br->add_option("--T", br_T, "horizon")->capture_default_str();
    br->add_option("--u", br_u, "n uniforms in [0,1]; drawn from --seed when absent")->delimiter(',');
    br->add_option("--seed", br_seed, "seed for generated uniforms")->capture_default_str();
    br->add_option("--output", br_out, "CSV path (default stdout)");

    // single-level
    auto* sl = app.add_subcommand("single-level", "single-level estimator over M random shifts");
    ModelOptions sl_model;
    sl_model.attach(sl);
    SystemConfig sl_cfg;
    sl_cfg.particles = 256;
    sl_cfg.steps = 64;
    sl_cfg.samples = 64;
    std::string sl_mode = "qmc", sl_out, sl_summary;
    sl->add_option("--P", sl_cfg.particles, "particles")->capture_default_str();
    sl->add_option("--N", sl_cfg.steps, "time steps")->capture_default_str();
    sl->add_option("--M", sl_cfg.samples, "random shifts (or i.i.d. systems)")->capture_default_str();
    sl->add_option("--T", sl_cfg.horizon, "horizon")->capture_default_str();
    sl->add_option("--seed", sl_cfg.seed, "root seed")->capture_default_str();
    sl->add_option("--mode", sl_mode, "qmc or iid")->capture_default_str();
    sl->add_option("--base", sl_cfg.korobov_base, "Korobov base g")->capture_default_str();
    sl->add_option("--output", sl_out, "per-shift CSV path (default stdout)");
    sl->add_option("--summary", sl_summary, "JSON summary path (default stdout, or stderr if CSV is on stdout)");

    // mlqmc
    auto* ml = app.add_subcommand("mlqmc", "antithetic multilevel QMC estimator");
    ModelOptions ml_model;
    ml_model.attach(ml);
    LevelConfig ml_cfg;
    ml_cfg.n0 = 2;
    ml_cfg.p0 = 2;
    std::string ml_out, ml_summary;
    ml->add_option("--L", ml_cfg.L, "top level")->capture_default_str();
    ml->add_option("--n0", ml_cfg.n0, "base step exponent")->capture_default_str();
    ml->add_option("--p0", ml_cfg.p0, "base particle exponent")->capture_default_str();
    ml->add_option("--Ml", ml_cfg.samples, "samples per level, comma separated")->delimiter(',')->required();
    ml->add_option("--T", ml_cfg.horizon, "horizon")->capture_default_str();
    ml->add_option("--seed", ml_cfg.seed, "root seed")->capture_default_str();
    ml->add_option("--base", ml_cfg.korobov_base, "Korobov base g")->capture_default_str();
    ml->add_flag("!--independent-psi-shift", ml_cfg.share_shift, "diagnostic: do not share the shift with Psi");
    std::string ml_cut = "every-other";
    ml->add_option("--cut", ml_cut, "coordinate cut: every-other or bridge-prefix")->capture_default_str();
    ml->add_option("--output", ml_out, "per-level CSV path (default stdout)");
    ml->add_option("--summary", ml_summary, "JSON summary path");

    // sweep
    auto* sw = app.add_subcommand("sweep", "run an experiment described by a JSON config");
    std::string sw_config, sw_out;
    sw->add_option("--config", sw_config, "config file")->required()->check(CLI::ExistingFile);
    sw->add_option("--output", sw_out, "CSV path, overrides the config");

    CLI11_PARSE(app, argc, argv);

    const unsigned threads = common.threads ? common.threads : std::max(1u, std::thread::hardware_concurrency());
    const KernelEvaluation kernel = parse_kernel(common.kernel);

    if (*pts) {
        const GeneratingVector z = korobov_vector(pts_base, pts_d);
        PointSet p = lattice_points(z, pts_P);
        if (pts_seed) p = shift_points(p, make_shift(pts_d, *pts_seed, 0, 0).u);
        Output out(pts_out);
        auto& os = out.stream();
        for (std::size_t j = 0; j < pts_d; ++j) os << (j ? "," : "") << 'c' << j + 1;
        os << '\n';
        for (std::size_t k = 0; k < p.count(); ++k) {
            const auto row = p[k];
            for (std::size_t j = 0; j < pts_d; ++j) os << (j ? "," : "") << format_number(row[j]);
            os << '\n';
        }
        return 0;
    }

    if (*br) {
        if (br_u.empty()) {
            const CounterRng rng(br_seed, Stream::bridge_test, 0, 0);
            for (std::size_t i = 0; i < br_n; ++i) br_u.push_back(rng.uniform(i));
        }
        const WienerPath w = bridge_path(br_u, br_T);
        Output out(br_out);
        auto& os = out.stream();
        os << "t,value\n";
        for (std::size_t i = 0; i <= w.steps(); ++i) os << format_number(w.time(i)) << ',' << format_number(w[i]) << '\n';
        return 0;
    }

    if (*sl) {
        const ModelSpec model = sl_model.build();
        sl_cfg.mode = parse_mode(sl_mode);
        sl_cfg.kernel = kernel;
        sl_cfg.threads = threads;
        const EstimateResult r = single_level_estimator(model, sl_cfg);
        Output out(sl_out);
        out.stream() << "shift_index,estimate\n";
        for (std::size_t i = 0; i < r.per_shift.size(); ++i) out.stream() << i << ',' << format_number(r.per_shift[i]) << '\n';
        json s = {{"model", model.name},
                  {"observable", model.observable_name},
                  {"mean", r.mean},
                  {"variance", r.sample_variance ? json(*r.sample_variance) : json(nullptr)},
                  {"std_error", r.std_error()},
                  {"cost",
                   {{"kernel_evaluations", r.cost.kernel_evaluations},
                    {"feature_evaluations", r.cost.feature_evaluations},
                    {"pair_interactions", r.cost.pair_interactions}}},
                  {"runtime", r.wall_seconds},
                  {"convergence_guaranteed", r.convergence_guaranteed}};
        emit_summary(s, sl_summary, out.is_stdout());
        return 0;
    }

    if (*ml) {
        const ModelSpec model = ml_model.build();
        ml_cfg.kernel = kernel;
        ml_cfg.threads = threads;
        ml_cfg.cut_rule = parse_cut_rule(ml_cut);
        const MlqmcResult r = mlqmc_estimator(model, ml_cfg);
        Output out(ml_out);
        out.stream() << "level,mean,variance,cost,samples\n";
        json levels = json::array();
        for (const auto& st : r.levels) {
            out.stream() << st.level << ',' << format_number(st.mean) << ',' << format_number(st.variance) << ','
                         << format_number(st.cost) << ',' << st.samples << '\n';
            levels.push_back({{"level", st.level},
                              {"mean", st.mean},
                              {"variance", st.variance},
                              {"cost", st.cost},
                              {"samples", st.samples},
                              {"runtime", st.wall_seconds}});
        }
        json s = {{"model", model.name},
                  {"cut", ml_cut},
                  {"estimate", r.estimate},
                  {"variance", r.variance},
                  {"std_error", std::sqrt(r.variance)},
                  {"levels", levels}};
        emit_summary(s, ml_summary, out.is_stdout());
        return 0;
    }

    if (*sw) {
        SweepSpec spec = load_sweep_spec(sw_config);
        spec.threads = threads;
        if (!sw_out.empty()) spec.output = sw_out;
        const SweepResult r = run_sweep(spec, cached_reference);
        Output out(spec.output);
        r.table.write_csv(out.stream());
        json s = sweep_summary_json(r);
        if (!spec.output.empty()) s["output"] = spec.output;
        emit_summary(s, "", out.is_stdout());
        return 0;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "mvqmc: " << e.what() << '\n';
        return 2;
    }
}
