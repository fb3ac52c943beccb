#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "experiments.hpp"

namespace mvqmc {

using json = nlohmann::json;

inline Mode parse_mode(const std::string& s) {
    if (s == "qmc") return Mode::qmc_coupled;
    if (s == "iid") return Mode::iid_mc;
    throw std::invalid_argument("unknown mode '" + s + "' (expected qmc or iid)");
}

inline KernelEvaluation parse_kernel(const std::string& s) {
    if (s == "direct") return KernelEvaluation::direct;
    if (s == "factorized") return KernelEvaluation::factorized;
    if (s == "auto") return KernelEvaluation::automatic;
    throw std::invalid_argument("unknown kernel evaluation '" + s + "' (expected direct, factorized or auto)");
}

inline CutRule parse_cut_rule(const std::string& s) {
    if (s == "every-other") return CutRule::every_other;
    if (s == "bridge-prefix") return CutRule::bridge_prefix;
    throw std::invalid_argument("unknown cut rule '" + s + "' (expected every-other or bridge-prefix)");
}

inline Experiment parse_experiment(const std::string& s) {
    if (s == "weak-error") return Experiment::weak_error;
    if (s == "variance") return Experiment::variance;
    if (s == "richardson") return Experiment::richardson;
    if (s == "mlqmc-variance") return Experiment::mlqmc_variance;
    if (s == "mfode-rates") return Experiment::mfode_rates;
    throw std::invalid_argument("unknown experiment '" + s + "'");
}

inline ReferenceSource parse_reference(const std::string& s) {
    if (s == "exact-ou") return ReferenceSource::exact_ou;
    if (s == "exact-ou-discrete") return ReferenceSource::exact_ou_discrete;
    if (s == "cached-mc-reference") return ReferenceSource::cached_mc_reference;
    if (s == "none") return ReferenceSource::none;
    throw std::invalid_argument("unknown reference source '" + s + "'");
}

inline ModelParams parse_model_params(const json& j) {
    ModelParams p;
    if (j.is_null()) return p;
    if (!j.is_object()) throw std::invalid_argument("params must be an object");
    for (const auto& [k, v] : j.items()) {
        if (k == "kappa") p.kappa = v.get<double>();
        else if (k == "sigma") p.sigma = v.get<double>();
        else if (k == "xi_second_moment") p.xi_second_moment = v.get<double>();
        else if (k == "xi_variance") p.xi_variance = v.get<double>();
        else throw std::invalid_argument("unknown model parameter '" + k + "'");
    }
    return p;
}

inline json model_params_json(const ModelParams& p) {
    json j = json::object();
    if (p.kappa) j["kappa"] = *p.kappa;
    if (p.sigma) j["sigma"] = *p.sigma;
    if (p.xi_second_moment) j["xi_second_moment"] = *p.xi_second_moment;
    if (p.xi_variance) j["xi_variance"] = *p.xi_variance;
    return j;
}

// {experiment, model, params, observable, sweep: {variable, values},
//  fixed: {P, N, M, T, mode, kernel, n0, p0, share_shift, cut, base, P_ref, N_ref},
//  reference: {source, P, N, M, seed, cache}, seed, output}
inline SweepSpec parse_sweep_spec(const json& j) {
    try {
        SweepSpec s;
        s.experiment = parse_experiment(j.value("experiment", std::string("weak-error")));
        s.model = j.at("model").get<std::string>();
        s.params = parse_model_params(j.value("params", json()));
        s.observable = j.value("observable", std::string());
        const json& sw = j.at("sweep");
        s.variable = sw.value("variable", std::string("P"));
        s.values = sw.at("values").get<std::vector<std::size_t>>();
        if (j.contains("fixed")) {
            const json& f = j["fixed"];
            for (const auto& [k, v] : f.items()) {
                if (k == "P") s.particles = v.get<std::size_t>();
                else if (k == "N") s.steps = v.get<std::size_t>();
                else if (k == "M") s.samples = v.is_array() ? v.get<std::vector<std::size_t>>()
                                                            : std::vector<std::size_t>{v.get<std::size_t>()};
                else if (k == "T") s.horizon = v.get<double>();
                else if (k == "mode") s.mode = parse_mode(v.get<std::string>());
                else if (k == "kernel") s.kernel = parse_kernel(v.get<std::string>());
                else if (k == "n0") s.n0 = v.get<unsigned>();
                else if (k == "p0") s.p0 = v.get<unsigned>();
                else if (k == "share_shift") s.share_shift = v.get<bool>();
                else if (k == "base") s.korobov_base = v.get<std::uint64_t>();
                else if (k == "cut") s.cut_rule = parse_cut_rule(v.get<std::string>());
                else if (k == "P_ref") s.reference_particles = v.get<std::size_t>();
                else if (k == "N_ref") s.reference_steps = v.get<std::size_t>();
                else throw std::invalid_argument("unknown fixed setting '" + k + "'");
            }
        }
        if (j.contains("reference")) {
            const json& r = j["reference"];
            if (r.is_string()) {
                s.reference = parse_reference(r.get<std::string>());
            } else {
                s.reference = parse_reference(r.at("source").get<std::string>());
                s.mc_reference.particles = r.value("P", s.mc_reference.particles);
                s.mc_reference.steps = r.value("N", s.mc_reference.steps);
                s.mc_reference.samples = r.value("M", s.mc_reference.samples);
                s.mc_reference.seed = r.value("seed", s.mc_reference.seed);
                s.mc_reference.cache_path = r.value("cache", std::string());
            }
        }
        s.seed = j.value("seed", s.seed);
        s.output = j.value("output", std::string());
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("sweep config: ") + e.what());
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw std::invalid_argument("'" + path + "': " + e.what());
    }
}

inline SweepSpec load_sweep_spec(const std::string& path) { return parse_sweep_spec(read_json_file(path)); }

// Cache key: everything the reference value depends on.
inline std::string reference_cache_key(const SweepSpec& s) {
    const ModelSpec m = s.build_model();
    json k = {{"model", s.model},
              {"params", model_params_json(s.params)},
              {"observable", m.observable_name},
              {"T", s.horizon},
              {"P", s.mc_reference.particles},
              {"N", s.mc_reference.steps},
              {"M", s.mc_reference.samples},
              {"seed", s.mc_reference.seed}};
    return k.dump();
}

// Reads the reference from the JSON cache or computes and stores it.
inline Reference cached_reference(const SweepSpec& s) {
    const std::string path = s.mc_reference.cache_path;
    const std::string key = reference_cache_key(s);
    json cache = json::object();
    if (!path.empty() && std::filesystem::exists(path)) {
        cache = read_json_file(path);
        if (cache.contains(key)) {
            const json& e = cache[key];
            return {e.at("mean").get<double>(), e.at("std_error").get<double>(), "cached-mc-reference"};
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Reference r = mc_reference(s.build_model(), s.mc_reference, s.horizon, s.threads, s.kernel);
    if (!path.empty()) {
        cache[key] = {{"mean", r.value},
                      {"std_error", r.std_error},
                      {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
        const auto parent = std::filesystem::path(path).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent);
        const std::string tmp = path + ".tmp";
        {
            std::ofstream f(tmp);
            if (!f) throw std::runtime_error("cannot write reference cache '" + tmp + "'");
            f << cache.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path);
    }
    return r;
}

inline json rate_fit_json(const RateFit& f) {
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"residual", f.residual}, {"points", f.points}};
}

inline json sweep_summary_json(const SweepResult& r) {
    json fits = json::object();
    for (const auto& [k, f] : r.fits) fits[k] = rate_fit_json(f);
    return {{"rows", r.table.rows.size()}, {"fits", fits}};
}

} // namespace mvqmc
