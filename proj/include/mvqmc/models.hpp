#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridge.hpp"

namespace mvqmc {

// kappa(x, y) = sum_r left_r(x) * right_r(y); lets the empirical kernel
// average be formed in O(rank * P) instead of O(P^2).
struct SeparableKernel {
    std::size_t rank = 0;
    std::function<void(double x, double* left, double* right)> features;
    // left is P x rank (row-major), right_sum receives sum_p right(x_p)
    std::function<void(std::span<const double> x, std::span<double> left, std::span<double> right_sum)> batch;
};

using DriftBatch = std::function<void(std::span<const double> x, std::span<const double> m,
                                      std::span<const double> aux, std::span<double> out)>;

// Loop versions generated from the scalar callables, so both forms always agree.
template <std::size_t Rank, class F>
SeparableKernel make_separable(F f) {
    SeparableKernel k;
    k.rank = Rank;
    k.features = f;
    k.batch = [f](std::span<const double> x, std::span<double> left, std::span<double> right_sum) {
        double acc[Rank] = {}, r[Rank];
        for (std::size_t p = 0; p < x.size(); ++p) {
            f(x[p], left.data() + p * Rank, r);
            for (std::size_t i = 0; i < Rank; ++i) acc[i] += r[i];
        }
        for (std::size_t i = 0; i < Rank; ++i) right_sum[i] = acc[i];
    };
    return k;
}

template <class F>
DriftBatch make_drift_batch(F f) {
    return [f](std::span<const double> x, std::span<const double> m, std::span<const double> aux, std::span<double> out) {
        if (aux.empty())
            for (std::size_t p = 0; p < x.size(); ++p) out[p] = f(x[p], m[p], 0.0);
        else
            for (std::size_t p = 0; p < x.size(); ++p) out[p] = f(x[p], m[p], aux[p]);
    };
}

struct ModelSpec {
    std::string name;
    std::function<double(double x, double m, double aux)> drift;
    std::function<double(double x, double m2)> diffusion; // empty: no noise
    std::function<double(double x, double y)> kernel1;
    std::function<double(double x, double y)> kernel2;    // empty: diffusion ignores m2
    std::function<double(double u)> initial;
    std::function<double(double x)> observable;
    std::string observable_name;
    std::size_t aux_arity = 0;
    std::optional<SeparableKernel> kernel1_separable;
    DriftBatch drift_batch;                  // optional, must agree with drift
    std::optional<double> constant_diffusion; // set when diffusion(x, m2) is this constant
    bool additive_noise = true;

    bool has_noise() const noexcept { return static_cast<bool>(diffusion); }

    void validate() const {
        if (!drift || !kernel1 || !initial || !observable)
            throw std::invalid_argument("ModelSpec '" + name + "': drift, kernel1, initial and observable are required");
        if (aux_arity > 1) throw std::invalid_argument("ModelSpec '" + name + "': at most one auxiliary coordinate");
    }
};

struct OUParams {
    double kappa = 1.0;
    double sigma = 0.5;
    double xi_second_moment = 1.0; // initial law is N(0, xi_second_moment)
};

struct KuramotoParams {
    double sigma = 0.4;
    double xi_variance = 0.2; // initial law N(0, xi_variance); frequencies U(0,1)
};

inline std::function<double(double)> centered_gaussian_initial(double variance) {
    if (!(variance >= 0.0)) throw std::invalid_argument("initial law variance must be non-negative");
    const double s = std::sqrt(variance);
    return [s](double u) { return s * inv_norm_cdf(clamp_probability(u)); };
}

inline ModelSpec ou_model(const OUParams& p) {
    if (!(p.kappa > 0.0)) throw std::invalid_argument("ou_model: kappa must be positive");
    if (!(p.sigma >= 0.0)) throw std::invalid_argument("ou_model: sigma must be non-negative");
    ModelSpec m;
    m.name = "ou";
    const double kappa = p.kappa, sigma = p.sigma;
    m.kernel1 = [](double x, double y) { return y - x; };
    m.kernel1_separable = make_separable<2>([](double x, double* l, double* r) {
        l[0] = 1.0;
        r[0] = x;
        l[1] = -x;
        r[1] = 1.0;
    });
    auto drift = [kappa](double, double mean, double) { return kappa * mean; };
    m.drift = drift;
    m.drift_batch = make_drift_batch(drift);
    m.diffusion = [sigma](double, double) { return sigma; };
    m.constant_diffusion = sigma;
    m.initial = centered_gaussian_initial(p.xi_second_moment);
    m.observable = [](double x) { return x * x; };
    m.observable_name = "moment2";
    return m;
}

// Mean-field OU second moment, exact in continuous time.
inline double ou_exact_moment2(const OUParams& p, double t) {
    const double stationary = p.sigma * p.sigma / (2.0 * p.kappa);
    return stationary + (p.xi_second_moment - stationary) * std::exp(-2.0 * p.kappa * t);
}

// Second moment of the Euler-discretised mean-field OU limit with N steps on
// [0, T]: the mean stays 0 and C <- (1 - kappa dt)^2 C + sigma^2 dt.
inline double ou_euler_moment2(const OUParams& p, double horizon, std::size_t N) {
    if (N == 0) throw std::invalid_argument("ou_euler_moment2: N must be positive");
    const double dt = horizon / static_cast<double>(N);
    const double a = (1.0 - p.kappa * dt) * (1.0 - p.kappa * dt);
    double c = p.xi_second_moment;
    for (std::size_t n = 0; n < N; ++n) c = a * c + p.sigma * p.sigma * dt;
    return c;
}

// sin(x - y) = sin x cos y - cos x sin y
inline SeparableKernel sin_difference_kernel() {
    return make_separable<2>([](double x, double* l, double* r) {
        const double s = std::sin(x), c = std::cos(x);
        l[0] = s;
        r[0] = c;
        l[1] = -c;
        r[1] = s;
    });
}

inline ModelSpec kuramoto_model(const KuramotoParams& p) {
    if (!(p.sigma >= 0.0)) throw std::invalid_argument("kuramoto_model: sigma must be non-negative");
    ModelSpec m;
    m.name = "kuramoto";
    const double sigma = p.sigma;
    m.aux_arity = 1;
    m.kernel1 = [](double x, double y) { return std::sin(x - y); };
    m.kernel1_separable = sin_difference_kernel();
    auto drift = [](double, double mean, double nu) { return nu + mean; };
    m.drift = drift;
    m.drift_batch = make_drift_batch(drift);
    m.diffusion = [sigma](double, double) { return sigma; };
    m.constant_diffusion = sigma;
    m.initial = centered_gaussian_initial(p.xi_variance);
    m.observable = [](double x) { return std::exp(-0.5 * x * x); };
    m.observable_name = "gauss";
    return m;
}

// Initial law given as the push-forward of U(0,1) under f, with f(0) = f(1-).
struct PeriodizableInitial {
    std::string name;
    std::function<double(double)> f;

    double seam_gap(double eps = 1e-9) const { return std::fabs(f(0.0) - f(1.0 - eps)); }
};

inline PeriodizableInitial periodic_sin_initial() {
    return {"sin", [](double u) { return std::sin(2.0 * std::numbers::pi * u); }};
}

// C^1 but not C^2 on the circle: f'' jumps at u = 0 and u = 1/2.
inline PeriodizableInitial periodic_sin_c1_initial() {
    return {"sin-c1", [](double u) {
                const double s = std::sin(2.0 * std::numbers::pi * u);
                return s * std::fabs(s);
            }};
}

inline ModelSpec meanfield_ode_model(const PeriodizableInitial& f, std::function<double(double, double)> drift,
                                     std::function<double(double, double)> kernel,
                                     std::optional<SeparableKernel> separable = std::nullopt) {
    if (!f.f || !drift || !kernel) throw std::invalid_argument("meanfield_ode_model: missing function");
    if (f.seam_gap() > 1e-6) throw std::invalid_argument("meanfield_ode_model: initial map is not periodic");
    ModelSpec m;
    m.name = "mfode-" + f.name;
    m.kernel1 = std::move(kernel);
    m.kernel1_separable = std::move(separable);
    m.drift = [a = std::move(drift)](double x, double mean, double) { return a(x, mean); };
    m.initial = f.f;
    m.observable = [](double x) { return std::exp(-0.5 * x * x); };
    m.observable_name = "gauss";
    return m;
}

inline ModelSpec mfode_sin_model(const PeriodizableInitial& f = periodic_sin_initial()) {
    ModelSpec m = meanfield_ode_model(f, [](double, double mean) { return mean; },
                                      [](double x, double y) { return std::sin(x - y); }, sin_difference_kernel());
    m.drift_batch = make_drift_batch([](double, double mean, double) { return mean; });
    return m;
}

inline ModelSpec with_observable(ModelSpec m, const std::string& name) {
    if (name == "moment2") m.observable = [](double x) { return x * x; };
    else if (name == "moment1") m.observable = [](double x) { return x; };
    else if (name == "gauss") m.observable = [](double x) { return std::exp(-0.5 * x * x); };
    else if (name == "cos") m.observable = [](double x) { return std::cos(x); };
    else if (name == "constant") m.observable = [](double) { return 1.0; };
    else throw std::invalid_argument("unknown observable '" + name + "'");
    m.observable_name = name;
    return m;
}

struct ModelParams {
    std::optional<double> kappa, sigma, xi_second_moment, xi_variance;
};

inline ModelSpec model_by_name(const std::string& name, const ModelParams& p = {}) {
    if (name == "ou") {
        OUParams o;
        if (p.kappa) o.kappa = *p.kappa;
        if (p.sigma) o.sigma = *p.sigma;
        if (p.xi_second_moment) o.xi_second_moment = *p.xi_second_moment;
        return ou_model(o);
    }
    if (name == "kuramoto") {
        KuramotoParams k;
        if (p.sigma) k.sigma = *p.sigma;
        if (p.xi_variance) k.xi_variance = *p.xi_variance;
        return kuramoto_model(k);
    }
    if (name == "mfode-sin") return mfode_sin_model(periodic_sin_initial());
    if (name == "mfode-sin-c1") return mfode_sin_model(periodic_sin_c1_initial());
    throw std::invalid_argument("unknown model '" + name + "' (expected ou, kuramoto, mfode-sin, mfode-sin-c1)");
}

inline OUParams ou_params(const ModelParams& p) {
    OUParams o;
    if (p.kappa) o.kappa = *p.kappa;
    if (p.sigma) o.sigma = *p.sigma;
    if (p.xi_second_moment) o.xi_second_moment = *p.xi_second_moment;
    return o;
}

} // namespace mvqmc
