#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mvqmc/models.hpp"
#include "mvqmc/rng.hpp"

using namespace mvqmc;

TEST(OU, ExactMomentAtReferenceParameters) {
    // sigma^2 / (2 kappa) + (1 - sigma^2 / (2 kappa)) e^{-2}
    const double expect = 0.125 + 0.875 * std::exp(-2.0);
    EXPECT_NEAR(ou_exact_moment2(OUParams{}, 1.0), expect, 1e-15);
    EXPECT_NEAR(ou_exact_moment2(OUParams{}, 1.0), 0.2434183728, 1e-10);
    EXPECT_DOUBLE_EQ(ou_exact_moment2(OUParams{}, 0.0), 1.0);
}

TEST(OU, ExactMomentSolvesItsOde) {
    // d/dt C = -2 kappa C + sigma^2
    const OUParams p{0.7, 0.9, 2.0};
    for (double t : {0.1, 0.5, 2.0}) {
        const double h = 1e-5;
        const double dc = (ou_exact_moment2(p, t + h) - ou_exact_moment2(p, t - h)) / (2 * h);
        EXPECT_NEAR(dc, -2 * p.kappa * ou_exact_moment2(p, t) + p.sigma * p.sigma, 1e-8);
    }
}

TEST(OU, EulerMomentConvergesAtFirstOrder) {
    const OUParams p;
    const double exact = ou_exact_moment2(p, 1.0);
    const double e1 = ou_euler_moment2(p, 1.0, 128) - exact, e2 = ou_euler_moment2(p, 1.0, 256) - exact;
    EXPECT_NEAR(e1 / e2, 2.0, 0.02);
    // closed form of the linear recursion
    const double dt = 1.0 / 64, a = (1 - dt) * (1 - dt), b = 0.25 * dt;
    const double closed = std::pow(a, 64) * 1.0 + b * (1 - std::pow(a, 64)) / (1 - a);
    EXPECT_NEAR(ou_euler_moment2(p, 1.0, 64), closed, 1e-14);
    EXPECT_THROW(ou_euler_moment2(p, 1.0, 0), std::invalid_argument);
}

TEST(OU, SeparableFormMatchesKernel) {
    const ModelSpec m = ou_model(OUParams{});
    ASSERT_TRUE(m.kernel1_separable);
    const auto& sep = *m.kernel1_separable;
    for (double x : {-2.0, 0.3, 1.7})
        for (double y : {-1.0, 0.0, 2.5}) {
            double lx[2], rx[2], ly[2], ry[2];
            sep.features(x, lx, rx);
            sep.features(y, ly, ry);
            EXPECT_NEAR(lx[0] * ry[0] + lx[1] * ry[1], m.kernel1(x, y), 1e-14);
        }
}

TEST(OU, ParameterValidation) {
    EXPECT_THROW(ou_model(OUParams{0.0, 0.5, 1.0}), std::invalid_argument);
    EXPECT_THROW(ou_model(OUParams{1.0, -0.5, 1.0}), std::invalid_argument);
    EXPECT_THROW(ou_model(OUParams{1.0, 0.5, -1.0}), std::invalid_argument);
}

TEST(Kuramoto, KernelAndFeaturesAgree) {
    const ModelSpec m = kuramoto_model(KuramotoParams{});
    EXPECT_EQ(m.aux_arity, 1u);
    EXPECT_TRUE(m.has_noise());
    const auto& sep = *m.kernel1_separable;
    for (double x : {-3.0, 0.1, 2.0})
        for (double y : {-1.0, 0.0, 4.0}) {
            double lx[2], rx[2], ly[2], ry[2];
            sep.features(x, lx, rx);
            sep.features(y, ly, ry);
            EXPECT_NEAR(lx[0] * ry[0] + lx[1] * ry[1], std::sin(x - y), 1e-14);
        }
    EXPECT_DOUBLE_EQ(m.drift(0.0, 0.25, 0.5), 0.75);
}

TEST(Separable, BatchAgreesWithScalarFeatures) {
    const ModelSpec m = kuramoto_model(KuramotoParams{});
    const auto& sep = *m.kernel1_separable;
    std::vector<double> x{0.1, -0.4, 2.2, 3.3}, left(8), rsum(2);
    sep.batch(x, left, rsum);
    double acc[2] = {0, 0};
    for (std::size_t p = 0; p < x.size(); ++p) {
        double l[2], r[2];
        sep.features(x[p], l, r);
        EXPECT_EQ(left[2 * p], l[0]);
        EXPECT_EQ(left[2 * p + 1], l[1]);
        acc[0] += r[0];
        acc[1] += r[1];
    }
    EXPECT_DOUBLE_EQ(rsum[0], acc[0]);
    EXPECT_DOUBLE_EQ(rsum[1], acc[1]);
}

TEST(InitialLaw, GaussianTransformHasRequestedVariance) {
    const auto h = centered_gaussian_initial(0.2);
    const std::size_t n = 1 << 16;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = h((i + 0.5) / n);
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 1e-12);
    EXPECT_NEAR(s2 / n, 0.2, 1e-3);
    EXPECT_TRUE(std::isfinite(h(0.0)));
}

TEST(MeanFieldOde, InitialMapsArePeriodic) {
    for (const auto& f : {periodic_sin_initial(), periodic_sin_c1_initial()}) {
        EXPECT_LT(f.seam_gap(), 1e-6) << f.name;
        EXPECT_NEAR(f.f(0.25), 1.0, 1e-15);
        EXPECT_NEAR(f.f(0.75), -1.0, 1e-15);
    }
    const PeriodizableInitial bad{"ramp", [](double u) { return u; }};
    EXPECT_THROW(meanfield_ode_model(bad, [](double, double m) { return m; }, [](double, double) { return 0.0; }),
                 std::invalid_argument);
}

TEST(MeanFieldOde, C1VariantHasSecondDerivativeJump) {
    const auto f = periodic_sin_c1_initial().f;
    const double h = 1e-4;
    auto d2 = [&](double u) { return (f(u + h) - 2 * f(u) + f(u - h)) / (h * h); };
    const double two_pi_sq = 2.0 * std::pow(2.0 * std::numbers::pi, 2);
    EXPECT_NEAR(d2(0.5 + 2 * h), -two_pi_sq, 1.0);
    EXPECT_NEAR(d2(0.5 - 2 * h), two_pi_sq, 1.0);
}

TEST(MeanFieldOde, NoNoiseAndNoAux) {
    for (const char* name : {"mfode-sin", "mfode-sin-c1"}) {
        const ModelSpec m = model_by_name(name);
        EXPECT_FALSE(m.has_noise());
        EXPECT_EQ(m.aux_arity, 0u);
        EXPECT_EQ(m.name, name);
        EXPECT_DOUBLE_EQ(m.drift(1.0, 0.3, 0.0), 0.3);
    }
}

TEST(Registry, NamesParamsAndObservables) {
    ModelParams p;
    p.kappa = 2.0;
    p.sigma = 0.1;
    const ModelSpec ou = model_by_name("ou", p);
    EXPECT_DOUBLE_EQ(*ou.constant_diffusion, 0.1);
    EXPECT_DOUBLE_EQ(ou.drift(0.0, 1.0, 0.0), 2.0);
    EXPECT_EQ(ou.observable_name, "moment2");
    EXPECT_EQ(model_by_name("kuramoto").observable_name, "gauss");
    EXPECT_THROW(model_by_name("heston"), std::invalid_argument);
    const ModelSpec c = with_observable(ou, "constant");
    EXPECT_EQ(c.observable(3.0), 1.0);
    EXPECT_EQ(with_observable(ou, "cos").observable(0.0), 1.0);
    EXPECT_THROW(with_observable(ou, "moment7"), std::invalid_argument);
}

TEST(Registry, ValidateRequiresCallables) {
    ModelSpec m;
    m.name = "empty";
    EXPECT_THROW(m.validate(), std::invalid_argument);
}
