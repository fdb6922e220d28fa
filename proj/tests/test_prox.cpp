#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "proxlangevin/model.hpp"
#include "proxlangevin/rng.hpp"

namespace px = proxlangevin;
using px::Vector;

namespace {

// Brute-force 1D prox: coarse grid over [-range, range], then golden-section
// refinement of the bracketing interval. Independent of the closed forms.
double prox_oracle_1d(const std::function<double(double)>& g, double x, double lambda,
                      double range = 20.0, int grid = 40001) {
    auto objective = [&](double u) { return g(u) + (x - u) * (x - u) / (2.0 * lambda); };
    double best_u = -range, best_val = objective(-range);
    const double step = 2.0 * range / (grid - 1);
    for (int i = 1; i < grid; ++i) {
        const double u = -range + i * step;
        const double val = objective(u);
        if (val < best_val) {
            best_val = val;
            best_u = u;
        }
    }
    double lo = best_u - step, hi = best_u + step;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - invphi * (hi - lo), d = lo + invphi * (hi - lo);
    double fc = objective(c), fd = objective(d);
    while (hi - lo > 1e-13) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - invphi * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + invphi * (hi - lo);
            fd = objective(d);
        }
    }
    return 0.5 * (lo + hi);
}

Vector scalar(double v) {
    Vector x(1);
    x[0] = v;
    return x;
}

px::TargetModel abs_model() {
    px::TargetModel g;
    g.dim = 1;
    g.potential = [](const Vector& x) { return x.cwiseAbs().sum(); };
    g.prox = [](const Vector& x, double lambda) { return px::prox_l1(x, lambda); };
    return g;
}

px::TargetModel box01_model() {
    px::TargetModel g;
    g.dim = 1;
    g.potential = [](const Vector& x) {
        return (x[0] >= 0.0 && x[0] <= 1.0) ? 0.0 : px::kInf;
    };
    g.prox = [](const Vector& x, double) { return px::prox_box(x, 0.0, 1.0); };
    return g;
}

TEST(MoreauEnvelope, AbsAtMinimiser) {
    EXPECT_DOUBLE_EQ(px::my_envelope(abs_model(), 1.0, scalar(0.0)), 0.0);
}

TEST(MoreauEnvelope, AbsClosedForm) {
    // prox soft-thresholds 2 to 1.5: |1.5| + 0.5^2 / (2*0.5) = 1.75
    EXPECT_NEAR(px::my_envelope(abs_model(), 0.5, scalar(2.0)), 1.75, 1e-12);
}

TEST(MoreauEnvelope, BoxProjection) {
    EXPECT_NEAR(px::my_envelope(box01_model(), 1.0, scalar(2.0)), 0.5, 1e-12);
}

TEST(MoreauEnvelope, MissingProxThrows) {
    px::TargetModel g;
    g.dim = 1;
    g.potential = [](const Vector& x) { return x.squaredNorm(); };
    EXPECT_THROW(px::my_envelope(g, 1.0, scalar(0.0)), px::UnsupportedModelError);
    EXPECT_THROW(px::my_gradient(g, 1.0, scalar(0.0)), px::UnsupportedModelError);
}

TEST(MoreauEnvelope, GradientSoftThreshold) {
    EXPECT_NEAR(px::my_gradient(abs_model(), 1.0, scalar(0.5))[0], 0.5, 1e-12);
}

TEST(MoreauEnvelope, GradientVanishesAtMinimiser) {
    EXPECT_NEAR(px::my_gradient(abs_model(), 0.3, scalar(0.0))[0], 0.0, 1e-12);
    EXPECT_NEAR(px::my_gradient(box01_model(), 1.0, scalar(0.5))[0], 0.0, 1e-12);
}

TEST(MoreauEnvelope, GradientBoxProjection) {
    EXPECT_NEAR(px::my_gradient(box01_model(), 2.0, scalar(3.0))[0], 1.0, 1e-12);
}

TEST(MoreauEnvelope, MonotoneInLambda) {
    const auto g = abs_model();
    px::Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const double x = 6.0 * (rng.uniform() - 0.5);
        const double l1 = 0.05 + 2.0 * rng.uniform();
        const double l2 = l1 + 2.0 * rng.uniform();
        EXPECT_GE(px::my_envelope(g, l1, scalar(x)) + 1e-12,
                  px::my_envelope(g, l2, scalar(x)));
    }
}

TEST(MoreauEnvelope, GradientLipschitz) {
    const auto g = abs_model();
    px::Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const double lambda = 0.05 + rng.uniform();
        const double x = 4.0 * (rng.uniform() - 0.5);
        const double y = 4.0 * (rng.uniform() - 0.5);
        const double gx = px::my_gradient(g, lambda, scalar(x))[0];
        const double gy = px::my_gradient(g, lambda, scalar(y))[0];
        EXPECT_LE(std::abs(gx - gy), std::abs(x - y) / lambda + 1e-12);
    }
}

TEST(ProxL1, Examples) {
    EXPECT_DOUBLE_EQ(px::prox_l1(scalar(0.0), 0.5)[0], 0.0);
    EXPECT_DOUBLE_EQ(px::prox_l1(scalar(2.0), 0.5)[0], 1.5);
    EXPECT_DOUBLE_EQ(px::prox_l1(scalar(-0.3), 0.5)[0], 0.0);
}

TEST(ProxBox, Examples) {
    EXPECT_DOUBLE_EQ(px::prox_box(scalar(0.5), 0.0, 1.0)[0], 0.5);
    EXPECT_DOUBLE_EQ(px::prox_box(scalar(2.0), 0.0, 1.0)[0], 1.0);
    EXPECT_DOUBLE_EQ(px::prox_box(scalar(-1.0), 0.0, 1.0)[0], 0.0);
    EXPECT_THROW(px::prox_box(scalar(0.0), 1.0, 1.0), px::InvalidParameterError);
}

TEST(ProxQuartic, Examples) {
    EXPECT_DOUBLE_EQ(px::prox_quartic(0.0, 0.25), 0.0);
    // 4*0.25*p^3 + p - 2 = (p - 1)(p^2 + p + 2)
    EXPECT_NEAR(px::prox_quartic(2.0, 0.25), 1.0, 1e-13);
    const double p = px::prox_quartic(5.0, 0.05);
    EXPECT_NEAR(p, prox_oracle_1d([](double u) { return u * u * u * u; }, 5.0, 0.05), 1e-7);
    EXPECT_LE(std::abs(4.0 * 0.05 * p * p * p + p - 5.0), 1e-12);
}

TEST(ProxQuartic, ResidualOnRandomInputs) {
    px::Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = 20.0 * (rng.uniform() - 0.5);
        const double lambda = 0.01 + 2.0 * rng.uniform();
        const double p = px::prox_quartic(x, lambda);
        EXPECT_LE(std::abs(4.0 * lambda * p * p * p + p - x), 1e-12 * (1.0 + std::abs(x)));
    }
}

TEST(ProxCauchy, SmallLambdaLimit) {
    // for lambda -> 0 the real root approaches x
    EXPECT_NEAR(px::prox_cauchy(3.0, 1e-8), 3.0, 1e-6);
}

TEST(ProxCauchy, SymmetricAtZero) {
    EXPECT_DOUBLE_EQ(px::prox_cauchy(0.0, 0.05), 0.0);
    EXPECT_DOUBLE_EQ(px::prox_cauchy(0.0, 5.0), 0.0);
}

TEST(ProxCauchy, MatchesGridOracle) {
    auto g = [](double u) { return std::log1p(u * u); };
    EXPECT_NEAR(px::prox_cauchy(1.0, 0.05), prox_oracle_1d(g, 1.0, 0.05), 1e-6);
    px::Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double x = 12.0 * (rng.uniform() - 0.5);
        const double lambda = 0.01 + 3.0 * rng.uniform();
        EXPECT_NEAR(px::prox_cauchy(x, lambda), prox_oracle_1d(g, x, lambda), 1e-6)
            << "x=" << x << " lambda=" << lambda;
    }
}

TEST(ProxCauchy, CubicResidual) {
    px::Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const double x = 10.0 * (rng.uniform() - 0.5);
        const double lambda = 0.01 + 2.0 * rng.uniform();
        const double y = px::prox_cauchy(x, lambda);
        const double res = y * y * y - x * y * y + (1.0 + 2.0 * lambda) * y - x;
        EXPECT_LE(std::abs(res), 1e-12 * (1.0 + std::abs(x) * (1.0 + y * y)));
    }
}

TEST(ProxOracle, ClosedFormsMatchBruteForce) {
    px::Rng rng(13);
    auto abs_g = [](double u) { return std::abs(u); };
    auto box_g = [](double u) { return (u >= 0.0 && u <= 1.0) ? 0.0 : px::kInf; };
    auto quartic_g = [](double u) { return u * u * u * u; };
    auto gauss_g = [](double u) { return 0.5 * u * u; };
    for (int i = 0; i < 50; ++i) {
        const double x = 8.0 * (rng.uniform() - 0.5);
        const double lambda = 0.05 + 1.5 * rng.uniform();
        EXPECT_NEAR(px::prox_l1(scalar(x), lambda)[0], prox_oracle_1d(abs_g, x, lambda), 1e-6);
        EXPECT_NEAR(px::prox_box(scalar(x), 0.0, 1.0)[0], prox_oracle_1d(box_g, x, lambda),
                    1e-6);
        EXPECT_NEAR(px::prox_quartic(x, lambda), prox_oracle_1d(quartic_g, x, lambda), 1e-6);
        const auto gauss = px::gaussian_model(Vector::Ones(1));
        EXPECT_NEAR(gauss.prox(scalar(x), lambda)[0], prox_oracle_1d(gauss_g, x, lambda), 1e-6);
    }
}

TEST(ProxProperties, FirmNonexpansiveness) {
    px::Rng rng(17);
    const auto gauss = px::gaussian_model((Vector(2) << 1.0, 0.3).finished());
    for (int i = 0; i < 300; ++i) {
        const double lambda = 0.05 + 2.0 * rng.uniform();
        const Vector x = rng.normal_vector(2) * 3.0;
        const Vector y = rng.normal_vector(2) * 3.0;
        EXPECT_LE((px::prox_l1(x, lambda) - px::prox_l1(y, lambda)).norm(),
                  (x - y).norm() + 1e-12);
        EXPECT_LE((px::prox_box(x, 0.0, 1.0) - px::prox_box(y, 0.0, 1.0)).norm(),
                  (x - y).norm() + 1e-12);
        EXPECT_LE((gauss.prox(x, lambda) - gauss.prox(y, lambda)).norm(),
                  (x - y).norm() + 1e-12);
        EXPECT_LE(std::abs(px::prox_quartic(x[0], lambda) - px::prox_quartic(y[0], lambda)),
                  std::abs(x[0] - y[0]) + 1e-12);
    }
}

TEST(TargetModel, GradientMatchesFiniteDifferences) {
    const auto gauss = px::gaussian_model((Vector(3) << 1.0, 0.5, 2.0).finished());
    px::Rng rng(19);
    for (int i = 0; i < 20; ++i) {
        const Vector x = rng.normal_vector(3) * 2.0;
        const Vector grad = gauss.gradient(x);
        Vector fd(3);
        const double h = 1e-6;
        for (int j = 0; j < 3; ++j) {
            Vector xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            fd[j] = (gauss.potential(xp) - gauss.potential(xm)) / (2.0 * h);
        }
        EXPECT_LE((grad - fd).norm(), 1e-5 * (1.0 + grad.norm()));
    }
}

TEST(TargetModel, ProxOptimalityCondition) {
    // for smooth g: grad g(p) + (p - x)/lambda = 0 at the prox point
    const auto gauss = px::gaussian_model((Vector(2) << 0.7, 1.4).finished());
    px::Rng rng(23);
    for (int i = 0; i < 100; ++i) {
        const double lambda = 0.1 + rng.uniform();
        const Vector x = rng.normal_vector(2) * 2.0;
        const Vector p = gauss.prox(x, lambda);
        EXPECT_LE((gauss.gradient(p) + (p - x) / lambda).norm(), 1e-10);
    }
}

TEST(TargetModel, InvariantMLeqL) {
    const auto gauss = px::gaussian_model((Vector(2) << 0.5, 2.0).finished());
    EXPECT_LE(gauss.m, gauss.L);
}

TEST(SmoothedTarget, CompositeLipschitzAndGradient) {
    px::SmoothedTarget st{abs_model(), px::gaussian_model(Vector::Ones(1)), 0.5};
    const auto combined = st.combined();
    EXPECT_LE(combined.L, 1.0 + 1.0 / 0.5 + 1e-12);
    // gradient of envelope equals (x - prox)/lambda plus the smooth part
    const Vector x = scalar(2.0);
    const double expected = 1.0 * 2.0 + (2.0 - 1.5) / 0.5;  // x/sigma^2 + soft-threshold part
    EXPECT_NEAR(combined.gradient(x)[0], expected, 1e-12);
}

}  // namespace
