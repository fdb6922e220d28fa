#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include "proxlangevin/errors.hpp"

namespace proxlangevin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using PotentialFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;
using ProxFn = std::function<Vector(const Vector&, double)>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Target distribution pi(x) ~ exp(-U(x)), described by the potential U
// (up to an additive constant), its gradient and/or proximal operator,
// and the convexity constants m <= L when known.
struct TargetModel {
    Eigen::Index dim = 0;
    PotentialFn potential;
    GradientFn gradient;  // optional if prox given
    ProxFn prox;          // prox_U^lambda, optional
    double m = 0.0;       // strong convexity constant (0 = weakly convex)
    double L = kInf;      // Lipschitz constant of the gradient

    bool has_gradient() const { return static_cast<bool>(gradient); }
    bool has_prox() const { return static_cast<bool>(prox); }
    bool has_potential() const { return static_cast<bool>(potential); }
};

// Moreau-Yosida envelope g^lambda(x) = min_u { g(u) + |x-u|^2/(2 lambda) },
// evaluated through the prox of g.
inline double my_envelope(const TargetModel& g, double lambda, const Vector& x) {
    if (!g.has_prox()) throw UnsupportedModelError("my_envelope: model has no prox");
    if (!(lambda > 0.0)) throw InvalidParameterError("my_envelope: lambda must be > 0");
    const Vector p = g.prox(x, lambda);
    return g.potential(p) + (x - p).squaredNorm() / (2.0 * lambda);
}

// grad g^lambda(x) = (x - prox_g^lambda(x)) / lambda; (1/lambda)-Lipschitz.
inline Vector my_gradient(const TargetModel& g, double lambda, const Vector& x) {
    if (!g.has_prox()) throw UnsupportedModelError("my_gradient: model has no prox");
    if (!(lambda > 0.0)) throw InvalidParameterError("my_gradient: lambda must be > 0");
    return (x - g.prox(x, lambda)) / lambda;
}

// Non-smooth prior g smoothed through its Moreau-Yosida envelope, paired with
// a smooth data-fit term. The combined potential is f(x) + g^lambda(x).
struct SmoothedTarget {
    TargetModel base;    // the non-smooth part g (needs a prox)
    TargetModel smooth;  // the smooth part f (needs a gradient); may be empty
    double lambda = 0.0;

    // Composite model: gradient f' + grad g^lambda, Lipschitz L_f + 1/lambda.
    TargetModel combined() const {
        if (!base.has_prox())
            throw UnsupportedModelError("SmoothedTarget: base model has no prox");
        if (!(lambda > 0.0))
            throw InvalidParameterError("SmoothedTarget: lambda must be > 0");
        TargetModel out;
        out.dim = base.dim > 0 ? base.dim : smooth.dim;
        const TargetModel g = base;
        const TargetModel f = smooth;
        const double lam = lambda;
        if (g.has_potential()) {
            out.potential = [g, f, lam](const Vector& x) {
                double v = my_envelope(g, lam, x);
                if (f.has_potential()) v += f.potential(x);
                return v;
            };
        }
        out.gradient = [g, f, lam](const Vector& x) {
            Vector grad = my_gradient(g, lam, x);
            if (f.has_gradient()) grad += f.gradient(x);
            return grad;
        };
        // The envelope of an m_g-strongly convex g is m_g/(1+lambda m_g)-convex.
        out.m = f.m + (g.m > 0.0 ? g.m / (1.0 + lam * g.m) : 0.0);
        out.L = (f.L == kInf && !f.has_gradient()) ? 1.0 / lam
               : (f.L == kInf)                     ? kInf
                                                   : f.L + 1.0 / lam;
        return out;
    }
};

// Zero potential; handy as the smooth part of purely non-smooth targets.
inline TargetModel zero_model(Eigen::Index dim) {
    TargetModel out;
    out.dim = dim;
    out.potential = [](const Vector&) { return 0.0; };
    out.gradient = [](const Vector& x) { return Vector::Zero(x.size()).eval(); };
    out.prox = [](const Vector& x, double) { return x; };
    out.m = 0.0;
    out.L = 0.0;
    return out;
}

// Diagonal Gaussian N(0, diag(sigmas^2)); prox has the closed form
// p_i = x_i / (1 + lambda / sigma_i^2).
inline TargetModel gaussian_model(const Vector& sigmas) {
    if ((sigmas.array() <= 0.0).any())
        throw InvalidParameterError("gaussian_model: sigmas must be positive");
    TargetModel out;
    out.dim = sigmas.size();
    const Vector inv_var = sigmas.array().square().inverse();
    out.potential = [inv_var](const Vector& x) {
        return 0.5 * (x.array().square() * inv_var.array()).sum();
    };
    out.gradient = [inv_var](const Vector& x) {
        return (x.array() * inv_var.array()).matrix().eval();
    };
    out.prox = [inv_var](const Vector& x, double lambda) {
        return (x.array() / (1.0 + lambda * inv_var.array())).matrix().eval();
    };
    out.m = inv_var.minCoeff();
    out.L = inv_var.maxCoeff();
    return out;
}

// Soft threshold: prox of lambda * |.|_1.
inline Vector prox_l1(const Vector& x, double lambda) {
    if (!(lambda > 0.0)) throw InvalidParameterError("prox_l1: lambda must be > 0");
    return x.array().sign() * (x.array().abs() - lambda).max(0.0);
}

inline double prox_l1(double x, double lambda) {
    Vector v(1);
    v[0] = x;
    return prox_l1(v, lambda)[0];
}

// Projection onto [lo, hi]; the prox of the box indicator for any lambda.
inline Vector prox_box(const Vector& x, double lo, double hi) {
    if (!(lo < hi)) throw InvalidParameterError("prox_box: requires lo < hi");
    return x.array().max(lo).min(hi);
}

// Prox of g(u) = u^4: the unique real root of 4 lambda p^3 + p - x = 0.
// Newton from p0 = x/(1 + 4 lambda x^2) with a bisection-guarded bracket;
// the cubic is strictly monotone so the root is unique.
inline double prox_quartic(double x, double lambda) {
    if (!(lambda > 0.0)) throw InvalidParameterError("prox_quartic: lambda must be > 0");
    if (x == 0.0) return 0.0;
    auto residual = [&](double p) { return 4.0 * lambda * p * p * p + p - x; };
    double lo = std::min(0.0, x), hi = std::max(0.0, x);
    double p = x / (1.0 + 4.0 * lambda * x * x);
    const double tol = 1e-14 * (1.0 + std::abs(x));
    for (int it = 0; it < 100; ++it) {
        const double r = residual(p);
        if (std::abs(r) <= tol) break;
        (r > 0.0 ? hi : lo) = p;
        const double step = r / (12.0 * lambda * p * p + 1.0);
        double next = p - step;
        if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
        if (next == p) break;
        p = next;
    }
    return p;
}

namespace detail {

// Real roots of y^3 + a y^2 + b y + c, found by the trigonometric/Cardano
// formulas and polished with Newton steps on the monic cubic.
inline int cubic_real_roots(double a, double b, double c, double roots[3]) {
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double shift = -a / 3.0;
    const double disc = 0.25 * q * q + p * p * p / 27.0;
    int n = 0;
    if (disc > 0.0) {
        const double s = std::sqrt(disc);
        const double u = std::cbrt(-0.5 * q + s);
        const double v = std::cbrt(-0.5 * q - s);
        roots[n++] = u + v + shift;
    } else if (p == 0.0 && q == 0.0) {
        roots[n++] = shift;
    } else {
        const double r = std::sqrt(-p / 3.0);
        double arg = 3.0 * q / (2.0 * p * r);
        arg = std::min(1.0, std::max(-1.0, arg));
        const double phi = std::acos(arg) / 3.0;
        for (int k = 0; k < 3; ++k)
            roots[n++] = 2.0 * r * std::cos(phi - 2.0 * M_PI * k / 3.0) + shift;
    }
    for (int i = 0; i < n; ++i) {
        double y = roots[i];
        for (int it = 0; it < 4; ++it) {
            const double f = ((y + a) * y + b) * y + c;
            const double df = (3.0 * y + 2.0 * a) * y + b;
            if (df == 0.0) break;
            y -= f / df;
        }
        roots[i] = y;
    }
    return n;
}

}  // namespace detail

// Prox of the Cauchy potential g(y) = log(1 + y^2). Stationary points solve
// y^3 - x y^2 + (1 + 2 lambda) y - x = 0; with three real roots the global
// minimiser of F(y) = g(y) + (x-y)^2/(2 lambda) is selected, ties broken
// toward smaller |y|.
inline double prox_cauchy(double x, double lambda) {
    if (!(lambda > 0.0)) throw InvalidParameterError("prox_cauchy: lambda must be > 0");
    double roots[3];
    const int n = detail::cubic_real_roots(-x, 1.0 + 2.0 * lambda, -x, roots);
    auto objective = [&](double y) {
        return std::log1p(y * y) + (x - y) * (x - y) / (2.0 * lambda);
    };
    double best = roots[0];
    double best_val = objective(best);
    for (int i = 1; i < n; ++i) {
        const double val = objective(roots[i]);
        if (val < best_val - 1e-14 * std::abs(best_val) ||
            (std::abs(val - best_val) <= 1e-14 * std::abs(best_val) &&
             std::abs(roots[i]) < std::abs(best))) {
            best = roots[i];
            best_val = val;
        }
    }
    return best;
}

}  // namespace proxlangevin
