#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "proxlangevin/errors.hpp"
#include "proxlangevin/model.hpp"

namespace proxlangevin {
namespace theory {

// Diagonal Gaussian target N(0, diag(sigmas^2)) started at the deterministic
// point x0; the setting where every convergence quantity is available in
// closed form.
struct GaussianSpec {
    Vector sigmas;
    Vector x0;

    double sigma_min() const { return sigmas.minCoeff(); }
    double sigma_max() const { return sigmas.maxCoeff(); }
    double kappa() const {
        const double r = sigma_max() / sigma_min();
        return r * r;
    }
    double m() const { return 1.0 / (sigma_max() * sigma_max()); }
    double L() const { return 1.0 / (sigma_min() * sigma_min()); }
    Eigen::Index dim() const { return sigmas.size(); }

    // W2(pi, delta_{x0}), the starting distance from a point mass.
    double w2_from_start() const {
        return std::sqrt(x0.squaredNorm() + sigmas.squaredNorm());
    }

    void validate() const {
        if (sigmas.size() == 0 || (sigmas.array() <= 0.0).any())
            throw InvalidParameterError("GaussianSpec: sigmas must be positive");
        if (x0.size() != sigmas.size())
            throw InvalidParameterError("GaussianSpec: x0/sigmas size mismatch");
    }
};

// Per-coordinate amplification factors of the theta-method on a quadratic
// potential: X' = R1(z) X + sqrt(2 delta) R2(z) xi with z = -delta/sigma^2.
inline double r1(double z, double theta) {
    const double denom = 1.0 - theta * z;
    if (denom == 0.0) throw InvalidParameterError("r1: 1 - theta z == 0");
    return (1.0 + (1.0 - theta) * z) / denom;
}

inline double r2(double z, double theta) {
    const double denom = 1.0 - theta * z;
    if (denom == 0.0) throw InvalidParameterError("r2: 1 - theta z == 0");
    return 1.0 / denom;
}

// Step size minimising the contraction constant C. Finite for theta in [0,1);
// for theta = 1, C decreases monotonically in delta, so +inf is returned.
inline double delta_star(double m, double L, double theta) {
    if (!(m > 0.0) || !(L >= m)) throw InvalidParameterError("delta_star: need 0 < m <= L");
    if (theta < 0.0 || theta > 1.0) throw InvalidParameterError("delta_star: theta in [0,1]");
    if (theta == 1.0) return kInf;
    if (theta == 0.0) return 2.0 / (L + m);
    if (theta == 0.5) return 2.0 / std::sqrt(L * m);
    const double a = (2.0 * theta - 1.0) * (L + m);
    const double b = (1.0 - 2.0 * theta) * (L + m);
    return (a + std::sqrt(b * b + 16.0 * (1.0 - theta) * theta * L * m)) /
           (4.0 * (1.0 - theta) * theta * L * m);
}

// Contraction constant C = max_{z in [m delta, L delta]} |R1(-z)|, evaluated
// through its piecewise closed form: the branch switch happens at delta_star.
inline double contraction_c(double m, double L, double delta, double theta) {
    if (!(m > 0.0) || !(L >= m)) throw InvalidParameterError("contraction_c: need 0 < m <= L");
    if (!(delta > 0.0)) throw InvalidParameterError("contraction_c: delta must be > 0");
    if (theta < 0.0 || theta > 1.0) throw InvalidParameterError("contraction_c: theta in [0,1]");
    if (delta <= delta_star(m, L, theta))
        return (1.0 - (1.0 - theta) * m * delta) / (1.0 + theta * m * delta);
    return ((1.0 - theta) * L * delta - 1.0) / (theta * L * delta + 1.0);
}

namespace detail {

// (1 - r1^{2n}) / (1 - r1^2) with the removable singularity at r1^2 = 1
// replaced by its limit n.
inline double geometric_sum(double r1sq, std::int64_t n, double& r1sq_pow_n) {
    r1sq_pow_n = std::pow(r1sq, static_cast<double>(n));
    if (std::abs(1.0 - r1sq) < 1e-14) return static_cast<double>(n);
    return (1.0 - r1sq_pow_n) / (1.0 - r1sq);
}

}  // namespace detail

// Exact W2 distance between the target and the law of the n-th iterate
// started at the deterministic x0:
//   W2^2 = sum_i [ R1^{2n} x0_i^2 + (sigma_i - sqrt(2 delta) R2 s_n)^2 ],
// s_n^2 the geometric sum above, z_i = -delta/sigma_i^2.
inline double w2_gaussian(const GaussianSpec& spec, double theta, double delta,
                          std::int64_t n) {
    spec.validate();
    if (!(delta > 0.0)) throw InvalidParameterError("w2_gaussian: delta must be > 0");
    if (n < 0) throw InvalidParameterError("w2_gaussian: n must be >= 0");
    double sq = 0.0;
    for (Eigen::Index i = 0; i < spec.dim(); ++i) {
        const double sigma = spec.sigmas[i];
        const double z = -delta / (sigma * sigma);
        const double r1v = r1(z, theta);
        const double r2v = r2(z, theta);
        double pow_n = 0.0;
        const double geo = detail::geometric_sum(r1v * r1v, n, pow_n);
        const double d_term = pow_n * spec.x0[i] * spec.x0[i];
        const double b_root = sigma - std::sqrt(2.0 * delta) * r2v * std::sqrt(geo);
        sq += d_term + b_root * b_root;
    }
    return std::sqrt(sq);
}

// n -> infinity limit of w2_gaussian: the asymptotic bias W2(pi, pi~) of the
// scheme's invariant law. Requires |R1| < 1 for every coordinate.
inline double w2_gaussian_stationary(const GaussianSpec& spec, double theta, double delta) {
    spec.validate();
    double sq = 0.0;
    for (Eigen::Index i = 0; i < spec.dim(); ++i) {
        const double sigma = spec.sigmas[i];
        const double z = -delta / (sigma * sigma);
        const double r1v = r1(z, theta);
        if (std::abs(r1v) >= 1.0) return kInf;
        const double r2v = r2(z, theta);
        const double sd_tilde = std::sqrt(2.0 * delta / (1.0 - r1v * r1v)) * r2v;
        sq += (sigma - sd_tilde) * (sigma - sd_tilde);
    }
    return std::sqrt(sq);
}

struct BiasTheta1 {
    double exact = 0.0;  // sqrt(sum_i phi(sigma_i, delta)^2)
    double bound = 0.0;  // min(sqrt(d delta)/2, sqrt(d) delta/(4 sigma_min))
};

// Asymptotic bias of the implicit Euler chain (theta = 1),
// phi(sigma, delta) = sigma (1 - 1/sqrt(1 + delta/(2 sigma^2))).
inline BiasTheta1 bias_theta1(const GaussianSpec& spec, double delta) {
    spec.validate();
    if (!(delta > 0.0)) throw InvalidParameterError("bias_theta1: delta must be > 0");
    BiasTheta1 out;
    double sq = 0.0;
    for (Eigen::Index i = 0; i < spec.dim(); ++i) {
        const double sigma = spec.sigmas[i];
        const double phi = sigma * (1.0 - 1.0 / std::sqrt(1.0 + delta / (2.0 * sigma * sigma)));
        sq += phi * phi;
    }
    out.exact = std::sqrt(sq);
    const double d = static_cast<double>(spec.dim());
    out.bound = std::min(0.5 * std::sqrt(d * delta),
                         std::sqrt(d) * delta / (4.0 * spec.sigma_min()));
    return out;
}

struct StepPlan {
    std::int64_t n = 0;
    double delta = 0.0;
};

// Predicted step count and step size to reach W2 accuracy eps on a Gaussian
// target, for the two analysed schemes (theta = 1/2 and theta = 1). Estimates,
// rounded up.
inline StepPlan n_steps_gaussian(const GaussianSpec& spec, double theta, double eps,
                                 double w2_0) {
    spec.validate();
    if (!(eps > 0.0) || !(w2_0 > 0.0))
        throw InvalidParameterError("n_steps_gaussian: eps and w2_0 must be > 0");
    StepPlan plan;
    const double d = static_cast<double>(spec.dim());
    const double kappa = spec.kappa();
    const double s_min = spec.sigma_min(), s_max = spec.sigma_max();
    if (theta == 0.5) {
        plan.delta = 2.0 * s_min * s_max;
        if (eps < w2_0)
            plan.n = static_cast<std::int64_t>(
                std::ceil(0.5 * std::sqrt(kappa) * (std::log(w2_0) - std::log(eps))));
    } else if (theta == 1.0) {
        plan.delta = std::max(eps * eps / d, 2.0 * eps * s_min / std::sqrt(d));
        const double prefactor =
            std::min(d * s_max * s_max / (eps * eps), std::sqrt(d * kappa) * s_max / (2.0 * eps));
        const double log_gain = std::log(w2_0) - std::log(0.5 * eps);
        if (eps < w2_0 && log_gain > 0.0)
            plan.n = static_cast<std::int64_t>(std::ceil(prefactor * log_gain));
    } else {
        throw InvalidParameterError("n_steps_gaussian: theta must be 1/2 or 1");
    }
    return plan;
}

// Right-hand side of the non-asymptotic W2 bound for m-strongly log-concave,
// L-smooth targets with inner tolerance eps_inner:
//   C^n W2_0 + (1-C^{n+1})/(1-C) *
//     (delta^2 L^{3/2} sqrt(d)/2 + (2/3) L delta^{3/2} sqrt(2d) + eps delta)
//     / (1 + theta delta m).
// Returns +inf when C >= 1 (no contraction, bound invalid).
inline double nonasymptotic_bound(double m, double L, double delta, double theta,
                                  std::int64_t d, std::int64_t n, double eps_inner,
                                  double w2_0) {
    const double c = contraction_c(m, L, delta, theta);
    if (c >= 1.0) return kInf;
    const double dd = static_cast<double>(d);
    const double bias_step =
        (0.5 * delta * delta * std::pow(L, 1.5) * std::sqrt(dd) +
         (2.0 / 3.0) * L * std::pow(delta, 1.5) * std::sqrt(2.0 * dd) + eps_inner * delta) /
        (1.0 + theta * delta * m);
    const double cn = std::pow(c, static_cast<double>(n));
    return cn * w2_0 + (1.0 - cn * c) / (1.0 - c) * bias_step;
}

// Step plan for theta = 1/2 on a general strongly log-concave target, using
// the constants from the proof:
//   delta = min{ 2/sqrt(Lm), eps/(2 kappa sqrt(Ld)), (9/128) eps^2/(d kappa) }
//   n ~ (1/2m) max{ sqrt(Lm)/2, 2 kappa sqrt(Ld)/eps, (128/9) d kappa/eps^2 }
//       * [log(w2_0) - log(eps/2)].
inline StepPlan n_steps_strongly_logconcave(double m, double L, std::int64_t d,
                                            double eps, double w2_0) {
    if (!(m > 0.0) || !(L >= m))
        throw InvalidParameterError("n_steps_strongly_logconcave: need 0 < m <= L");
    if (!(eps > 0.0) || !(w2_0 > 0.0))
        throw InvalidParameterError("n_steps_strongly_logconcave: eps, w2_0 must be > 0");
    const double kappa = L / m;
    const double dd = static_cast<double>(d);
    StepPlan plan;
    plan.delta = std::min({2.0 / std::sqrt(L * m), eps / (2.0 * kappa * std::sqrt(L * dd)),
                           (9.0 / 128.0) * eps * eps / (dd * kappa)});
    const double prefactor =
        0.5 / m *
        std::max({0.5 * std::sqrt(L * m), 2.0 * kappa * std::sqrt(L * dd) / eps,
                  (128.0 / 9.0) * dd * kappa / (eps * eps)});
    const double log_gain = std::log(w2_0) - std::log(0.5 * eps);
    if (log_gain > 0.0) plan.n = static_cast<std::int64_t>(std::ceil(prefactor * log_gain));
    return plan;
}

// Same estimate written with the constants of the statement (kappa powers
// instead of L); algebraically equivalent, kept for cross-checking.
inline std::int64_t n_steps_strongly_logconcave_statement(double m, double L,
                                                          std::int64_t d, double eps,
                                                          double w2_0) {
    const double kappa = L / m;
    const double dd = static_cast<double>(d);
    const double prefactor =
        std::max({0.25 * std::sqrt(kappa),
                  2.0 * kappa * std::sqrt(kappa * dd) / (2.0 * std::sqrt(m) * eps),
                  (64.0 / 9.0) * dd * kappa / (m * eps * eps)});
    const double log_gain = std::log(w2_0) - std::log(0.5 * eps);
    return log_gain > 0.0 ? static_cast<std::int64_t>(std::ceil(prefactor * log_gain)) : 0;
}

// Summary of the closed-form analysis for one (spec, theta, delta, n) tuple.
struct AnalysisReport {
    double contraction = 0.0;   // C
    double delta_star = 0.0;    // step minimising C (+inf for theta = 1)
    double w2_exact = 0.0;      // W2(pi, Q_n), exact formula
    double bias = 0.0;          // W2(pi, pi~), asymptotic
    std::int64_t n_predicted = 0;
    double bound_rhs = 0.0;     // non-asymptotic bound at (n, eps_inner)
};

inline AnalysisReport analyze_gaussian(const GaussianSpec& spec, double theta, double delta,
                                       std::int64_t n, double eps_inner, double eps_target) {
    spec.validate();
    AnalysisReport rep;
    rep.contraction = contraction_c(spec.m(), spec.L(), delta, theta);
    rep.delta_star = delta_star(spec.m(), spec.L(), theta);
    rep.w2_exact = w2_gaussian(spec, theta, delta, n);
    rep.bias = w2_gaussian_stationary(spec, theta, delta);
    if (theta == 0.5 || theta == 1.0)
        rep.n_predicted = n_steps_gaussian(spec, theta, eps_target, spec.w2_from_start()).n;
    rep.bound_rhs = nonasymptotic_bound(spec.m(), spec.L(), delta, theta, spec.dim(), n,
                                        eps_inner, spec.w2_from_start());
    return rep;
}

}  // namespace theory
}  // namespace proxlangevin
