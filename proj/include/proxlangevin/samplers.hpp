#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "proxlangevin/errors.hpp"
#include "proxlangevin/model.hpp"
#include "proxlangevin/rng.hpp"

namespace proxlangevin {

enum class InnerSolver { barzilai_borwein, lbfgs };

struct SamplerConfig {
    double theta = 0.5;
    double delta = 0.0;
    std::int64_t n_iters = 0;
    double inner_tol = 1e-4;
    int inner_max_iters = 200;
    InnerSolver inner_solver = InnerSolver::barzilai_borwein;
    std::uint64_t seed = 0;
    std::int64_t thinning = 1;
    std::int64_t burn_in = -1;  // -1: 5% of n_iters
    bool reflected = false;

    bool store_samples = true;
    bool record_logpi = true;
    bool record_noise = false;  // keep xi_n and the full trajectory (LM check)

    std::int64_t resolved_burn_in() const {
        return burn_in >= 0 ? burn_in : n_iters / 20;
    }

    void validate() const {
        if (theta < 0.0 || theta > 1.0)
            throw InvalidParameterError("SamplerConfig: theta must be in [0,1]");
        if (!(delta > 0.0)) throw InvalidParameterError("SamplerConfig: delta must be > 0");
        if (n_iters < 0) throw InvalidParameterError("SamplerConfig: n_iters must be >= 0");
        if (!(inner_tol > 0.0))
            throw InvalidParameterError("SamplerConfig: inner_tol must be > 0");
        if (inner_max_iters <= 0)
            throw InvalidParameterError("SamplerConfig: inner_max_iters must be > 0");
        if (thinning <= 0) throw InvalidParameterError("SamplerConfig: thinning must be > 0");
    }
};

struct InnerSolveReport {
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = true;
    bool used_prox = false;
};

// One implicit step expressed as the minimisation problem
//   F(x; u, z) = theta^{-1} U(theta x + (1-theta) u)
//              + |x - u - sqrt(2 delta) z|^2 / (2 delta)
struct ImplicitStepProblem {
    const TargetModel* model = nullptr;
    Vector u;      // previous chain state
    Vector z;      // standard normal draw
    double theta = 0.5;
    double delta = 0.0;

    Vector noise_shift() const { return u + std::sqrt(2.0 * delta) * z; }

    double value(const Vector& x) const {
        const Vector mid = theta * x + (1.0 - theta) * u;
        return model->potential(mid) / theta +
               (x - u - std::sqrt(2.0 * delta) * z).squaredNorm() / (2.0 * delta);
    }

    Vector grad(const Vector& x) const {
        const Vector mid = theta * x + (1.0 - theta) * u;
        return model->gradient(mid) + (x - u - std::sqrt(2.0 * delta) * z) / delta;
    }

    // Upper bound on the Hessian of F when model->L is finite.
    double lipschitz() const {
        return (model->L == kInf ? 0.0 : theta * model->L) + 1.0 / delta;
    }
};

namespace detail {

inline std::pair<Vector, InnerSolveReport> solve_bb(const ImplicitStepProblem& prob,
                                                    const Vector& x0, double tol,
                                                    int max_iters) {
    Vector x = x0;
    Vector g = prob.grad(x);
    double gn = g.norm();
    InnerSolveReport rep;
    Vector best_x = x;
    double best_gn = gn;
    const double safe_step = 1.0 / prob.lipschitz();
    double alpha = safe_step;
    int it = 0;
    for (; it < max_iters && gn > tol; ++it) {
        Vector x_new = x - alpha * g;
        Vector g_new = prob.grad(x_new);
        const double gn_new = g_new.norm();
        if (!std::isfinite(gn_new)) {
            x = best_x;
            g = prob.grad(x);
            gn = best_gn;
            alpha = safe_step;
            continue;
        }
        const Vector s = x_new - x;
        const Vector y = g_new - g;
        const double sty = s.dot(y);
        alpha = sty > 0.0 ? s.squaredNorm() / sty : safe_step;
        alpha = std::min(alpha, prob.delta);  // F is (1/delta)-strongly convex
        if (!(alpha > 0.0) || !std::isfinite(alpha)) alpha = safe_step;
        x.swap(x_new);
        g.swap(g_new);
        gn = gn_new;
        if (gn < best_gn) {
            best_gn = gn;
            best_x = x;
        }
    }
    if (gn > best_gn) {
        x = best_x;
        gn = best_gn;
    }
    rep.iterations = it;
    rep.grad_norm = gn;
    rep.converged = gn <= tol;
    return {std::move(x), rep};
}

inline std::pair<Vector, InnerSolveReport> solve_lbfgs(const ImplicitStepProblem& prob,
                                                       const Vector& x0, double tol,
                                                       int max_iters) {
    constexpr int kMemory = 8;
    Vector x = x0;
    Vector g = prob.grad(x);
    double gn = g.norm();
    double fx = prob.value(x);
    std::vector<Vector> s_hist, y_hist;
    std::vector<double> rho_hist;
    InnerSolveReport rep;
    int it = 0;
    for (; it < max_iters && gn > tol; ++it) {
        // two-loop recursion
        Vector q = g;
        const int k = static_cast<int>(s_hist.size());
        std::vector<double> alpha_hist(k);
        for (int i = k - 1; i >= 0; --i) {
            alpha_hist[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha_hist[i] * y_hist[i];
        }
        double gamma = 1.0 / prob.lipschitz();
        if (k > 0) {
            const double yy = y_hist.back().squaredNorm();
            if (yy > 0.0) gamma = s_hist.back().dot(y_hist.back()) / yy;
        }
        q *= gamma;
        for (int i = 0; i < k; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha_hist[i] - beta) * s_hist[i];
        }
        // Armijo backtracking along -q
        double step = 1.0;
        const double slope = g.dot(q);
        Vector x_new;
        double f_new = fx;
        for (int ls = 0; ls < 30; ++ls) {
            x_new = x - step * q;
            f_new = prob.value(x_new);
            if (std::isfinite(f_new) && f_new <= fx - 1e-4 * step * slope) break;
            step *= 0.5;
        }
        Vector g_new = prob.grad(x_new);
        const Vector s = x_new - x;
        const Vector y = g_new - g;
        const double sty = s.dot(y);
        if (sty > 1e-14 * s.norm() * y.norm()) {
            if (static_cast<int>(s_hist.size()) == kMemory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sty);
        }
        x.swap(x_new);
        g.swap(g_new);
        fx = f_new;
        gn = g.norm();
    }
    rep.iterations = it;
    rep.grad_norm = gn;
    rep.converged = gn <= tol;
    return {std::move(x), rep};
}

}  // namespace detail

// Minimises F(.; u, z) to gradient norm <= tol, starting from x0. A miss of
// the tolerance is reported, not thrown; the best iterate is returned.
inline std::pair<Vector, InnerSolveReport> inner_solve(
    const ImplicitStepProblem& prob, const Vector& x0, double tol, int max_iters,
    InnerSolver kind = InnerSolver::barzilai_borwein) {
    if (!prob.model || !prob.model->has_gradient())
        throw UnsupportedModelError("inner_solve: model has no gradient");
    if (kind == InnerSolver::lbfgs && prob.model->has_potential())
        return detail::solve_lbfgs(prob, x0, tol, max_iters);
    return detail::solve_bb(prob, x0, tol, max_iters);
}

// Explicit Euler-Maruyama step x + delta grad log pi(x) + sqrt(2 delta) xi.
// Applied to a Moreau-Yosida smoothed target this is exactly MYULA.
inline Vector ula_step(const TargetModel& model, const Vector& x, double delta,
                       const Vector& xi) {
    if (!model.has_gradient()) throw UnsupportedModelError("ula_step: model has no gradient");
    Vector out = x - delta * model.gradient(x) + std::sqrt(2.0 * delta) * xi;
    if (!out.allFinite()) throw NumericalFailureError("ula_step: non-finite update", -1);
    return out;
}

inline Vector ula_step(const SmoothedTarget& target, const Vector& x, double delta,
                       const Vector& xi) {
    return ula_step(target.combined(), x, delta, xi);
}

// Relaxed proximal-point form of the implicit step:
//   X+ = (1 - 1/theta) x + (1/theta) prox_U^{delta theta}(x + theta sqrt(2 delta) xi).
inline std::pair<Vector, InnerSolveReport> theta_step_via_prox(const TargetModel& model,
                                                               const Vector& x,
                                                               const SamplerConfig& cfg,
                                                               const Vector& xi) {
    if (!model.has_prox()) throw UnsupportedModelError("theta_step_via_prox: no prox");
    const double theta = cfg.theta;
    const Vector arg = x + theta * std::sqrt(2.0 * cfg.delta) * xi;
    const Vector p = model.prox(arg, cfg.delta * theta);
    Vector out = (1.0 - 1.0 / theta) * x + p / theta;
    if (!out.allFinite())
        throw NumericalFailureError("theta_step_via_prox: non-finite update", -1);
    InnerSolveReport rep;
    rep.used_prox = true;
    return {std::move(out), rep};
}

// Direct minimisation of F(.; x, xi), warm-started at the noise-shifted point
// x + sqrt(2 delta) xi (the exact minimiser for U = 0).
inline std::pair<Vector, InnerSolveReport> theta_step_via_minimization(
    const TargetModel& model, const Vector& x, const SamplerConfig& cfg, const Vector& xi) {
    ImplicitStepProblem prob;
    prob.model = &model;
    prob.u = x;
    prob.z = xi;
    prob.theta = cfg.theta;
    prob.delta = cfg.delta;
    auto [out, rep] =
        inner_solve(prob, prob.noise_shift(), cfg.inner_tol, cfg.inner_max_iters,
                    cfg.inner_solver);
    if (!out.allFinite())
        throw NumericalFailureError("theta_step: non-finite update", -1);
    return {std::move(out), rep};
}

// One step of the theta-method chain. theta = 0 is the explicit (ULA) path;
// theta > 0 takes the closed-form prox route when the model has one and the
// inner minimisation route otherwise.
inline std::pair<Vector, InnerSolveReport> theta_step(const TargetModel& model,
                                                      const Vector& x,
                                                      const SamplerConfig& cfg,
                                                      const Vector& xi) {
    if (cfg.theta == 0.0) return {ula_step(model, x, cfg.delta, xi), InnerSolveReport{}};
    if (model.has_prox()) return theta_step_via_prox(model, x, cfg, xi);
    return theta_step_via_minimization(model, x, cfg, xi);
}

// Reflected step: the theta-method update followed by a componentwise
// absolute value, keeping the chain in the nonnegative orthant.
inline std::pair<Vector, InnerSolveReport> reflected_step(const TargetModel& model,
                                                          const Vector& x,
                                                          const SamplerConfig& cfg,
                                                          const Vector& xi) {
    auto [out, rep] = theta_step(model, x, cfg, xi);
    out = out.cwiseAbs();
    return {std::move(out), rep};
}

struct ChainCallbacks {
    // Invoked on every kept sample (after burn-in and thinning).
    std::function<void(std::int64_t iteration, const Vector& x)> on_sample;
};

struct ChainOutput {
    Matrix samples;                  // kept iterations x dim (if store_samples)
    Vector running_mean;             // mean of kept samples
    Vector running_var;              // population variance of kept samples
    std::vector<double> logpi_trace; // log pi (up to constant) per kept sample
    std::vector<InnerSolveReport> inner_stats;  // per implicit numeric step
    std::int64_t n_kept = 0;
    std::int64_t flagged_steps = 0;  // inner solves that missed the tolerance
    double max_inner_grad_norm = 0.0;

    // Filled when record_noise is set: X_0..X_N (rows) and xi_1..xi_N.
    Matrix trajectory;
    std::vector<Vector> noise;
};

// Runs burn_in + n_iters steps of the configured scheme, fully deterministic
// given the seed. Step failures are rethrown with their iteration index.
inline ChainOutput run_chain(const TargetModel& model, const SamplerConfig& cfg,
                             const Vector& x0, const ChainCallbacks& callbacks = {}) {
    cfg.validate();
    if (x0.size() == 0 || (model.dim > 0 && x0.size() != model.dim))
        throw InvalidParameterError("run_chain: x0 dimension mismatch");
    const Eigen::Index d = x0.size();
    const std::int64_t burn = cfg.resolved_burn_in();
    const std::int64_t total = burn + cfg.n_iters;
    const std::int64_t max_kept = cfg.n_iters / cfg.thinning + 1;

    ChainOutput out;
    if (cfg.store_samples) out.samples.resize(max_kept, d);
    if (cfg.record_noise) {
        out.trajectory.resize(total + 1, d);
        out.trajectory.row(0) = x0;
        out.noise.reserve(total);
    }

    Rng rng(cfg.seed);
    Vector x = x0;
    Vector mean = Vector::Zero(d);
    Vector m2 = Vector::Zero(d);
    std::int64_t kept = 0;
    const bool implicit_numeric = cfg.theta > 0.0 && !model.has_prox();
    if (implicit_numeric && cfg.n_iters > 0)
        out.inner_stats.reserve(static_cast<std::size_t>(std::min<std::int64_t>(total, 1 << 22)));

    Vector xi(d);
    for (std::int64_t iter = 1; iter <= total; ++iter) {
        rng.normal_fill(xi);
        if (cfg.record_noise) out.noise.push_back(xi);
        try {
            auto [next, rep] = cfg.reflected ? reflected_step(model, x, cfg, xi)
                                             : theta_step(model, x, cfg, xi);
            x = std::move(next);
            if (implicit_numeric) {
                out.inner_stats.push_back(rep);
                out.max_inner_grad_norm = std::max(out.max_inner_grad_norm, rep.grad_norm);
                if (!rep.converged) ++out.flagged_steps;
            }
        } catch (const NumericalFailureError& err) {
            throw NumericalFailureError(err.what(), iter);
        }
        if (cfg.record_noise) out.trajectory.row(iter) = x;
        if (iter > burn && (iter - burn) % cfg.thinning == 0) {
            ++kept;
            const Vector delta1 = x - mean;
            mean += delta1 / static_cast<double>(kept);
            m2.array() += delta1.array() * (x - mean).array();
            if (cfg.store_samples) out.samples.row(kept - 1) = x;
            if (cfg.record_logpi && model.has_potential())
                out.logpi_trace.push_back(-model.potential(x));
            if (callbacks.on_sample) callbacks.on_sample(iter, x);
        }
    }

    out.n_kept = kept;
    if (kept == 0) {
        // n_iters = 0: only the starting point's statistics
        out.running_mean = x0;
        out.running_var = Vector::Zero(d);
        if (cfg.record_logpi && model.has_potential())
            out.logpi_trace.push_back(-model.potential(x0));
        if (cfg.store_samples) out.samples.resize(0, d);
        return out;
    }
    out.running_mean = mean;
    out.running_var = m2 / static_cast<double>(kept);
    if (cfg.store_samples) out.samples.conservativeResize(kept, d);
    return out;
}

// prox_U^lambda(v) computed by minimising U(p) + |p - v|^2/(2 lambda)
// (the theta = 1, z = 0 instance of the implicit-step problem).
inline Vector numeric_prox(const TargetModel& model, const Vector& v, double lambda,
                           double tol, int max_iters = 2000) {
    ImplicitStepProblem prob;
    prob.model = &model;
    prob.u = v;
    prob.z = Vector::Zero(v.size());
    prob.theta = 1.0;
    prob.delta = lambda;
    return inner_solve(prob, v, tol, max_iters).first;
}

// Checks the Leimkuhler-Matthews identity satisfied by the shifted iterates
// Y_n = X_n + (1/2) sqrt(2 delta) xi_{n+1} of the theta = 1/2 chain:
//   Y_{n+1} = Y_n - delta grad U^{delta/2}(Y_n) + sqrt(2 delta)(xi_{n+1} + xi_{n+2})/2.
// Returns the max residual norm over the trajectory. The envelope gradient is
// evaluated through the model's prox, or a high-accuracy numeric prox.
inline double lm_consistency_check(const TargetModel& model, double delta,
                                   const Matrix& trajectory,
                                   const std::vector<Vector>& noise,
                                   double prox_tol = 1e-12) {
    const std::int64_t n_steps = trajectory.rows() - 1;
    if (n_steps < 2 || static_cast<std::int64_t>(noise.size()) < n_steps)
        throw InvalidParameterError("lm_consistency_check: need >= 2 steps with noise");
    const double root = std::sqrt(2.0 * delta);
    const double lambda = 0.5 * delta;
    auto prox_at = [&](const Vector& v) {
        return model.has_prox() ? model.prox(v, lambda)
                                : numeric_prox(model, v, lambda, prox_tol);
    };
    double max_residual = 0.0;
    for (std::int64_t n = 0; n + 1 < n_steps; ++n) {
        const Vector y_n = trajectory.row(n).transpose() + 0.5 * root * noise[n];
        const Vector y_next = trajectory.row(n + 1).transpose() + 0.5 * root * noise[n + 1];
        const Vector p = prox_at(y_n);
        // y - delta grad U^{delta/2}(y) = 2 p - y for lambda = delta/2
        const Vector predicted = 2.0 * p - y_n + 0.5 * root * (noise[n] + noise[n + 1]);
        max_residual = std::max(max_residual, (y_next - predicted).norm());
    }
    return max_residual;
}

}  // namespace proxlangevin
