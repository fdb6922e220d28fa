#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "proxlangevin/errors.hpp"
#include "proxlangevin/model.hpp"
#include "proxlangevin/rng.hpp"
#include "proxlangevin/tv.hpp"

namespace proxlangevin {

inline double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Denoising with a two-component Gaussian mixture prior. The posterior is a
// product over pixels of 1D two-component Gaussian mixtures whose parameters
// follow from the conjugate update, so everything (density, gradient, exact
// samples, quantiles) is available per pixel.
// ---------------------------------------------------------------------------

struct GmmModel {
    double m0 = 0.0, m1 = 0.0;          // prior component means
    double s0sq = 0.0025, s1sq = 0.0809;  // prior component variances
    double noise_var = 0.0016;          // observation noise variance
    double w_tilde = 0.9;               // prior mixture weight
    Vector y;                           // observed pixels

    void validate() const {
        if (!(s0sq > 0.0) || !(s1sq > 0.0) || !(noise_var > 0.0))
            throw InvalidParameterError("GmmModel: variances must be positive");
        if (w_tilde < 0.0 || w_tilde > 1.0)
            throw InvalidParameterError("GmmModel: w_tilde must be in [0,1]");
        if (y.size() == 0) throw InvalidParameterError("GmmModel: y is empty");
    }
};

struct GmmPixelParams {
    double mu0 = 0.0, mu1 = 0.0;    // posterior component means
    double d0sq = 0.0, d1sq = 0.0;  // posterior component variances
    double w = 0.0;                 // posterior weight of component 0
};

// Per-pixel posterior mixture parameters:
//   d_k^2 = s^2 s_k^2/(s^2 + s_k^2),  mu_k = (y/s^2 + m_k/s_k^2) d_k^2,
//   w = C_0 w~ / (w~ C_0 + (1-w~) C_1),  C_k = N(y; m_k, s_k^2 + s^2).
inline GmmPixelParams gmm_posterior_params(const GmmModel& model, double y_i) {
    GmmPixelParams p;
    p.d0sq = model.noise_var * model.s0sq / (model.noise_var + model.s0sq);
    p.d1sq = model.noise_var * model.s1sq / (model.noise_var + model.s1sq);
    p.mu0 = (y_i / model.noise_var + model.m0 / model.s0sq) * p.d0sq;
    p.mu1 = (y_i / model.noise_var + model.m1 / model.s1sq) * p.d1sq;
    const double v0 = model.s0sq + model.noise_var;
    const double v1 = model.s1sq + model.noise_var;
    // evidence terms, computed in log space to survive extreme y
    const double lc0 = -0.5 * std::log(2.0 * M_PI * v0) -
                       (model.m0 - y_i) * (model.m0 - y_i) / (2.0 * v0);
    const double lc1 = -0.5 * std::log(2.0 * M_PI * v1) -
                       (model.m1 - y_i) * (model.m1 - y_i) / (2.0 * v1);
    if (model.w_tilde == 1.0) {
        p.w = 1.0;
    } else if (model.w_tilde == 0.0) {
        p.w = 0.0;
    } else {
        const double a = std::log(model.w_tilde) + lc0;
        const double b = std::log(1.0 - model.w_tilde) + lc1;
        p.w = 1.0 / (1.0 + std::exp(b - a));
    }
    return p;
}

// Pixel-separable posterior with cached per-pixel parameters.
class GmmPosterior {
public:
    explicit GmmPosterior(const GmmModel& model) : model_(model) {
        model.validate();
        pixels_.reserve(model.y.size());
        for (Eigen::Index i = 0; i < model.y.size(); ++i)
            pixels_.push_back(gmm_posterior_params(model, model.y[i]));
    }

    Eigen::Index dim() const { return static_cast<Eigen::Index>(pixels_.size()); }
    const GmmPixelParams& pixel(Eigen::Index i) const { return pixels_[i]; }

    // log pi(x) including normalising constants (they are known here)
    double logpdf(const Vector& x) const {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) sum += pixel_logpdf(pixels_[i], x[i]);
        return sum;
    }

    Vector grad_potential(const Vector& x) const {
        Vector g(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const auto& p = pixels_[i];
            double r0, r1;
            responsibilities(p, x[i], r0, r1);
            g[i] = r0 * (x[i] - p.mu0) / p.d0sq + r1 * (x[i] - p.mu1) / p.d1sq;
        }
        return g;
    }

    // d^2/dx^2 of the potential at one pixel
    double pixel_curvature(Eigen::Index i, double x) const {
        const auto& p = pixels_[i];
        double r0, r1;
        responsibilities(p, x, r0, r1);
        const double g0 = (x - p.mu0) / p.d0sq;
        const double g1 = (x - p.mu1) / p.d1sq;
        return r0 / p.d0sq + r1 / p.d1sq - r0 * r1 * (g1 - g0) * (g1 - g0);
    }

    // min/max curvature per pixel over the central [q, 1-q] quantile window,
    // the range the chain actually visits. The posterior is only log-concave
    // on such working ranges; far tails can have negative curvature.
    void convexity_range(double& m_out, double& L_out, int grid = 257,
                         double tail_q = 1e-5) const {
        m_out = kInf;
        L_out = 0.0;
        for (Eigen::Index i = 0; i < dim(); ++i) {
            const double lo = pixel_quantile(i, tail_q);
            const double hi = pixel_quantile(i, 1.0 - tail_q);
            for (int k = 0; k < grid; ++k) {
                const double x = lo + (hi - lo) * k / (grid - 1);
                const double c = pixel_curvature(i, x);
                m_out = std::min(m_out, c);
                L_out = std::max(L_out, c);
            }
        }
    }

    Vector exact_sample(Rng& rng) const {
        Vector x(dim());
        for (Eigen::Index i = 0; i < dim(); ++i) {
            const auto& p = pixels_[i];
            if (rng.uniform() < p.w)
                x[i] = p.mu0 + std::sqrt(p.d0sq) * rng.normal();
            else
                x[i] = p.mu1 + std::sqrt(p.d1sq) * rng.normal();
        }
        return x;
    }

    double pixel_cdf(Eigen::Index i, double x) const {
        const auto& p = pixels_[i];
        return p.w * normal_cdf((x - p.mu0) / std::sqrt(p.d0sq)) +
               (1.0 - p.w) * normal_cdf((x - p.mu1) / std::sqrt(p.d1sq));
    }

    // mixture quantile by bisection on the CDF (tolerance 1e-10 in x)
    double pixel_quantile(Eigen::Index i, double prob) const {
        if (!(prob > 0.0) || !(prob < 1.0))
            throw InvalidParameterError("pixel_quantile: prob must be in (0,1)");
        const auto& p = pixels_[i];
        const double sd = std::sqrt(std::max(p.d0sq, p.d1sq));
        double lo = std::min(p.mu0, p.mu1) - 12.0 * sd;
        double hi = std::max(p.mu0, p.mu1) + 12.0 * sd;
        while (pixel_cdf(i, lo) > prob) lo -= 8.0 * sd;
        while (pixel_cdf(i, hi) < prob) hi += 8.0 * sd;
        while (hi - lo > 1e-10) {
            const double mid = 0.5 * (lo + hi);
            (pixel_cdf(i, mid) < prob ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    // TargetModel over all pixels; m and L from the curvature grid
    TargetModel target() const {
        auto self = std::make_shared<GmmPosterior>(*this);
        TargetModel out;
        out.dim = dim();
        out.potential = [self](const Vector& x) { return -self->logpdf(x); };
        out.gradient = [self](const Vector& x) { return self->grad_potential(x); };
        self->convexity_range(out.m, out.L);
        out.m = std::max(out.m, 0.0);
        return out;
    }

private:
    static double pixel_logpdf(const GmmPixelParams& p, double x) {
        const double a0 = (p.w > 0.0 ? std::log(p.w) : -kInf) -
                          0.5 * std::log(2.0 * M_PI * p.d0sq) -
                          (x - p.mu0) * (x - p.mu0) / (2.0 * p.d0sq);
        const double a1 = (p.w < 1.0 ? std::log(1.0 - p.w) : -kInf) -
                          0.5 * std::log(2.0 * M_PI * p.d1sq) -
                          (x - p.mu1) * (x - p.mu1) / (2.0 * p.d1sq);
        const double hi = std::max(a0, a1);
        return hi + std::log(std::exp(a0 - hi) + std::exp(a1 - hi));
    }

    static void responsibilities(const GmmPixelParams& p, double x, double& r0, double& r1) {
        if (p.w >= 1.0) {
            r0 = 1.0;
            r1 = 0.0;
            return;
        }
        if (p.w <= 0.0) {
            r0 = 0.0;
            r1 = 1.0;
            return;
        }
        const double a0 = std::log(p.w) - 0.5 * std::log(p.d0sq) -
                          (x - p.mu0) * (x - p.mu0) / (2.0 * p.d0sq);
        const double a1 = std::log(1.0 - p.w) - 0.5 * std::log(p.d1sq) -
                          (x - p.mu1) * (x - p.mu1) / (2.0 * p.d1sq);
        const double t = std::exp(-std::abs(a0 - a1));
        if (a0 >= a1) {
            r0 = 1.0 / (1.0 + t);
            r1 = 1.0 - r0;
        } else {
            r1 = 1.0 / (1.0 + t);
            r0 = 1.0 - r1;
        }
    }

    GmmModel model_;
    std::vector<GmmPixelParams> pixels_;
};

// Deterministic image-like observation: a linear ramp of pixel intensities.
// The default range stays clear of the y-band where the Table-5 posterior
// loses log-concavity in its working range.
inline Vector gmm_ramp_observation(Eigen::Index n_pixels, double y_lo = 0.4,
                                   double y_hi = 0.95) {
    Vector y(n_pixels);
    for (Eigen::Index i = 0; i < n_pixels; ++i) {
        const double t =
            n_pixels == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n_pixels - 1);
        y[i] = y_lo + (y_hi - y_lo) * t;
    }
    return y;
}

// Synthetic observation: pixels drawn from the mixture prior plus noise.
inline Vector gmm_synthetic_observation(const GmmModel& model, Eigen::Index n_pixels,
                                        Rng& rng) {
    Vector y(n_pixels);
    for (Eigen::Index i = 0; i < n_pixels; ++i) {
        const bool first = rng.uniform() < model.w_tilde;
        const double mean = first ? model.m0 : model.m1;
        const double sd = std::sqrt(first ? model.s0sq : model.s1sq);
        y[i] = mean + sd * rng.normal() + std::sqrt(model.noise_var) * rng.normal();
    }
    return y;
}

// ---------------------------------------------------------------------------
// One-dimensional test distributions
// ---------------------------------------------------------------------------

enum class OneDimKind { laplace, uniform, quartic, cauchy };

inline const char* onedim_name(OneDimKind kind) {
    switch (kind) {
        case OneDimKind::laplace: return "laplace";
        case OneDimKind::uniform: return "uniform";
        case OneDimKind::quartic: return "quartic";
        case OneDimKind::cauchy: return "cauchy";
    }
    return "?";
}

inline OneDimKind onedim_kind_from_name(const std::string& name) {
    if (name == "laplace") return OneDimKind::laplace;
    if (name == "uniform") return OneDimKind::uniform;
    if (name == "quartic") return OneDimKind::quartic;
    if (name == "cauchy") return OneDimKind::cauchy;
    throw InvalidParameterError("unknown 1D distribution: " + name);
}

inline TargetModel onedim_target(OneDimKind kind) {
    TargetModel out;
    out.dim = 1;
    switch (kind) {
        case OneDimKind::laplace:
            out.potential = [](const Vector& x) { return std::abs(x[0]); };
            out.gradient = [](const Vector& x) {
                Vector g(1);
                g[0] = x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
                return g;
            };
            out.prox = [](const Vector& x, double lambda) { return prox_l1(x, lambda); };
            break;
        case OneDimKind::uniform:
            out.potential = [](const Vector& x) {
                return (x[0] >= 0.0 && x[0] <= 1.0) ? 0.0 : kInf;
            };
            out.prox = [](const Vector& x, double) { return prox_box(x, 0.0, 1.0); };
            break;
        case OneDimKind::quartic:
            out.potential = [](const Vector& x) { return std::pow(x[0], 4); };
            out.gradient = [](const Vector& x) {
                Vector g(1);
                g[0] = 4.0 * x[0] * x[0] * x[0];
                return g;
            };
            out.prox = [](const Vector& x, double lambda) {
                Vector p(1);
                p[0] = prox_quartic(x[0], lambda);
                return p;
            };
            break;
        case OneDimKind::cauchy:
            out.potential = [](const Vector& x) { return std::log1p(x[0] * x[0]); };
            out.gradient = [](const Vector& x) {
                Vector g(1);
                g[0] = 2.0 * x[0] / (1.0 + x[0] * x[0]);
                return g;
            };
            out.prox = [](const Vector& x, double lambda) {
                Vector p(1);
                p[0] = prox_cauchy(x[0], lambda);
                return p;
            };
            out.L = 2.0;
            break;
    }
    return out;
}

inline double onedim_exact_sd(OneDimKind kind) {
    switch (kind) {
        case OneDimKind::laplace: return std::sqrt(2.0);
        case OneDimKind::uniform: return 1.0 / std::sqrt(12.0);
        case OneDimKind::quartic:
            // Var = Gamma(3/4)/Gamma(1/4) for pi ~ exp(-x^4)
            return std::sqrt(std::tgamma(0.75) / std::tgamma(0.25));
        case OneDimKind::cauchy:
            throw UndefinedMomentError("cauchy: moments are undefined");
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Image deconvolution with a Moreau-Yosida smoothed TV prior
// ---------------------------------------------------------------------------

enum class NoiseKind { gaussian, poisson };

struct DeconvModel {
    Matrix kernel;            // blur PSF, normalised to sum 1, odd dimensions
    Eigen::Index rows = 0, cols = 0;
    NoiseKind noise = NoiseKind::gaussian;
    double noise_var = 1.0;   // gaussian noise variance
    double beta = 0.0;        // poisson background level
    double tv_weight = 1.0;    // theta_TV
    double my_lambda = 1.0;    // envelope parameter for the TV prior
    int tv_dual_iters = 200;   // dual iterations budget per TV prox
    double tv_gap_tol = 1e-5;  // relative duality-gap stop for the TV prox
    Matrix y;                  // observation

    void validate() const {
        if (rows <= 0 || cols <= 0) throw InvalidParameterError("DeconvModel: bad shape");
        if (kernel.size() == 0 || kernel.rows() % 2 == 0 || kernel.cols() % 2 == 0)
            throw InvalidParameterError("DeconvModel: kernel must have odd dimensions");
        if (std::abs(kernel.sum() - 1.0) > 1e-12)
            throw InvalidParameterError("DeconvModel: kernel must sum to 1");
        if (noise == NoiseKind::poisson && !(beta > 0.0))
            throw InvalidParameterError("DeconvModel: poisson noise requires beta > 0");
        if (noise == NoiseKind::gaussian && !(noise_var > 0.0))
            throw InvalidParameterError("DeconvModel: gaussian noise requires noise_var > 0");
    }
};

inline Matrix box_kernel(int size) {
    return Matrix::Constant(size, size, 1.0 / (size * size));
}

// Circular (periodic) convolution with the kernel centred on each pixel.
inline Matrix deconv_apply(const DeconvModel& model, const Matrix& x) {
    if (x.rows() != model.rows || x.cols() != model.cols)
        throw InvalidParameterError("deconv_apply: image shape mismatch");
    const Eigen::Index kr = model.kernel.rows(), kc = model.kernel.cols();
    const Eigen::Index cr = kr / 2, cc = kc / 2;
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double acc = 0.0;
            for (Eigen::Index kj = 0; kj < kc; ++kj) {
                Eigen::Index sj = j + kj - cc;
                sj = (sj % x.cols() + x.cols()) % x.cols();
                for (Eigen::Index ki = 0; ki < kr; ++ki) {
                    Eigen::Index si = i + ki - cr;
                    si = (si % x.rows() + x.rows()) % x.rows();
                    acc += model.kernel(ki, kj) * x(si, sj);
                }
            }
            out(i, j) = acc;
        }
    return out;
}

// Adjoint of deconv_apply: circular correlation (kernel flipped).
inline Matrix deconv_adjoint(const DeconvModel& model, const Matrix& r) {
    if (r.rows() != model.rows || r.cols() != model.cols)
        throw InvalidParameterError("deconv_adjoint: image shape mismatch");
    const Eigen::Index kr = model.kernel.rows(), kc = model.kernel.cols();
    const Eigen::Index cr = kr / 2, cc = kc / 2;
    Matrix out = Matrix::Zero(r.rows(), r.cols());
    for (Eigen::Index j = 0; j < r.cols(); ++j)
        for (Eigen::Index i = 0; i < r.rows(); ++i) {
            double acc = 0.0;
            for (Eigen::Index kj = 0; kj < kc; ++kj) {
                Eigen::Index sj = j - (kj - cc);
                sj = (sj % r.cols() + r.cols()) % r.cols();
                for (Eigen::Index ki = 0; ki < kr; ++ki) {
                    Eigen::Index si = i - (ki - cr);
                    si = (si % r.rows() + r.rows()) % r.rows();
                    acc += model.kernel(ki, kj) * r(si, sj);
                }
            }
            out(i, j) = acc;
        }
    return out;
}

// Poisson negative log-likelihood sum_i [(Ax)_i + beta - y_i log((Ax)_i + beta)].
inline double poisson_potential(const DeconvModel& model, const Matrix& x) {
    const Matrix ax = deconv_apply(model, x);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < ax.cols(); ++j)
        for (Eigen::Index i = 0; i < ax.rows(); ++i) {
            const double rate = ax(i, j) + model.beta;
            if (!(rate > 0.0))
                throw DomainViolationError("poisson_potential: (Ax)_i + beta <= 0");
            sum += rate - model.y(i, j) * std::log(rate);
        }
    return sum;
}

// gradient A^T (1 - y / (Ax + beta))
inline Matrix poisson_grad(const DeconvModel& model, const Matrix& x) {
    const Matrix ax = deconv_apply(model, x);
    Matrix ratio(ax.rows(), ax.cols());
    for (Eigen::Index j = 0; j < ax.cols(); ++j)
        for (Eigen::Index i = 0; i < ax.rows(); ++i) {
            const double rate = ax(i, j) + model.beta;
            if (!(rate > 0.0))
                throw DomainViolationError("poisson_grad: (Ax)_i + beta <= 0");
            ratio(i, j) = 1.0 - model.y(i, j) / rate;
        }
    return deconv_adjoint(model, ratio);
}

inline double gaussian_likelihood_potential(const DeconvModel& model, const Matrix& x) {
    return (deconv_apply(model, x) - model.y).squaredNorm() / (2.0 * model.noise_var);
}

inline Matrix gaussian_likelihood_grad(const DeconvModel& model, const Matrix& x) {
    return deconv_adjoint(model, (deconv_apply(model, x) - model.y)) / model.noise_var;
}

// Lipschitz constant of the likelihood gradient; |A|_2 <= 1 for a normalised
// nonnegative kernel, so the Poisson bound is max(y)/beta^2 on the orthant.
inline double deconv_likelihood_lipschitz(const DeconvModel& model) {
    if (model.noise == NoiseKind::poisson)
        return model.y.maxCoeff() / (model.beta * model.beta);
    return 1.0 / model.noise_var;
}

inline Matrix vector_to_image(const Vector& x, Eigen::Index rows, Eigen::Index cols) {
    if (x.size() != rows * cols)
        throw InvalidParameterError("vector_to_image: size mismatch");
    return Eigen::Map<const Matrix>(x.data(), rows, cols);
}

inline Vector image_to_vector(const Matrix& img) {
    return Eigen::Map<const Vector>(img.data(), img.size());
}

// Flattened target for the smoothed posterior
//   U(x) = f_y(x) + theta_TV TV^lambda(x),
// with grad TV^lambda(x) = (x - prox_TV^lambda(x)) / lambda.
inline TargetModel deconv_target(const DeconvModel& model) {
    model.validate();
    auto shared = std::make_shared<DeconvModel>(model);
    TargetModel out;
    out.dim = model.rows * model.cols;
    out.potential = [shared](const Vector& xv) {
        const Matrix x = vector_to_image(xv, shared->rows, shared->cols);
        const double fy = shared->noise == NoiseKind::poisson
                              ? poisson_potential(*shared, x)
                              : gaussian_likelihood_potential(*shared, x);
        const Matrix p = prox_tv(x, shared->my_lambda, shared->tv_dual_iters,
                                 shared->tv_gap_tol);
        const double envelope =
            tv_norm(p) + (x - p).squaredNorm() / (2.0 * shared->my_lambda);
        return fy + shared->tv_weight * envelope;
    };
    out.gradient = [shared](const Vector& xv) {
        const Matrix x = vector_to_image(xv, shared->rows, shared->cols);
        Matrix g = shared->noise == NoiseKind::poisson
                       ? poisson_grad(*shared, x)
                       : gaussian_likelihood_grad(*shared, x);
        const Matrix p = prox_tv(x, shared->my_lambda, shared->tv_dual_iters,
                                 shared->tv_gap_tol);
        g += shared->tv_weight / shared->my_lambda * (x - p);
        return image_to_vector(g);
    };
    out.m = 0.0;
    out.L = deconv_likelihood_lipschitz(model) + model.tv_weight / model.my_lambda;
    return out;
}

// Piecewise-constant 64x64-style test image in [0,1]: background, a bright
// rectangle, and a disc. TV-friendly by construction.
inline Matrix make_phantom(Eigen::Index rows, Eigen::Index cols) {
    Matrix img = Matrix::Constant(rows, cols, 0.2);
    const Eigen::Index r0 = rows / 8, r1 = rows / 2, c0 = cols / 8, c1 = cols / 2;
    for (Eigen::Index i = r0; i < r1; ++i)
        for (Eigen::Index j = c0; j < c1; ++j) img(i, j) = 0.9;
    const double ci = 0.65 * rows, cj = 0.65 * cols, rad = 0.18 * std::min(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if ((i - ci) * (i - ci) + (j - cj) * (j - cj) <= rad * rad) img(i, j) = 0.6;
    return img;
}

// Synthetic observation y from a ground-truth image under the model's noise.
inline Matrix deconv_observe(const DeconvModel& model, const Matrix& truth, Rng& rng) {
    const Matrix blurred = deconv_apply(model, truth);
    Matrix y(blurred.rows(), blurred.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j)
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            if (model.noise == NoiseKind::poisson)
                y(i, j) = static_cast<double>(rng.poisson(blurred(i, j) + model.beta));
            else
                y(i, j) = blurred(i, j) + std::sqrt(model.noise_var) * rng.normal();
        }
    return y;
}

}  // namespace proxlangevin
