#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "proxlangevin/errors.hpp"
#include "proxlangevin/model.hpp"

namespace proxlangevin {

// Acklam's rational approximation to the standard normal quantile, polished
// with one Halley step; accurate to ~1e-15 over (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0))
        throw InvalidParameterError("normal_quantile: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// Empirical 1D Wasserstein-2 distance to a target given by its quantile
// function, through the quantile coupling
//   W2^2 ~ (1/N) sum_j (x_(j) - Q((j - 1/2)/N))^2.
inline double w2_1d_empirical(std::vector<double> samples,
                              const std::function<double(double)>& target_quantile) {
    if (samples.empty()) throw InvalidParameterError("w2_1d_empirical: empty samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double sq = 0.0;
    for (std::size_t j = 0; j < samples.size(); ++j) {
        const double diff = samples[j] - target_quantile((j + 0.5) / n);
        sq += diff * diff;
    }
    return std::sqrt(sq / n);
}

// Biased-normalised autocorrelation estimates, rho(0) = 1.
inline std::vector<double> acf(const std::vector<double>& series, int max_lag) {
    const auto n = static_cast<std::int64_t>(series.size());
    if (n <= max_lag) throw InvalidParameterError("acf: series shorter than max_lag");
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double v : series) c0 += (v - mean) * (v - mean);
    if (c0 == 0.0) throw DegenerateVarianceError("acf: constant series");
    std::vector<double> rho(max_lag + 1);
    rho[0] = 1.0;
    for (int k = 1; k <= max_lag; ++k) {
        double ck = 0.0;
        for (std::int64_t t = 0; t + k < n; ++t)
            ck += (series[t] - mean) * (series[t + k] - mean);
        rho[k] = ck / c0;
    }
    return rho;
}

// Effective sample size N / (1 + 2 sum rho(k)), truncated by Geyer's initial
// positive sequence: pair sums Gamma_m = rho(2m) + rho(2m+1) are accumulated
// while positive, and tau = 2 sum Gamma_m - 1.
inline double ess(const std::vector<double>& series) {
    const auto n = static_cast<std::int64_t>(series.size());
    if (n < 4) throw InvalidParameterError("ess: series too short");
    const int max_lag = static_cast<int>(std::min<std::int64_t>(n - 1, 4096));
    const std::vector<double> rho = acf(series, max_lag);
    double pair_sum = 0.0;
    for (int m = 0; 2 * m + 1 < static_cast<int>(rho.size()); ++m) {
        const double pair = rho[2 * m] + rho[2 * m + 1];
        if (pair <= 0.0) break;
        pair_sum += pair;
    }
    const double tau = std::max(2.0 * pair_sum - 1.0, 1e-12);
    return static_cast<double>(n) / tau;
}

// Peak signal-to-noise ratio in dB; +inf for identical images.
inline double psnr(const Matrix& reference, const Matrix& estimate, double peak) {
    if (reference.rows() != estimate.rows() || reference.cols() != estimate.cols())
        throw InvalidParameterError("psnr: shape mismatch");
    if (!(peak > 0.0)) throw InvalidParameterError("psnr: peak must be > 0");
    const double mse = (reference - estimate).squaredNorm() /
                       static_cast<double>(reference.size());
    if (mse == 0.0) return kInf;
    return 10.0 * std::log10(peak * peak / mse);
}

struct SlowFastComponents {
    std::vector<double> slow;  // chain projected on the top eigenvector
    std::vector<double> fast;  // chain projected on the bottom eigenvector
    Vector slow_direction;
    Vector fast_direction;
    bool covariance_fallback = false;  // degenerate spectrum, coordinate fallback
};

namespace detail {

inline Vector cov_multiply(const Matrix& centered, const Vector& v) {
    // (1/(N-1)) X^T X v without forming the covariance
    return centered.transpose() * (centered * v) /
           static_cast<double>(centered.rows() - 1);
}

inline Vector power_iteration(const Matrix& centered, double shift, Vector v, int iters) {
    for (int it = 0; it < iters; ++it) {
        Vector w = shift != 0.0 ? (shift * v - cov_multiply(centered, v)).eval()
                                : cov_multiply(centered, v);
        const double norm = w.norm();
        if (norm == 0.0) return v;
        v = w / norm;
    }
    return v;
}

}  // namespace detail

// Projections of the chain onto the extremal eigenvectors of the empirical
// covariance (shifted power iteration; no d x d matrix is formed).
inline SlowFastComponents slow_fast_components(const Matrix& samples, int iters = 200) {
    if (samples.rows() < 2)
        throw InvalidParameterError("slow_fast_components: need at least 2 samples");
    const Eigen::Index d = samples.cols();
    const Vector mean = samples.colwise().mean();
    Matrix centered = samples.rowwise() - mean.transpose();

    SlowFastComponents out;
    Vector v0 = Vector::Ones(d).normalized();
    // deterministic second start, skewed to break symmetry
    for (Eigen::Index i = 0; i < d; ++i) v0[i] *= 1.0 + 0.01 * static_cast<double>(i % 7);
    v0.normalize();

    Vector slow = detail::power_iteration(centered, 0.0, v0, iters);
    const double lam_max = slow.dot(detail::cov_multiply(centered, slow));
    if (!(lam_max > 0.0)) {
        // rank-deficient covariance: fall back to min/max variance coordinates
        out.covariance_fallback = true;
        Vector var = centered.array().square().colwise().sum() /
                     static_cast<double>(centered.rows() - 1);
        Eigen::Index imax, imin;
        var.maxCoeff(&imax);
        var.minCoeff(&imin);
        out.slow_direction = Vector::Unit(d, imax);
        out.fast_direction = Vector::Unit(d, imin);
    } else {
        Vector fast = detail::power_iteration(centered, 1.25 * lam_max, v0, iters);
        // orthonormalise in case of a (near-)degenerate spectrum
        fast -= fast.dot(slow) * slow;
        if (fast.norm() < 1e-12) {
            fast = Vector::Unit(d, 0) - slow[0] * slow;
            if (fast.norm() < 1e-12) fast = Vector::Unit(d, d > 1 ? 1 : 0);
        }
        fast.normalize();
        out.slow_direction = slow;
        out.fast_direction = fast;
    }

    out.slow.resize(samples.rows());
    out.fast.resize(samples.rows());
    for (Eigen::Index t = 0; t < samples.rows(); ++t) {
        out.slow[t] = samples.row(t).dot(out.slow_direction);
        out.fast[t] = samples.row(t).dot(out.fast_direction);
    }
    return out;
}

struct DensityEstimate {
    std::vector<double> x;
    std::vector<double> density;
};

// Simple Gaussian-kernel density estimate on an equispaced grid; Silverman's
// rule for the bandwidth when none is given.
inline DensityEstimate gaussian_kde(const std::vector<double>& values, int grid_points = 200,
                                    double bandwidth = 0.0) {
    if (values.empty()) throw InvalidParameterError("gaussian_kde: empty input");
    const auto n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    if (bandwidth <= 0.0)
        bandwidth = sd > 0.0 ? 1.06 * sd * std::pow(n, -0.2) : 1.0;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it - 3.0 * bandwidth, hi = *hi_it + 3.0 * bandwidth;
    DensityEstimate out;
    out.x.resize(grid_points);
    out.density.assign(grid_points, 0.0);
    const double norm = 1.0 / (n * bandwidth * std::sqrt(2.0 * M_PI));
    for (int g = 0; g < grid_points; ++g) {
        const double xg = lo + (hi - lo) * g / (grid_points - 1);
        out.x[g] = xg;
        double acc = 0.0;
        for (double v : values) {
            const double t = (xg - v) / bandwidth;
            acc += std::exp(-0.5 * t * t);
        }
        out.density[g] = acc * norm;
    }
    return out;
}

struct Histogram {
    std::vector<double> edges;   // size bins + 1
    std::vector<double> counts;  // size bins
};

// Freedman-Diaconis binning by default (bins = 0); a bin count can be forced.
inline Histogram histogram(std::vector<double> values, int bins = 0) {
    if (values.empty()) throw InvalidParameterError("histogram: empty input");
    std::sort(values.begin(), values.end());
    const double lo = values.front(), hi = values.back();
    if (bins <= 0) {
        const auto n = values.size();
        const double q1 = values[n / 4], q3 = values[(3 * n) / 4];
        const double iqr = q3 - q1;
        const double width = 2.0 * iqr / std::cbrt(static_cast<double>(n));
        bins = (width > 0.0 && hi > lo)
                   ? std::max(1, static_cast<int>(std::ceil((hi - lo) / width)))
                   : 1;
        bins = std::min(bins, 512);
    }
    Histogram h;
    const double span = hi > lo ? hi - lo : 1.0;
    h.edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i) h.edges[i] = lo + span * i / bins;
    h.counts.assign(bins, 0.0);
    for (double v : values) {
        int idx = static_cast<int>((v - lo) / span * bins);
        idx = std::min(bins - 1, std::max(0, idx));
        h.counts[idx] += 1.0;
    }
    return h;
}

}  // namespace proxlangevin
