#pragma once

#include <Eigen/Core>
#include <cmath>

#include "proxlangevin/errors.hpp"
#include "proxlangevin/model.hpp"

namespace proxlangevin {

// Isotropic total variation with forward differences and Neumann boundary:
// TV(u) = sum_ij sqrt(dx_ij^2 + dy_ij^2).
inline double tv_norm(const Matrix& u) {
    const Eigen::Index rows = u.rows(), cols = u.cols();
    double tv = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double dx = (j + 1 < cols) ? u(i, j + 1) - u(i, j) : 0.0;
            const double dy = (i + 1 < rows) ? u(i + 1, j) - u(i, j) : 0.0;
            tv += std::sqrt(dx * dx + dy * dy);
        }
    return tv;
}

namespace detail {

// div p with the convention <grad u, p> = -<u, div p>.
inline void tv_divergence(const Matrix& px, const Matrix& py, Matrix& out) {
    const Eigen::Index rows = px.rows(), cols = px.cols();
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            double v = 0.0;
            if (j + 1 < cols) v += px(i, j);
            if (j > 0) v -= px(i, j - 1);
            if (i + 1 < rows) v += py(i, j);
            if (i > 0) v -= py(i - 1, j);
            out(i, j) = v;
        }
}

}  // namespace detail

struct TvProxResult {
    Matrix image;
    int iterations = 0;
    double duality_gap = 0.0;  // relative, at exit
};

// Prox of lambda * TV via projected gradient ascent on the dual
// (Chambolle-style, step 1/8), stopping on a relative duality gap of
// rel_gap_tol or after max_iters dual iterations. Warm-start dual variables
// may be passed in/out through px, py (sized rows x cols, zero to cold start).
inline TvProxResult prox_tv_dual(const Matrix& x, double lambda, int max_iters,
                                 Matrix& px, Matrix& py, double rel_gap_tol = 1e-5) {
    if (lambda < 0.0) throw InvalidParameterError("prox_tv: lambda must be >= 0");
    TvProxResult res;
    if (lambda == 0.0) {
        res.image = x;
        return res;
    }
    const Eigen::Index rows = x.rows(), cols = x.cols();
    if (px.rows() != rows || px.cols() != cols) px = Matrix::Zero(rows, cols);
    if (py.rows() != rows || py.cols() != cols) py = Matrix::Zero(rows, cols);

    Matrix div(rows, cols), u(rows, cols);
    const double tau = 1.0 / 8.0;
    int it = 0;
    double gap = kInf;
    const int gap_check = 8;  // the gap costs a TV pass; check periodically
    for (; it < max_iters; ++it) {
        detail::tv_divergence(px, py, div);
        u = x + lambda * div;
        if (it % gap_check == 0) {
            // gap = TV(u) - <grad u, p>, zero at the saddle point
            double tv = 0.0, inner = 0.0;
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index i = 0; i < rows; ++i) {
                    const double gx = (j + 1 < cols) ? u(i, j + 1) - u(i, j) : 0.0;
                    const double gy = (i + 1 < rows) ? u(i + 1, j) - u(i, j) : 0.0;
                    tv += std::sqrt(gx * gx + gy * gy);
                    inner += gx * px(i, j) + gy * py(i, j);
                }
            const double primal = tv + (x - u).squaredNorm() / (2.0 * lambda);
            gap = (tv - inner) / std::max(1.0, std::abs(primal));
            if (gap <= rel_gap_tol) break;
        }
        // ascent step p <- proj(p + (tau/lambda) grad u), unit-ball projection
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) {
                const double gx = (j + 1 < cols) ? u(i, j + 1) - u(i, j) : 0.0;
                const double gy = (i + 1 < rows) ? u(i + 1, j) - u(i, j) : 0.0;
                double nx = px(i, j) + tau / lambda * gx;
                double ny = py(i, j) + tau / lambda * gy;
                const double norm = std::sqrt(nx * nx + ny * ny);
                if (norm > 1.0) {
                    nx /= norm;
                    ny /= norm;
                }
                px(i, j) = nx;
                py(i, j) = ny;
            }
    }
    detail::tv_divergence(px, py, div);
    res.image = x + lambda * div;
    res.iterations = it;
    res.duality_gap = gap;
    return res;
}

inline Matrix prox_tv(const Matrix& x, double lambda, int max_iters = 200,
                      double rel_gap_tol = 1e-5) {
    Matrix px, py;
    return prox_tv_dual(x, lambda, max_iters, px, py, rel_gap_tol).image;
}

// Flattened-vector interface (column-major); shape must match the data.
inline Vector prox_tv_flat(const Vector& x, Eigen::Index rows, Eigen::Index cols,
                           double lambda, int max_iters = 200, double rel_gap_tol = 1e-5) {
    if (rows <= 0 || cols <= 0 || rows * cols != x.size())
        throw InvalidParameterError("prox_tv: flattened input does not match a 2D shape");
    const Matrix img = Eigen::Map<const Matrix>(x.data(), rows, cols);
    Matrix out = prox_tv(img, lambda, max_iters, rel_gap_tol);
    return Eigen::Map<Vector>(out.data(), out.size());
}

}  // namespace proxlangevin
