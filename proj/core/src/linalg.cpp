// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#include "racecar/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "racecar/errors.hpp"
#include "racecar/rng.hpp"

namespace racecar {

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 30;

// One-sided Jacobi on a tall-or-square matrix g (rows >= cols), rotating
// column pairs until they are mutually orthogonal. v accumulates the
// rotations. Returns the final off-diagonal residual.
double jacobi_orthogonalize(Matrix& g, Matrix& v) {
    const std::size_t n = g.cols();
    const std::size_t m = g.rows();
    double off = 0.0;
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double gp = g(i, p), gq = g(i, q);
                    alpha += gp * gp;
                    beta += gq * gq;
                    gamma += gp * gq;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                const double rel = std::abs(gamma) / std::sqrt(alpha * beta);
                off = std::max(off, rel);
                if (rel <= kJacobiTol) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double gp = g(i, p), gq = g(i, q);
                    g(i, p) = c * gp - s * gq;
                    g(i, q) = s * gp + c * gq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (off <= kJacobiTol) return off;
    }
    // Final residual check; the last sweep may have fixed the remaining pairs.
    off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            double alpha = 0.0, beta = 0.0, gamma = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                alpha += g(i, p) * g(i, p);
                beta += g(i, q) * g(i, q);
                gamma += g(i, p) * g(i, q);
            }
            if (alpha == 0.0 || beta == 0.0) continue;
            off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        }
    }
    if (off > kJacobiTol) {
        throw NumericError("svd: Jacobi sweeps did not converge", off);
    }
    return off;
}

// SVD of a matrix with rows >= cols.
SvdResult svd_tall(const Matrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Matrix g = a;
    Matrix v = Matrix::identity(n);
    jacobi_orthogonalize(g, v);

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += g(i, j) * g(i, j);
        sigma[j] = std::sqrt(s);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    const double sigma_max = sigma.empty() ? 0.0 : sigma[order[0]];
    const double rank_tol = sigma_max * 1e-14 * static_cast<double>(std::max(m, n));

    Matrix v_sorted(n, n);
    std::vector<double> sigma_sorted(n);
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
        sigma_sorted[j] = sigma[order[j]];
        for (std::size_t i = 0; i < n; ++i) v_sorted(i, j) = v(i, order[j]);
        if (sigma_sorted[j] > rank_tol && sigma_sorted[j] > 0.0) ++rank;
    }

    Matrix u_cols(m, rank);
    for (std::size_t j = 0; j < rank; ++j) {
        const double inv = 1.0 / sigma_sorted[j];
        for (std::size_t i = 0; i < m; ++i) u_cols(i, j) = g(i, order[j]) * inv;
    }

    SvdResult out;
    out.u = complete_orthonormal_basis(u_cols, m);
    out.sigma = std::move(sigma_sorted);
    out.v = std::move(v_sorted);
    return out;
}

}  // namespace

Matrix SvdResult::reconstruct() const {
    const std::size_t m = u.rows(), n = v.rows();
    Matrix us(m, n);
    const std::size_t k = sigma.size();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) us(i, j) = u(i, j) * sigma[j];
    return matmul_nt(us, v);
}

SvdResult svd(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw ContractError("svd: empty matrix");
    ensure_finite(m, "svd input");
    SvdResult r;
    if (m.rows() >= m.cols()) {
        r = svd_tall(m);
    } else {
        SvdResult t = svd_tall(m.transposed());
        r.u = std::move(t.v);
        r.v = std::move(t.u);
        r.sigma = std::move(t.sigma);
    }
    // Sign convention on right singular vectors; u follows so that
    // u * diag(sigma) * v^T is unchanged.
    const std::size_t nv = r.v.rows();
    for (std::size_t j = 0; j < nv; ++j) {
        double lead = 0.0;
        for (std::size_t i = 0; i < nv; ++i) {
            if (std::abs(r.v(i, j)) > 1e-12) {
                lead = r.v(i, j);
                break;
            }
        }
        if (lead < 0.0) {
            for (std::size_t i = 0; i < nv; ++i) r.v(i, j) = -r.v(i, j);
            if (j < r.u.cols()) {
                for (std::size_t i = 0; i < r.u.rows(); ++i) r.u(i, j) = -r.u(i, j);
            }
        }
    }
    return r;
}

double spectral_norm(const Matrix& m, int max_iters, double tol) {
    ensure_finite(m, "spectral_norm input");
    const std::size_t n = m.cols();

    auto apply_gram = [&](const std::vector<double>& x) {  // M^T M x
        return matvec_t(m, matvec(m, x));
    };

    // Two-column subspace iteration on M^T M from fixed seed vectors, with a
    // 2x2 Rayleigh-Ritz step for the top eigenvalue. The block makes the
    // convergence rate depend on sigma_3/sigma_1, so nearly tied leading
    // singular values do not stall the estimate.
    Rng rng(0x5eedu);
    std::vector<std::vector<double>> basis(std::min<std::size_t>(2, n),
                                           std::vector<double>(n));
    for (auto& v : basis)
        for (double& x : v) x = rng.uniform(-1.0, 1.0);
    basis = gram_schmidt(basis);
    if (basis.empty()) return 0.0;

    double sigma = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        std::vector<std::vector<double>> bv(basis.size());
        for (std::size_t j = 0; j < basis.size(); ++j) bv[j] = apply_gram(basis[j]);

        // Rayleigh-Ritz on span(basis): S_ij = v_i^T B v_j.
        double lambda = 0.0;
        if (basis.size() == 1) {
            lambda = dot(basis[0], bv[0]);
        } else {
            const double s00 = dot(basis[0], bv[0]);
            const double s01 = dot(basis[0], bv[1]);
            const double s11 = dot(basis[1], bv[1]);
            const double mean = 0.5 * (s00 + s11);
            const double disc = std::sqrt(0.25 * (s00 - s11) * (s00 - s11) + s01 * s01);
            lambda = mean + disc;
        }
        if (lambda <= 0.0) return 0.0;
        const double s = std::sqrt(lambda);

        basis = gram_schmidt(bv);
        if (basis.empty()) return 0.0;

        if (it > 0 && std::abs(s - sigma) <= 1e-3 * tol * s) {
            sigma = s;
            break;
        }
        sigma = s;
    }
    return sigma;
}

std::vector<std::vector<double>> gram_schmidt(const std::vector<std::vector<double>>& vectors) {
    std::vector<std::vector<double>> out;
    if (vectors.empty()) return out;
    const std::size_t dim = vectors.front().size();
    for (const auto& v : vectors) {
        if (v.size() != dim) throw ShapeError("gram_schmidt: mixed vector dimensions");
        std::vector<double> u = v;
        // Two projection passes keep pairwise dots below 1e-10 even for
        // nearly dependent inputs.
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : out) {
                const double c = dot(q, u);
                for (std::size_t i = 0; i < dim; ++i) u[i] -= c * q[i];
            }
        }
        const double n = norm2(u);
        if (n < 1e-10) continue;  // linearly dependent on the span so far
        for (double& x : u) x /= n;
        out.push_back(std::move(u));
    }
    return out;
}

Matrix complete_orthonormal_basis(const Matrix& columns, std::size_t full_dim) {
    const std::size_t m = full_dim;
    const std::size_t r = columns.cols();
    if (r > m || (r > 0 && columns.rows() != m)) {
        throw ShapeError("complete_orthonormal_basis: bad input shape");
    }
    if (r == 0) return Matrix::identity(m);

    // Householder QR of the given columns; R is diag(+-1) because the
    // columns are orthonormal, so Q's leading columns reproduce them.
    Matrix a = columns;
    std::vector<std::vector<double>> reflectors;
    std::vector<double> diag_sign(r, 1.0);
    for (std::size_t k = 0; k < r; ++k) {
        std::vector<double> h(m, 0.0);
        double norm_x = 0.0;
        for (std::size_t i = k; i < m; ++i) norm_x += a(i, k) * a(i, k);
        norm_x = std::sqrt(norm_x);
        const double akk = a(k, k);
        const double alpha = (akk >= 0.0 ? -norm_x : norm_x);
        double hnorm2 = 0.0;
        if (norm_x > 0.0) {
            for (std::size_t i = k; i < m; ++i) h[i] = a(i, k);
            h[k] -= alpha;
            for (std::size_t i = k; i < m; ++i) hnorm2 += h[i] * h[i];
        }
        if (hnorm2 > 0.0) {
            const double inv = std::sqrt(2.0 / hnorm2);
            for (std::size_t i = k; i < m; ++i) h[i] *= inv;  // now |h| = sqrt(2)
            for (std::size_t j = k; j < r; ++j) {
                double c = 0.0;
                for (std::size_t i = k; i < m; ++i) c += h[i] * a(i, j);
                for (std::size_t i = k; i < m; ++i) a(i, j) -= c * h[i];
            }
        }
        diag_sign[k] = (a(k, k) >= 0.0 ? 1.0 : -1.0);
        reflectors.push_back(std::move(h));
    }

    // Q = H_0 ... H_{r-1}; build by applying reflectors to the identity.
    Matrix q = Matrix::identity(m);
    for (std::size_t kk = r; kk-- > 0;) {
        const auto& h = reflectors[kk];
        double hn = 0.0;
        for (double x : h) hn += x * x;
        if (hn == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) {
            double c = 0.0;
            for (std::size_t i = kk; i < m; ++i) c += h[i] * q(i, j);
            for (std::size_t i = kk; i < m; ++i) q(i, j) -= c * h[i];
        }
    }
    // Undo the sign flips QR introduced on the leading columns.
    for (std::size_t k = 0; k < r; ++k) {
        if (diag_sign[k] < 0.0)
            for (std::size_t i = 0; i < m; ++i) q(i, k) = -q(i, k);
    }
    return q;
}

}  // namespace racecar
