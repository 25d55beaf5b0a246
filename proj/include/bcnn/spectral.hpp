#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "bcnn/errors.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn {

// The P original 3D filters of one conv layer, plus their biases.
struct FilterBank {
    Tensor filters;  // [P,L,D,D]
    Tensor bias;     // [P]
};

// Q orthonormal basis filters with their eigenvalues, sorted descending.
struct EigenBasis {
    Tensor basis;        // [Q,L,D,D]
    Tensor eigenvalues;  // [Q], nonnegative, descending
};

// Row k holds the coordinates of original filter k in the basis.
struct SpectralWeights {
    Tensor w;  // [P,Q]
};

namespace detail {

inline void validate_bank(const FilterBank& bank) {
    if (bank.filters.rank() != 4)
        throw DimensionError("filter bank: filters must be [P,L,D,D], got " +
                             shape_string(bank.filters.shape()));
    if (bank.filters.dim(2) != bank.filters.dim(3))
        throw DimensionError("filter bank: kernels must be square");
    if (bank.bias.rank() != 1 || bank.bias.dim(0) != bank.filters.dim(0))
        throw DimensionError("filter bank: bias must be [P]=[" +
                             std::to_string(bank.filters.dim(0)) + "], got " +
                             shape_string(bank.bias.shape()));
    for (std::size_t i = 0; i < bank.filters.size(); ++i)
        if (!std::isfinite(bank.filters[i]))
            throw DataError("filter bank: non-finite filter entry");
}

struct EigenResult {
    std::vector<double> values;        // descending
    Tensor vectors;                    // [n,n], column j = eigenvector j
};

// Cyclic Jacobi for a symmetric matrix. Converges when every off-diagonal
// magnitude drops below tol relative to the largest diagonal magnitude.
inline EigenResult jacobi_eigen(const Tensor& sym, double tol = 1e-12, int max_sweeps = 100) {
    if (sym.rank() != 2 || sym.dim(0) != sym.dim(1))
        throw DimensionError("jacobi: matrix must be square, got " + shape_string(sym.shape()));
    const std::size_t n = sym.dim(0);
    Tensor a = sym;
    // enforce exact symmetry so rotations stay consistent
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = v;
            a(j, i) = v;
        }
    Tensor v({n, n});
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    auto converged = [&]() {
        double diag = 0.0, off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            diag = std::max(diag, std::fabs(a(i, i)));
            for (std::size_t j = i + 1; j < n; ++j) off = std::max(off, std::fabs(a(i, j)));
        }
        return off <= tol * std::max(diag, 1e-300);
    };

    bool done = converged();
    for (int sweep = 0; sweep < max_sweeps && !done; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double sign = theta >= 0.0 ? 1.0 : -1.0;
                const double t = sign / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = a(p, p), aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r != p && r != q) {
                        const double arp = a(r, p), arq = a(r, q);
                        a(r, p) = arp - s * (arq + tau * arp);
                        a(p, r) = a(r, p);
                        a(r, q) = arq + s * (arp - tau * arq);
                        a(q, r) = a(r, q);
                    }
                    const double vrp = v(r, p), vrq = v(r, q);
                    v(r, p) = vrp - s * (vrq + tau * vrp);
                    v(r, q) = vrq + s * (vrp - tau * vrq);
                }
            }
        }
        done = converged();
    }
    if (!done)
        throw NumericError("jacobi eigensolver did not converge within " +
                           std::to_string(max_sweeps) + " sweeps");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    EigenResult res;
    res.values.resize(n);
    res.vectors = Tensor({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        res.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) res.vectors(i, j) = v(i, order[j]);
    }
    return res;
}

// Deterministic sign: the largest-magnitude component (lowest index on ties)
// of each column is made positive.
inline void fix_column_signs(Tensor& m) {
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    for (std::size_t j = 0; j < cols; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double mag = std::fabs(m(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (m(arg, j) < 0.0)
            for (std::size_t i = 0; i < rows; ++i) m(i, j) = -m(i, j);
    }
}

}  // namespace detail

// Matrix A = [h_1 h_2 ... h_P]: column k is the vectorization of filter k in
// (l, m, n) order with n fastest — the tensor's native row-major flattening.
inline Tensor build_filter_matrix(const FilterBank& bank) {
    detail::validate_bank(bank);
    const std::size_t p = bank.filters.dim(0);
    const std::size_t ldd = bank.filters.size() / p;
    Tensor a({ldd, p});
    const double* f = bank.filters.data();
    for (std::size_t k = 0; k < p; ++k)
        for (std::size_t r = 0; r < ldd; ++r) a(r, k) = f[k * ldd + r];
    return a;
}

// All eigenvalues of the smaller Gram matrix (A^T A when P < L*D^2, else
// A A^T), descending, with negative numerical noise clamped to zero. The
// nonzero spectra of the two Gram matrices coincide.
inline Tensor gram_spectrum(const FilterBank& bank) {
    const Tensor a = build_filter_matrix(bank);
    const std::size_t ldd = a.dim(0), p = a.dim(1);
    const Tensor gram = (ldd <= p) ? detail::matmul_abt(a, a) : detail::matmul_atb(a, a);
    detail::EigenResult eig = detail::jacobi_eigen(gram);
    Tensor out({eig.values.size()});
    for (std::size_t i = 0; i < eig.values.size(); ++i) out[i] = std::max(eig.values[i], 0.0);
    return out;
}

inline std::size_t full_rank(const FilterBank& bank) {
    const std::size_t p = bank.filters.dim(0);
    const std::size_t ldd = bank.filters.size() / p;
    return std::min(p, ldd);
}

// Top-Q eigenpairs of A A^T plus the spectral weights W = (F^T A)^T. When the
// filter count is smaller than the filter dimension the P x P Gram matrix is
// decomposed instead and eigenvectors are mapped through f_i = A v_i / sqrt(l_i),
// which requires every retained eigenvalue to exceed 1e-12.
inline std::pair<EigenBasis, SpectralWeights> eigen_decompose(const FilterBank& bank,
                                                              std::size_t q) {
    detail::validate_bank(bank);
    const std::size_t p = bank.filters.dim(0);
    const std::size_t l = bank.filters.dim(1);
    const std::size_t d = bank.filters.dim(2);
    const std::size_t ldd = l * d * d;
    const std::size_t full = std::min(p, ldd);
    if (q < 1 || q > full)
        throw RankError("eigen_decompose: Q=" + std::to_string(q) + " outside [1, " +
                        std::to_string(full) + "]");

    const Tensor a = build_filter_matrix(bank);
    Tensor f({ldd, q});
    Tensor lambda({q});

    if (ldd <= p) {
        const Tensor gram = detail::matmul_abt(a, a);  // A A^T, ldd x ldd
        detail::EigenResult eig = detail::jacobi_eigen(gram);
        for (std::size_t j = 0; j < q; ++j) {
            lambda[j] = std::max(eig.values[j], 0.0);
            for (std::size_t i = 0; i < ldd; ++i) f(i, j) = eig.vectors(i, j);
        }
    } else {
        const Tensor gram = detail::matmul_atb(a, a);  // A^T A, p x p
        detail::EigenResult eig = detail::jacobi_eigen(gram);
        for (std::size_t j = 0; j < q; ++j) {
            const double lam = eig.values[j];
            if (lam <= 1e-12)
                throw NumericError("eigen_decompose: eigenvalue " + std::to_string(j) + " (" +
                                   std::to_string(lam) +
                                   ") too small to map a basis vector; bank rank < Q");
            lambda[j] = lam;
            const double inv = 1.0 / std::sqrt(lam);
            for (std::size_t i = 0; i < ldd; ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < p; ++k) s += a(i, k) * eig.vectors(k, j);
                f(i, j) = s * inv;
            }
        }
    }
    detail::fix_column_signs(f);

    EigenBasis basis;
    basis.eigenvalues = lambda;
    basis.basis = Tensor({q, l, d, d});
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = 0; i < ldd; ++i) basis.basis[j * ldd + i] = f(i, j);

    SpectralWeights weights;
    weights.w = Tensor({p, q});
    for (std::size_t k = 0; k < p; ++k)
        for (std::size_t j = 0; j < q; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < ldd; ++i) s += f(i, j) * a(i, k);
            weights.w(k, j) = s;
        }
    return {std::move(basis), std::move(weights)};
}

// Fraction of eigenvalue mass retained by the top Q values. Values below
// 1e-12 * lambda_max count as zero so noise cannot inflate the denominator.
inline double energy_ratio(const Tensor& eigenvalues, std::size_t q) {
    if (eigenvalues.rank() != 1)
        throw DimensionError("energy_ratio: eigenvalues must be rank-1");
    const std::size_t n = eigenvalues.size();
    if (q < 1 || q > n)
        throw RankError("energy_ratio: Q=" + std::to_string(q) + " outside [1, " +
                        std::to_string(n) + "]");
    double vmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (eigenvalues[i] < 0.0)
            throw DataError("energy_ratio: negative eigenvalue at index " + std::to_string(i));
        if (i > 0 && eigenvalues[i] > eigenvalues[i - 1])
            throw DataError("energy_ratio: eigenvalues not sorted descending at index " +
                            std::to_string(i));
        vmax = std::max(vmax, eigenvalues[i]);
    }
    if (vmax == 0.0) throw DegenerateSpectrumError("energy_ratio: all eigenvalues are zero");
    const double cutoff = 1e-12 * vmax;
    double top = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = eigenvalues[i] < cutoff ? 0.0 : eigenvalues[i];
        total += v;
        if (i < q) top += v;
    }
    return top / total;
}

// h_k = sum_i W[k,i] * f_i; bias passes through unchanged.
inline FilterBank reconstruct(const EigenBasis& basis, const SpectralWeights& weights,
                              const Tensor& bias) {
    if (basis.basis.rank() != 4 || weights.w.rank() != 2)
        throw RankError("reconstruct: basis must be [Q,L,D,D] and weights [P,Q]");
    const std::size_t q = basis.basis.dim(0);
    if (weights.w.dim(1) != q)
        throw RankError("reconstruct: weights have Q=" + std::to_string(weights.w.dim(1)) +
                        " but basis has Q=" + std::to_string(q));
    const std::size_t p = weights.w.dim(0);
    const std::size_t ldd = basis.basis.size() / q;
    FilterBank bank;
    bank.filters = Tensor({p, basis.basis.dim(1), basis.basis.dim(2), basis.basis.dim(3)});
    const double* bf = basis.basis.data();
    double* out = bank.filters.data();
    for (std::size_t k = 0; k < p; ++k)
        for (std::size_t j = 0; j < q; ++j) {
            const double w = weights.w(k, j);
            for (std::size_t i = 0; i < ldd; ++i) out[k * ldd + i] += w * bf[j * ldd + i];
        }
    if (bias.rank() != 1 || bias.dim(0) != p)
        throw RankError("reconstruct: bias must be [P]=[" + std::to_string(p) + "], got " +
                        detail::shape_string(bias.shape()));
    bank.bias = bias;
    return bank;
}

// max |F^T F - I| over a [Q,...] basis tensor; zero for an orthonormal basis.
inline double orthogonality_residual(const Tensor& basis) {
    if (basis.rank() < 2) throw DimensionError("orthogonality_residual: basis must be [Q,...]");
    const std::size_t q = basis.dim(0);
    const std::size_t ldd = basis.size() / q;
    const double* b = basis.data();
    double worst = 0.0;
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = i; j < q; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < ldd; ++r) s += b[i * ldd + r] * b[j * ldd + r];
            const double target = (i == j) ? 1.0 : 0.0;
            worst = std::max(worst, std::fabs(s - target));
        }
    return worst;
}

}  // namespace bcnn
