#pragma once

#include <cmath>

#include "bcnn/network.hpp"
#include "bcnn/spectral.hpp"
#include "bcnn/train.hpp"

namespace bcnn {

struct OrthoConfig {
    double alpha = 0.5;   // mix between the unit-norm and pairwise terms
    double weight = 1.0;  // multiplier when the penalty joins the task loss
};

// Orthogonality penalty on a [Q,...] basis:
//   J_f = (alpha/Q) * sum_i (1 - f_i.f_i)^2
//       + (2(1-alpha)/(Q(Q-1))) * sum_{i<j} (f_i.f_j)^2
// The pairwise term is defined as zero for Q = 1.
inline double ortho_loss(const Tensor& basis, double alpha) {
    if (basis.rank() < 2) throw DimensionError("ortho_loss: basis must be [Q,...]");
    const std::size_t q = basis.dim(0);
    const std::size_t ldd = basis.size() / q;
    const double* b = basis.data();

    double unit = 0.0, pair = 0.0;
    for (std::size_t i = 0; i < q; ++i) {
        for (std::size_t j = i; j < q; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < ldd; ++r) s += b[i * ldd + r] * b[j * ldd + r];
            if (i == j)
                unit += (1.0 - s) * (1.0 - s);
            else
                pair += s * s;
        }
    }
    double loss = alpha / static_cast<double>(q) * unit;
    if (q > 1) loss += 2.0 * (1.0 - alpha) / static_cast<double>(q * (q - 1)) * pair;
    return loss;
}

inline double ortho_loss(const EigenBasis& basis, double alpha) {
    return ortho_loss(basis.basis, alpha);
}

// Analytic gradient of ortho_loss:
//   dJ/df_i = -(4 alpha / Q)(1 - f_i.f_i) f_i
//           + (4(1-alpha)/(Q(Q-1))) * sum_{j != i} (f_i.f_j) f_j
inline Tensor ortho_loss_grad(const Tensor& basis, double alpha) {
    if (basis.rank() < 2) throw DimensionError("ortho_loss_grad: basis must be [Q,...]");
    const std::size_t q = basis.dim(0);
    const std::size_t ldd = basis.size() / q;
    const double* b = basis.data();

    // Gram of the basis rows
    std::vector<double> gram(q * q, 0.0);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = i; j < q; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < ldd; ++r) s += b[i * ldd + r] * b[j * ldd + r];
            gram[i * q + j] = s;
            gram[j * q + i] = s;
        }

    Tensor grad(basis.shape());
    double* g = grad.data();
    const double unit_coeff = -4.0 * alpha / static_cast<double>(q);
    const double pair_coeff =
        q > 1 ? 4.0 * (1.0 - alpha) / static_cast<double>(q * (q - 1)) : 0.0;
    for (std::size_t i = 0; i < q; ++i) {
        const double ci = unit_coeff * (1.0 - gram[i * q + i]);
        for (std::size_t r = 0; r < ldd; ++r) g[i * ldd + r] = ci * b[i * ldd + r];
        if (q > 1)
            for (std::size_t j = 0; j < q; ++j) {
                if (j == i) continue;
                const double cij = pair_coeff * gram[i * q + j];
                for (std::size_t r = 0; r < ldd; ++r) g[i * ldd + r] += cij * b[j * ldd + r];
            }
    }
    return grad;
}

inline Tensor ortho_loss_grad(const EigenBasis& basis, double alpha) {
    return ortho_loss_grad(basis.basis, alpha);
}

// Sum of the per-layer penalties over every BasisConv layer.
inline double network_ortho_loss(Network& net, double alpha) {
    double sum = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (net.layer(i).kind() == LayerKind::BasisConv)
            sum += ortho_loss(static_cast<const BasisConvLayer&>(net.layer(i)).basis(), alpha);
    return sum;
}

// Largest per-layer ||F^T F - I||_max over the BasisConv layers.
inline double network_ortho_residual(Network& net) {
    double worst = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (net.layer(i).kind() == LayerKind::BasisConv)
            worst = std::max(
                worst, static_cast<const BasisConvLayer&>(net.layer(i)).ortho_residual());
    return worst;
}

// Spectral fine tuning: joint SGD over basis filters, spectral weights and
// biases of every BasisConv layer plus the Dense heads, minimizing
// cross-entropy + weight * sum of per-layer J_f. The penalty is a soft term;
// no re-orthonormalization happens, and the per-epoch report carries the
// orthogonality residual so drift stays visible.
inline TrainReport spectral_finetune(Network& net, const Dataset& data, const TrainConfig& cfg,
                                     const OrthoConfig& ortho) {
    bool has_basis = false;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (net.layer(i).kind() == LayerKind::BasisConv) has_basis = true;
    if (!has_basis)
        throw PlanError("spectral_finetune: network contains no basisconv layer");

    detail::SgdOptions opts;
    opts.trainable = [](const Layer& l) {
        return l.kind() == LayerKind::BasisConv || l.kind() == LayerKind::Dense;
    };
    const double alpha = ortho.alpha;
    const double weight = ortho.weight;
    opts.penalty = [alpha, weight](Network& n) {
        return weight * network_ortho_loss(n, alpha);
    };
    opts.penalty_grad = [alpha, weight](Network& n) {
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (n.layer(i).kind() != LayerKind::BasisConv) continue;
            auto& layer = static_cast<BasisConvLayer&>(n.layer(i));
            Tensor pg = ortho_loss_grad(layer.basis().basis, alpha);
            pg *= weight;
            *layer.gradients()[0] += pg;
        }
    };
    opts.residual = [](Network& n) { return network_ortho_residual(n); };
    return detail::run_sgd(net, data, cfg, opts);
}

}  // namespace bcnn
