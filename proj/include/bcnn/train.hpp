#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "bcnn/dataset.hpp"
#include "bcnn/network.hpp"
#include "bcnn/rng.hpp"

namespace bcnn {

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::uint64_t seed = 1;
    double ortho_alpha = 0.5;   // used by spectral fine tuning
    double ortho_weight = 1.0;  // multiplier on the per-layer penalty sum
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
    double ortho_residual = 0.0;  // max over BasisConv layers; 0 when untracked
};

struct TrainReport {
    std::vector<EpochStats> epochs;

    const EpochStats& final_epoch() const { return epochs.back(); }
};

struct LossGrad {
    double loss;
    Tensor grad;
};

// Fused softmax + cross-entropy via log-sum-exp; gradient w.r.t. logits.
inline LossGrad softmax_cross_entropy(const Tensor& logits, std::size_t label) {
    if (logits.rank() != 1)
        throw DimensionError("cross_entropy: logits must be rank-1, got " +
                             detail::shape_string(logits.shape()));
    const std::size_t n = logits.size();
    if (label >= n)
        throw DimensionError("cross_entropy: label " + std::to_string(label) +
                             " out of range for " + std::to_string(n) + " classes");
    double m = logits[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(logits[i] - m);
    const double lse = m + std::log(sum);

    LossGrad out{lse - logits[label], Tensor({n})};
    for (std::size_t i = 0; i < n; ++i) out.grad[i] = std::exp(logits[i] - lse);
    out.grad[label] -= 1.0;
    return out;
}

// Fraction of samples whose argmax prediction matches the label; argmax ties
// break toward the lowest class index.
inline double evaluate(Network& net, const Dataset& data) {
    if (data.size() == 0) throw DataError("evaluate: dataset is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor out = net.forward(data.images[i]);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < out.size(); ++k)
            if (out[k] > out[arg]) arg = k;
        if (arg == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace detail {

struct SgdOptions {
    // Which layers receive updates; default trains everything.
    std::function<bool(const Layer&)> trainable;
    // Extra per-step loss (already weighted) and its gradient contribution,
    // added once per step, not averaged over the batch.
    std::function<double(Network&)> penalty;
    std::function<void(Network&)> penalty_grad;
    // Per-epoch diagnostic.
    std::function<double(Network&)> residual;
};

inline TrainReport run_sgd(Network& net, const Dataset& data, const TrainConfig& cfg,
                           const SgdOptions& opts) {
    if (data.size() == 0) throw DataError("train: dataset is empty");
    const auto out_shape = net.output_shape();
    if (out_shape.size() != 1 || out_shape[0] != data.num_classes)
        throw DimensionError("train: network output " + shape_string(out_shape) +
                             " does not match " + std::to_string(data.num_classes) + " classes");
    if (cfg.batch_size < 1) throw DataError("train: batch_size must be positive");

    std::vector<Tensor*> params;
    std::vector<Tensor*> grads;
    for (std::size_t i = 0; i < net.size(); ++i) {
        Layer& l = net.layer(i);
        if (opts.trainable && !opts.trainable(l)) continue;
        for (Tensor* p : l.parameters()) params.push_back(p);
        for (Tensor* g : l.gradients()) grads.push_back(g);
    }
    std::vector<Tensor> velocity;
    velocity.reserve(params.size());
    for (Tensor* p : params) velocity.push_back(Tensor::zeros(p->shape()));

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::size_t count = end - start;
            net.zero_grads();
            double batch_ce = 0.0;
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t idx = order[s];
                const Tensor logits = net.forward(data.images[idx]);
                LossGrad lg = softmax_cross_entropy(logits, data.labels[idx]);
                if (!std::isfinite(lg.loss))
                    throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                          std::to_string(epoch + 1) + ", batch " +
                                          std::to_string(steps + 1));
                batch_ce += lg.loss;
                net.backward(lg.grad);
            }
            const double inv = 1.0 / static_cast<double>(count);
            for (Tensor* g : grads) *g *= inv;
            double step_loss = batch_ce * inv;
            if (opts.penalty) step_loss += opts.penalty(net);
            if (!std::isfinite(step_loss))
                throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                      std::to_string(epoch + 1) + ", batch " +
                                      std::to_string(steps + 1));
            if (opts.penalty_grad) opts.penalty_grad(net);

            for (std::size_t i = 0; i < params.size(); ++i) {
                Tensor& v = velocity[i];
                Tensor& p = *params[i];
                const Tensor& g = *grads[i];
                for (std::size_t j = 0; j < v.size(); ++j) {
                    v[j] = cfg.momentum * v[j] - cfg.learning_rate * g[j];
                    p[j] += v[j];
                }
            }
            loss_sum += step_loss;
            ++steps;
        }
        EpochStats stats;
        stats.loss = loss_sum / static_cast<double>(steps);
        stats.accuracy = evaluate(net, data);  // frozen weights, whole set
        stats.ortho_residual = opts.residual ? opts.residual(net) : 0.0;
        report.epochs.push_back(stats);
    }
    return report;
}

}  // namespace detail

// SGD with momentum over every parameter of the network. Deterministic for a
// fixed seed; per-epoch accuracy is measured on the full dataset with the
// epoch-final weights.
inline TrainReport train(Network& net, const Dataset& data, const TrainConfig& cfg) {
    return detail::run_sgd(net, data, cfg, {});
}

}  // namespace bcnn
