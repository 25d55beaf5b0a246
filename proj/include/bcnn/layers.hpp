#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bcnn/errors.hpp"
#include "bcnn/rng.hpp"
#include "bcnn/spectral.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn {

enum class LayerKind { Conv, BasisConv, Dense, ReLU, MaxPool, Flatten };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::BasisConv: return "basisconv";
        case LayerKind::Dense: return "dense";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

class Layer {
public:
    virtual ~Layer() = default;
    virtual LayerKind kind() const = 0;
    virtual std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const = 0;
    // forward caches whatever backward needs; backward accumulates parameter
    // gradients and returns the gradient with respect to its input.
    virtual Tensor forward(const Tensor& in) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual std::vector<Tensor*> parameters() { return {}; }
    virtual std::vector<Tensor*> gradients() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;

    void zero_grads() {
        for (Tensor* g : gradients()) g->fill(0.0);
    }
};

// --- BasisConv as free functions -------------------------------------------

// Two-stage convolution: the Q basis planes z_i = input * f_i are computed
// once, then every output plane k is the 1x1 combination sum_i W[k,i] z_i + b_k.
// The P original 3D filters are never materialized.
inline Tensor basisconv_forward(const Tensor& input, const Tensor& basis, const Tensor& weights,
                                const Tensor& bias, int stride = 1, int pad = 0) {
    if (basis.rank() != 4)
        throw DimensionError("basisconv: basis must be [Q,L,D,D], got " +
                             detail::shape_string(basis.shape()));
    if (weights.rank() != 2 || weights.dim(1) != basis.dim(0))
        throw DimensionError("basisconv: weights must be [P,Q] with Q=" +
                             std::to_string(basis.dim(0)) + ", got " +
                             detail::shape_string(weights.shape()));
    const std::size_t p = weights.dim(0);
    if (bias.rank() != 1 || bias.dim(0) != p)
        throw DimensionError("basisconv: bias must be [P]=[" + std::to_string(p) + "], got " +
                             detail::shape_string(bias.shape()));
    const Tensor zbias({basis.dim(0)});
    const Tensor z = conv2d_forward(input, basis, zbias, stride, pad);  // [Q,H',W']
    const std::size_t ohw = z.dim(1) * z.dim(2);
    Tensor out = matmul(weights, z.reshaped({z.dim(0), ohw}));  // [P,H'W']
    double* o = out.data();
    for (std::size_t k = 0; k < p; ++k) {
        const double b = bias[k];
        for (std::size_t i = 0; i < ohw; ++i) o[k * ohw + i] += b;
    }
    return out.reshaped({p, z.dim(1), z.dim(2)});
}

struct BasisConvGrads {
    Tensor input;
    Tensor basis;
    Tensor weights;
    Tensor bias;
};

inline BasisConvGrads basisconv_backward(const Tensor& input, const Tensor& basis,
                                         const Tensor& weights, const Tensor& grad_out,
                                         int stride = 1, int pad = 0) {
    const std::size_t q = basis.dim(0);
    const std::size_t p = weights.dim(0);
    const Tensor zbias({q});
    const Tensor z = conv2d_forward(input, basis, zbias, stride, pad);
    const std::size_t ohw = z.dim(1) * z.dim(2);
    if (grad_out.rank() != 3 || grad_out.dim(0) != p || grad_out.dim(1) != z.dim(1) ||
        grad_out.dim(2) != z.dim(2))
        throw DimensionError("basisconv: grad_out must be " +
                             detail::shape_string({p, z.dim(1), z.dim(2)}) + ", got " +
                             detail::shape_string(grad_out.shape()));
    const Tensor gflat = grad_out.reshaped({p, ohw});
    const Tensor zflat = z.reshaped({q, ohw});

    BasisConvGrads grads;
    grads.weights = detail::matmul_abt(gflat, zflat);            // [P,Q]
    const Tensor gz = detail::matmul_atb(weights, gflat);        // [Q,H'W']
    Conv2dGrads stage1 =
        conv2d_backward(input, basis, gz.reshaped({q, z.dim(1), z.dim(2)}), stride, pad);
    grads.input = std::move(stage1.input);
    grads.basis = std::move(stage1.filters);
    grads.bias = Tensor({p});
    const double* go = gflat.data();
    for (std::size_t k = 0; k < p; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < ohw; ++i) s += go[k * ohw + i];
        grads.bias[k] = s;
    }
    return grads;
}

// --- Layers -----------------------------------------------------------------

class ConvLayer final : public Layer {
public:
    ConvLayer(Tensor filters, Tensor bias, int stride, int pad)
        : filters_(std::move(filters)),
          bias_(std::move(bias)),
          stride_(stride),
          pad_(pad),
          grad_filters_(Tensor::zeros(filters_.shape())),
          grad_bias_(Tensor::zeros(bias_.shape())) {
        if (filters_.rank() != 4 || filters_.dim(2) != filters_.dim(3))
            throw DimensionError("conv layer: filters must be [P,L,D,D]");
        if (filters_.dim(0) < 1 || filters_.dim(2) < 1)
            throw DimensionError("conv layer: P and D must be >= 1");
    }

    // He-initialized filters, zero bias.
    ConvLayer(std::size_t out_filters, std::size_t in_channels, std::size_t ksize, int stride,
              int pad, Rng& rng)
        : ConvLayer(he_init(out_filters, in_channels, ksize, rng), Tensor({out_filters}), stride,
                    pad) {}

    LayerKind kind() const override { return LayerKind::Conv; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        const Tensor probe(in);
        const auto g = detail::conv_geometry(probe, filters_, stride_, pad_);
        return {filters_.dim(0), g.out_h, g.out_w};
    }

    Tensor forward(const Tensor& in) override {
        input_ = in;
        return conv2d_forward(in, filters_, bias_, stride_, pad_);
    }

    Tensor backward(const Tensor& grad_out) override {
        Conv2dGrads g = conv2d_backward(input_, filters_, grad_out, stride_, pad_);
        grad_filters_ += g.filters;
        grad_bias_ += g.bias;
        return std::move(g.input);
    }

    std::vector<Tensor*> parameters() override { return {&filters_, &bias_}; }
    std::vector<Tensor*> gradients() override { return {&grad_filters_, &grad_bias_}; }

    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<ConvLayer>(filters_, bias_, stride_, pad_);
    }

    const Tensor& filters() const { return filters_; }
    const Tensor& bias() const { return bias_; }
    int stride() const { return stride_; }
    int pad() const { return pad_; }
    FilterBank bank() const { return {filters_, bias_}; }

private:
    static Tensor he_init(std::size_t p, std::size_t l, std::size_t d, Rng& rng) {
        Tensor f({p, l, d, d});
        const double stddev = std::sqrt(2.0 / static_cast<double>(l * d * d));
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.normal(0.0, stddev);
        return f;
    }

    Tensor filters_, bias_;
    int stride_, pad_;
    Tensor grad_filters_, grad_bias_;
    Tensor input_;
};

class BasisConvLayer final : public Layer {
public:
    BasisConvLayer(EigenBasis basis, SpectralWeights weights, Tensor bias, int stride, int pad)
        : basis_(std::move(basis)),
          weights_(std::move(weights)),
          bias_(std::move(bias)),
          stride_(stride),
          pad_(pad) {
        if (basis_.basis.rank() != 4)
            throw DimensionError("basisconv layer: basis must be [Q,L,D,D]");
        const std::size_t q = basis_.basis.dim(0);
        const std::size_t ldd = basis_.basis.size() / q;
        if (weights_.w.rank() != 2 || weights_.w.dim(1) != q)
            throw RankError("basisconv layer: weights must be [P,Q] with Q=" + std::to_string(q));
        const std::size_t p = weights_.w.dim(0);
        if (q > std::min(p, ldd))
            throw RankError("basisconv layer: Q=" + std::to_string(q) + " exceeds min(P, L*D*D)=" +
                            std::to_string(std::min(p, ldd)));
        if (basis_.eigenvalues.rank() != 1 || basis_.eigenvalues.dim(0) != q)
            throw RankError("basisconv layer: eigenvalues must be [Q]");
        if (bias_.rank() != 1 || bias_.dim(0) != p)
            throw DimensionError("basisconv layer: bias must be [P]");
        grad_basis_ = Tensor::zeros(basis_.basis.shape());
        grad_weights_ = Tensor::zeros(weights_.w.shape());
        grad_bias_ = Tensor::zeros(bias_.shape());
    }

    LayerKind kind() const override { return LayerKind::BasisConv; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        const Tensor probe(in);
        const auto g = detail::conv_geometry(probe, basis_.basis, stride_, pad_);
        return {weights_.w.dim(0), g.out_h, g.out_w};
    }

    Tensor forward(const Tensor& in) override {
        input_ = in;
        const Tensor zbias({basis_.basis.dim(0)});
        z_ = conv2d_forward(in, basis_.basis, zbias, stride_, pad_);
        const std::size_t p = weights_.w.dim(0);
        const std::size_t ohw = z_.dim(1) * z_.dim(2);
        Tensor out = matmul(weights_.w, z_.reshaped({z_.dim(0), ohw}));
        double* o = out.data();
        for (std::size_t k = 0; k < p; ++k) {
            const double b = bias_[k];
            for (std::size_t i = 0; i < ohw; ++i) o[k * ohw + i] += b;
        }
        return out.reshaped({p, z_.dim(1), z_.dim(2)});
    }

    Tensor backward(const Tensor& grad_out) override {
        const std::size_t q = basis_.basis.dim(0);
        const std::size_t p = weights_.w.dim(0);
        const std::size_t ohw = z_.dim(1) * z_.dim(2);
        const Tensor gflat = grad_out.reshaped({p, ohw});
        grad_weights_ += detail::matmul_abt(gflat, z_.reshaped({q, ohw}));
        const Tensor gz = detail::matmul_atb(weights_.w, gflat);
        Conv2dGrads stage1 = conv2d_backward(input_, basis_.basis,
                                             gz.reshaped({q, z_.dim(1), z_.dim(2)}), stride_, pad_);
        grad_basis_ += stage1.filters;
        const double* go = gflat.data();
        for (std::size_t k = 0; k < p; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < ohw; ++i) s += go[k * ohw + i];
            grad_bias_[k] += s;
        }
        return std::move(stage1.input);
    }

    std::vector<Tensor*> parameters() override {
        return {&basis_.basis, &weights_.w, &bias_};
    }
    std::vector<Tensor*> gradients() override {
        return {&grad_basis_, &grad_weights_, &grad_bias_};
    }

    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<BasisConvLayer>(basis_, weights_, bias_, stride_, pad_);
    }

    const EigenBasis& basis() const { return basis_; }
    const SpectralWeights& weights() const { return weights_; }
    const Tensor& bias() const { return bias_; }
    int stride() const { return stride_; }
    int pad() const { return pad_; }
    std::size_t rank_q() const { return basis_.basis.dim(0); }
    std::size_t out_filters() const { return weights_.w.dim(0); }
    Tensor& mutable_basis() { return basis_.basis; }
    double ortho_residual() const { return orthogonality_residual(basis_.basis); }

private:
    EigenBasis basis_;
    SpectralWeights weights_;
    Tensor bias_;
    int stride_, pad_;
    Tensor grad_basis_, grad_weights_, grad_bias_;
    Tensor input_, z_;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(Tensor weight, Tensor bias)
        : weight_(std::move(weight)),
          bias_(std::move(bias)),
          grad_weight_(Tensor::zeros(weight_.shape())),
          grad_bias_(Tensor::zeros(bias_.shape())) {
        if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.dim(0) != weight_.dim(0))
            throw DimensionError("dense layer: weight must be [out,in] and bias [out]");
    }

    DenseLayer(std::size_t in, std::size_t out, Rng& rng)
        : DenseLayer(he_init(out, in, rng), Tensor({out})) {}

    LayerKind kind() const override { return LayerKind::Dense; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        if (in.size() != 1 || in[0] != weight_.dim(1))
            throw DimensionError("dense layer: expects input [" + std::to_string(weight_.dim(1)) +
                                 "], got " + detail::shape_string(in));
        return {weight_.dim(0)};
    }

    Tensor forward(const Tensor& in) override {
        output_shape(in.shape());
        input_ = in;
        Tensor out = matmul(weight_, in.reshaped({in.size(), 1}));
        Tensor flat = out.reshaped({weight_.dim(0)});
        flat += bias_;
        return flat;
    }

    Tensor backward(const Tensor& grad_out) override {
        const std::size_t out = weight_.dim(0), in = weight_.dim(1);
        grad_weight_ += matmul(grad_out.reshaped({out, 1}), input_.reshaped({1, in}));
        grad_bias_ += grad_out;
        return detail::matmul_atb(weight_, grad_out.reshaped({out, 1})).reshaped({in});
    }

    std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }
    std::vector<Tensor*> gradients() override { return {&grad_weight_, &grad_bias_}; }

    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<DenseLayer>(weight_, bias_);
    }

    const Tensor& weight() const { return weight_; }
    const Tensor& bias() const { return bias_; }

private:
    static Tensor he_init(std::size_t out, std::size_t in, Rng& rng) {
        Tensor w({out, in});
        const double stddev = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
        return w;
    }

    Tensor weight_, bias_;
    Tensor grad_weight_, grad_bias_;
    Tensor input_;
};

class ReluLayer final : public Layer {
public:
    LayerKind kind() const override { return LayerKind::ReLU; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        return in;
    }

    Tensor forward(const Tensor& in) override {
        input_ = in;
        Tensor out = in;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i] < 0.0) out[i] = 0.0;
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        Tensor g = grad_out;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (input_[i] <= 0.0) g[i] = 0.0;
        return g;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(); }

private:
    Tensor input_;
};

class MaxPoolLayer final : public Layer {
public:
    explicit MaxPoolLayer(std::size_t window = 2, std::size_t stride = 2)
        : window_(window), stride_(stride) {
        if (window_ < 1 || stride_ < 1) throw DimensionError("maxpool: window and stride >= 1");
    }

    LayerKind kind() const override { return LayerKind::MaxPool; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        if (in.size() != 3)
            throw DimensionError("maxpool: input must be [C,H,W], got " +
                                 detail::shape_string(in));
        if (in[1] < window_ || in[2] < window_)
            throw DimensionError("maxpool: window " + std::to_string(window_) +
                                 " exceeds input " + detail::shape_string(in));
        return {in[0], (in[1] - window_) / stride_ + 1, (in[2] - window_) / stride_ + 1};
    }

    Tensor forward(const Tensor& in) override {
        const auto os = output_shape(in.shape());
        in_shape_ = in.shape();
        Tensor out(os);
        argmax_.assign(out.size(), 0);
        const std::size_t h = in.dim(1), w = in.dim(2);
        std::size_t oi = 0;
        for (std::size_t c = 0; c < os[0]; ++c)
            for (std::size_t oy = 0; oy < os[1]; ++oy)
                for (std::size_t ox = 0; ox < os[2]; ++ox, ++oi) {
                    double best = -1e300;
                    std::size_t arg = 0;
                    for (std::size_t dy = 0; dy < window_; ++dy)
                        for (std::size_t dx = 0; dx < window_; ++dx) {
                            const std::size_t iy = oy * stride_ + dy;
                            const std::size_t ix = ox * stride_ + dx;
                            const std::size_t idx = (c * h + iy) * w + ix;
                            if (in[idx] > best) {
                                best = in[idx];
                                arg = idx;
                            }
                        }
                    out[oi] = best;
                    argmax_[oi] = arg;
                }
        return out;
    }

    Tensor backward(const Tensor& grad_out) override {
        Tensor g(in_shape_);
        for (std::size_t i = 0; i < grad_out.size(); ++i) g[argmax_[i]] += grad_out[i];
        return g;
    }

    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<MaxPoolLayer>(window_, stride_);
    }

    std::size_t window() const { return window_; }
    std::size_t stride() const { return stride_; }

private:
    std::size_t window_, stride_;
    std::vector<std::size_t> in_shape_;
    std::vector<std::size_t> argmax_;
};

class FlattenLayer final : public Layer {
public:
    LayerKind kind() const override { return LayerKind::Flatten; }

    std::vector<std::size_t> output_shape(const std::vector<std::size_t>& in) const override {
        std::size_t n = 1;
        for (std::size_t e : in) n *= e;
        return {n};
    }

    Tensor forward(const Tensor& in) override {
        in_shape_ = in.shape();
        return in.reshaped({in.size()});
    }

    Tensor backward(const Tensor& grad_out) override { return grad_out.reshaped(in_shape_); }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<FlattenLayer>(); }

private:
    std::vector<std::size_t> in_shape_;
};

}  // namespace bcnn
