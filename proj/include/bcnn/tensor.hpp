#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "bcnn/errors.hpp"

namespace bcnn {

namespace detail {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace detail

// Dense row-major tensor of 64-bit reals; the last index varies fastest.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        data_.assign(checked_size(shape_), 0.0);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size())
            throw DimensionError("tensor: shape " + detail::shape_string(shape_) +
                                 " does not match data length " + std::to_string(data_.size()));
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // Same element count, new extents; data is shared by copy.
    Tensor reshaped(std::vector<std::size_t> new_shape) const {
        if (checked_size(new_shape) != data_.size())
            throw DimensionError("reshape: " + detail::shape_string(shape_) + " -> " +
                                 detail::shape_string(new_shape) + " changes element count");
        return Tensor(std::move(new_shape), data_);
    }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0)
                throw DimensionError("tensor: zero extent in shape " + detail::shape_string(shape));
            n *= e;
        }
        return n;
    }

    void require_same_shape(const Tensor& o, const char* op) const {
        if (!same_shape(o))
            throw DimensionError(std::string("tensor ") + op + ": shape " +
                                 detail::shape_string(shape_) + " vs " +
                                 detail::shape_string(o.shape_));
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw DimensionError("dot: element counts differ (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double frobenius_norm(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

// Running tally of multiply-accumulate operations executed by the numeric
// kernels below. The accounting module checks its closed-form counts against
// this. Thread-local so parallel evaluation stays race-free.
inline std::uint64_t& mac_counter() {
    thread_local std::uint64_t count = 0;
    return count;
}

inline void reset_mac_counter() { mac_counter() = 0; }

// C[M,N] = A[M,K] * B[K,N]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: operands must be rank-2, got " +
                             detail::shape_string(a.shape()) + " and " +
                             detail::shape_string(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dimension mismatch, " + std::to_string(a.dim(1)) +
                             " vs " + std::to_string(b.dim(0)));
    const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        for (std::size_t k = 0; k < kk; ++k) {
            const double aik = pa[i * kk + k];
            const double* brow = pb + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    mac_counter() += static_cast<std::uint64_t>(m) * kk * n;
    return c;
}

namespace detail {

// C[M,N] = A[M,K] * B[N,K]^T
inline Tensor matmul_abt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw DimensionError("matmul_abt: incompatible shapes " + shape_string(a.shape()) +
                             " and " + shape_string(b.shape()));
    const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(0);
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * kk;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = pb + j * kk;
            double s = 0.0;
            for (std::size_t k = 0; k < kk; ++k) s += arow[k] * brow[k];
            pc[i * n + j] = s;
        }
    }
    mac_counter() += static_cast<std::uint64_t>(m) * kk * n;
    return c;
}

// C[M,N] = A[K,M]^T * B[K,N]
inline Tensor matmul_atb(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
        throw DimensionError("matmul_atb: incompatible shapes " + shape_string(a.shape()) +
                             " and " + shape_string(b.shape()));
    const std::size_t kk = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t k = 0; k < kk; ++k) {
        const double* arow = pa + k * m;
        const double* brow = pb + k * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double aki = arow[i];
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
    mac_counter() += static_cast<std::uint64_t>(kk) * m * n;
    return c;
}

struct ConvGeometry {
    std::size_t channels, in_h, in_w, ksize, out_h, out_w;
    std::size_t stride;
    std::size_t pad;
};

inline ConvGeometry conv_geometry(const Tensor& input, const Tensor& filters, int stride,
                                  int pad) {
    if (input.rank() != 3)
        throw DimensionError("conv2d: input must be [C,H,W], got " +
                             shape_string(input.shape()));
    if (filters.rank() != 4)
        throw DimensionError("conv2d: filters must be [P,C,D,D], got " +
                             shape_string(filters.shape()));
    if (filters.dim(2) != filters.dim(3))
        throw DimensionError("conv2d: kernel must be square, got " + std::to_string(filters.dim(2)) +
                             "x" + std::to_string(filters.dim(3)));
    if (filters.dim(1) != input.dim(0))
        throw DimensionError("conv2d: filter channel axis is " + std::to_string(filters.dim(1)) +
                             " but input channel axis is " + std::to_string(input.dim(0)));
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (pad < 0) throw DimensionError("conv2d: pad must be >= 0");

    ConvGeometry g;
    g.channels = input.dim(0);
    g.in_h = input.dim(1);
    g.in_w = input.dim(2);
    g.ksize = filters.dim(2);
    g.stride = static_cast<std::size_t>(stride);
    g.pad = static_cast<std::size_t>(pad);
    if (g.ksize > g.in_h + 2 * g.pad)
        throw DimensionError("conv2d: kernel " + std::to_string(g.ksize) +
                             " exceeds padded input height " + std::to_string(g.in_h + 2 * g.pad));
    if (g.ksize > g.in_w + 2 * g.pad)
        throw DimensionError("conv2d: kernel " + std::to_string(g.ksize) +
                             " exceeds padded input width " + std::to_string(g.in_w + 2 * g.pad));
    g.out_h = (g.in_h + 2 * g.pad - g.ksize) / g.stride + 1;
    g.out_w = (g.in_w + 2 * g.pad - g.ksize) / g.stride + 1;
    return g;
}

// Patch matrix [C*D*D, outH*outW]; out-of-range taps stay zero.
inline Tensor im2col(const Tensor& input, const ConvGeometry& g) {
    const std::size_t cdd = g.channels * g.ksize * g.ksize;
    const std::size_t ohw = g.out_h * g.out_w;
    Tensor col({cdd, ohw});
    const double* in = input.data();
    double* out = col.data();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t dy = 0; dy < g.ksize; ++dy) {
            for (std::size_t dx = 0; dx < g.ksize; ++dx, ++row) {
                double* dst = out + row * ohw;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + dy) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    const double* src = in + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
                    double* drow = dst + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + dx) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w))
                            drow[ox] = src[ix];
                    }
                }
            }
        }
    }
    return col;
}

// Adjoint of im2col: scatter-add columns back onto the input grid.
inline void col2im_add(const Tensor& col, const ConvGeometry& g, Tensor& grad_input) {
    const std::size_t ohw = g.out_h * g.out_w;
    const double* src = col.data();
    double* out = grad_input.data();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t dy = 0; dy < g.ksize; ++dy) {
            for (std::size_t dx = 0; dx < g.ksize; ++dx, ++row) {
                const double* colrow = src + row * ohw;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + dy) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    double* dst = out + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
                    const double* srow = colrow + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + dx) -
                            static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w))
                            dst[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Cross-correlation of [C,H,W] input with [P,C,D,D] filters plus per-plane
// bias. Output is [P,H',W'] with H' = floor((H+2*pad-D)/stride)+1.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& filters, const Tensor& bias,
                             int stride = 1, int pad = 0) {
    const auto g = detail::conv_geometry(input, filters, stride, pad);
    const std::size_t p = filters.dim(0);
    if (bias.rank() != 1 || bias.dim(0) != p)
        throw DimensionError("conv2d: bias must be [P]=[" + std::to_string(p) + "], got " +
                             detail::shape_string(bias.shape()));
    const Tensor col = detail::im2col(input, g);
    const std::size_t cdd = g.channels * g.ksize * g.ksize;
    Tensor out = matmul(filters.reshaped({p, cdd}), col);  // [P, outH*outW]
    const std::size_t ohw = g.out_h * g.out_w;
    double* o = out.data();
    for (std::size_t k = 0; k < p; ++k) {
        const double b = bias[k];
        for (std::size_t i = 0; i < ohw; ++i) o[k * ohw + i] += b;
    }
    return out.reshaped({p, g.out_h, g.out_w});
}

struct Conv2dGrads {
    Tensor input;
    Tensor filters;
    Tensor bias;
};

// Exact gradients of conv2d_forward with respect to input, filters and bias.
inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& filters,
                                   const Tensor& grad_out, int stride = 1, int pad = 0) {
    const auto g = detail::conv_geometry(input, filters, stride, pad);
    const std::size_t p = filters.dim(0);
    if (grad_out.rank() != 3 || grad_out.dim(0) != p || grad_out.dim(1) != g.out_h ||
        grad_out.dim(2) != g.out_w)
        throw DimensionError(
            "conv2d: grad_out must be " +
            detail::shape_string({p, g.out_h, g.out_w}) + ", got " +
            detail::shape_string(grad_out.shape()));

    const std::size_t cdd = g.channels * g.ksize * g.ksize;
    const std::size_t ohw = g.out_h * g.out_w;
    const Tensor col = detail::im2col(input, g);
    const Tensor gflat = grad_out.reshaped({p, ohw});

    Conv2dGrads grads;
    grads.filters = detail::matmul_abt(gflat, col).reshaped(filters.shape());
    const Tensor gcol = detail::matmul_atb(filters.reshaped({p, cdd}), gflat);
    grads.input = Tensor::zeros(input.shape());
    detail::col2im_add(gcol, g, grads.input);
    grads.bias = Tensor({p});
    const double* go = gflat.data();
    for (std::size_t k = 0; k < p; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < ohw; ++i) s += go[k * ohw + i];
        grads.bias[k] = s;
    }
    return grads;
}

}  // namespace bcnn
