#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bcnn/errors.hpp"
#include "bcnn/rng.hpp"
#include "bcnn/tensor.hpp"

namespace bcnn {

// Per-channel affine normalization applied at load time and recorded with
// the dataset: x_norm = (x - mean[c]) / scale[c].
struct Normalization {
    std::vector<double> mean;
    std::vector<double> scale;
};

struct Dataset {
    std::vector<Tensor> images;  // uniform [C,H,W]
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    Normalization norm;

    std::size_t size() const { return images.size(); }
    std::vector<std::size_t> sample_shape() const {
        return images.empty() ? std::vector<std::size_t>{} : images.front().shape();
    }
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

struct IdxArray {
    std::vector<std::uint32_t> dims;
    std::vector<unsigned char> data;
};

// IDX container: two zero bytes, dtype byte (0x08 = unsigned byte), rank
// byte, big-endian u32 extents, then raw values.
inline IdxArray read_idx(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0)
        throw DataError("idx: bad magic in " + path);
    if (bytes[2] != 0x08) throw DataError("idx: unsupported dtype in " + path +
                                          " (only unsigned byte is supported)");
    const std::size_t ndim = bytes[3];
    if (ndim < 1 || ndim > 4) throw DataError("idx: unsupported rank in " + path);
    if (bytes.size() < 4 + 4 * ndim) throw DataError("idx: truncated header in " + path);
    IdxArray arr;
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        arr.dims.push_back(be32(bytes, 4 + 4 * i));
        total *= arr.dims.back();
    }
    const std::size_t off = 4 + 4 * ndim;
    if (bytes.size() - off != total)
        throw DataError("idx: data size mismatch in " + path + " (header says " +
                        std::to_string(total) + " values, file has " +
                        std::to_string(bytes.size() - off) + ")");
    arr.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
    return arr;
}

inline void apply_norm(Tensor& img, const Normalization& n) {
    if (n.mean.empty()) return;
    const std::size_t c = img.dim(0), hw = img.dim(1) * img.dim(2);
    if (n.mean.size() != c || n.scale.size() != c)
        throw DataError("normalization: channel count mismatch");
    double* p = img.data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i)
            p[ch * hw + i] = (p[ch * hw + i] - n.mean[ch]) / n.scale[ch];
}

inline Normalization recorded_norm(const Normalization& n, std::size_t channels) {
    if (!n.mean.empty()) return n;
    Normalization id;
    id.mean.assign(channels, 0.0);
    id.scale.assign(channels, 1.0);
    return id;
}

}  // namespace detail

// MNIST-style IDX pair. Image values are scaled to [0,1] before
// normalization. `limit` keeps the first N samples; 0 keeps all.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::size_t limit = 0, const Normalization& norm = {}) {
    const auto imgs = detail::read_idx(images_path);
    const auto labs = detail::read_idx(labels_path);
    if (imgs.dims.size() != 3 && imgs.dims.size() != 4)
        throw DataError("idx: image file must be [N,H,W] or [N,C,H,W]: " + images_path);
    if (labs.dims.size() != 1)
        throw DataError("idx: label file must be rank-1: " + labels_path);
    if (imgs.dims[0] != labs.dims[0])
        throw DataError("idx: image count " + std::to_string(imgs.dims[0]) +
                        " != label count " + std::to_string(labs.dims[0]));

    const std::size_t n = limit == 0 ? imgs.dims[0] : std::min<std::size_t>(limit, imgs.dims[0]);
    const bool has_channels = imgs.dims.size() == 4;
    const std::size_t c = has_channels ? imgs.dims[1] : 1;
    const std::size_t h = has_channels ? imgs.dims[2] : imgs.dims[1];
    const std::size_t w = has_channels ? imgs.dims[3] : imgs.dims[2];
    const std::size_t chw = c * h * w;

    Dataset ds;
    ds.norm = detail::recorded_norm(norm, c);
    ds.images.reserve(n);
    ds.labels.reserve(n);
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor img({c, h, w});
        for (std::size_t j = 0; j < chw; ++j)
            img[j] = static_cast<double>(imgs.data[i * chw + j]) / 255.0;
        detail::apply_norm(img, ds.norm);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(labs.data[i]);
        max_label = std::max<std::size_t>(max_label, labs.data[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

// Writes a 1-channel dataset as an IDX pair (values quantized to bytes).
inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    if (ds.images.empty()) throw DataError("save_idx: empty dataset");
    const auto shape = ds.sample_shape();
    if (shape.size() != 3 || shape[0] != 1)
        throw DataError("save_idx: only 1-channel [1,H,W] datasets are supported");
    const std::uint32_t n = static_cast<std::uint32_t>(ds.images.size());
    const std::uint32_t h = static_cast<std::uint32_t>(shape[1]);
    const std::uint32_t w = static_cast<std::uint32_t>(shape[2]);

    auto put32 = [](std::ofstream& out, std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };

    std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
    if (!imgs) throw DataError("save_idx: cannot open " + images_path);
    const unsigned char imagic[4] = {0, 0, 0x08, 3};
    imgs.write(reinterpret_cast<const char*>(imagic), 4);
    put32(imgs, n);
    put32(imgs, h);
    put32(imgs, w);
    for (const Tensor& img : ds.images)
        for (std::size_t i = 0; i < img.size(); ++i) {
            const double v = std::clamp(img[i], 0.0, 1.0);
            const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
            imgs.write(reinterpret_cast<const char*>(&b), 1);
        }
    imgs.close();

    std::ofstream labs(labels_path, std::ios::binary | std::ios::trunc);
    if (!labs) throw DataError("save_idx: cannot open " + labels_path);
    const unsigned char lmagic[4] = {0, 0, 0x08, 1};
    labs.write(reinterpret_cast<const char*>(lmagic), 4);
    put32(labs, n);
    for (std::size_t lab : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(lab);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
}

// CIFAR-10 binary batches: records of one label byte plus 3x32x32 values.
inline Dataset load_cifar10(const std::vector<std::string>& batch_paths, std::size_t limit = 0,
                            const Normalization& norm = {}) {
    constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
    Dataset ds;
    ds.num_classes = 10;
    ds.norm = detail::recorded_norm(norm, 3);
    for (const auto& path : batch_paths) {
        const auto bytes = detail::read_file_bytes(path);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw DataError("cifar: file size " + std::to_string(bytes.size()) +
                            " is not a multiple of record size " + std::to_string(kRecord) +
                            ": " + path);
        const std::size_t records = bytes.size() / kRecord;
        for (std::size_t r = 0; r < records; ++r) {
            if (limit != 0 && ds.images.size() >= limit) return ds;
            const unsigned char* rec = bytes.data() + r * kRecord;
            if (rec[0] > 9)
                throw DataError("cifar: label " + std::to_string(rec[0]) +
                                " out of range in " + path);
            Tensor img({3, 32, 32});
            for (std::size_t i = 0; i < 3 * 32 * 32; ++i)
                img[i] = static_cast<double>(rec[1 + i]) / 255.0;
            detail::apply_norm(img, ds.norm);
            ds.images.push_back(std::move(img));
            ds.labels.push_back(rec[0]);
        }
    }
    if (ds.images.empty()) throw DataError("cifar: no input batches");
    return ds;
}

namespace detail {

inline void render_shape(Tensor& img, std::size_t cls, Rng& rng) {
    const std::size_t h = img.dim(1), w = img.dim(2);
    const double cx = (w - 1) * 0.5 + rng.uniform(-3.0, 3.0);
    const double cy = (h - 1) * 0.5 + rng.uniform(-3.0, 3.0);
    const double s = rng.uniform(5.5, 8.5);
    const double amp = rng.uniform(0.65, 1.0);
    const long ix0 = std::lround(cx);
    const long iy0 = std::lround(cy);
    auto mod4 = [](long v) { return ((v % 4) + 4) % 4; };

    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double r = std::sqrt(dx * dx + dy * dy);
            const double box = std::max(std::fabs(dx), std::fabs(dy));
            bool on = false;
            switch (cls) {
                case 0: on = box <= s * 0.75; break;
                case 1: on = box <= s * 0.75 && box >= s * 0.75 - 1.6; break;
                case 2: on = r <= s; break;
                case 3: on = r <= s && r >= s - 1.6; break;
                case 4:
                    on = (std::fabs(dx) <= 1.4 && std::fabs(dy) <= s) ||
                         (std::fabs(dy) <= 1.4 && std::fabs(dx) <= s);
                    break;
                case 5:
                    on = std::fabs(std::fabs(dx) - std::fabs(dy)) <= 1.4 && box <= s;
                    break;
                case 6:
                    on = box <= s && mod4(static_cast<long>(y) - iy0) < 2;
                    break;
                case 7:
                    on = box <= s && mod4(static_cast<long>(x) - ix0) < 2;
                    break;
                case 8: on = dy >= -s && dy <= s && std::fabs(dx) <= (dy + s) * 0.55; break;
                case 9:
                    on = box <= s && mod4(static_cast<long>(x) - ix0) < 2 &&
                         mod4(static_cast<long>(y) - iy0) < 2;
                    break;
                default: break;
            }
            if (on) img(0, y, x) = amp;
        }
    }
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = std::clamp(img[i] + rng.normal(0.0, 0.12), 0.0, 1.0);
}

}  // namespace detail

// Procedurally generated 10-class shape images, 1x28x28, balanced labels.
// Fully determined by (count, seed); backs CI so no downloads are needed.
inline Dataset make_synthetic_shapes(std::size_t count, std::uint64_t seed) {
    if (count == 0) throw DataError("synthetic dataset: count must be positive");
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = 10;
    ds.norm = detail::recorded_norm({}, 1);
    ds.images.reserve(count);
    ds.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t cls = i % 10;
        Tensor img({1, 28, 28});
        detail::render_shape(img, cls, rng);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(cls);
    }
    return ds;
}

}  // namespace bcnn
