#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcnn/network.hpp"
#include "bcnn/rng.hpp"

namespace bcnn {

struct LayerCounts {
    std::uint64_t macs = 0;
    std::uint64_t params = 0;
    std::uint64_t filters = 0;
};

// Closed-form cost of one layer on the given input shape. One MAC is one
// multiply-accumulate; reported "FLOPs" equal MACs unless a report is asked
// to use the 2xMAC convention. Pooling and activations count as free.
inline LayerCounts count_layer(const Layer& layer, const std::vector<std::size_t>& input_shape) {
    const auto out = layer.output_shape(input_shape);
    LayerCounts c;
    switch (layer.kind()) {
        case LayerKind::Conv: {
            const auto& conv = static_cast<const ConvLayer&>(layer);
            const std::uint64_t p = conv.filters().dim(0);
            const std::uint64_t ldd =
                conv.filters().dim(1) * conv.filters().dim(2) * conv.filters().dim(3);
            const std::uint64_t ohw = out[1] * out[2];
            c.macs = ohw * p * ldd;
            c.params = p * ldd + p;
            c.filters = p;
            return c;
        }
        case LayerKind::BasisConv: {
            const auto& bc = static_cast<const BasisConvLayer&>(layer);
            const std::uint64_t q = bc.rank_q();
            const std::uint64_t p = bc.out_filters();
            const std::uint64_t ldd = bc.basis().basis.size() / q;
            const std::uint64_t ohw = out[1] * out[2];
            c.macs = ohw * q * ldd + ohw * p * q;
            c.params = q * ldd + p * q + p;
            c.filters = q;  // the 1x1 stage is counted in macs/params only
            return c;
        }
        case LayerKind::Dense: {
            const auto& dense = static_cast<const DenseLayer&>(layer);
            const std::uint64_t in = dense.weight().dim(1);
            const std::uint64_t o = dense.weight().dim(0);
            c.macs = in * o;
            c.params = in * o + o;
            c.filters = 0;
            return c;
        }
        case LayerKind::ReLU:
        case LayerKind::MaxPool:
        case LayerKind::Flatten:
            return c;
    }
    throw std::invalid_argument("count_layer: unsupported layer kind");
}

enum class FlopsConvention { Mac, TwoXMac };

inline const char* flops_convention_name(FlopsConvention c) {
    return c == FlopsConvention::Mac ? "mac" : "2xmac";
}

struct LayerRow {
    std::size_t index = 0;
    std::string kind_before, kind_after;
    LayerCounts before, after;
};

struct MetricsReport {
    FlopsConvention convention = FlopsConvention::Mac;
    std::vector<LayerRow> layers;
    LayerCounts total_before, total_after;
    double flops_reduction_pct = 0.0;
    double params_reduction_pct = 0.0;
    double filters_reduction_pct = 0.0;
    double speedup_ratio = 1.0;
    std::optional<double> accuracy_before, accuracy_after;

    std::uint64_t flops(std::uint64_t macs) const {
        return convention == FlopsConvention::TwoXMac ? 2 * macs : macs;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "model comparison (flops convention: " << flops_convention_name(convention)
           << ", 1 MAC = 1 multiply-accumulate)\n";
        os << std::left << std::setw(6) << "layer" << std::setw(22) << "kind" << std::right
           << std::setw(14) << "flops" << std::setw(14) << "flops'" << std::setw(12) << "params"
           << std::setw(12) << "params'" << std::setw(10) << "filters" << std::setw(10)
           << "filters'"
           << "\n";
        for (const auto& row : layers) {
            os << std::left << std::setw(6) << row.index << std::setw(22)
               << (row.kind_before == row.kind_after ? row.kind_before
                                                     : row.kind_before + "->" + row.kind_after)
               << std::right << std::setw(14) << flops(row.before.macs) << std::setw(14)
               << flops(row.after.macs) << std::setw(12) << row.before.params << std::setw(12)
               << row.after.params << std::setw(10) << row.before.filters << std::setw(10)
               << row.after.filters << "\n";
        }
        os << std::left << std::setw(28) << "totals" << std::right << std::setw(14)
           << flops(total_before.macs) << std::setw(14) << flops(total_after.macs)
           << std::setw(12) << total_before.params << std::setw(12) << total_after.params
           << std::setw(10) << total_before.filters << std::setw(10) << total_after.filters
           << "\n";
        os << std::fixed << std::setprecision(2);
        os << "flops reduction: " << flops_reduction_pct << "%  params reduction: "
           << params_reduction_pct << "%  filters reduction: " << filters_reduction_pct
           << "%  speedup: " << std::setprecision(3) << speedup_ratio << "x\n";
        if (accuracy_before && accuracy_after) {
            os << std::setprecision(4) << "accuracy: before " << *accuracy_before << " after "
               << *accuracy_after << " (" << std::setprecision(2)
               << (*accuracy_before - *accuracy_after) * 100.0 << " pts drop)\n";
        }
        return os.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["flops_convention"] = flops_convention_name(convention);
        j["layers"] = nlohmann::json::array();
        for (const auto& row : layers) {
            nlohmann::json r;
            r["index"] = row.index;
            r["kind_before"] = row.kind_before;
            r["kind_after"] = row.kind_after;
            r["macs_before"] = row.before.macs;
            r["macs_after"] = row.after.macs;
            r["flops_before"] = flops(row.before.macs);
            r["flops_after"] = flops(row.after.macs);
            r["params_before"] = row.before.params;
            r["params_after"] = row.after.params;
            r["filters_before"] = row.before.filters;
            r["filters_after"] = row.after.filters;
            j["layers"].push_back(r);
        }
        j["totals"] = {{"macs_before", total_before.macs},
                       {"macs_after", total_after.macs},
                       {"flops_before", flops(total_before.macs)},
                       {"flops_after", flops(total_after.macs)},
                       {"params_before", total_before.params},
                       {"params_after", total_after.params},
                       {"filters_before", total_before.filters},
                       {"filters_after", total_after.filters}};
        j["derived"] = {{"flops_reduction_pct", flops_reduction_pct},
                        {"params_reduction_pct", params_reduction_pct},
                        {"filters_reduction_pct", filters_reduction_pct},
                        {"speedup_ratio", speedup_ratio}};
        if (accuracy_before && accuracy_after)
            j["accuracy"] = {{"before", *accuracy_before}, {"after", *accuracy_after}};
        return j;
    }
};

namespace detail {

inline double reduction_pct(std::uint64_t before, std::uint64_t after) {
    if (before == 0) return 0.0;
    return 100.0 * (1.0 - static_cast<double>(after) / static_cast<double>(before));
}

}  // namespace detail

// Side-by-side cost report for two networks fed the same input shape.
// Speedup is total MACs of `a` over total MACs of `b`.
inline MetricsReport compare(const Network& a, const Network& b,
                             const std::vector<std::size_t>& input_shape,
                             std::optional<std::pair<double, double>> accuracies = std::nullopt,
                             FlopsConvention convention = FlopsConvention::Mac) {
    if (a.size() != b.size())
        throw DimensionError("compare: networks have different layer counts (" +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    const auto trace_a = a.shape_trace(input_shape);
    const auto trace_b = b.shape_trace(input_shape);

    MetricsReport rep;
    rep.convention = convention;
    for (std::size_t i = 0; i < a.size(); ++i) {
        LayerRow row;
        row.index = i;
        row.kind_before = layer_kind_name(a.layer(i).kind());
        row.kind_after = layer_kind_name(b.layer(i).kind());
        row.before = count_layer(a.layer(i), trace_a[i]);
        row.after = count_layer(b.layer(i), trace_b[i]);
        rep.total_before.macs += row.before.macs;
        rep.total_before.params += row.before.params;
        rep.total_before.filters += row.before.filters;
        rep.total_after.macs += row.after.macs;
        rep.total_after.params += row.after.params;
        rep.total_after.filters += row.after.filters;
        rep.layers.push_back(std::move(row));
    }
    rep.flops_reduction_pct = detail::reduction_pct(rep.total_before.macs, rep.total_after.macs);
    rep.params_reduction_pct =
        detail::reduction_pct(rep.total_before.params, rep.total_after.params);
    rep.filters_reduction_pct =
        detail::reduction_pct(rep.total_before.filters, rep.total_after.filters);
    rep.speedup_ratio = static_cast<double>(rep.total_before.macs) /
                        static_cast<double>(rep.total_after.macs);
    if (accuracies) {
        rep.accuracy_before = accuracies->first;
        rep.accuracy_after = accuracies->second;
    }
    return rep;
}

struct BenchResult {
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
};

// Wall-clock statistics over repeated forward passes on one fixed random
// input. One warmup pass runs first and is excluded.
inline BenchResult bench_inference(Network& net, const std::vector<std::size_t>& input_shape,
                                   std::size_t repetitions) {
    if (repetitions < 3)
        throw std::invalid_argument("bench_inference: repetitions must be >= 3");
    Rng rng(0x5eedU);
    Tensor input(input_shape);
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.uniform(0.0, 1.0);

    net.forward(input);  // warmup
    std::vector<double> ms;
    ms.reserve(repetitions);
    for (std::size_t r = 0; r < repetitions; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        net.forward(input);
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    BenchResult res;
    for (double v : ms) res.mean_ms += v;
    res.mean_ms /= static_cast<double>(repetitions);
    std::sort(ms.begin(), ms.end());
    res.p50_ms = ms[(repetitions - 1) * 50 / 100];
    res.p95_ms = ms[(repetitions - 1) * 95 / 100];
    return res;
}

}  // namespace bcnn
