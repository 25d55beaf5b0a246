#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "bcnn/layers.hpp"

namespace bcnn {

// Sequential network. Owns its layers; copy via clone().
class Network {
public:
    explicit Network(std::vector<std::size_t> input_shape)
        : input_shape_(std::move(input_shape)) {}

    Network(Network&&) = default;
    Network& operator=(Network&&) = default;
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    void replace(std::size_t index, std::unique_ptr<Layer> layer) {
        layers_.at(index) = std::move(layer);
    }

    std::size_t size() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_.at(i); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }

    const std::vector<std::size_t>& input_shape() const { return input_shape_; }

    // Shape of each layer's input when fed `in`; entry i feeds layer i, the
    // final entry is the network output shape.
    std::vector<std::vector<std::size_t>> shape_trace(const std::vector<std::size_t>& in) const {
        std::vector<std::vector<std::size_t>> trace;
        trace.reserve(layers_.size() + 1);
        trace.push_back(in);
        for (const auto& l : layers_) trace.push_back(l->output_shape(trace.back()));
        return trace;
    }

    std::vector<std::size_t> output_shape() const { return shape_trace(input_shape_).back(); }

    Tensor forward(const Tensor& x) {
        Tensor cur = x;
        for (auto& l : layers_) cur = l->forward(cur);
        return cur;
    }

    void backward(const Tensor& grad_out) {
        Tensor g = grad_out;
        for (std::size_t i = layers_.size(); i > 0; --i) g = layers_[i - 1]->backward(g);
    }

    void zero_grads() {
        for (auto& l : layers_) l->zero_grads();
    }

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (auto& l : layers_)
            for (Tensor* p : l->parameters()) out.push_back(p);
        return out;
    }

    Network clone() const {
        Network copy(input_shape_);
        for (const auto& l : layers_) copy.add(l->clone());
        return copy;
    }

private:
    std::vector<std::size_t> input_shape_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

// The 3-conv-block reference classifier used across the toolkit.
inline Network make_reference_net(const std::vector<std::size_t>& input_shape,
                                  std::size_t classes, Rng& rng) {
    if (input_shape.size() != 3)
        throw DimensionError("reference net: input must be [C,H,W], got " +
                             detail::shape_string(input_shape));
    Network net(input_shape);
    net.add(std::make_unique<ConvLayer>(16, input_shape[0], 5, 1, 2, rng));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPoolLayer>(2, 2));
    net.add(std::make_unique<ConvLayer>(48, 16, 3, 1, 1, rng));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPoolLayer>(2, 2));
    net.add(std::make_unique<ConvLayer>(48, 48, 3, 1, 1, rng));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPoolLayer>(2, 2));
    net.add(std::make_unique<FlattenLayer>());
    std::size_t flat = 1;
    for (std::size_t e : net.shape_trace(input_shape)[10]) flat *= e;
    net.add(std::make_unique<DenseLayer>(flat, classes, rng));
    return net;
}

// Single conv block; handy for smoke tests.
inline Network make_tiny_net(const std::vector<std::size_t>& input_shape, std::size_t classes,
                             Rng& rng) {
    if (input_shape.size() != 3)
        throw DimensionError("tiny net: input must be [C,H,W], got " +
                             detail::shape_string(input_shape));
    Network net(input_shape);
    net.add(std::make_unique<ConvLayer>(6, input_shape[0], 3, 1, 1, rng));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<MaxPoolLayer>(2, 2));
    net.add(std::make_unique<FlattenLayer>());
    std::size_t flat = 1;
    for (std::size_t e : net.shape_trace(input_shape)[4]) flat *= e;
    net.add(std::make_unique<DenseLayer>(flat, classes, rng));
    return net;
}

}  // namespace bcnn
