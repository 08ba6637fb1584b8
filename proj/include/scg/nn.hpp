#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "scg/ops.hpp"

namespace scg {

using Rng = std::mt19937_64;

/// Optimizer treatment of a parameter: weights are decayed, biases get the
/// boosted learning rate, batch-norm affine terms get neither.
enum class ParamGroup { weight, bias, batch_norm };

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
    ParamGroup group = ParamGroup::weight;
};

/// Flat, ordered view of a model's learnable tensors plus its non-learnable
/// buffers (batch-norm running statistics). Order is registration order and
/// defines the checkpoint manifest.
template <typename T>
class ParameterRegistry {
public:
    void add(std::string name, Tensor<T> t, ParamGroup group)
    {
        params_.push_back({std::move(name), std::move(t), group});
    }
    void add_buffer(std::string name, Tensor<T> t) { buffers_.push_back({std::move(name), std::move(t)}); }

    const std::vector<NamedTensor<T>>& parameters() const { return params_; }
    const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& p : params_)
            n += p.tensor.numel();
        return n;
    }

    void zero_grad()
    {
        for (auto& p : params_)
            p.tensor.zero_grad();
    }

private:
    std::vector<NamedTensor<T>> params_;
    std::vector<NamedTensor<T>> buffers_;
};

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double stddev)
{
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.values())
        v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double bound)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.values())
        v = static_cast<T>(dist(rng));
}

template <typename T>
struct Conv2dLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
    PadMode pad_mode = PadMode::zeros;

    Conv2dLayer() = default;
    Conv2dLayer(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, bool with_bias, Rng& rng,
                PadMode pad_mode_ = PadMode::zeros)
        : weight(Shape{out, in, kernel, kernel}, T(0), true), stride(stride_), padding(kernel / 2), pad_mode(pad_mode_)
    {
        // He-normal for ReLU stacks.
        fill_normal(weight, rng, std::sqrt(2.0 / static_cast<double>(in * kernel * kernel)));
        if (with_bias)
            bias = Tensor<T>(Shape{out}, T(0), true);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding, pad_mode); }

    void collect(ParameterRegistry<T>& reg, const std::string& prefix) const
    {
        reg.add(prefix + "/weight", weight, ParamGroup::weight);
        if (bias.defined())
            reg.add(prefix + "/bias", bias, ParamGroup::bias);
    }
};

template <typename T>
struct BatchNormLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    BatchNormState<T> state;
    std::size_t axis = 1;

    BatchNormLayer() = default;
    BatchNormLayer(std::size_t features, std::size_t axis_)
        : weight(Shape{features}, T(1), true), bias(Shape{features}, T(0), true), state(features), axis(axis_)
    {
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) { return batch_norm(x, weight, bias, state, axis, mode); }

    void collect(ParameterRegistry<T>& reg, const std::string& prefix) const
    {
        reg.add(prefix + "/weight", weight, ParamGroup::batch_norm);
        reg.add(prefix + "/bias", bias, ParamGroup::batch_norm);
        reg.add_buffer(prefix + "/running_mean", state.running_mean);
        reg.add_buffer(prefix + "/running_var", state.running_var);
    }
};

} // namespace scg
