#pragma once
// SCG-Net: backbone → SCG → GNN¹ → GNN² → optional residual sum → projection.

#include <cstdint>

#include "scg/config.hpp"

namespace scg {

template <typename T>
struct ForwardOutput {
    Tensor<T> logits;       // [N, c, H0, W0]
    Tensor<T> node_logits;  // [N, n, c] after the optional residual sum
    Tensor<T> feature_map;  // F [N, d_f, h, w]
    Tensor<T> normalized;   // Â [N, n, n]; undefined when no GCN slot
    Tensor<T> hidden;       // Z⁽¹⁾ [N, n, d]
    Tensor<T> prediction;   // Z⁽²⁾ [N, n, c]
    ScgOutput<T> scg;
};

template <typename T>
class ScgNet {
public:
    ScgNet() = default;
    /// Parameters are drawn from an RNG seeded with `seed`.
    ScgNet(const ModelConfig& config, std::uint64_t seed);

    /// images [N, 3, H0, W0] in [0, 1], H0 and W0 divisible by 16.
    ForwardOutput<T> forward(const Tensor<T>& images, Mode mode, Rng& noise_rng);

    /// Learnable tensors and buffers in a fixed order (the checkpoint order).
    ParameterRegistry<T> registry() const;
    std::size_t parameter_count() const { return registry().parameter_count(); }

    const ModelConfig& config() const { return config_; }

    Backbone<T> backbone;
    ScgModule<T> scg;
    GraphLayer<T> gnn1;
    GraphLayer<T> gnn2;

private:
    ModelConfig config_;
};

/// Parameter totals per registry prefix ("backbone", "scg/mean_head",
/// "gnn1", ...). Batch-norm affine terms of the GNN slots are listed under
/// "<slot>/bn" and excluded from the slot total.
struct ParameterBreakdown {
    std::size_t backbone = 0;
    std::size_t mean_head = 0;
    std::size_t deviation_head = 0;
    std::size_t gnn1 = 0;
    std::size_t gnn1_bn = 0;
    std::size_t gnn2 = 0;
    std::size_t gnn2_bn = 0;
    std::size_t total = 0;
};

template <typename T>
ParameterBreakdown parameter_breakdown(const ScgNet<T>& model);

extern template class ScgNet<float>;
extern template class ScgNet<double>;

} // namespace scg
