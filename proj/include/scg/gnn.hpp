#pragma once

// Message-propagation layers over a weighted adjacency. Inputs are single
// graphs (A [n,n], Z [n,d]) or batches (A [N,n,n], Z [N,n,d]).

#include <optional>
#include <string>

#include "scg/nn.hpp"

namespace scg {

enum class GnnKind { gcn, gin };

std::string to_string(GnnKind k);
GnnKind parse_gnn_kind(const std::string& s);

/// Â = D^(−1/2)(A+I)D^(−1/2) with D the row sums of A+I. `literal` selects
/// D^(−1/2)(A+I)D^(+1/2) instead.
template <typename T>
Tensor<T> normalize_adjacency(const Tensor<T>& adjacency, bool literal = false);

/// Shared parts of both layer kinds: a linear map θ [d_in,d_out] plus bias,
/// followed by optional batch norm and ReLU (BN before ReLU).
template <typename T>
struct GraphLinear {
    Tensor<T> weight;
    Tensor<T> bias;
    std::optional<BatchNormLayer<T>> norm;
    bool activation = true;

    GraphLinear() = default;
    GraphLinear(std::size_t d_in, std::size_t d_out, bool activation, bool batch_norm, Rng& rng);

    std::size_t in_width() const { return weight.size(0); }
    std::size_t out_width() const { return weight.size(1); }
    Tensor<T> finish(const Tensor<T>& pre, Mode mode);
    void collect(ParameterRegistry<T>& reg, const std::string& prefix) const;
};

template <typename T>
class GcnLayer {
public:
    GcnLayer() = default;
    GcnLayer(std::size_t d_in, std::size_t d_out, bool activation, bool batch_norm, Rng& rng)
        : linear(d_in, d_out, activation, batch_norm, rng)
    {
    }

    /// δ(Â·Z·θ + bias); `normalized` must already be Â.
    Tensor<T> forward(const Tensor<T>& normalized, const Tensor<T>& z, Mode mode);
    void collect(ParameterRegistry<T>& reg, const std::string& prefix) const { linear.collect(reg, prefix); }

    GraphLinear<T> linear;
};

template <typename T>
class GinLayer {
public:
    GinLayer() = default;
    GinLayer(std::size_t d_in, std::size_t d_out, bool activation, bool batch_norm, Rng& rng)
        : linear(d_in, d_out, activation, batch_norm, rng), omega(Shape{1}, T(0), true)
    {
    }

    /// δ(((1+ω)·I + A)·Z·θ + bias) on the raw adjacency.
    Tensor<T> forward(const Tensor<T>& adjacency, const Tensor<T>& z, Mode mode);
    void collect(ParameterRegistry<T>& reg, const std::string& prefix) const;

    GraphLinear<T> linear;
    Tensor<T> omega;
};

/// One GNN slot of the decoder; dispatches on kind.
template <typename T>
class GraphLayer {
public:
    GraphLayer() = default;
    GraphLayer(GnnKind kind, std::size_t d_in, std::size_t d_out, bool activation, bool batch_norm, Rng& rng);

    GnnKind kind() const { return kind_; }
    /// GCN consumes `normalized`, GIN consumes `raw`.
    Tensor<T> forward(const Tensor<T>& raw, const Tensor<T>& normalized, const Tensor<T>& z, Mode mode);
    void collect(ParameterRegistry<T>& reg, const std::string& prefix) const;

private:
    GnnKind kind_ = GnnKind::gcn;
    GcnLayer<T> gcn_;
    GinLayer<T> gin_;
};

extern template class GcnLayer<float>;
extern template class GcnLayer<double>;
extern template class GinLayer<float>;
extern template class GinLayer<double>;
extern template class GraphLayer<float>;
extern template class GraphLayer<double>;

} // namespace scg
