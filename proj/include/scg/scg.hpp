#pragma once

// Self-constructing graph: encode a feature map into latent node embeddings,
// decode a weighted adjacency from their inner products, and emit the
// regularizers, residual embedding and adaptive factor that go with it.
//
// Matrix arguments are [n, c] for one graph or [N, n, c] for a batch; every
// quantity is per sample and batch losses are averaged over samples.

#include <string>
#include <vector>

#include "scg/nn.hpp"

namespace scg {

enum class ScgVariant { variational, ae, directed };

std::string to_string(ScgVariant v);
/// Accepts "variational", "ae", "directed"; DataError otherwise.
ScgVariant parse_scg_variant(const std::string& s);

template <typename T>
struct ScgEncoding {
    Tensor<T> mean;      // M [N,n,c]; the embedding Z itself for the AE variant
    Tensor<T> log_sigma; // log Σ [N,n,c], clamped to ≤ 1; undefined for AE
    Tensor<T> features;  // X [N,n,d_f]
};

template <typename T>
struct ScgOutput {
    Tensor<T> adjacency;     // enhanced A' [N,n,n]
    Tensor<T> features;      // X [N,n,d_f]
    Tensor<T> residual;      // enhanced Ẑ' = γ·Ẑ [N,n,c]
    std::vector<T> gamma;    // γ per sample
    Tensor<T> kl_loss;       // rank-0; undefined for the AE variant
    Tensor<T> dl_loss;       // rank-0
    Tensor<T> embedding;     // Z [N,n,c]
    Tensor<T> raw_adjacency; // A before enhancement
    ScgEncoding<T> encoding;
};

/// Z = M + exp(log Σ) ⊙ Υ with caller-provided noise Υ (same shape as M).
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mean, const Tensor<T>& log_sigma, const Tensor<T>& noise);

/// Train mode draws Υ ~ N(0, I) from `rng`; eval mode uses Υ = 0, i.e. Z = M.
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mean, const Tensor<T>& log_sigma, Mode mode, Rng& rng);

/// −1/(2nc) Σ (1 + 2·log σ − M² − σ²), averaged over the batch.
template <typename T>
Tensor<T> kl_loss(const Tensor<T>& mean, const Tensor<T>& log_sigma);

/// Ẑ = M ⊙ (1 − log Σ).
template <typename T>
Tensor<T> residual_embedding(const Tensor<T>& mean, const Tensor<T>& log_sigma);

/// Undirected: ReLU(Z Zᵀ). Directed: ReLU(softmax_rows(Z) Zᵀ).
template <typename T>
Tensor<T> build_adjacency(const Tensor<T>& embedding, bool directed);

/// γ = √(1 + n / (Σᵢ Aᵢᵢ + ε)) per sample, from the pre-enhancement diagonal.
template <typename T>
std::vector<T> adaptive_factor(const Tensor<T>& adjacency, T eps);

/// −(γ/n²) Σᵢ log(clamp(Aᵢᵢ, 0, 1) + ε) averaged over the batch, γ held fixed.
template <typename T>
Tensor<T> diagonal_log_loss(const Tensor<T>& adjacency, const std::vector<T>& gamma, T eps);

template <typename T>
struct FactorAndLoss {
    std::vector<T> gamma;
    Tensor<T> dl_loss;
};

/// Both of the above; γ is a constant for backprop.
template <typename T>
FactorAndLoss<T> adaptive_factor_and_dl_loss(const Tensor<T>& adjacency, T eps);

template <typename T>
struct Enhanced {
    Tensor<T> adjacency;
    Tensor<T> residual;
};

/// A' = A + γ·diag(A) and Ẑ' = γ·Ẑ, γ taken per sample.
template <typename T>
Enhanced<T> adaptive_enhance(const Tensor<T>& adjacency, const Tensor<T>& residual, const std::vector<T>& gamma);

struct ScgConfig {
    ScgVariant variant = ScgVariant::variational;
    std::size_t feature_width = 256; // d_f
    std::size_t classes = 6;         // c, the embedding width
    std::size_t nodes_h = 28;
    std::size_t nodes_w = 28;
    double epsilon = 1e-7;

    std::size_t nodes() const { return nodes_h * nodes_w; }
};

template <typename T>
class ScgModule {
public:
    ScgModule() = default;
    ScgModule(const ScgConfig& config, Rng& rng);

    /// F [N,d_f,h,w] -> pooled, flattened node features and the Gaussian heads.
    ScgEncoding<T> encode(const Tensor<T>& feature_map) const;
    ScgOutput<T> forward(const Tensor<T>& feature_map, Mode mode, Rng& noise_rng) const;

    void collect(ParameterRegistry<T>& reg, const std::string& prefix = "scg") const;
    const ScgConfig& config() const { return config_; }

    Conv2dLayer<T> mean_head;      // 3×3, d_f -> c
    Conv2dLayer<T> deviation_head; // 1×1, d_f -> c; absent for AE

private:
    ScgConfig config_;
};

extern template class ScgModule<float>;
extern template class ScgModule<double>;

} // namespace scg
