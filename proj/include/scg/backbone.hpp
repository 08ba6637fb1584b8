#pragma once

#include <vector>

#include "scg/nn.hpp"

namespace scg {

/// Stride-16 CNN front end: one stride-2 3×3 conv + BN + ReLU per stage,
/// then a 1×1 projection (+ BN + ReLU) to the feature width.
struct BackboneConfig {
    std::vector<std::size_t> stage_widths{32, 64, 128, 256};
    std::size_t feature_width = 256;

    static constexpr std::size_t kStride = 16;
};

template <typename T>
class Backbone {
public:
    Backbone() = default;
    Backbone(const BackboneConfig& config, Rng& rng);

    /// image [N,3,H0,W0] with H0, W0 divisible by 16 -> [N,d_f,H0/16,W0/16].
    Tensor<T> forward(const Tensor<T>& image, Mode mode);

    void collect(ParameterRegistry<T>& reg, const std::string& prefix = "backbone") const;
    const BackboneConfig& config() const { return config_; }

private:
    BackboneConfig config_;
    std::vector<Conv2dLayer<T>> convs_;
    std::vector<BatchNormLayer<T>> norms_;
    Conv2dLayer<T> head_;
    BatchNormLayer<T> head_norm_;
};

extern template class Backbone<float>;
extern template class Backbone<double>;

} // namespace scg
