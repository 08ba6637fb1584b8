#include "scg/backbone.hpp"

#include "scg/error.hpp"

namespace scg {

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, Rng& rng) : config_(config)
{
    // Four halvings give the fixed total stride of 16.
    if (config.stage_widths.size() != 4)
        throw DataError("backbone needs exactly 4 stage widths, got " + std::to_string(config.stage_widths.size()));
    std::size_t in = 3;
    for (std::size_t i = 0; i < config.stage_widths.size(); ++i) {
        const std::size_t out = config.stage_widths[i];
        convs_.emplace_back(in, out, 3, 2, false, rng, PadMode::replicate);
        norms_.emplace_back(out, 1);
        in = out;
    }
    head_ = Conv2dLayer<T>(in, config.feature_width, 1, 1, false, rng);
    head_norm_ = BatchNormLayer<T>(config.feature_width, 1);
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& image, Mode mode)
{
    if (image.rank() != 4 || image.size(1) != 3)
        throw DimensionError("backbone expects images [N,3,H,W], got " + shape_str(image.shape()));
    const std::size_t h = image.size(2), w = image.size(3);
    if (h % BackboneConfig::kStride != 0 || w % BackboneConfig::kStride != 0)
        throw DimensionError("backbone input " + std::to_string(h) + "x" + std::to_string(w) +
                             " is not divisible by 16; pad the image to a multiple of 16");
    Tensor<T> x = image;
    for (std::size_t i = 0; i < convs_.size(); ++i)
        x = relu(norms_[i].forward(convs_[i].forward(x), mode));
    return relu(head_norm_.forward(head_.forward(x), mode));
}

template <typename T>
void Backbone<T>::collect(ParameterRegistry<T>& reg, const std::string& prefix) const
{
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::string stage = prefix + "/stage" + std::to_string(i + 1);
        convs_[i].collect(reg, stage + "/conv");
        norms_[i].collect(reg, stage + "/bn");
    }
    head_.collect(reg, prefix + "/head/conv");
    head_norm_.collect(reg, prefix + "/head/bn");
}

template class Backbone<float>;
template class Backbone<double>;

} // namespace scg
