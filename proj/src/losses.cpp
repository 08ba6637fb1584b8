#include "scg/losses.hpp"

#include <string>

#include "scg/error.hpp"
#include "scg/ops.hpp"

namespace scg {

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& one_hot, std::size_t class_axis)
{
    if (probs.shape() != one_hot.shape())
        throw DimensionError("dice_loss: prediction " + shape_str(probs.shape()) + " vs labels " +
                             shape_str(one_hot.shape()));
    if (class_axis >= probs.rank())
        throw DimensionError("dice_loss: class axis out of range");

    const auto label_mass = sum_axis(one_hot, class_axis);
    Tensor<T> mask(label_mass.shape());
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < mask.numel(); ++i)
        if (label_mass[i] > T(0)) {
            mask.values()[i] = T(1);
            ++labeled;
        }
    if (labeled == 0)
        throw DataError("dice_loss: no labeled nodes");

    const auto overlap = mul_scalar(sum_axis(mul(one_hot, probs), class_axis), T(2));
    const auto denom = add(label_mass, sum_axis(probs, class_axis));
    const auto ratio = mul(div(overlap, denom), mask);
    return add_scalar(mul_scalar(sum(ratio), T(-1) / static_cast<T>(labeled)), T(1));
}

template <typename T>
Tensor<T> one_hot_labels(std::span<const std::uint8_t> labels, std::size_t batch, std::size_t classes,
                         std::size_t height, std::size_t width, std::optional<std::uint8_t> ignore_index)
{
    const std::size_t plane = height * width;
    if (labels.size() != batch * plane)
        throw DimensionError("one_hot_labels: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(batch) + "x" + std::to_string(height) + "x" + std::to_string(width));
    Tensor<T> out(Shape{batch, classes, height, width});
    auto v = out.values();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < plane; ++p) {
            const auto l = labels[b * plane + p];
            if (ignore_index && l == *ignore_index)
                continue;
            if (l >= classes)
                throw DataError("label " + std::to_string(l) + " at sample " + std::to_string(b) + " pixel (" +
                                std::to_string(p % width) + "," + std::to_string(p / width) +
                                ") exceeds max class index " + std::to_string(classes - 1));
            v[(b * classes + l) * plane + p] = T(1);
        }
    return out;
}

template <typename T>
Tensor<T> dice_loss_from_logits(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                std::optional<std::uint8_t> ignore_index)
{
    if (logits.rank() != 4)
        throw DimensionError("dice_loss_from_logits: expected [N,c,H,W], got " + shape_str(logits.shape()));
    const auto& s = logits.shape();
    const auto y = one_hot_labels<T>(labels, s[0], s[1], s[2], s[3], ignore_index);
    return dice_loss(softmax(logits, 1), y, 1);
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& dice, const Tensor<T>& kl, const Tensor<T>& dl, LossToggles toggles)
{
    Tensor<T> out = dice;
    if (toggles.kl && kl.defined())
        out = add(out, kl);
    if (toggles.dl && dl.defined())
        out = add(out, dl);
    return out;
}

#define SCG_INSTANTIATE_LOSSES(T)                                                                                      \
    template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&, std::size_t);                                     \
    template Tensor<T> one_hot_labels(std::span<const std::uint8_t>, std::size_t, std::size_t, std::size_t,           \
                                      std::size_t, std::optional<std::uint8_t>);                                      \
    template Tensor<T> dice_loss_from_logits(const Tensor<T>&, std::span<const std::uint8_t>,                         \
                                             std::optional<std::uint8_t>);                                            \
    template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, LossToggles);

SCG_INSTANTIATE_LOSSES(float)
SCG_INSTANTIATE_LOSSES(double)

} // namespace scg
