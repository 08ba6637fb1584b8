#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "scg/tensor.hpp"

namespace scg {

/// 1 − (1/|Y|) Σᵢ 2Σⱼ yᵢⱼ ỹᵢⱼ / (Σⱼ yᵢⱼ + Σⱼ ỹᵢⱼ).
///
/// `probs` and `one_hot` share a shape; `class_axis` indexes the class
/// dimension and every other axis enumerates nodes. Rows whose label sums to
/// zero are unlabeled and excluded from Y. DataError if Y is empty.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& one_hot, std::size_t class_axis);

/// Softmax over axis 1 of `logits` [N,c,H,W] followed by dice against the
/// index labels (N·H·W values, row-major). Pixels equal to `ignore_index`
/// are unlabeled; any other value ≥ c raises DataError.
template <typename T>
Tensor<T> dice_loss_from_logits(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                std::optional<std::uint8_t> ignore_index = std::nullopt);

/// One-hot [N,c,H,W] from index labels; ignored pixels get an all-zero row.
template <typename T>
Tensor<T> one_hot_labels(std::span<const std::uint8_t> labels, std::size_t batch, std::size_t classes,
                         std::size_t height, std::size_t width, std::optional<std::uint8_t> ignore_index);

struct LossToggles {
    bool kl = true;
    bool dl = true;
};

/// L_dice + L_kl + L_dl; disabled or undefined terms contribute nothing.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& dice, const Tensor<T>& kl, const Tensor<T>& dl, LossToggles toggles);

} // namespace scg
