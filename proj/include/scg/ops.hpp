#pragma once

// Differentiable tensor operations. Every function records a backward rule
// when grad mode is on and an input requires a gradient. Image ops use NCHW
// layout; matrix ops accept an optional leading batch axis.

#include <optional>

#include "scg/tensor.hpp"

namespace scg {

// Elementwise, same-shape operands.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> neg(const Tensor<T>& a);

/// a · s where s is a single-element tensor (learnable scalars such as GIN's ω).
template <typename T> Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s);

/// Adds bias[c] along `axis` (length of that axis must equal bias.numel()).
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis);

/// 2D×2D, batched 3D×3D, or 3D×2D (right operand shared across the batch).
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Collapses axes [start, rank) into one.
template <typename T> Tensor<T> flatten(const Tensor<T>& a, std::size_t start = 0);

template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
/// Natural log; NumericError on any non-positive entry.
template <typename T> Tensor<T> log(const Tensor<T>& a);
/// log(a + eps); NumericError when a + eps is non-positive.
template <typename T> Tensor<T> log_eps(const Tensor<T>& a, T eps);
/// Gradient flows only where lo ≤ a ≤ hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);
template <typename T> Tensor<T> clamp_max(const Tensor<T>& a, T hi);

template <typename T> Tensor<T> softmax(const Tensor<T>& a, std::size_t axis);
/// Row softmax over the last axis.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& a);

/// Full reductions to a rank-0 tensor.
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
/// Reduces one axis away.
template <typename T> Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis);

/// Main diagonal of the trailing square matrices: [..., n, n] -> [..., n].
template <typename T> Tensor<T> diagonal(const Tensor<T>& a);

/// Border handling for padded convolutions: zeros, or the nearest edge pixel.
enum class PadMode { zeros, replicate };

/// Cross-correlation. input [N,Cin,H,W], kernel [Cout,Cin,k,k] with odd k,
/// bias [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding, PadMode pad_mode = PadMode::zeros);

/// input [N,C,H,W]; output window i spans floor(i·H/oh) .. ceil((i+1)·H/oh).
template <typename T> Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

/// input [N,C,H,W], upscaling only.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w, bool align_corners = true);

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    explicit BatchNormState(std::size_t features = 1)
        : running_mean(Shape{features}, T(0)), running_var(Shape{features}, T(1))
    {
    }
};

enum class Mode { train, eval };

/// Normalizes per feature along `axis`, reducing over every other axis.
/// Train mode uses batch statistics and updates the running estimates
/// (unbiased variance); eval mode uses the running estimates.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, BatchNormState<T>& state,
                     std::size_t axis, Mode mode);

} // namespace scg
