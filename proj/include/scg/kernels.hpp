#pragma once

// Raw numeric kernels behind the tensor ops. The OpenMP versions are what the
// library runs; scg::kernels::serial keeps straightforward loop nests used as
// test oracles and benchmark baselines.

#include <cstddef>
#include <cstdint>

namespace scg::kernels {

/// Element count below which loops stay single-threaded.
inline constexpr std::ptrdiff_t kParallelGrain = 1 << 14;

template <typename F>
inline void parallel_for(std::ptrdiff_t n, F&& body)
{
#pragma omp parallel for schedule(static) if (n >= kParallelGrain)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        body(i);
}

/// Coarse-grained variant for loops whose iterations are already heavy
/// (image planes, matrix rows).
template <typename F>
inline void parallel_for_coarse(std::ptrdiff_t n, F&& body)
{
#pragma omp parallel for schedule(static) if (n > 1)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        body(i);
}

/// Row-major C[M×N] = alpha·op(A)·op(B) + beta·C, with op(X) = Xᵀ when the
/// matching flag is set. lda/ldb/ldc are row strides of the stored matrices.
/// beta == 0 overwrites C without reading it. Each C entry is reduced over k
/// in a fixed order, so results do not depend on the thread count.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, T alpha, const T* A,
          std::size_t lda, const T* B, std::size_t ldb, T beta, T* C, std::size_t ldc);

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kernel, stride, padding;
    std::size_t out_height, out_width;
    bool replicate = false; // out-of-range taps read the nearest border pixel instead of 0
};

/// Unfold one C×H×W image into a (C·k·k)×(OH·OW) column matrix.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* columns);

/// Adjoint of im2col: accumulates columns back into the image buffer.
template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* image);

namespace serial {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, T alpha, const T* A,
          std::size_t lda, const T* B, std::size_t ldb, T beta, T* C, std::size_t ldc);

/// Direct cross-correlation of one image: out[O×OH×OW] = W ⋆ x + bias.
/// `bias` may be null.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t out_channels, const T* image, const T* weight, const T* bias,
                    T* out);

/// Direct adjoint of conv2d_forward; accumulates into grad_image/grad_weight.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t out_channels, const T* image, const T* weight,
                     const T* grad_out, T* grad_image, T* grad_weight);

} // namespace serial
} // namespace scg::kernels
