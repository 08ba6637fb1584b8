#include "scg/kernels.hpp"

#include <algorithm>
#include <vector>

namespace scg::kernels {

namespace {

// Register tile: MR rows of op(A) against NR columns of op(B). NR spans two
// 512-bit vectors for either precision.
template <typename T>
struct Blocking {
    static constexpr std::size_t MR = 6;
    static constexpr std::size_t NR = 128 / sizeof(T);
    static constexpr std::size_t KC = 256;
    static constexpr std::size_t MC = 120;
    static constexpr std::size_t NC = 2048;
};

template <typename T>
struct Vec64;
template <>
struct Vec64<float> {
    typedef float type __attribute__((vector_size(64)));
};
template <>
struct Vec64<double> {
    typedef double type __attribute__((vector_size(64)));
};

template <typename T>
void pack_a(bool trans, const T* A, std::size_t lda, std::size_t i0, std::size_t mc, std::size_t k0, std::size_t kc,
            T* out)
{
    constexpr std::size_t MR = Blocking<T>::MR;
    for (std::size_t ip = 0; ip < mc; ip += MR) {
        const std::size_t rows = std::min(MR, mc - ip);
        for (std::size_t k = 0; k < kc; ++k) {
            T* dst = out + ip * kc + k * MR;
            for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t r = i0 + ip + i;
                const std::size_t c = k0 + k;
                dst[i] = trans ? A[c * lda + r] : A[r * lda + c];
            }
            for (std::size_t i = rows; i < MR; ++i)
                dst[i] = T(0);
        }
    }
}

template <typename T>
void pack_b(bool trans, const T* B, std::size_t ldb, std::size_t k0, std::size_t kc, std::size_t j0, std::size_t nc,
            T* out)
{
    constexpr std::size_t NR = Blocking<T>::NR;
    const std::ptrdiff_t panels = static_cast<std::ptrdiff_t>((nc + NR - 1) / NR);
#pragma omp parallel for schedule(static) if (panels > 4)
    for (std::ptrdiff_t p = 0; p < panels; ++p) {
        const std::size_t jp = static_cast<std::size_t>(p) * NR;
        const std::size_t cols = std::min(NR, nc - jp);
        T* dst = out + jp * kc;
        for (std::size_t k = 0; k < kc; ++k) {
            const std::size_t r = k0 + k;
            T* row = dst + k * NR;
            if (!trans) {
                const T* src = B + r * ldb + j0 + jp;
                std::copy(src, src + cols, row);
            } else {
                for (std::size_t j = 0; j < cols; ++j)
                    row[j] = B[(j0 + jp + j) * ldb + r];
            }
            std::fill(row + cols, row + NR, T(0));
        }
    }
}

template <typename T>
inline void micro_kernel(std::size_t kc, const T* __restrict a, const T* __restrict b, T* __restrict acc)
{
    constexpr std::size_t MR = Blocking<T>::MR;
    constexpr std::size_t NR = Blocking<T>::NR;
    // Two 64-byte vectors per accumulator row, kept in registers.
    using V = typename Vec64<T>::type;
    constexpr std::size_t L = 64 / sizeof(T);
    V c0[MR] = {};
    V c1[MR] = {};
    for (std::size_t k = 0; k < kc; ++k) {
        V b0, b1;
        __builtin_memcpy(&b0, b + k * NR, sizeof(V));
        __builtin_memcpy(&b1, b + k * NR + L, sizeof(V));
        const T* ak = a + k * MR;
#pragma GCC unroll 6
        for (std::size_t i = 0; i < MR; ++i) {
            c0[i] += ak[i] * b0;
            c1[i] += ak[i] * b1;
        }
    }
    for (std::size_t i = 0; i < MR; ++i) {
        __builtin_memcpy(acc + i * NR, &c0[i], sizeof(V));
        __builtin_memcpy(acc + i * NR + L, &c1[i], sizeof(V));
    }
}

} // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, T alpha, const T* A,
          std::size_t lda, const T* B, std::size_t ldb, T beta, T* C, std::size_t ldc)
{
    using Bk = Blocking<T>;
    if (M == 0 || N == 0)
        return;
    if (K == 0) {
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j)
                C[i * ldc + j] = beta == T(0) ? T(0) : beta * C[i * ldc + j];
        return;
    }

    std::vector<T> bpack(Bk::KC * ((std::min(N, Bk::NC) + Bk::NR - 1) / Bk::NR) * Bk::NR);
    for (std::size_t jc = 0; jc < N; jc += Bk::NC) {
        const std::size_t nc = std::min(Bk::NC, N - jc);
        for (std::size_t pc = 0; pc < K; pc += Bk::KC) {
            const std::size_t kc = std::min(Bk::KC, K - pc);
            const bool first = pc == 0;
            pack_b(trans_b, B, ldb, pc, kc, jc, nc, bpack.data());

            const std::ptrdiff_t mblocks = static_cast<std::ptrdiff_t>((M + Bk::MC - 1) / Bk::MC);
#pragma omp parallel if (mblocks > 1)
            {
                std::vector<T> apack(Bk::MC * kc);
                alignas(64) T acc[Bk::MR * Bk::NR];
#pragma omp for schedule(static)
                for (std::ptrdiff_t mb = 0; mb < mblocks; ++mb) {
                    const std::size_t ic = static_cast<std::size_t>(mb) * Bk::MC;
                    const std::size_t mc = std::min(Bk::MC, M - ic);
                    pack_a(trans_a, A, lda, ic, mc, pc, kc, apack.data());
                    for (std::size_t jr = 0; jr < nc; jr += Bk::NR) {
                        const std::size_t ncols = std::min(Bk::NR, nc - jr);
                        for (std::size_t ir = 0; ir < mc; ir += Bk::MR) {
                            const std::size_t nrows = std::min(Bk::MR, mc - ir);
                            micro_kernel<T>(kc, apack.data() + ir * kc, bpack.data() + jr * kc, acc);
                            for (std::size_t i = 0; i < nrows; ++i) {
                                T* crow = C + (ic + ir + i) * ldc + jc + jr;
                                const T* arow = acc + i * Bk::NR;
                                if (!first) {
                                    for (std::size_t j = 0; j < ncols; ++j)
                                        crow[j] += alpha * arow[j];
                                } else if (beta == T(0)) {
                                    for (std::size_t j = 0; j < ncols; ++j)
                                        crow[j] = alpha * arow[j];
                                } else {
                                    for (std::size_t j = 0; j < ncols; ++j)
                                        crow[j] = alpha * arow[j] + beta * crow[j];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

namespace {

inline std::ptrdiff_t clamp_index(std::ptrdiff_t i, std::size_t n)
{
    return std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1);
}

} // namespace

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* columns)
{
    const std::size_t k = g.kernel;
    const std::size_t plane = g.out_height * g.out_width;
    const auto rows = static_cast<std::ptrdiff_t>(g.channels * k * k);
    parallel_for_coarse(rows, [&](std::ptrdiff_t r) {
        const std::size_t kx = static_cast<std::size_t>(r) % k;
        const std::size_t ky = (static_cast<std::size_t>(r) / k) % k;
        const std::size_t c = static_cast<std::size_t>(r) / (k * k);
        const T* src = image + c * g.height * g.width;
        T* dst = columns + static_cast<std::size_t>(r) * plane;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
            T* out = dst + oy * g.out_width;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                if (!g.replicate) {
                    std::fill(out, out + g.out_width, T(0));
                    continue;
                }
                iy = clamp_index(iy, g.height);
            }
            const T* in = src + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const auto ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
                if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width))
                    out[ox] = in[ix];
                else
                    out[ox] = g.replicate ? in[clamp_index(ix, g.width)] : T(0);
            }
        }
    });
}

template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* image)
{
    const std::size_t k = g.kernel;
    const std::size_t plane = g.out_height * g.out_width;
    // One thread per channel: channels own disjoint image planes.
    parallel_for_coarse(static_cast<std::ptrdiff_t>(g.channels), [&](std::ptrdiff_t cc) {
        const auto c = static_cast<std::size_t>(cc);
        T* dst = image + c * g.height * g.width;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* src = columns + ((c * k + ky) * k + kx) * plane;
                for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                    auto iy =
                        static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        if (!g.replicate)
                            continue;
                        iy = clamp_index(iy, g.height);
                    }
                    T* out = dst + static_cast<std::size_t>(iy) * g.width;
                    const T* in = src + oy * g.out_width;
                    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width))
                            out[ix] += in[ox];
                        else if (g.replicate)
                            out[clamp_index(ix, g.width)] += in[ox];
                    }
                }
            }
        }
    });
}

namespace serial {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, T alpha, const T* A,
          std::size_t lda, const T* B, std::size_t ldb, T beta, T* C, std::size_t ldc)
{
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            T sum = 0;
            for (std::size_t k = 0; k < K; ++k) {
                const T a = trans_a ? A[k * lda + i] : A[i * lda + k];
                const T b = trans_b ? B[j * ldb + k] : B[k * ldb + j];
                sum += a * b;
            }
            T& c = C[i * ldc + j];
            c = beta == T(0) ? alpha * sum : alpha * sum + beta * c;
        }
    }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t out_channels, const T* image, const T* weight, const T* bias,
                    T* out)
{
    const std::size_t k = g.kernel;
    for (std::size_t o = 0; o < out_channels; ++o) {
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                T sum = bias ? bias[o] : T(0);
                for (std::size_t c = 0; c < g.channels; ++c) {
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                  static_cast<std::ptrdiff_t>(g.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                            if (!g.replicate)
                                continue;
                            iy = clamp_index(iy, g.height);
                        }
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) {
                                if (!g.replicate)
                                    continue;
                                ix = clamp_index(ix, g.width);
                            }
                            sum += weight[((o * g.channels + c) * k + ky) * k + kx] *
                                   image[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                                         static_cast<std::size_t>(ix)];
                        }
                    }
                }
                out[(o * g.out_height + oy) * g.out_width + ox] = sum;
            }
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t out_channels, const T* image, const T* weight,
                     const T* grad_out, T* grad_image, T* grad_weight)
{
    const std::size_t k = g.kernel;
    for (std::size_t o = 0; o < out_channels; ++o) {
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const T go = grad_out[(o * g.out_height + oy) * g.out_width + ox];
                for (std::size_t c = 0; c < g.channels; ++c) {
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                  static_cast<std::ptrdiff_t>(g.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                            if (!g.replicate)
                                continue;
                            iy = clamp_index(iy, g.height);
                        }
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) {
                                if (!g.replicate)
                                    continue;
                                ix = clamp_index(ix, g.width);
                            }
                            const std::size_t wi = ((o * g.channels + c) * k + ky) * k + kx;
                            const std::size_t xi =
                                (c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix);
                            if (grad_weight)
                                grad_weight[wi] += go * image[xi];
                            if (grad_image)
                                grad_image[xi] += go * weight[wi];
                        }
                    }
                }
            }
        }
    }
}

} // namespace serial

#define SCG_INSTANTIATE_KERNELS(T)                                                                                   \
    template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t, const T*,     \
                          std::size_t, T, T*, std::size_t);                                                          \
    template void im2col<T>(const ConvGeometry&, const T*, T*);                                                      \
    template void col2im<T>(const ConvGeometry&, const T*, T*);                                                      \
    template void serial::gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t,      \
                                  const T*, std::size_t, T, T*, std::size_t);                                        \
    template void serial::conv2d_forward<T>(const ConvGeometry&, std::size_t, const T*, const T*, const T*, T*);    \
    template void serial::conv2d_backward<T>(const ConvGeometry&, std::size_t, const T*, const T*, const T*, T*, T*);

SCG_INSTANTIATE_KERNELS(float)
SCG_INSTANTIATE_KERNELS(double)

} // namespace scg::kernels
