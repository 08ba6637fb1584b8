#include "scg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scg/autograd.hpp"
#include "scg/error.hpp"
#include "scg/kernels.hpp"

namespace scg {

using detail::input_grad;
using detail::make_op;
using detail::Node;
using kernels::parallel_for;
using kernels::parallel_for_coarse;

namespace {

using Index = std::ptrdiff_t;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op)
{
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

// View of a tensor as [outer, axis, inner] around one axis.
struct AxisView {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis, const char* op)
{
    if (axis >= shape.size())
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(shape));
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i)
        v.outer *= shape[i];
    v.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i)
        v.inner *= shape[i];
    return v;
}

template <typename T, typename F, typename D>
Tensor<T> unary(const char* name, const Tensor<T>& a, F f, D dfdx)
{
    auto xs = a.values();
    std::vector<T> out(xs.size());
    parallel_for(static_cast<Index>(xs.size()), [&](Index i) { out[i] = f(xs[i]); });
    return make_op<T>(name, a.shape(), std::move(out), {&a}, [a, dfdx](Node<T>& self) {
        T* ga = input_grad(self, 0);
        auto xs = a.values();
        parallel_for(static_cast<Index>(xs.size()),
                     [&](Index i) { ga[i] += self.grad[i] * dfdx(xs[i], self.value[i]); });
    });
}

} // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "add");
    auto x = a.values();
    auto y = b.values();
    std::vector<T> out(x.size());
    parallel_for(static_cast<Index>(x.size()), [&](Index i) { out[i] = x[i] + y[i]; });
    return make_op<T>("add", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (T* g = input_grad(self, k))
                parallel_for(static_cast<Index>(self.grad.size()), [&](Index i) { g[i] += self.grad[i]; });
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "sub");
    auto x = a.values();
    auto y = b.values();
    std::vector<T> out(x.size());
    parallel_for(static_cast<Index>(x.size()), [&](Index i) { out[i] = x[i] - y[i]; });
    return make_op<T>("sub", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
        const Index n = static_cast<Index>(self.grad.size());
        if (T* g = input_grad(self, 0))
            parallel_for(n, [&](Index i) { g[i] += self.grad[i]; });
        if (T* g = input_grad(self, 1))
            parallel_for(n, [&](Index i) { g[i] -= self.grad[i]; });
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "mul");
    auto x = a.values();
    auto y = b.values();
    std::vector<T> out(x.size());
    parallel_for(static_cast<Index>(x.size()), [&](Index i) { out[i] = x[i] * y[i]; });
    return make_op<T>("mul", a.shape(), std::move(out), {&a, &b}, [a, b](Node<T>& self) {
        const Index n = static_cast<Index>(self.grad.size());
        auto x = a.values();
        auto y = b.values();
        if (T* g = input_grad(self, 0))
            parallel_for(n, [&](Index i) { g[i] += self.grad[i] * y[i]; });
        if (T* g = input_grad(self, 1))
            parallel_for(n, [&](Index i) { g[i] += self.grad[i] * x[i]; });
    });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "div");
    auto x = a.values();
    auto y = b.values();
    std::vector<T> out(x.size());
    parallel_for(static_cast<Index>(x.size()), [&](Index i) { out[i] = x[i] / y[i]; });
    return make_op<T>("div", a.shape(), std::move(out), {&a, &b}, [a, b](Node<T>& self) {
        const Index n = static_cast<Index>(self.grad.size());
        auto x = a.values();
        auto y = b.values();
        if (T* g = input_grad(self, 0))
            parallel_for(n, [&](Index i) { g[i] += self.grad[i] / y[i]; });
        if (T* g = input_grad(self, 1))
            parallel_for(n, [&](Index i) { g[i] -= self.grad[i] * x[i] / (y[i] * y[i]); });
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s)
{
    return unary<T>("add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s)
{
    return unary<T>("mul_scalar", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a)
{
    return mul_scalar(a, T(-1));
}

template <typename T>
Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s)
{
    if (s.numel() != 1)
        throw DimensionError("scale_by: scale must have one element, got " + shape_str(s.shape()));
    const T k = s.item();
    auto x = a.values();
    std::vector<T> out(x.size());
    parallel_for(static_cast<Index>(x.size()), [&](Index i) { out[i] = x[i] * k; });
    return make_op<T>("scale_by", a.shape(), std::move(out), {&a, &s}, [a, k](Node<T>& self) {
        auto x = a.values();
        if (T* g = input_grad(self, 0))
            parallel_for(static_cast<Index>(x.size()), [&](Index i) { g[i] += self.grad[i] * k; });
        if (T* g = input_grad(self, 1)) {
            T acc = 0;
            for (std::size_t i = 0; i < x.size(); ++i)
                acc += self.grad[i] * x[i];
            g[0] += acc;
        }
    });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis)
{
    const auto v = axis_view(x.shape(), axis, "add_bias");
    if (bias.numel() != v.extent)
        throw DimensionError("add_bias: bias of shape " + shape_str(bias.shape()) + " does not match axis " +
                             std::to_string(axis) + " of " + shape_str(x.shape()));
    auto xs = x.values();
    auto bs = bias.values();
    std::vector<T> out(xs.size());
    parallel_for(static_cast<Index>(xs.size()),
                 [&](Index i) { out[i] = xs[i] + bs[(static_cast<std::size_t>(i) / v.inner) % v.extent]; });
    return make_op<T>("add_bias", x.shape(), std::move(out), {&x, &bias}, [v](Node<T>& self) {
        if (T* g = input_grad(self, 0))
            parallel_for(static_cast<Index>(self.grad.size()), [&](Index i) { g[i] += self.grad[i]; });
        if (T* g = input_grad(self, 1)) {
            parallel_for_coarse(static_cast<Index>(v.extent), [&](Index c) {
                T acc = 0;
                for (std::size_t o = 0; o < v.outer; ++o) {
                    const T* row = self.grad.data() + (o * v.extent + static_cast<std::size_t>(c)) * v.inner;
                    for (std::size_t i = 0; i < v.inner; ++i)
                        acc += row[i];
                }
                g[c] += acc;
            });
        }
    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b)
{
    auto mismatch = [&] {
        return DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    };
    const std::size_t ra = a.rank(), rb = b.rank();
    if (!((ra == 2 && rb == 2) || (ra == 3 && rb == 3) || (ra == 3 && rb == 2)))
        throw mismatch();
    const std::size_t batch = ra == 3 ? a.size(0) : 1;
    const std::size_t m = a.size(ra - 2), k = a.size(ra - 1);
    const std::size_t kb = b.size(rb - 2), p = b.size(rb - 1);
    if (k != kb || (rb == 3 && b.size(0) != batch))
        throw mismatch();
    const bool shared_rhs = ra == 3 && rb == 2;

    Shape shape = ra == 3 ? Shape{batch, m, p} : Shape{m, p};
    std::vector<T> out(batch * m * p);
    const T* A = a.values().data();
    const T* B = b.values().data();
    if (shared_rhs || batch == 1) {
        kernels::gemm<T>(false, false, batch * m, p, k, T(1), A, k, B, p, T(0), out.data(), p);
    } else {
        for (std::size_t s = 0; s < batch; ++s)
            kernels::gemm<T>(false, false, m, p, k, T(1), A + s * m * k, k, B + s * k * p, p, T(0),
                             out.data() + s * m * p, p);
    }

    return make_op<T>("matmul", std::move(shape), std::move(out), {&a, &b},
                      [a, b, batch, m, k, p, shared_rhs](Node<T>& self) {
                          const T* G = self.grad.data();
                          const T* A = a.values().data();
                          const T* B = b.values().data();
                          if (T* ga = input_grad(self, 0)) {
                              if (shared_rhs || batch == 1)
                                  kernels::gemm<T>(false, true, batch * m, k, p, T(1), G, p, B, p, T(1), ga, k);
                              else
                                  for (std::size_t s = 0; s < batch; ++s)
                                      kernels::gemm<T>(false, true, m, k, p, T(1), G + s * m * p, p, B + s * k * p, p,
                                                       T(1), ga + s * m * k, k);
                          }
                          if (T* gb = input_grad(self, 1)) {
                              if (shared_rhs || batch == 1)
                                  kernels::gemm<T>(true, false, k, p, batch * m, T(1), A, k, G, p, T(1), gb, p);
                              else
                                  for (std::size_t s = 0; s < batch; ++s)
                                      kernels::gemm<T>(true, false, k, p, m, T(1), A + s * m * k, k, G + s * m * p, p,
                                                       T(1), gb + s * k * p, p);
                          }
                      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a)
{
    if (a.rank() < 2)
        throw DimensionError("transpose: needs rank >= 2, got " + shape_str(a.shape()));
    Shape shape = a.shape();
    const std::size_t r = shape.size();
    const std::size_t m = shape[r - 2], n = shape[r - 1];
    const std::size_t batch = a.numel() / (m * n);
    std::swap(shape[r - 2], shape[r - 1]);
    auto x = a.values();
    std::vector<T> out(x.size());
    auto permute = [batch, m, n](const T* src, T* dst, bool accumulate) {
        parallel_for_coarse(static_cast<Index>(batch * m), [&](Index row) {
            const std::size_t s = static_cast<std::size_t>(row) / m, i = static_cast<std::size_t>(row) % m;
            const T* in = src + (s * m + i) * n;
            T* base = dst + s * m * n;
            for (std::size_t j = 0; j < n; ++j) {
                if (accumulate)
                    base[j * m + i] += in[j];
                else
                    base[j * m + i] = in[j];
            }
        });
    };
    permute(x.data(), out.data(), false);
    return make_op<T>("transpose", std::move(shape), std::move(out), {&a}, [batch, m, n](Node<T>& self) {
        T* g = input_grad(self, 0);
        // Gradient is [.., n, m]; map back to [.., m, n].
        parallel_for_coarse(static_cast<Index>(batch * n), [&](Index row) {
            const std::size_t s = static_cast<std::size_t>(row) / n, j = static_cast<std::size_t>(row) % n;
            const T* in = self.grad.data() + (s * n + j) * m;
            T* base = g + s * m * n;
            for (std::size_t i = 0; i < m; ++i)
                base[i * n + j] += in[i];
        });
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape)
{
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    auto x = a.values();
    std::vector<T> out(x.begin(), x.end());
    return make_op<T>("reshape", std::move(shape), std::move(out), {&a}, [](Node<T>& self) {
        T* g = input_grad(self, 0);
        parallel_for(static_cast<Index>(self.grad.size()), [&](Index i) { g[i] += self.grad[i]; });
    });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& a, std::size_t start)
{
    if (start >= a.rank())
        throw DimensionError("flatten: start axis " + std::to_string(start) + " out of range for " +
                             shape_str(a.shape()));
    Shape shape(a.shape().begin(), a.shape().begin() + static_cast<Index>(start));
    std::size_t tail = 1;
    for (std::size_t i = start; i < a.rank(); ++i)
        tail *= a.size(i);
    shape.push_back(tail);
    return reshape(a, std::move(shape));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a)
{
    return unary<T>("relu", a, [](T x) { return x > T(0) ? x : T(0); },
                    [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a)
{
    return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a)
{
    for (auto x : a.values())
        if (!(x > T(0)))
            throw NumericError("log: non-positive input " + std::to_string(x) + " (use log_eps for guarded logs)");
    return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> log_eps(const Tensor<T>& a, T eps)
{
    for (auto x : a.values())
        if (!(x + eps > T(0)))
            throw NumericError("log_eps: input " + std::to_string(x) + " + eps is non-positive");
    return unary<T>("log_eps", a, [eps](T x) { return std::log(x + eps); },
                    [eps](T x, T) { return T(1) / (x + eps); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi)
{
    return unary<T>("clamp", a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
                    [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> clamp_max(const Tensor<T>& a, T hi)
{
    return clamp(a, -std::numeric_limits<T>::infinity(), hi);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis)
{
    const auto v = axis_view(a.shape(), axis, "softmax");
    auto x = a.values();
    std::vector<T> out(x.size());
    parallel_for_coarse(static_cast<Index>(v.outer), [&](Index o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = static_cast<std::size_t>(o) * v.extent * v.inner + i;
            T mx = x[base];
            for (std::size_t c = 1; c < v.extent; ++c)
                mx = std::max(mx, x[base + c * v.inner]);
            T total = 0;
            for (std::size_t c = 0; c < v.extent; ++c) {
                const T e = std::exp(x[base + c * v.inner] - mx);
                out[base + c * v.inner] = e;
                total += e;
            }
            for (std::size_t c = 0; c < v.extent; ++c)
                out[base + c * v.inner] /= total;
        }
    });
    return make_op<T>("softmax", a.shape(), std::move(out), {&a}, [v](Node<T>& self) {
        T* g = input_grad(self, 0);
        const T* y = self.value.data();
        const T* gy = self.grad.data();
        parallel_for_coarse(static_cast<Index>(v.outer), [&](Index o) {
            for (std::size_t i = 0; i < v.inner; ++i) {
                const std::size_t base = static_cast<std::size_t>(o) * v.extent * v.inner + i;
                T dot = 0;
                for (std::size_t c = 0; c < v.extent; ++c)
                    dot += gy[base + c * v.inner] * y[base + c * v.inner];
                for (std::size_t c = 0; c < v.extent; ++c) {
                    const std::size_t k = base + c * v.inner;
                    g[k] += y[k] * (gy[k] - dot);
                }
            }
        });
    });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a)
{
    if (a.rank() == 0)
        throw DimensionError("softmax_rows: needs rank >= 1");
    return softmax(a, a.rank() - 1);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a)
{
    T acc = 0;
    for (auto x : a.values())
        acc += x;
    return make_op<T>("sum", Shape{}, std::vector<T>{acc}, {&a}, [](Node<T>& self) {
        T* g = input_grad(self, 0);
        const T gy = self.grad[0];
        const Index n = static_cast<Index>(self.inputs[0]->value.size());
        parallel_for(n, [&](Index i) { g[i] += gy; });
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a)
{
    return mul_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis)
{
    const auto v = axis_view(a.shape(), axis, "sum_axis");
    Shape shape = a.shape();
    shape.erase(shape.begin() + static_cast<Index>(axis));
    auto x = a.values();
    std::vector<T> out(v.outer * v.inner, T(0));
    parallel_for_coarse(static_cast<Index>(v.outer), [&](Index o) {
        T* dst = out.data() + static_cast<std::size_t>(o) * v.inner;
        for (std::size_t c = 0; c < v.extent; ++c) {
            const T* src = x.data() + (static_cast<std::size_t>(o) * v.extent + c) * v.inner;
            for (std::size_t i = 0; i < v.inner; ++i)
                dst[i] += src[i];
        }
    });
    return make_op<T>("sum_axis", std::move(shape), std::move(out), {&a}, [v](Node<T>& self) {
        T* g = input_grad(self, 0);
        parallel_for_coarse(static_cast<Index>(v.outer), [&](Index o) {
            const T* src = self.grad.data() + static_cast<std::size_t>(o) * v.inner;
            for (std::size_t c = 0; c < v.extent; ++c) {
                T* dst = g + (static_cast<std::size_t>(o) * v.extent + c) * v.inner;
                for (std::size_t i = 0; i < v.inner; ++i)
                    dst[i] += src[i];
            }
        });
    });
}

template <typename T>
Tensor<T> diagonal(const Tensor<T>& a)
{
    const std::size_t r = a.rank();
    if (r < 2 || a.size(r - 1) != a.size(r - 2))
        throw DimensionError("diagonal: trailing axes must be square, got " + shape_str(a.shape()));
    const std::size_t n = a.size(r - 1);
    const std::size_t batch = a.numel() / (n * n);
    Shape shape(a.shape().begin(), a.shape().end() - 1);
    auto x = a.values();
    std::vector<T> out(batch * n);
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t i = 0; i < n; ++i)
            out[s * n + i] = x[s * n * n + i * n + i];
    return make_op<T>("diagonal", std::move(shape), std::move(out), {&a}, [batch, n](Node<T>& self) {
        T* g = input_grad(self, 0);
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t i = 0; i < n; ++i)
                g[s * n * n + i * n + i] += self.grad[s * n + i];
    });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding, PadMode pad_mode)
{
    if (input.rank() != 4 || kernel.rank() != 4)
        throw DimensionError("conv2d: expects input [N,C,H,W] and kernel [O,C,k,k], got " + shape_str(input.shape()) +
                             " and " + shape_str(kernel.shape()));
    const std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
    const std::size_t O = kernel.size(0), k = kernel.size(2);
    if (kernel.size(1) != C || kernel.size(3) != k)
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                             shape_str(input.shape()));
    if (k % 2 == 0)
        throw DimensionError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (stride == 0)
        throw DimensionError("conv2d: stride must be positive");
    if (bias.defined() && bias.numel() != O)
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(O) +
                             " output channels");
    const auto span_h = static_cast<std::ptrdiff_t>(H + 2 * padding) - static_cast<std::ptrdiff_t>(k);
    const auto span_w = static_cast<std::ptrdiff_t>(W + 2 * padding) - static_cast<std::ptrdiff_t>(k);
    if (span_h < 0 || span_w < 0)
        throw DimensionError("conv2d: non-positive output extent for input " + shape_str(input.shape()) +
                             " with kernel " + std::to_string(k) + ", padding " + std::to_string(padding));

    kernels::ConvGeometry geo{C, H, W, k, stride, padding, static_cast<std::size_t>(span_h) / stride + 1,
                              static_cast<std::size_t>(span_w) / stride + 1, pad_mode == PadMode::replicate};
    const std::size_t plane = geo.out_height * geo.out_width;
    const std::size_t rows = C * k * k;
    const bool direct = k == 1 && stride == 1 && padding == 0;

    std::vector<T> out(N * O * plane);
    std::vector<T> cols(direct ? 0 : rows * plane);
    const T* X = input.values().data();
    const T* Wt = kernel.values().data();
    for (std::size_t n = 0; n < N; ++n) {
        const T* src = X + n * C * H * W;
        if (!direct) {
            kernels::im2col(geo, src, cols.data());
            src = cols.data();
        }
        T* dst = out.data() + n * O * plane;
        kernels::gemm<T>(false, false, O, plane, rows, T(1), Wt, rows, src, plane, T(0), dst, plane);
        if (bias.defined()) {
            const T* b = bias.values().data();
            parallel_for_coarse(static_cast<Index>(O), [&](Index o) {
                T* row = dst + static_cast<std::size_t>(o) * plane;
                for (std::size_t i = 0; i < plane; ++i)
                    row[i] += b[o];
            });
        }
    }

    return make_op<T>(
        "conv2d", Shape{N, O, geo.out_height, geo.out_width}, std::move(out), {&input, &kernel, &bias},
        [input, kernel, geo, N, O, plane, rows, direct](Node<T>& self) {
            T* gx = input_grad(self, 0);
            T* gw = input_grad(self, 1);
            T* gb = input_grad(self, 2);
            const std::size_t in_size = geo.channels * geo.height * geo.width;
            const T* X = input.values().data();
            const T* Wt = kernel.values().data();
            std::vector<T> cols(direct ? 0 : rows * plane);
            for (std::size_t n = 0; n < N; ++n) {
                const T* G = self.grad.data() + n * O * plane;
                if (gw) {
                    const T* src = X + n * in_size;
                    if (!direct) {
                        kernels::im2col(geo, src, cols.data());
                        src = cols.data();
                    }
                    kernels::gemm<T>(false, true, O, rows, plane, T(1), G, plane, src, plane, T(1), gw, rows);
                }
                if (gx) {
                    if (direct) {
                        kernels::gemm<T>(true, false, rows, plane, O, T(1), Wt, rows, G, plane, T(1), gx + n * in_size,
                                         plane);
                    } else {
                        kernels::gemm<T>(true, false, rows, plane, O, T(1), Wt, rows, G, plane, T(0), cols.data(),
                                         plane);
                        kernels::col2im(geo, cols.data(), gx + n * in_size);
                    }
                }
            }
            if (gb) {
                parallel_for_coarse(static_cast<Index>(O), [&](Index o) {
                    T acc = 0;
                    for (std::size_t n = 0; n < N; ++n) {
                        const T* row = self.grad.data() + (n * O + static_cast<std::size_t>(o)) * plane;
                        for (std::size_t i = 0; i < plane; ++i)
                            acc += row[i];
                    }
                    gb[o] += acc;
                });
            }
        });
}

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, std::size_t out_h, std::size_t out_w)
{
    if (input.rank() != 4)
        throw DimensionError("adaptive_avg_pool2d: expects [N,C,H,W], got " + shape_str(input.shape()));
    const std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
    if (out_h < 1 || out_w < 1 || out_h > H || out_w > W)
        throw DimensionError("adaptive_avg_pool2d: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                             " must lie within input " + std::to_string(H) + "x" + std::to_string(W));
    auto bounds = [](std::size_t i, std::size_t in, std::size_t out) {
        return std::pair<std::size_t, std::size_t>{i * in / out, ((i + 1) * in + out - 1) / out};
    };
    auto x = input.values();
    std::vector<T> out(N * C * out_h * out_w);
    parallel_for_coarse(static_cast<Index>(N * C), [&](Index p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * H * W;
        T* dst = out.data() + static_cast<std::size_t>(p) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto [y0, y1] = bounds(oy, H, out_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto [x0, x1] = bounds(ox, W, out_w);
                T acc = 0;
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t xx = x0; xx < x1; ++xx)
                        acc += src[y * W + xx];
                dst[oy * out_w + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
            }
        }
    });
    return make_op<T>("adaptive_avg_pool2d", Shape{N, C, out_h, out_w}, std::move(out), {&input},
                      [=](Node<T>& self) {
                          T* g = input_grad(self, 0);
                          parallel_for_coarse(static_cast<Index>(N * C), [&](Index p) {
                              T* dst = g + static_cast<std::size_t>(p) * H * W;
                              const T* src = self.grad.data() + static_cast<std::size_t>(p) * out_h * out_w;
                              for (std::size_t oy = 0; oy < out_h; ++oy) {
                                  const auto [y0, y1] = bounds(oy, H, out_h);
                                  for (std::size_t ox = 0; ox < out_w; ++ox) {
                                      const auto [x0, x1] = bounds(ox, W, out_w);
                                      const T share = src[oy * out_w + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
                                      for (std::size_t y = y0; y < y1; ++y)
                                          for (std::size_t xx = x0; xx < x1; ++xx)
                                              dst[y * W + xx] += share;
                                  }
                              }
                          });
                      });
}

namespace {

struct LerpTap {
    std::size_t lo, hi;
    double frac;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out, bool align_corners)
{
    std::vector<LerpTap> taps(out);
    for (std::size_t i = 0; i < out; ++i) {
        double src;
        if (align_corners)
            src = out > 1 ? static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
        else
            src = std::max(0.0, (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) -
                                    0.5);
        auto lo = static_cast<std::size_t>(std::floor(src));
        lo = std::min(lo, in - 1);
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[i] = {lo, hi, src - static_cast<double>(lo)};
    }
    return taps;
}

} // namespace

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w, bool align_corners)
{
    if (input.rank() != 4)
        throw DimensionError("upsample_bilinear: expects [N,C,H,W], got " + shape_str(input.shape()));
    const std::size_t N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
    if (out_h < H || out_w < W)
        throw DimensionError("upsample_bilinear: cannot downscale " + std::to_string(H) + "x" + std::to_string(W) +
                             " to " + std::to_string(out_h) + "x" + std::to_string(out_w));
    const auto ty = lerp_taps(H, out_h, align_corners);
    const auto tx = lerp_taps(W, out_w, align_corners);
    auto x = input.values();
    std::vector<T> out(N * C * out_h * out_w);
    parallel_for_coarse(static_cast<Index>(N * C), [&](Index p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * H * W;
        T* dst = out.data() + static_cast<std::size_t>(p) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& vy = ty[oy];
            const T fy = static_cast<T>(vy.frac);
            const T* r0 = src + vy.lo * W;
            const T* r1 = src + vy.hi * W;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto& vx = tx[ox];
                const T fx = static_cast<T>(vx.frac);
                const T top = r0[vx.lo] + fx * (r0[vx.hi] - r0[vx.lo]);
                const T bottom = r1[vx.lo] + fx * (r1[vx.hi] - r1[vx.lo]);
                dst[oy * out_w + ox] = top + fy * (bottom - top);
            }
        }
    });
    return make_op<T>("upsample_bilinear", Shape{N, C, out_h, out_w}, std::move(out), {&input},
                      [=](Node<T>& self) {
                          T* g = input_grad(self, 0);
                          parallel_for_coarse(static_cast<Index>(N * C), [&](Index p) {
                              T* dst = g + static_cast<std::size_t>(p) * H * W;
                              const T* src = self.grad.data() + static_cast<std::size_t>(p) * out_h * out_w;
                              for (std::size_t oy = 0; oy < out_h; ++oy) {
                                  const auto& vy = ty[oy];
                                  const T fy = static_cast<T>(vy.frac);
                                  for (std::size_t ox = 0; ox < out_w; ++ox) {
                                      const auto& vx = tx[ox];
                                      const T fx = static_cast<T>(vx.frac);
                                      const T go = src[oy * out_w + ox];
                                      dst[vy.lo * W + vx.lo] += go * (1 - fy) * (1 - fx);
                                      dst[vy.lo * W + vx.hi] += go * (1 - fy) * fx;
                                      dst[vy.hi * W + vx.lo] += go * fy * (1 - fx);
                                      dst[vy.hi * W + vx.hi] += go * fy * fx;
                                  }
                              }
                          });
                      });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, BatchNormState<T>& state,
                     std::size_t axis, Mode mode)
{
    const auto v = axis_view(x.shape(), axis, "batch_norm");
    const std::size_t C = v.extent;
    if (weight.numel() != C || bias.numel() != C || state.running_mean.numel() != C ||
        state.running_var.numel() != C)
        throw DimensionError("batch_norm: feature dimension " + std::to_string(C) + " of " + shape_str(x.shape()) +
                             " does not match parameter length " + std::to_string(weight.numel()));
    const std::size_t count = v.outer * v.inner;
    const T eps = state.eps;
    auto xs = x.values();
    auto gamma = weight.values();
    auto beta = bias.values();

    std::vector<T> mu(C), inv_std(C);
    if (mode == Mode::train) {
        auto rm = state.running_mean.values();
        auto rv = state.running_var.values();
        parallel_for_coarse(static_cast<Index>(C), [&](Index cc) {
            const auto c = static_cast<std::size_t>(cc);
            T s = 0;
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < v.inner; ++i)
                    s += xs[(o * C + c) * v.inner + i];
            const T m = s / static_cast<T>(count);
            T ss = 0;
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < v.inner; ++i) {
                    const T d = xs[(o * C + c) * v.inner + i] - m;
                    ss += d * d;
                }
            const T var = ss / static_cast<T>(count);
            mu[c] = m;
            inv_std[c] = T(1) / std::sqrt(var + eps);
            const T unbiased = count > 1 ? ss / static_cast<T>(count - 1) : var;
            rm[c] = (1 - state.momentum) * rm[c] + state.momentum * m;
            rv[c] = (1 - state.momentum) * rv[c] + state.momentum * unbiased;
        });
    } else {
        auto rm = state.running_mean.values();
        auto rv = state.running_var.values();
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = rm[c];
            inv_std[c] = T(1) / std::sqrt(rv[c] + eps);
        }
    }

    std::vector<T> out(xs.size());
    parallel_for(static_cast<Index>(xs.size()), [&](Index i) {
        const std::size_t c = (static_cast<std::size_t>(i) / v.inner) % C;
        out[i] = gamma[c] * (xs[i] - mu[c]) * inv_std[c] + beta[c];
    });

    const bool training = mode == Mode::train;
    return make_op<T>(
        "batch_norm", x.shape(), std::move(out), {&x, &weight, &bias},
        [x, weight, v, C, count, mu, inv_std, training](Node<T>& self) {
            T* gx = input_grad(self, 0);
            T* gg = input_grad(self, 1);
            T* gb = input_grad(self, 2);
            auto xs = x.values();
            auto gamma = weight.values();
            const T* gy = self.grad.data();
            parallel_for_coarse(static_cast<Index>(C), [&](Index cc) {
                const auto c = static_cast<std::size_t>(cc);
                T sum_g = 0, sum_gx = 0;
                for (std::size_t o = 0; o < v.outer; ++o)
                    for (std::size_t i = 0; i < v.inner; ++i) {
                        const std::size_t k = (o * C + c) * v.inner + i;
                        const T xhat = (xs[k] - mu[c]) * inv_std[c];
                        sum_g += gy[k];
                        sum_gx += gy[k] * xhat;
                    }
                if (gg)
                    gg[c] += sum_gx;
                if (gb)
                    gb[c] += sum_g;
                if (!gx)
                    return;
                const T scale = gamma[c] * inv_std[c];
                const T mean_g = sum_g / static_cast<T>(count);
                const T mean_gx = sum_gx / static_cast<T>(count);
                for (std::size_t o = 0; o < v.outer; ++o)
                    for (std::size_t i = 0; i < v.inner; ++i) {
                        const std::size_t k = (o * C + c) * v.inner + i;
                        if (training) {
                            const T xhat = (xs[k] - mu[c]) * inv_std[c];
                            gx[k] += scale * (gy[k] - mean_g - xhat * mean_gx);
                        } else {
                            gx[k] += scale * gy[k];
                        }
                    }
            });
        });
}

#define SCG_INSTANTIATE_OPS(T)                                                                                       \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                                      \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                              \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                              \
    template Tensor<T> neg(const Tensor<T>&);                                                                        \
    template Tensor<T> scale_by(const Tensor<T>&, const Tensor<T>&);                                                 \
    template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&, std::size_t);                                   \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                                   \
    template Tensor<T> transpose(const Tensor<T>&);                                                                  \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                             \
    template Tensor<T> flatten(const Tensor<T>&, std::size_t);                                                       \
    template Tensor<T> relu(const Tensor<T>&);                                                                       \
    template Tensor<T> exp(const Tensor<T>&);                                                                        \
    template Tensor<T> log(const Tensor<T>&);                                                                        \
    template Tensor<T> log_eps(const Tensor<T>&, T);                                                                 \
    template Tensor<T> clamp(const Tensor<T>&, T, T);                                                                \
    template Tensor<T> clamp_max(const Tensor<T>&, T);                                                               \
    template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                                       \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                                               \
    template Tensor<T> sum(const Tensor<T>&);                                                                        \
    template Tensor<T> mean(const Tensor<T>&);                                                                       \
    template Tensor<T> sum_axis(const Tensor<T>&, std::size_t);                                                      \
    template Tensor<T> diagonal(const Tensor<T>&);                                                                   \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t, PadMode);       \
    template Tensor<T> adaptive_avg_pool2d(const Tensor<T>&, std::size_t, std::size_t);                             \
    template Tensor<T> upsample_bilinear(const Tensor<T>&, std::size_t, std::size_t, bool);                         \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&,         \
                                  std::size_t, Mode);

SCG_INSTANTIATE_OPS(float)
SCG_INSTANTIATE_OPS(double)

} // namespace scg
