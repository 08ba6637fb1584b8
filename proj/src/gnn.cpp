#include "scg/gnn.hpp"

#include <cmath>

#include "scg/autograd.hpp"
#include "scg/error.hpp"

namespace scg {

std::string to_string(GnnKind k)
{
    return k == GnnKind::gcn ? "gcn" : "gin";
}

GnnKind parse_gnn_kind(const std::string& s)
{
    if (s == "gcn")
        return GnnKind::gcn;
    if (s == "gin")
        return GnnKind::gin;
    throw DataError("unknown GNN kind '" + s + "' (expected gcn or gin)");
}

template <typename T>
Tensor<T> normalize_adjacency(const Tensor<T>& adjacency, bool literal)
{
    const std::size_t r = adjacency.rank();
    if ((r != 2 && r != 3) || adjacency.size(r - 1) != adjacency.size(r - 2))
        throw DimensionError("normalize_adjacency: expects square [n,n] or [N,n,n], got " +
                             shape_str(adjacency.shape()));
    const std::size_t n = adjacency.size(r - 1);
    const std::size_t batch = adjacency.numel() / (n * n);
    auto a = adjacency.values();

    // Â_ij = p_i (A+I)_ij q_j with p = d^(-1/2), q = d^(∓1/2).
    const T q_exp = literal ? T(0.5) : T(-0.5);
    std::vector<T> degree(batch * n), p(batch * n), q(batch * n);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i) {
            T d = 1;
            for (std::size_t j = 0; j < n; ++j)
                d += a[(b * n + i) * n + j];
            degree[b * n + i] = d;
            p[b * n + i] = T(1) / std::sqrt(d);
            q[b * n + i] = std::pow(d, q_exp);
        }
    std::vector<T> out(a.size());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = (b * n + i) * n + j;
                out[k] = p[b * n + i] * (a[k] + (i == j ? T(1) : T(0))) * q[b * n + j];
            }

    return detail::make_op<T>(
        "normalize_adjacency", adjacency.shape(), std::move(out), {&adjacency},
        [adjacency, batch, n, q_exp, degree, p, q](detail::Node<T>& self) {
            T* ga = detail::input_grad(self, 0);
            auto a = adjacency.values();
            const T* g = self.grad.data();
            std::vector<T> dp(n), dq(n);
            for (std::size_t b = 0; b < batch; ++b) {
                std::fill(dp.begin(), dp.end(), T(0));
                std::fill(dq.begin(), dq.end(), T(0));
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t k = (b * n + i) * n + j;
                        const T bij = a[k] + (i == j ? T(1) : T(0));
                        ga[k] += g[k] * p[b * n + i] * q[b * n + j];
                        dp[i] += g[k] * bij * q[b * n + j];
                        dq[j] += g[k] * p[b * n + i] * bij;
                    }
                for (std::size_t i = 0; i < n; ++i) {
                    const T d = degree[b * n + i];
                    // d(d^e)/dd = e·d^e/d
                    const T dd = dp[i] * T(-0.5) * p[b * n + i] / d + dq[i] * q_exp * q[b * n + i] / d;
                    for (std::size_t j = 0; j < n; ++j)
                        ga[(b * n + i) * n + j] += dd;
                }
            }
        });
}

template <typename T>
GraphLinear<T>::GraphLinear(std::size_t d_in, std::size_t d_out, bool activation_, bool batch_norm, Rng& rng)
    : weight(Shape{d_in, d_out}, T(0), true), bias(Shape{d_out}, T(0), true), activation(activation_)
{
    // Glorot uniform.
    fill_uniform(weight, rng, std::sqrt(6.0 / static_cast<double>(d_in + d_out)));
    if (batch_norm)
        norm.emplace(d_out, 0);
}

template <typename T>
Tensor<T> GraphLinear<T>::finish(const Tensor<T>& pre, Mode mode)
{
    const std::size_t last = pre.rank() - 1;
    auto y = add_bias(pre, bias, last);
    if (norm) {
        norm->axis = last;
        y = norm->forward(y, mode);
    }
    return activation ? relu(y) : y;
}

template <typename T>
void GraphLinear<T>::collect(ParameterRegistry<T>& reg, const std::string& prefix) const
{
    reg.add(prefix + "/weight", weight, ParamGroup::weight);
    reg.add(prefix + "/bias", bias, ParamGroup::bias);
    if (norm)
        norm->collect(reg, prefix + "/bn");
}

namespace {

template <typename T>
void check_graph_inputs(const Tensor<T>& adjacency, const Tensor<T>& z, std::size_t d_in, const char* layer)
{
    const std::size_t r = adjacency.rank();
    if ((r != 2 && r != 3) || z.rank() != r || adjacency.size(r - 1) != adjacency.size(r - 2) ||
        adjacency.size(r - 1) != z.size(r - 2) || (r == 3 && adjacency.size(0) != z.size(0)))
        throw DimensionError(std::string(layer) + ": adjacency " + shape_str(adjacency.shape()) +
                             " incompatible with node features " + shape_str(z.shape()));
    if (z.size(r - 1) != d_in)
        throw DimensionError(std::string(layer) + ": node feature width " + std::to_string(z.size(r - 1)) +
                             " does not match layer input width " + std::to_string(d_in));
}

// A·Z·θ, associating for the cheaper product.
template <typename T>
Tensor<T> propagate(const Tensor<T>& adjacency, const Tensor<T>& z, const Tensor<T>& weight)
{
    if (weight.size(1) < weight.size(0))
        return matmul(adjacency, matmul(z, weight));
    return matmul(matmul(adjacency, z), weight);
}

} // namespace

template <typename T>
Tensor<T> GcnLayer<T>::forward(const Tensor<T>& normalized, const Tensor<T>& z, Mode mode)
{
    check_graph_inputs(normalized, z, linear.in_width(), "gcn");
    return linear.finish(propagate(normalized, z, linear.weight), mode);
}

template <typename T>
Tensor<T> GinLayer<T>::forward(const Tensor<T>& adjacency, const Tensor<T>& z, Mode mode)
{
    check_graph_inputs(adjacency, z, linear.in_width(), "gin");
    const auto aggregated = add(scale_by(z, add_scalar(omega, T(1))), matmul(adjacency, z));
    return linear.finish(matmul(aggregated, linear.weight), mode);
}

template <typename T>
void GinLayer<T>::collect(ParameterRegistry<T>& reg, const std::string& prefix) const
{
    linear.collect(reg, prefix);
    reg.add(prefix + "/omega", omega, ParamGroup::weight);
}

template <typename T>
GraphLayer<T>::GraphLayer(GnnKind kind, std::size_t d_in, std::size_t d_out, bool activation, bool batch_norm,
                          Rng& rng)
    : kind_(kind)
{
    if (kind == GnnKind::gcn)
        gcn_ = GcnLayer<T>(d_in, d_out, activation, batch_norm, rng);
    else
        gin_ = GinLayer<T>(d_in, d_out, activation, batch_norm, rng);
}

template <typename T>
Tensor<T> GraphLayer<T>::forward(const Tensor<T>& raw, const Tensor<T>& normalized, const Tensor<T>& z, Mode mode)
{
    return kind_ == GnnKind::gcn ? gcn_.forward(normalized, z, mode) : gin_.forward(raw, z, mode);
}

template <typename T>
void GraphLayer<T>::collect(ParameterRegistry<T>& reg, const std::string& prefix) const
{
    if (kind_ == GnnKind::gcn)
        gcn_.collect(reg, prefix);
    else
        gin_.collect(reg, prefix);
}

template Tensor<float> normalize_adjacency(const Tensor<float>&, bool);
template Tensor<double> normalize_adjacency(const Tensor<double>&, bool);
template struct GraphLinear<float>;
template struct GraphLinear<double>;
template class GcnLayer<float>;
template class GcnLayer<double>;
template class GinLayer<float>;
template class GinLayer<double>;
template class GraphLayer<float>;
template class GraphLayer<double>;

} // namespace scg
