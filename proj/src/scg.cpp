#include "scg/scg.hpp"

#include <cmath>

#include "scg/error.hpp"

namespace scg {

std::string to_string(ScgVariant v)
{
    switch (v) {
    case ScgVariant::variational:
        return "variational";
    case ScgVariant::ae:
        return "ae";
    case ScgVariant::directed:
        return "directed";
    }
    return "?";
}

ScgVariant parse_scg_variant(const std::string& s)
{
    if (s == "variational")
        return ScgVariant::variational;
    if (s == "ae")
        return ScgVariant::ae;
    if (s == "directed")
        return ScgVariant::directed;
    throw DataError("unknown scg.variant '" + s + "' (expected variational, ae or directed)");
}

namespace {

// [N,c,h,w] -> [N,h·w,c], nodes in row-major grid order.
template <typename T>
Tensor<T> nodes_last(const Tensor<T>& map)
{
    const std::size_t N = map.size(0), c = map.size(1), n = map.size(2) * map.size(3);
    return transpose(reshape(map, Shape{N, c, n}));
}

template <typename T>
std::size_t batch_of(const Tensor<T>& t, std::size_t matrix_rank = 2)
{
    return t.rank() > matrix_rank ? t.size(0) : 1;
}

} // namespace

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mean, const Tensor<T>& log_sigma, const Tensor<T>& noise)
{
    if (mean.shape() != log_sigma.shape() || mean.shape() != noise.shape())
        throw DimensionError("reparameterize: shapes " + shape_str(mean.shape()) + ", " +
                             shape_str(log_sigma.shape()) + ", " + shape_str(noise.shape()) + " must agree");
    return add(mean, mul(exp(log_sigma), noise));
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mean, const Tensor<T>& log_sigma, Mode mode, Rng& rng)
{
    Tensor<T> noise(mean.shape(), T(0));
    if (mode == Mode::train) {
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : noise.values())
            v = static_cast<T>(dist(rng));
    }
    return reparameterize(mean, log_sigma, noise);
}

template <typename T>
Tensor<T> kl_loss(const Tensor<T>& mean, const Tensor<T>& log_sigma)
{
    if (mean.shape() != log_sigma.shape())
        throw DimensionError("kl_loss: shapes " + shape_str(mean.shape()) + " and " + shape_str(log_sigma.shape()) +
                             " must agree");
    const auto two_log_sigma = mul_scalar(log_sigma, T(2));
    const auto terms = add_scalar(sub(sub(two_log_sigma, mul(mean, mean)), exp(two_log_sigma)), T(1));
    return mul_scalar(scg::mean(terms), T(-0.5));
}

template <typename T>
Tensor<T> residual_embedding(const Tensor<T>& mean, const Tensor<T>& log_sigma)
{
    if (mean.shape() != log_sigma.shape())
        throw DimensionError("residual_embedding: shapes " + shape_str(mean.shape()) + " and " +
                             shape_str(log_sigma.shape()) + " must agree");
    return mul(mean, add_scalar(neg(log_sigma), T(1)));
}

template <typename T>
Tensor<T> build_adjacency(const Tensor<T>& embedding, bool directed)
{
    if (embedding.rank() != 2 && embedding.rank() != 3)
        throw DimensionError("build_adjacency: expects [n,c] or [N,n,c], got " + shape_str(embedding.shape()));
    const auto right = transpose(embedding);
    const auto left = directed ? softmax_rows(embedding) : embedding;
    return relu(matmul(left, right));
}

namespace {

template <typename T>
std::size_t check_square(const Tensor<T>& adjacency, const char* who)
{
    const std::size_t r = adjacency.rank();
    if ((r != 2 && r != 3) || adjacency.size(r - 1) != adjacency.size(r - 2))
        throw DimensionError(std::string(who) + ": expects square [n,n] or [N,n,n], got " +
                             shape_str(adjacency.shape()));
    return adjacency.size(r - 1);
}

} // namespace

template <typename T>
std::vector<T> adaptive_factor(const Tensor<T>& adjacency, T eps)
{
    const std::size_t n = check_square(adjacency, "adaptive_factor");
    const std::size_t batch = batch_of(adjacency);
    const auto a = adjacency.values();
    std::vector<T> gamma(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        T trace = 0;
        for (std::size_t i = 0; i < n; ++i)
            trace += a[b * n * n + i * n + i];
        gamma[b] = std::sqrt(T(1) + static_cast<T>(n) / (trace + eps));
    }
    return gamma;
}

template <typename T>
Tensor<T> diagonal_log_loss(const Tensor<T>& adjacency, const std::vector<T>& gamma, T eps)
{
    const std::size_t n = check_square(adjacency, "diagonal_log_loss");
    const std::size_t batch = batch_of(adjacency);
    if (gamma.size() != batch)
        throw DimensionError("diagonal_log_loss: " + std::to_string(gamma.size()) + " factors for batch of " +
                             std::to_string(batch));
    const auto diag = diagonal(adjacency);
    Tensor<T> weights(diag.shape(), T(0));
    auto w = weights.values();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i)
            w[b * n + i] = -gamma[b] / (static_cast<T>(n * n) * static_cast<T>(batch));
    return sum(mul(log_eps(clamp(diag, T(0), T(1)), eps), weights));
}

template <typename T>
FactorAndLoss<T> adaptive_factor_and_dl_loss(const Tensor<T>& adjacency, T eps)
{
    FactorAndLoss<T> result;
    result.gamma = adaptive_factor(adjacency, eps);
    result.dl_loss = diagonal_log_loss(adjacency, result.gamma, eps);
    return result;
}

template <typename T>
Enhanced<T> adaptive_enhance(const Tensor<T>& adjacency, const Tensor<T>& residual, const std::vector<T>& gamma)
{
    const std::size_t n = check_square(adjacency, "adaptive_enhance");
    const std::size_t batch = batch_of(adjacency);
    if (gamma.size() != batch || batch_of(residual) != batch || residual.size(residual.rank() - 2) != n)
        throw DimensionError("adaptive_enhance: residual " + shape_str(residual.shape()) + " and " +
                             std::to_string(gamma.size()) + " factors do not match adjacency " +
                             shape_str(adjacency.shape()));

    Tensor<T> diag_mask(adjacency.shape(), T(1));
    Tensor<T> scale(residual.shape(), T(0));
    auto m = diag_mask.values();
    auto s = scale.values();
    const std::size_t per = residual.numel() / batch;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < n; ++i)
            m[b * n * n + i * n + i] = T(1) + gamma[b];
        std::fill(s.begin() + static_cast<std::ptrdiff_t>(b * per),
                  s.begin() + static_cast<std::ptrdiff_t>((b + 1) * per), gamma[b]);
    }
    return {mul(adjacency, diag_mask), mul(residual, scale)};
}

template <typename T>
ScgModule<T>::ScgModule(const ScgConfig& config, Rng& rng) : config_(config)
{
    if (config.nodes_h == 0 || config.nodes_w == 0)
        throw DataError("scg.nodes must be positive");
    mean_head = Conv2dLayer<T>(config.feature_width, config.classes, 3, 1, true, rng, PadMode::replicate);
    if (config.variant != ScgVariant::ae)
        deviation_head = Conv2dLayer<T>(config.feature_width, config.classes, 1, 1, true, rng);
}

template <typename T>
ScgEncoding<T> ScgModule<T>::encode(const Tensor<T>& feature_map) const
{
    if (feature_map.rank() != 4 || feature_map.size(1) != config_.feature_width)
        throw DimensionError("scg: expects feature map [N," + std::to_string(config_.feature_width) + ",h,w], got " +
                             shape_str(feature_map.shape()));
    if (config_.nodes_h > feature_map.size(2) || config_.nodes_w > feature_map.size(3))
        throw DimensionError("scg: node grid " + std::to_string(config_.nodes_h) + "x" +
                             std::to_string(config_.nodes_w) + " exceeds feature grid " +
                             std::to_string(feature_map.size(2)) + "x" + std::to_string(feature_map.size(3)));
    const auto pooled = adaptive_avg_pool2d(feature_map, config_.nodes_h, config_.nodes_w);
    ScgEncoding<T> enc;
    enc.features = nodes_last(pooled);
    enc.mean = nodes_last(mean_head.forward(pooled));
    if (config_.variant != ScgVariant::ae)
        enc.log_sigma = clamp_max(nodes_last(deviation_head.forward(pooled)), T(1));
    return enc;
}

template <typename T>
ScgOutput<T> ScgModule<T>::forward(const Tensor<T>& feature_map, Mode mode, Rng& noise_rng) const
{
    ScgOutput<T> out;
    out.encoding = encode(feature_map);
    const auto& enc = out.encoding;
    out.features = enc.features;
    Tensor<T> residual;
    if (config_.variant == ScgVariant::ae) {
        out.embedding = enc.mean;
        residual = enc.mean;
    } else {
        out.embedding = reparameterize(enc.mean, enc.log_sigma, mode, noise_rng);
        out.kl_loss = kl_loss(enc.mean, enc.log_sigma);
        residual = residual_embedding(enc.mean, enc.log_sigma);
    }
    out.raw_adjacency = build_adjacency(out.embedding, config_.variant == ScgVariant::directed);
    auto factor = adaptive_factor_and_dl_loss(out.raw_adjacency, static_cast<T>(config_.epsilon));
    out.gamma = std::move(factor.gamma);
    out.dl_loss = factor.dl_loss;
    auto enhanced = adaptive_enhance(out.raw_adjacency, residual, out.gamma);
    out.adjacency = enhanced.adjacency;
    out.residual = enhanced.residual;
    return out;
}

template <typename T>
void ScgModule<T>::collect(ParameterRegistry<T>& reg, const std::string& prefix) const
{
    mean_head.collect(reg, prefix + "/mean_head");
    if (deviation_head.weight.defined())
        deviation_head.collect(reg, prefix + "/deviation_head");
}

#define SCG_INSTANTIATE_SCG(T)                                                                                       \
    template Tensor<T> reparameterize(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> reparameterize(const Tensor<T>&, const Tensor<T>&, Mode, Rng&);                              \
    template Tensor<T> kl_loss(const Tensor<T>&, const Tensor<T>&);                                                  \
    template Tensor<T> residual_embedding(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> build_adjacency(const Tensor<T>&, bool);                                                      \
    template std::vector<T> adaptive_factor(const Tensor<T>&, T);                                                    \
    template Tensor<T> diagonal_log_loss(const Tensor<T>&, const std::vector<T>&, T);                                \
    template FactorAndLoss<T> adaptive_factor_and_dl_loss(const Tensor<T>&, T);                                      \
    template Enhanced<T> adaptive_enhance(const Tensor<T>&, const Tensor<T>&, const std::vector<T>&);               \
    template class ScgModule<T>;

SCG_INSTANTIATE_SCG(float)
SCG_INSTANTIATE_SCG(double)

} // namespace scg
