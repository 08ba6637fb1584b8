#include "scg/model.hpp"

#include "scg/error.hpp"

namespace scg {

template <typename T>
ScgNet<T>::ScgNet(const ModelConfig& config, std::uint64_t seed) : config_(config)
{
    config.validate();
    Rng rng(seed);
    backbone = Backbone<T>(config.backbone, rng);
    scg = ScgModule<T>(config.scg_config(), rng);
    gnn1 = GraphLayer<T>(config.gnn1, config.backbone.feature_width, config.hidden, true, true, rng);
    gnn2 = GraphLayer<T>(config.gnn2, config.hidden, config.classes, false, false, rng);
}

template <typename T>
ForwardOutput<T> ScgNet<T>::forward(const Tensor<T>& images, Mode mode, Rng& noise_rng)
{
    if (images.rank() != 4 || images.size(1) != 3)
        throw DimensionError("model expects images [N,3,H,W], got " + shape_str(images.shape()));
    ForwardOutput<T> out;
    out.feature_map = backbone.forward(images, mode);
    out.scg = scg.forward(out.feature_map, mode, noise_rng);
    const auto& adjacency = out.scg.adjacency;
    if (config_.gnn1 == GnnKind::gcn || config_.gnn2 == GnnKind::gcn)
        out.normalized = normalize_adjacency(adjacency, config_.literal_normalization);
    out.hidden = gnn1.forward(adjacency, out.normalized, out.scg.features, mode);
    out.prediction = gnn2.forward(adjacency, out.normalized, out.hidden, mode);

    out.node_logits = out.prediction;
    if (config_.sum_residual) {
        auto residual = out.scg.residual;
        if (config_.double_gamma) {
            Tensor<T> scale(residual.shape());
            const std::size_t per = residual.numel() / out.scg.gamma.size();
            for (std::size_t b = 0; b < out.scg.gamma.size(); ++b)
                std::fill_n(scale.values().begin() + static_cast<std::ptrdiff_t>(b * per), per, out.scg.gamma[b]);
            residual = mul(residual, scale);
        }
        out.node_logits = add(out.node_logits, residual);
    }

    const std::size_t N = images.size(0);
    const auto grid = reshape(transpose(out.node_logits), Shape{N, config_.classes, config_.nodes_h, config_.nodes_w});
    out.logits = upsample_bilinear(grid, images.size(2), images.size(3), true);
    return out;
}

template <typename T>
ParameterRegistry<T> ScgNet<T>::registry() const
{
    ParameterRegistry<T> reg;
    backbone.collect(reg, "backbone");
    scg.collect(reg, "scg");
    gnn1.collect(reg, "gnn1");
    gnn2.collect(reg, "gnn2");
    return reg;
}

template <typename T>
ParameterBreakdown parameter_breakdown(const ScgNet<T>& model)
{
    ParameterBreakdown b;
    auto starts = [](const std::string& s, const char* p) { return s.rfind(p, 0) == 0; };
    const auto reg = model.registry();
    for (const auto& p : reg.parameters()) {
        const std::size_t n = p.tensor.numel();
        b.total += n;
        if (starts(p.name, "backbone/"))
            b.backbone += n;
        else if (starts(p.name, "scg/mean_head/"))
            b.mean_head += n;
        else if (starts(p.name, "scg/deviation_head/"))
            b.deviation_head += n;
        else if (starts(p.name, "gnn1/bn/"))
            b.gnn1_bn += n;
        else if (starts(p.name, "gnn1/"))
            b.gnn1 += n;
        else if (starts(p.name, "gnn2/bn/"))
            b.gnn2_bn += n;
        else if (starts(p.name, "gnn2/"))
            b.gnn2 += n;
    }
    return b;
}

template class ScgNet<float>;
template class ScgNet<double>;
template ParameterBreakdown parameter_breakdown(const ScgNet<float>&);
template ParameterBreakdown parameter_breakdown(const ScgNet<double>&);

} // namespace scg
