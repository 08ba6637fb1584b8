#include "scg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "scg/backbone.hpp"
#include "scg/error.hpp"
#include "scg/gnn.hpp"
#include "scg/losses.hpp"
#include "scg/scg.hpp"

namespace scg {

double gradient_relative_error(const GradCase& c, Rng& rng, double step)
{
    const auto probe = [&] {
        NoGradGuard guard;
        return c.fn(c.inputs);
    }();
    Tensor<double> weights(probe.shape());
    fill_uniform(weights, rng, 1.0);
    const auto objective = [&] { return sum(mul(c.fn(c.inputs), weights)); };

    for (auto t : c.inputs)
        t.zero_grad();
    objective().backward();

    double diff2 = 0, analytic2 = 0, numeric2 = 0;
    NoGradGuard guard;
    for (auto t : c.inputs) {
        std::vector<double> analytic(t.numel(), 0.0);
        if (t.has_grad())
            std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto v = t.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            v[i] = saved + step;
            const double up = objective().item();
            v[i] = saved - step;
            const double down = objective().item();
            v[i] = saved;
            const double numeric = (up - down) / (2 * step);
            diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
            analytic2 += analytic[i] * analytic[i];
            numeric2 += numeric * numeric;
        }
    }
    return std::sqrt(diff2) / std::max(std::sqrt(analytic2) + std::sqrt(numeric2), 1e-12);
}

namespace {

using D = double;
using Maker = std::function<GradCase(Rng&)>;

Tensor<D> rand_t(Rng& rng, Shape shape, double lo = -1, double hi = 1)
{
    Tensor<D> t(std::move(shape), 0.0, true);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.values())
        v = dist(rng);
    return t;
}

// Entries bounded away from `at` so a ±h probe never crosses a kink.
Tensor<D> rand_away(Rng& rng, Shape shape, double at, double margin = 0.05)
{
    auto t = rand_t(rng, std::move(shape));
    for (auto& v : t.values())
        if (std::abs(v - at) < margin)
            v = at + (v >= at ? margin : -margin);
    return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

GradCase unary(Tensor<D> x, std::function<Tensor<D>(const Tensor<D>&)> f)
{
    return {{x}, [f](const auto& in) { return f(in[0]); }};
}

GradCase binary(Tensor<D> a, Tensor<D> b, std::function<Tensor<D>(const Tensor<D>&, const Tensor<D>&)> f)
{
    return {{a, b}, [f](const auto& in) { return f(in[0], in[1]); }};
}

Shape rand_shape(Rng& rng)
{
    return {pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 1, 4)};
}

// Symmetric nonnegative adjacency with diagonal ≥ 0.1, as produced by the SCG.
Tensor<D> rand_adjacency(Rng& rng, std::size_t n, bool symmetric = true)
{
    auto a = rand_t(rng, {n, n}, 0.0, 1.0);
    auto v = a.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i && symmetric; ++j)
            v[j * n + i] = v[i * n + j];
    return a;
}

// Builds a graph-layer case. Adjacency is a constant; θ, bias, ω, Z vary.
GradCase layer_case(Rng& rng, GnnKind kind, bool batch_norm)
{
    const std::size_t n = pick(rng, 2, 6), din = pick(rng, 1, 4), dout = pick(rng, 1, 4);
    auto layer = std::make_shared<GraphLayer<D>>(kind, din, dout, false, batch_norm, rng);
    auto adj = rand_adjacency(rng, n);
    adj.set_requires_grad(false);
    const auto norm = normalize_adjacency(adj);
    ParameterRegistry<D> reg;
    layer->collect(reg, "l");
    GradCase c;
    c.inputs.push_back(rand_t(rng, {n, din}));
    for (auto& p : reg.parameters()) {
        auto t = p.tensor;
        fill_uniform(t, rng, 1.0);
        c.inputs.push_back(t);
    }
    c.fn = [layer, adj, norm](const auto& in) { return layer->forward(adj, norm, in[0], Mode::train); };
    return c;
}

const std::map<std::string, Maker>& registry()
{
    static const std::map<std::string, Maker> cases = {
        {"add", [](Rng& r) { auto s = rand_shape(r); return binary(rand_t(r, s), rand_t(r, s), add<D>); }},
        {"sub", [](Rng& r) { auto s = rand_shape(r); return binary(rand_t(r, s), rand_t(r, s), sub<D>); }},
        {"mul", [](Rng& r) { auto s = rand_shape(r); return binary(rand_t(r, s), rand_t(r, s), mul<D>); }},
        {"div", [](Rng& r) { auto s = rand_shape(r); return binary(rand_t(r, s), rand_t(r, s, 0.5, 2.0), div<D>); }},
        {"add_scalar", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), [](auto& x) { return add_scalar(x, 0.7); }); }},
        {"mul_scalar", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), [](auto& x) { return mul_scalar(x, -1.3); }); }},
        {"neg", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), neg<D>); }},
        {"scale_by", [](Rng& r) { return binary(rand_t(r, rand_shape(r)), rand_t(r, {1}), scale_by<D>); }},
        {"add_bias", [](Rng& r) {
             auto s = rand_shape(r);
             const std::size_t axis = pick(r, 0, 2);
             return binary(rand_t(r, s), rand_t(r, {s[axis]}),
                           [axis](auto& x, auto& b) { return add_bias(x, b, axis); });
         }},
        {"matmul", [](Rng& r) {
             const std::size_t m = pick(r, 1, 5), k = pick(r, 1, 5), n = pick(r, 1, 5);
             return binary(rand_t(r, {m, k}), rand_t(r, {k, n}), matmul<D>);
         }},
        {"matmul_batched", [](Rng& r) {
             const std::size_t b = pick(r, 1, 3), m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
             return binary(rand_t(r, {b, m, k}), rand_t(r, {b, k, n}), matmul<D>);
         }},
        {"matmul_shared", [](Rng& r) {
             const std::size_t b = pick(r, 1, 3), m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
             return binary(rand_t(r, {b, m, k}), rand_t(r, {k, n}), matmul<D>);
         }},
        {"transpose", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), transpose<D>); }},
        {"reshape", [](Rng& r) {
             auto s = rand_shape(r);
             return unary(rand_t(r, s), [s](auto& x) { return reshape(x, Shape{s[0] * s[1], s[2]}); });
         }},
        {"flatten", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), [](auto& x) { return flatten(x, 1); }); }},
        {"relu", [](Rng& r) { return unary(rand_away(r, rand_shape(r), 0.0), relu<D>); }},
        {"exp", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), exp<D>); }},
        {"log", [](Rng& r) { return unary(rand_t(r, rand_shape(r), 0.2, 3.0), log<D>); }},
        {"log_eps", [](Rng& r) {
             return unary(rand_t(r, rand_shape(r), 0.0, 1.0), [](auto& x) { return log_eps(x, 1e-2); });
         }},
        {"clamp", [](Rng& r) {
             auto x = rand_away(r, rand_shape(r), -0.5);
             for (auto& v : x.values())
                 if (std::abs(v - 0.5) < 0.05)
                     v += 0.1;
             return unary(x, [](auto& t) { return clamp(t, -0.5, 0.5); });
         }},
        {"clamp_max", [](Rng& r) {
             return unary(rand_away(r, rand_shape(r), 0.3), [](auto& x) { return clamp_max(x, 0.3); });
         }},
        {"softmax", [](Rng& r) {
             const std::size_t axis = pick(r, 0, 2);
             return unary(rand_t(r, rand_shape(r), -2, 2), [axis](auto& x) { return softmax(x, axis); });
         }},
        {"softmax_rows", [](Rng& r) { return unary(rand_t(r, rand_shape(r), -2, 2), softmax_rows<D>); }},
        {"sum", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), sum<D>); }},
        {"mean", [](Rng& r) { return unary(rand_t(r, rand_shape(r)), mean<D>); }},
        {"sum_axis", [](Rng& r) {
             const std::size_t axis = pick(r, 0, 2);
             return unary(rand_t(r, rand_shape(r)), [axis](auto& x) { return sum_axis(x, axis); });
         }},
        {"diagonal", [](Rng& r) {
             const std::size_t n = pick(r, 1, 5);
             return unary(rand_t(r, {pick(r, 1, 3), n, n}), diagonal<D>);
         }},
        {"conv2d", [](Rng& r) {
             const std::size_t cin = pick(r, 1, 3), cout = pick(r, 1, 3), k = pick(r, 0, 1) ? 3 : 1;
             const std::size_t stride = pick(r, 1, 2), h = pick(r, 3, 6), w = pick(r, 3, 6);
             return GradCase{{rand_t(r, {pick(r, 1, 2), cin, h, w}), rand_t(r, {cout, cin, k, k}), rand_t(r, {cout})},
                             [stride, k](const auto& in) { return conv2d(in[0], in[1], in[2], stride, k / 2); }};
         }},
        {"conv2d_replicate", [](Rng& r) {
             const std::size_t cin = pick(r, 1, 3), cout = pick(r, 1, 3), k = pick(r, 0, 1) ? 3 : 5;
             const std::size_t stride = pick(r, 1, 2), h = pick(r, 3, 6), w = pick(r, 3, 6);
             return GradCase{{rand_t(r, {pick(r, 1, 2), cin, h, w}), rand_t(r, {cout, cin, k, k}), rand_t(r, {cout})},
                             [stride, k](const auto& in) {
                                 return conv2d(in[0], in[1], in[2], stride, k / 2, PadMode::replicate);
                             }};
         }},
        {"adaptive_avg_pool2d", [](Rng& r) {
             const std::size_t h = pick(r, 2, 7), w = pick(r, 2, 7), oh = pick(r, 1, h), ow = pick(r, 1, w);
             return unary(rand_t(r, {pick(r, 1, 2), pick(r, 1, 3), h, w}),
                          [oh, ow](auto& x) { return adaptive_avg_pool2d(x, oh, ow); });
         }},
        {"upsample_bilinear", [](Rng& r) {
             const std::size_t h = pick(r, 1, 4), w = pick(r, 1, 4), oh = h * pick(r, 1, 3) + pick(r, 0, 2);
             const std::size_t ow = w * pick(r, 1, 3) + pick(r, 0, 2);
             return unary(rand_t(r, {1, pick(r, 1, 2), h, w}),
                          [oh, ow](auto& x) { return upsample_bilinear(x, oh, ow); });
         }},
        {"batch_norm_train", [](Rng& r) {
             const std::size_t n = pick(r, 2, 4), c = pick(r, 1, 3), h = pick(r, 1, 3), w = pick(r, 1, 3);
             auto state = std::make_shared<BatchNormState<D>>(c);
             return GradCase{{rand_t(r, {n, c, h, w}), rand_t(r, {c}, 0.5, 1.5), rand_t(r, {c})},
                             [state](const auto& in) { return batch_norm(in[0], in[1], in[2], *state, 1, Mode::train); }};
         }},
        {"batch_norm_eval", [](Rng& r) {
             const std::size_t n = pick(r, 1, 4), f = pick(r, 1, 4);
             auto state = std::make_shared<BatchNormState<D>>(f);
             fill_uniform(state->running_mean, r, 1.0);
             for (auto& v : state->running_var.values())
                 v = 0.5 + std::uniform_real_distribution<double>(0, 1)(r);
             return GradCase{{rand_t(r, {n, f}), rand_t(r, {f}), rand_t(r, {f})},
                             [state](const auto& in) { return batch_norm(in[0], in[1], in[2], *state, 1, Mode::eval); }};
         }},
        {"reparameterize", [](Rng& r) {
             auto s = Shape{pick(r, 1, 5), pick(r, 1, 4)};
             auto noise = rand_t(r, s);
             noise.set_requires_grad(false);
             return binary(rand_t(r, s), rand_t(r, s),
                           [noise](auto& m, auto& ls) { return reparameterize(m, ls, noise); });
         }},
        {"kl_loss", [](Rng& r) {
             auto s = Shape{pick(r, 1, 3), pick(r, 1, 5), pick(r, 1, 4)};
             return binary(rand_t(r, s), rand_t(r, s, -1.0, 1.0), kl_loss<D>);
         }},
        {"residual_embedding", [](Rng& r) {
             auto s = Shape{pick(r, 1, 5), pick(r, 1, 4)};
             return binary(rand_t(r, s), rand_t(r, s), residual_embedding<D>);
         }},
        {"build_adjacency", [](Rng& r) {
             // Reject near-zero inner products so ReLU stays differentiable under the probe.
             for (;;) {
                 auto z = rand_t(r, {pick(r, 1, 2), pick(r, 2, 5), pick(r, 1, 4)});
                 NoGradGuard g;
                 const auto p = matmul(z, transpose(z));
                 if (std::all_of(p.values().begin(), p.values().end(), [](D v) { return std::abs(v) > 1e-3; }))
                     return unary(z, [](auto& x) { return build_adjacency(x, false); });
             }
         }},
        {"build_adjacency_directed", [](Rng& r) {
             for (;;) {
                 auto z = rand_t(r, {pick(r, 2, 5), pick(r, 1, 4)});
                 NoGradGuard g;
                 const auto p = matmul(softmax_rows(z), transpose(z));
                 if (std::all_of(p.values().begin(), p.values().end(), [](D v) { return std::abs(v) > 1e-3; }))
                     return unary(z, [](auto& x) { return build_adjacency(x, true); });
             }
         }},
        {"dl_loss", [](Rng& r) {
             const std::size_t n = pick(r, 1, 5);
             auto a = rand_t(r, {pick(r, 1, 2), n, n}, 0.05, 0.95);
             const auto gamma = adaptive_factor(a, 1e-7);
             return unary(a, [gamma](auto& x) { return diagonal_log_loss(x, gamma, 1e-7); });
         }},
        {"adaptive_enhance", [](Rng& r) {
             const std::size_t n = pick(r, 1, 5), c = pick(r, 1, 3);
             std::vector<D> gamma{1.0 + std::uniform_real_distribution<double>(0, 2)(r)};
             return binary(rand_t(r, {n, n}), rand_t(r, {n, c}), [gamma](auto& a, auto& z) {
                 auto e = adaptive_enhance(a, z, gamma);
                 return add(sum(e.adjacency), sum(mul(e.residual, e.residual)));
             });
         }},
        {"normalize_adjacency", [](Rng& r) {
             return unary(rand_adjacency(r, pick(r, 2, 6), false), [](auto& a) { return normalize_adjacency(a); });
         }},
        {"normalize_adjacency_literal", [](Rng& r) {
             return unary(rand_adjacency(r, pick(r, 2, 6), false),
                          [](auto& a) { return normalize_adjacency(a, true); });
         }},
        {"gcn_layer", [](Rng& r) { return layer_case(r, GnnKind::gcn, false); }},
        {"gcn_layer_bn", [](Rng& r) { return layer_case(r, GnnKind::gcn, true); }},
        {"gin_layer", [](Rng& r) { return layer_case(r, GnnKind::gin, false); }},
        {"dice_loss", [](Rng& r) {
             const std::size_t n = pick(r, 1, 2), c = pick(r, 2, 4), h = pick(r, 1, 4), w = pick(r, 1, 4);
             std::vector<std::uint8_t> labels(n * h * w);
             for (auto& l : labels)
                 l = static_cast<std::uint8_t>(pick(r, 0, c - 1));
             return unary(rand_t(r, {n, c, h, w}, -2, 2),
                          [labels](auto& x) { return dice_loss_from_logits(x, std::span(labels)); });
         }},
        {"backbone", [](Rng& r) {
             BackboneConfig cfg;
             cfg.stage_widths = {2, 2, 3, 3};
             cfg.feature_width = 2;
             auto net = std::make_shared<Backbone<D>>(cfg, r);
             auto image = rand_t(r, {2, 3, 32, 32}, 0.0, 1.0);
             image.set_requires_grad(false);
             ParameterRegistry<D> reg;
             net->collect(reg);
             GradCase c;
             for (auto& p : reg.parameters())
                 c.inputs.push_back(p.tensor);
             c.fn = [net, image](const auto&) { return net->forward(image, Mode::train); };
             return c;
         }},
        {"scg_regularizers", [](Rng& r) {
             // L_kl + L_dl with respect to the encoder heads, γ frozen at the
             // starting point, noise-free embedding.
             ScgConfig cfg;
             cfg.feature_width = pick(r, 1, 3);
             cfg.classes = pick(r, 1, 3);
             cfg.nodes_h = pick(r, 1, 3);
             cfg.nodes_w = pick(r, 1, 3);
             auto scg_mod = std::make_shared<ScgModule<D>>(cfg, r);
             auto fmap = rand_t(r, {1, cfg.feature_width, cfg.nodes_h + 1, cfg.nodes_w + 1});
             fmap.set_requires_grad(false);
             ParameterRegistry<D> reg;
             scg_mod->collect(reg);
             GradCase c;
             for (auto& p : reg.parameters()) {
                 auto t = p.tensor;
                 fill_uniform(t, r, 0.8);
                 c.inputs.push_back(t);
             }
             std::vector<D> gamma;
             {
                 NoGradGuard g;
                 gamma = adaptive_factor(build_adjacency(scg_mod->encode(fmap).mean, false), 1e-7);
             }
             c.fn = [scg_mod, fmap, gamma](const auto&) {
                 const auto enc = scg_mod->encode(fmap);
                 const auto adj = build_adjacency(enc.mean, false);
                 return add(kl_loss(enc.mean, enc.log_sigma), diagonal_log_loss(adj, gamma, 1e-7));
             };
             return c;
         }},
    };
    return cases;
}

} // namespace

std::vector<std::string> gradcheck_ops()
{
    std::vector<std::string> names;
    for (const auto& [name, _] : registry())
        names.push_back(name);
    return names;
}

GradcheckReport run_gradcheck(const std::string& op, std::size_t instances, std::uint64_t seed, double tolerance)
{
    const auto& reg = registry();
    const auto it = reg.find(op);
    if (it == reg.end())
        throw RangeError("no gradient check named '" + op + "'");
    Rng rng(seed);
    GradcheckReport report{op, instances, 0.0, true};
    for (std::size_t i = 0; i < instances; ++i) {
        const auto c = it->second(rng);
        report.worst = std::max(report.worst, gradient_relative_error(c, rng));
    }
    report.passed = report.worst <= tolerance;
    return report;
}

} // namespace scg
