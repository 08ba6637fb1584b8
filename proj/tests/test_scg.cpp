#include <doctest.h>

#include "helpers.hpp"
#include "scg/error.hpp"
#include "scg/scg.hpp"

using namespace scg;
using testing::max_abs_diff;
using testing::random;
using testing::tensor;

namespace {

void zero_heads(ScgModule<double>& m)
{
    ParameterRegistry<double> reg;
    m.collect(reg);
    for (auto p : reg.parameters())
        for (auto& v : p.tensor.values())
            v = 0;
}

} // namespace

TEST_CASE("encode")
{
    Rng rng(1);
    ScgConfig cfg;
    cfg.feature_width = 5;
    cfg.classes = 3;
    cfg.nodes_h = 4;
    cfg.nodes_w = 3;
    ScgModule<double> m(cfg, rng);

    SUBCASE("full-resolution grid flattens the feature map row-major")
    {
        const auto f = random(rng, {2, 5, 4, 3});
        const auto enc = m.encode(f);
        CHECK(enc.features.shape() == Shape{2, 12, 5});
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t ch = 0; ch < 5; ++ch)
                for (std::size_t node = 0; node < 12; ++node)
                    CHECK(enc.features[(b * 12 + node) * 5 + ch] == f[(b * 5 + ch) * 12 + node]);
        CHECK(enc.mean.shape() == Shape{2, 12, 3});
        CHECK(enc.log_sigma.shape() == Shape{2, 12, 3});
    }
    SUBCASE("zero heads give zero moments")
    {
        zero_heads(m);
        const auto enc = m.encode(random(rng, {1, 5, 8, 6}));
        CHECK(max_abs_diff(enc.mean, std::vector<double>(36, 0.0)) == 0);
        CHECK(max_abs_diff(enc.log_sigma, std::vector<double>(36, 0.0)) == 0);
    }
    SUBCASE("log sigma never exceeds one")
    {
        ParameterRegistry<double> reg;
        m.collect(reg);
        for (auto p : reg.parameters())
            for (auto& v : p.tensor.values())
                v = 3.0;
        const auto enc = m.encode(random(rng, {1, 5, 4, 3}, 0, 1));
        for (auto v : enc.log_sigma.values())
            CHECK(v <= 1.0);
    }
    SUBCASE("node grid larger than the feature grid")
    {
        CHECK_THROWS_AS(m.encode(random(rng, {1, 5, 3, 3})), DimensionError);
    }
}

TEST_CASE("reparameterize")
{
    Rng rng(2);
    const auto m = random(rng, {3, 2});
    const auto ls = random(rng, {3, 2});
    CHECK(max_abs_diff(reparameterize(m, ls, Mode::eval, rng), m) == 0);
    const auto plus_one = reparameterize(m, Tensor<double>(Shape{3, 2}, 0.0), Tensor<double>(Shape{3, 2}, 1.0));
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(plus_one[i] == m[i] + 1);
    const auto z = reparameterize(tensor({1, 1}, {0}), tensor({1, 1}, {std::log(2.0)}), tensor({1, 1}, {0.5}));
    CHECK(z.item() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(reparameterize(m, tensor({2}, {0, 0}), m), DimensionError);
}

TEST_CASE("kl loss closed forms")
{
    CHECK(kl_loss(Tensor<double>(Shape{4, 3}, 0.0), Tensor<double>(Shape{4, 3}, 0.0)).item() == 0.0);
    CHECK(kl_loss(tensor({1, 1}, {1}), tensor({1, 1}, {0})).item() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(kl_loss(tensor({1, 1}, {0}), tensor({1, 1}, {1})).item() ==
          doctest::Approx((std::exp(2.0) - 3) / 2).epsilon(1e-14));
    Rng rng(3);
    for (int i = 0; i < 50; ++i)
        CHECK(kl_loss(random(rng, {5, 4}, -3, 3), random(rng, {5, 4}, -3, 1)).item() >= 0);
}

TEST_CASE("residual embedding")
{
    Rng rng(4);
    const auto m = random(rng, {3, 2});
    CHECK(max_abs_diff(residual_embedding(m, Tensor<double>(Shape{3, 2}, 0.0)), m) == 0);
    CHECK(max_abs_diff(residual_embedding(Tensor<double>(Shape{3, 2}, 0.0), m), std::vector<double>(6, 0.0)) == 0);
    CHECK(residual_embedding(tensor({1}, {2}), tensor({1}, {0.5})).item() == 1.0);
}

TEST_CASE("adjacency construction")
{
    CHECK(max_abs_diff(build_adjacency(tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), false),
                       {1, 0, 0, 0, 1, 0, 0, 0, 1}) == 0);
    CHECK(max_abs_diff(build_adjacency(tensor({2, 2}, {1, 0, -1, 0}), false), {1, 0, 0, 1}) == 0);

    SUBCASE("directed variant against a hand oracle")
    {
        const double l3 = std::log(3.0);
        const auto a = build_adjacency(tensor({2, 2}, {0, l3, 0, 0}), true);
        const double zbar[2][2] = {{0.25, 0.75}, {0.5, 0.5}};
        const double z[2][2] = {{0, l3}, {0, 0}};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const double dot = zbar[i][0] * z[j][0] + zbar[i][1] * z[j][1];
                CHECK(a[i * 2 + j] == doctest::Approx(std::max(dot, 0.0)).epsilon(1e-14));
            }
        CHECK(a[1] != a[2]);
    }
    SUBCASE("directed normalized rows sum to one")
    {
        Rng rng(5);
        const auto s = softmax_rows(random(rng, {7, 4}, -3, 3));
        for (std::size_t i = 0; i < 7; ++i) {
            double t = 0;
            for (std::size_t j = 0; j < 4; ++j)
                t += s[i * 4 + j];
            CHECK(std::abs(t - 1) <= 1e-6);
        }
    }
}

TEST_CASE("adaptive factor and diagonal log loss")
{
    const double eps = 1e-7;
    SUBCASE("saturated diagonal")
    {
        const auto r = adaptive_factor_and_dl_loss(tensor({3, 3}, {1, 0.2, 0, 0.2, 1, 0, 0, 0, 1}), eps);
        CHECK(r.gamma[0] == doctest::Approx(std::sqrt(1 + 3 / (3 + eps))).epsilon(1e-12));
        CHECK(std::abs(r.dl_loss.item()) < 1e-6);
    }
    SUBCASE("n = 2, half diagonal")
    {
        const auto r = adaptive_factor_and_dl_loss(tensor({2, 2}, {0.5, 0.1, 0.1, 0.5}), eps);
        CHECK(std::abs(r.gamma[0] - std::sqrt(3.0)) <= 1e-6);
        // (√3/4)·2·ln 2 = 0.6002829...
        CHECK(std::abs(r.dl_loss.item() - 0.6002829) <= 1e-6);
        const double g = std::sqrt(1 + 2 / (1 + eps));
        CHECK(r.dl_loss.item() == doctest::Approx(-(g / 4) * 2 * std::log(0.5 + eps)).epsilon(1e-12));
    }
    SUBCASE("empty diagonal is heavily penalized")
    {
        const auto r = adaptive_factor_and_dl_loss(tensor({1, 1}, {0}), eps);
        CHECK(r.gamma[0] == doctest::Approx(std::sqrt(1 + 1e7)).epsilon(1e-9));
        CHECK(r.dl_loss.item() == doctest::Approx(-r.gamma[0] * std::log(eps)).epsilon(1e-9));
        CHECK(r.dl_loss.item() == doctest::Approx(5.097e4).epsilon(1e-3));
    }
    SUBCASE("gamma exceeds one")
    {
        Rng rng(6);
        for (int i = 0; i < 50; ++i) {
            const auto r = adaptive_factor_and_dl_loss(random(rng, {2, 6, 6}, 0, 5), eps);
            for (auto g : r.gamma)
                CHECK(g > 1);
        }
    }
    SUBCASE("loss decreases as a diagonal entry grows toward one")
    {
        std::vector<double> g{1.7};
        double prev = 1e300;
        for (double d = 0.05; d <= 1.0; d += 0.05) {
            const double l = diagonal_log_loss(tensor({2, 2}, {d, 0.3, 0.3, 0.4}), g, eps).item();
            CHECK(l < prev);
            prev = l;
        }
    }
    SUBCASE("batched losses average per-sample values")
    {
        const auto a = tensor({2, 2, 2}, {0.5, 0, 0, 0.5, 0.9, 0, 0, 0.2});
        const auto r = adaptive_factor_and_dl_loss(a, eps);
        const auto r0 = adaptive_factor_and_dl_loss(tensor({2, 2}, {0.5, 0, 0, 0.5}), eps);
        const auto r1 = adaptive_factor_and_dl_loss(tensor({2, 2}, {0.9, 0, 0, 0.2}), eps);
        CHECK(r.gamma == std::vector<double>{r0.gamma[0], r1.gamma[0]});
        CHECK(r.dl_loss.item() == doctest::Approx((r0.dl_loss.item() + r1.dl_loss.item()) / 2).epsilon(1e-14));
    }
}

TEST_CASE("adaptive enhancement")
{
    Rng rng(7);
    const auto z = random(rng, {2, 3});
    const auto off = tensor({2, 2}, {0, 2, 3, 0});
    CHECK(max_abs_diff(adaptive_enhance(off, z, {2.5}).adjacency, off) == 0);
    const auto e = adaptive_enhance(tensor({2, 2}, {1, 2, 3, 4}), z, {2.0});
    CHECK(max_abs_diff(e.adjacency, {3, 2, 3, 12}) == 0);
    CHECK(max_abs_diff(adaptive_enhance(off, z, {1.0}).residual, z) == 0);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(e.residual[i] == 2 * z[i]);
}

TEST_CASE("scg forward")
{
    Rng rng(8);
    ScgConfig cfg;
    cfg.feature_width = 6;
    cfg.classes = 4;
    cfg.nodes_h = 3;
    cfg.nodes_w = 3;

    SUBCASE("zero heads in eval mode")
    {
        ScgModule<double> m(cfg, rng);
        zero_heads(m);
        const auto out = m.forward(random(rng, {1, 6, 3, 3}), Mode::eval, rng);
        CHECK(max_abs_diff(out.raw_adjacency, std::vector<double>(81, 0.0)) == 0);
        CHECK(max_abs_diff(out.residual, std::vector<double>(36, 0.0)) == 0);
        CHECK(out.kl_loss.item() == 0);
    }
    SUBCASE("undirected adjacency is symmetric and nonnegative")
    {
        ScgModule<double> m(cfg, rng);
        for (int i = 0; i < 100; ++i) {
            const auto out = m.forward(random(rng, {1, 6, 3, 3}), i % 2 ? Mode::train : Mode::eval, rng);
            const auto& a = out.adjacency;
            for (std::size_t r = 0; r < 9; ++r)
                for (std::size_t c = 0; c < 9; ++c) {
                    CHECK(std::abs(a[r * 9 + c] - a[c * 9 + r]) <= 1e-6);
                    CHECK(a[r * 9 + c] >= 0);
                }
        }
    }
    SUBCASE("output bundle shapes")
    {
        for (auto variant : {ScgVariant::variational, ScgVariant::ae, ScgVariant::directed}) {
            cfg.variant = variant;
            ScgModule<float> m(cfg, rng);
            const auto out = m.forward(random<float>(rng, {2, 6, 5, 4}), Mode::train, rng);
            CHECK(out.adjacency.shape() == Shape{2, 9, 9});
            CHECK(out.features.shape() == Shape{2, 9, 6});
            CHECK(out.residual.shape() == Shape{2, 9, 4});
            CHECK(out.gamma.size() == 2);
            CHECK(out.dl_loss.rank() == 0);
            CHECK(out.kl_loss.defined() == (variant != ScgVariant::ae));
        }
    }
    SUBCASE("auto-encoder residual is the embedding itself, scaled by gamma")
    {
        cfg.variant = ScgVariant::ae;
        ScgModule<double> m(cfg, rng);
        const auto out = m.forward(random(rng, {1, 6, 3, 3}), Mode::train, rng);
        for (std::size_t i = 0; i < out.embedding.numel(); ++i)
            CHECK(out.residual[i] == doctest::Approx(out.gamma[0] * out.embedding[i]).epsilon(1e-14));
    }
    SUBCASE("eval mode is bit-identical across calls")
    {
        ScgModule<float> m(cfg, rng);
        const auto f = random<float>(rng, {1, 6, 3, 3});
        Rng r1(1), r2(2);
        const auto a = m.forward(f, Mode::eval, r1), b = m.forward(f, Mode::eval, r2);
        CHECK(std::equal(a.adjacency.values().begin(), a.adjacency.values().end(), b.adjacency.values().begin()));
    }
    SUBCASE("variant names round-trip")
    {
        for (auto v : {ScgVariant::variational, ScgVariant::ae, ScgVariant::directed})
            CHECK(parse_scg_variant(to_string(v)) == v);
        CHECK_THROWS_AS(parse_scg_variant("vae"), DataError);
    }
}
