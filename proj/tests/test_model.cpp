#include <doctest.h>

#include "helpers.hpp"
#include "scg/error.hpp"
#include "scg/model.hpp"

using namespace scg;
using testing::max_abs_diff;
using testing::random;

namespace {

ModelConfig small(const std::string& preset = "SCG-GCN")
{
    auto c = ModelConfig::preset(preset);
    c.classes = 4;
    c.hidden = 8;
    c.nodes_h = 4;
    c.nodes_w = 4;
    c.input_size = 64;
    c.backbone.stage_widths = {4, 4, 8, 8};
    c.backbone.feature_width = 12;
    return c;
}

} // namespace

TEST_CASE("intermediate shapes at 448")
{
    const ModelConfig c;
    ScgNet<float> model(c, 1);
    Rng rng(2);
    const auto out = model.forward(random<float>(rng, {1, 3, 448, 448}, 0, 1), Mode::eval, rng);
    const std::size_t n = 784, df = c.backbone.feature_width;
    CHECK(out.feature_map.shape() == Shape{1, df, 28, 28});
    CHECK(out.scg.adjacency.shape() == Shape{1, n, n});
    CHECK(out.scg.features.shape() == Shape{1, n, df});
    CHECK(out.scg.residual.shape() == Shape{1, n, 6});
    CHECK(out.normalized.shape() == Shape{1, n, n});
    CHECK(out.hidden.shape() == Shape{1, n, 128});
    CHECK(out.prediction.shape() == Shape{1, n, 6});
    CHECK(out.logits.shape() == Shape{1, 6, 448, 448});
}

TEST_CASE("every variant produces the same shape pipeline")
{
    Rng rng(3);
    const auto x = random<float>(rng, {2, 3, 64, 64}, 0, 1);
    for (const auto& name : ModelConfig::preset_names()) {
        CAPTURE(name);
        const auto c = small(name);
        ScgNet<float> model(c, 4);
        const auto out = model.forward(x, Mode::train, rng);
        CHECK(out.scg.adjacency.shape() == Shape{2, 16, 16});
        CHECK(out.scg.features.shape() == Shape{2, 16, 12});
        CHECK(out.scg.residual.shape() == Shape{2, 16, 4});
        CHECK(out.hidden.shape() == Shape{2, 16, 8});
        CHECK(out.prediction.shape() == Shape{2, 16, 4});
        CHECK(out.logits.shape() == Shape{2, 4, 64, 64});
        // GIN-only models never build the normalized adjacency.
        CHECK(out.normalized.defined() == (c.gnn1 == GnnKind::gcn || c.gnn2 == GnnKind::gcn));
    }
}

TEST_CASE("residual sum toggle")
{
    Rng rng(5);
    const auto x = random<double>(rng, {1, 3, 64, 64}, 0, 1);
    SUBCASE("disabled: node logits are the second graph layer alone")
    {
        ScgNet<double> model(small("SCG-GCN_ns"), 6);
        const auto out = model.forward(x, Mode::eval, rng);
        CHECK(max_abs_diff(out.node_logits, out.prediction) == 0);
    }
    SUBCASE("enabled: node logits add the enhanced residual once")
    {
        ScgNet<double> model(small(), 6);
        const auto out = model.forward(x, Mode::eval, rng);
        CHECK(max_abs_diff(out.node_logits, add(out.prediction, out.scg.residual)) <= 1e-12);
    }
    SUBCASE("double gamma scales the residual by gamma again")
    {
        auto c = small();
        c.double_gamma = true;
        ScgNet<double> model(c, 6);
        const auto out = model.forward(x, Mode::eval, rng);
        const auto expect = add(out.prediction, mul_scalar(out.scg.residual, out.scg.gamma[0]));
        CHECK(max_abs_diff(out.node_logits, expect) <= 1e-12);
    }
}

TEST_CASE("projection is the bilinear upsample of the node grid")
{
    Rng rng(7);
    ScgNet<double> model(small(), 8);
    const auto out = model.forward(random<double>(rng, {1, 3, 64, 64}, 0, 1), Mode::eval, rng);
    // Node (r, c) of the 4x4 grid lands exactly on pixel (r·63/3, c·63/3).
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t col = 0; col < 4; ++col)
            for (std::size_t k = 0; k < 4; ++k)
                CHECK(out.logits[(k * 64 + r * 21) * 64 + col * 21] ==
                      doctest::Approx(out.node_logits[(r * 4 + col) * 4 + k]).epsilon(1e-12));
}

TEST_CASE("eval forward is bitwise deterministic")
{
    Rng rng(9);
    ScgNet<float> model(small(), 10);
    const auto x = random<float>(rng, {2, 3, 64, 64}, 0, 1);
    Rng a(1), b(999);
    const auto y1 = model.forward(x, Mode::eval, a);
    const auto y2 = model.forward(x, Mode::eval, b);
    CHECK(max_abs_diff(y1.logits, y2.logits) == 0);
}

TEST_CASE("eval forward treats batch items independently")
{
    Rng rng(11);
    ScgNet<double> model(small(), 12);
    const auto x = random<double>(rng, {2, 3, 64, 64}, 0, 1);
    const auto both = model.forward(x, Mode::eval, rng).logits;
    Tensor<double> second(Shape{1, 3, 64, 64});
    std::copy_n(x.values().begin() + 3 * 64 * 64, 3 * 64 * 64, second.values().begin());
    const auto alone = model.forward(second, Mode::eval, rng).logits;
    double worst = 0;
    for (std::size_t i = 0; i < alone.numel(); ++i)
        worst = std::max(worst, std::abs(alone[i] - both[alone.numel() + i]));
    CHECK(worst <= 1e-10);
}

TEST_CASE("constant images give spatially constant predictions")
{
    Rng rng(13);
    ScgNet<double> model(small(), 14);
    const auto out = model.forward(Tensor<double>(Shape{1, 3, 64, 64}, 0.4), Mode::eval, rng);
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t p = 0; p < 64 * 64; ++p)
            CHECK(out.logits[k * 4096 + p] == doctest::Approx(out.logits[k * 4096]).epsilon(1e-12));
}

TEST_CASE("input validation")
{
    Rng rng(15);
    ScgNet<float> model(small(), 16);
    CHECK_THROWS_AS(model.forward(Tensor<float>(Shape{1, 1, 64, 64}), Mode::eval, rng), DimensionError);
    CHECK_THROWS_AS(model.forward(Tensor<float>(Shape{1, 3, 60, 64}), Mode::eval, rng), DimensionError);
}

TEST_CASE("parameter accounting")
{
    SUBCASE("head closed forms at d_f = 1024, c = 6, d = 128")
    {
        ModelConfig c;
        c.backbone.feature_width = 1024;
        const std::size_t df = 1024, cls = 6, d = 128;
        ScgNet<float> model(c, 0);
        const auto b = parameter_breakdown(model);
        CHECK(b.mean_head == 9 * df * cls + cls);
        CHECK(b.mean_head == 55302);
        CHECK(b.deviation_head == 6150);
        CHECK(b.gnn1 == df * d + d);
        CHECK(b.gnn1 == 131200);
        CHECK(b.gnn2 == 774);
        CHECK(b.gnn1_bn == 2 * d);
        CHECK(b.gnn2_bn == 0);
        CHECK(b.total == b.backbone + b.mean_head + b.deviation_head + b.gnn1 + b.gnn1_bn + b.gnn2 + b.gnn2_bn);
        CHECK(b.total == model.parameter_count());
    }
    SUBCASE("backbone count matches its layer list")
    {
        ModelConfig c;
        ScgNet<float> model(c, 0);
        const auto& w = c.backbone.stage_widths;
        std::size_t expect = 0, in = 3;
        for (auto out : w) {
            expect += out * in * 9 + 2 * out;
            in = out;
        }
        expect += in * c.backbone.feature_width + 2 * c.backbone.feature_width;
        CHECK(parameter_breakdown(model).backbone == expect);
    }
    SUBCASE("AE variant has no deviation head, GIN adds one omega per slot")
    {
        CHECK(parameter_breakdown(ScgNet<float>(small("SCG_ae-GCN"), 0)).deviation_head == 0);
        const auto gcn = parameter_breakdown(ScgNet<float>(small("SCG-GCN"), 0));
        const auto gin = parameter_breakdown(ScgNet<float>(small("SCG-GIN"), 0));
        CHECK(gin.gnn1 == gcn.gnn1 + 1);
        CHECK(gin.gnn2 == gcn.gnn2 + 1);
    }
    SUBCASE("node grid does not change the count")
    {
        ModelConfig c;
        const auto base = ScgNet<float>(c, 0).parameter_count();
        for (std::size_t g : {1u, 7u, 14u, 28u}) {
            c.nodes_h = c.nodes_w = g;
            CHECK(ScgNet<float>(c, 0).parameter_count() == base);
        }
    }
    SUBCASE("empty registry counts zero")
    {
        CHECK(ParameterRegistry<float>().parameter_count() == 0);
    }
}

TEST_CASE("seeded construction")
{
    const auto r1 = ScgNet<float>(small(), 21).registry();
    const auto r2 = ScgNet<float>(small(), 21).registry();
    const auto r3 = ScgNet<float>(small(), 22).registry();
    REQUIRE(r1.parameters().size() == r2.parameters().size());
    bool differs = false;
    for (std::size_t i = 0; i < r1.parameters().size(); ++i) {
        CHECK(r1.parameters()[i].name == r2.parameters()[i].name);
        CHECK(max_abs_diff(r1.parameters()[i].tensor, r2.parameters()[i].tensor) == 0);
        differs |= max_abs_diff(r1.parameters()[i].tensor, r3.parameters()[i].tensor) > 0;
    }
    CHECK(differs);
}
