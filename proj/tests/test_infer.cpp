#include <doctest.h>

#include "helpers.hpp"
#include "scg/error.hpp"
#include "scg/infer.hpp"

using namespace scg;
using testing::max_abs_diff;
using testing::tensor;

namespace {

ModelConfig small()
{
    ModelConfig c;
    c.classes = 3;
    c.hidden = 8;
    c.nodes_h = 2;
    c.nodes_w = 2;
    c.input_size = 32;
    c.backbone.stage_widths = {4, 4, 8, 8};
    c.backbone.feature_width = 8;
    return c;
}

Image random_image(Rng& rng, std::size_t h, std::size_t w)
{
    Image img{h, w, std::vector<std::uint8_t>(h * w * 3)};
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : img.rgb)
        v = static_cast<std::uint8_t>(d(rng));
    return img;
}

InferConfig window_config(std::size_t window, std::size_t stride, bool tta = true)
{
    InferConfig c;
    c.window = window;
    c.stride = stride;
    c.tta = tta;
    return c;
}

} // namespace

TEST_CASE("window placement")
{
    CHECK(window_origins(600, 448, 100) == std::vector<std::size_t>{0, 100, 152});
    CHECK(window_origins(448, 448, 100) == std::vector<std::size_t>{0});
    CHECK(window_origins(548, 448, 100) == std::vector<std::size_t>{0, 100});
    CHECK(window_origins(1000, 448, 100) == std::vector<std::size_t>{0, 100, 200, 300, 400, 500, 552});
    CHECK_THROWS_AS(window_origins(300, 448, 100), DataError);
    CHECK_THROWS_AS(window_origins(500, 448, 0), DataError);
    CHECK_THROWS_AS(window_origins(1000, 448, 449), DataError);
}

TEST_CASE("every pixel is covered and the averaging weights sum to one")
{
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t window = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
        const std::size_t stride = std::uniform_int_distribution<std::size_t>(1, window)(rng);
        const std::size_t h = window + std::uniform_int_distribution<std::size_t>(0, 90)(rng);
        const std::size_t w = window + std::uniform_int_distribution<std::size_t>(0, 90)(rng);
        const auto count = coverage_counts(h, w, window, stride);
        const auto oy = window_origins(h, window, stride), ox = window_origins(w, window, stride);
        std::vector<double> weight(h * w, 0.0);
        for (auto y0 : oy)
            for (auto x0 : ox)
                for (std::size_t y = y0; y < y0 + window; ++y)
                    for (std::size_t x = x0; x < x0 + window; ++x)
                        weight[y * w + x] += 1.0 / count[y * w + x];
        for (std::size_t p = 0; p < h * w; ++p) {
            REQUIRE(count[p] >= 1);
            REQUIRE(std::abs(weight[p] - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("reflect padding")
{
    Image img{2, 3, {}};
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 3; ++x)
            img.rgb.insert(img.rgb.end(), {std::uint8_t(10 * y + x), 0, 0});
    const auto p = pad_reflect(img, 3);
    REQUIRE(p.height == 3);
    REQUIRE(p.width == 3);
    CHECK(p.at(2, 0, 0) == 0);
    CHECK(p.at(2, 2, 0) == 2);
    CHECK_THROWS_AS(pad_reflect(img, 4), DataError);
    const auto q = pad_reflect(p, 5);
    CHECK(q.at(0, 3, 0) == 1);
    CHECK(q.at(0, 4, 0) == 0);
    CHECK(q.at(3, 4, 0) == 10);
    CHECK(pad_reflect(img, 2).rgb == img.rgb);
}

TEST_CASE("TTA transforms")
{
    Rng rng(2);
    const auto img = random_image(rng, 5, 5);
    CHECK(apply_transform(img, 0).rgb == img.rgb);
    CHECK(apply_transform(img, 1).at(1, 0, 2) == img.at(1, 4, 2));
    CHECK(apply_transform(img, 2).at(0, 3, 1) == img.at(4, 3, 1));
    CHECK(apply_transform(img, 4).at(1, 3, 0) == img.at(3, 1, 0));
    for (unsigned t : {1u, 2u, 3u, 4u})
        CHECK(apply_transform(apply_transform(img, t), t).rgb == img.rgb);
    CHECK(tta_transforms(window_config(32, 32)).size() == 4);
    CHECK(tta_transforms(window_config(32, 32, false)) == std::vector<unsigned>{0});
    auto eight = window_config(32, 32);
    eight.tta_transpose = true;
    CHECK(tta_transforms(eight).size() == 8);
    CHECK_THROWS_AS(apply_transform(random_image(rng, 4, 5), 4), DimensionError);
}

TEST_CASE("argmax breaks ties toward the lowest class")
{
    const std::vector<float> probs{0.4f, 0.2f, 0.5f, 0.4f, 0.5f, 0.5f, 0.2f, 0.3f, 0.0f};
    const auto l = argmax_labels(probs, 3, 1, 3);
    CHECK(l.labels == std::vector<std::uint8_t>{0, 1, 0});
}

TEST_CASE("sliding window inference")
{
    Rng rng(3);
    ScgNet<float> model(small(), 4);
    // Non-trivial running statistics.
    model.forward(to_tensor<float>({&static_cast<const Image&>(random_image(rng, 32, 32))}), Mode::train, rng);

    SUBCASE("a window-sized tile is one placement of the TTA-averaged forward")
    {
        const auto img = random_image(rng, 32, 32);
        const auto pred = sliding_window_infer(model, img, window_config(32, 10));
        const auto ref = window_probabilities(model, img, {0, 1, 2, 3});
        REQUIRE(pred.probs.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(pred.probs[i] == ref[i]);
    }
    SUBCASE("without TTA the window is the softmax of the forward pass")
    {
        const auto img = random_image(rng, 32, 32);
        const auto pred = sliding_window_infer(model, img, window_config(32, 10, false));
        NoGradGuard g;
        const auto probs = softmax(model.forward(to_tensor<float>({&img}), Mode::eval, rng).logits, 1);
        for (std::size_t i = 0; i < probs.numel(); ++i)
            CHECK(pred.probs[i] == doctest::Approx(probs[i]).epsilon(1e-6));
        CHECK(pred.labels.labels == argmax_labels(pred.probs, 3, 32, 32).labels);
    }
    SUBCASE("constant tile stitches to the single-window output")
    {
        Image tile{80, 96, std::vector<std::uint8_t>(80 * 96 * 3)};
        for (std::size_t p = 0; p < 80 * 96; ++p)
            tile.rgb[p * 3 + 0] = 90, tile.rgb[p * 3 + 1] = 160, tile.rgb[p * 3 + 2] = 30;
        Image win{32, 32, std::vector<std::uint8_t>(tile.rgb.begin(), tile.rgb.begin() + 32 * 32 * 3)};
        const auto stitched = sliding_window_infer(model, tile, window_config(32, 20));
        const auto single = window_probabilities(model, win, {0, 1, 2, 3});
        double worst = 0;
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t y = 0; y < 80; ++y)
                for (std::size_t x = 0; x < 96; ++x)
                    worst = std::max(worst, std::abs(double(stitched.prob(k, y, x)) -
                                                     single[(k * 32 + y % 32) * 32 + x % 32]));
        CHECK(worst <= 1e-6);
    }
    SUBCASE("TTA output of a mirror-symmetric image is mirror-symmetric")
    {
        for (std::size_t w : {32u, 48u}) {
            auto img = random_image(rng, 32, w);
            for (std::size_t y = 0; y < 32; ++y)
                for (std::size_t x = 0; x < w / 2; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        img.at(y, w - 1 - x, c) = img.at(y, x, c);
            const auto pred = sliding_window_infer(model, img, window_config(32, 16));
            double worst = 0;
            for (std::size_t k = 0; k < 3; ++k)
                for (std::size_t y = 0; y < 32; ++y)
                    for (std::size_t x = 0; x < w; ++x)
                        worst = std::max(worst, std::abs(double(pred.prob(k, y, x)) - pred.prob(k, y, w - 1 - x)));
            CHECK(worst <= 1e-5);
        }
    }
    SUBCASE("probabilities sum to one per pixel")
    {
        const auto pred = sliding_window_infer(model, random_image(rng, 50, 70), window_config(32, 16));
        for (std::size_t y = 0; y < 50; ++y)
            for (std::size_t x = 0; x < 70; ++x)
                CHECK(pred.prob(0, y, x) + pred.prob(1, y, x) + pred.prob(2, y, x) == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("small tiles are reflect-padded and cropped back")
    {
        const auto pred = sliding_window_infer(model, random_image(rng, 20, 24), window_config(32, 16));
        CHECK(pred.height == 20);
        CHECK(pred.width == 24);
        CHECK(pred.labels.labels.size() == 480);
        CHECK_THROWS_AS(sliding_window_infer(model, random_image(rng, 10, 24), window_config(32, 16)), DataError);
    }
    SUBCASE("evaluation counts every labeled pixel")
    {
        TileDataset ds;
        ds.tiles.push_back({"a", {}, {}, random_image(rng, 32, 40), LabelMap{32, 40, std::vector<std::uint8_t>(1280, 1)}});
        ds.tiles.push_back({"b", {}, {}, random_image(rng, 32, 32), LabelMap{}});
        ds.tiles[0].label.labels[5] = 255;
        const auto cm = evaluate(model, ds, window_config(32, 16), 255);
        CHECK(cm.total() == 1279);
    }
}

TEST_CASE("relation maps")
{
    SUBCASE("identity adjacency lights only the node's own cell")
    {
        Tensor<double> eye(Shape{12, 12});
        for (std::size_t i = 0; i < 12; ++i)
            eye.values()[i * 12 + i] = 1;
        for (std::size_t node : {0u, 5u, 11u}) {
            const auto m = relation_map(eye, node, 3, 4);
            for (std::size_t j = 0; j < 12; ++j)
                CHECK(m.weights[j] == (j == node ? 1.0f : 0.0f));
        }
    }
    SUBCASE("top-k mask, normalization and tie order")
    {
        Rng rng(5);
        const auto a = testing::random<double>(rng, {1, 36, 36}, 0, 2);
        const auto m = relation_map(a, 7, 6, 6);
        std::size_t nonzero = 0;
        float peak = 0;
        for (auto v : m.weights) {
            nonzero += v != 0;
            peak = std::max(peak, v);
        }
        CHECK(nonzero == 9);
        CHECK(peak == 1.0f);
        const auto ties = relation_map(tensor<double>({4, 4}, std::vector<double>(16, 0.5)), 1, 2, 2, 2);
        CHECK(ties.weights == std::vector<float>{1, 1, 0, 0});
    }
    SUBCASE("invalid node id")
    {
        CHECK_THROWS_AS(relation_map(Tensor<double>(Shape{4, 4}), 4, 2, 2), RangeError);
        CHECK_THROWS_AS(relation_map(Tensor<double>(Shape{4, 4}), 0, 3, 2), DimensionError);
    }
    SUBCASE("a 448 input exposes a 28x28 node grid")
    {
        ScgNet<float> model(ModelConfig{}, 1);
        Rng rng(6);
        const auto maps = export_relation_maps(model, random_image(rng, 450, 460), {8, 86, 165});
        REQUIRE(maps.size() == 3);
        for (const auto& m : maps) {
            CHECK(m.grid_h == 28);
            CHECK(m.grid_w == 28);
            CHECK(std::count_if(m.weights.begin(), m.weights.end(), [](float v) { return v != 0; }) <= 9);
        }
        CHECK(maps[1].node == 86);
        CHECK_THROWS_AS(export_relation_maps(model, random_image(rng, 448, 448), {784}), RangeError);
    }
    SUBCASE("heatmap rendering and overlay")
    {
        RelationMap m{0, 2, 2, {0.0f, 1.0f, 0.0f, 0.0f}};
        const auto heat = render_heatmap(m, 4, 6);
        CHECK(heat.height == 4);
        CHECK(heat.width == 6);
        CHECK(heat.at(0, 0, 2) == 120);
        CHECK(heat.at(0, 5, 0) == 180);
        CHECK(heat.at(3, 5, 2) == 120);
        const auto base = Image{4, 6, std::vector<std::uint8_t>(72, 100)};
        const auto mix = blend(base, heat, 0.5);
        CHECK(mix.at(0, 0, 2) == 110);
        CHECK(blend(base, heat, 0.0).rgb == base.rgb);
    }
}
