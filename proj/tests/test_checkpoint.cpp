#include <doctest.h>

#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "scg/checkpoint.hpp"
#include "scg/error.hpp"

using namespace scg;
using testing::max_abs_diff;
using testing::random;

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

std::filesystem::path temp(const std::string& name)
{
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("checkpoint round trip")
{
    RunConfig cfg;
    cfg.model = small();
    ScgNet<float> a(cfg.model, 1);
    // Move the batch-norm statistics away from their initial values.
    Rng rng(2);
    a.forward(random<float>(rng, {2, 3, 32, 32}, 0, 1), Mode::train, rng);

    const auto path = temp("scg_test_roundtrip.ckpt");
    save_model(path, a, cfg);
    RunConfig loaded_cfg;
    auto b = load_model<float>(path, &loaded_cfg);
    CHECK(dump_config(loaded_cfg) == dump_config(cfg));

    const auto ra = a.registry(), rb = b.registry();
    REQUIRE(ra.parameters().size() == rb.parameters().size());
    for (std::size_t i = 0; i < ra.parameters().size(); ++i)
        CHECK(max_abs_diff(ra.parameters()[i].tensor, rb.parameters()[i].tensor) == 0);
    for (std::size_t i = 0; i < ra.buffers().size(); ++i)
        CHECK(max_abs_diff(ra.buffers()[i].tensor, rb.buffers()[i].tensor) == 0);

    const auto x = random<float>(rng, {1, 3, 32, 32}, 0, 1);
    CHECK(max_abs_diff(a.forward(x, Mode::eval, rng).logits, b.forward(x, Mode::eval, rng).logits) == 0);

    SUBCASE("serialization is byte-stable")
    {
        std::ifstream f(path, std::ios::binary);
        const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        CHECK(serialize_checkpoint(read_checkpoint(path)) == bytes);
    }
    std::filesystem::remove(path);
}

TEST_CASE("byte layout")
{
    ParameterRegistry<double> reg;
    reg.add("w", Tensor<double>(Shape{2, 1}, std::vector<double>{1.5, -2.0}), ParamGroup::weight);
    reg.add_buffer("s", Tensor<double>(Shape{}, 0.25));
    const auto bytes = serialize_checkpoint(make_checkpoint(reg, "{}"));

    std::string expect("SCGCKPT\0", 8);
    auto put = [&](auto v) { expect.append(reinterpret_cast<const char*>(&v), sizeof v); };
    put(std::uint32_t{1});
    put(std::uint64_t{2});
    expect += "{}";
    put(std::uint32_t{2});
    put(std::uint8_t{0});
    put(std::uint32_t{1});
    expect += "w";
    put(std::uint32_t{2});
    put(std::uint64_t{2});
    put(std::uint64_t{1});
    put(std::uint8_t{1});
    put(std::uint32_t{1});
    expect += "s";
    put(std::uint32_t{0});
    put(1.5f);
    put(-2.0f);
    put(0.25f);
    CHECK(bytes == expect);
}

TEST_CASE("load errors")
{
    RunConfig cfg;
    cfg.model = small();
    ScgNet<float> model(cfg.model, 3);
    const auto ck = make_checkpoint(model.registry(), dump_config(cfg));
    const auto bytes = serialize_checkpoint(ck);

    SUBCASE("bad magic")
    {
        auto b = bytes;
        b[0] = 'X';
        CHECK_THROWS_WITH_AS(parse_checkpoint(b), doctest::Contains("magic"), DataError);
    }
    SUBCASE("unsupported version")
    {
        auto b = bytes;
        b[8] = 9;
        CHECK_THROWS_WITH_AS(parse_checkpoint(b), doctest::Contains("version"), DataError);
    }
    SUBCASE("truncated")
    {
        CHECK_THROWS_WITH_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), doctest::Contains("truncated"),
                             DataError);
    }
    SUBCASE("trailing bytes")
    {
        CHECK_THROWS_AS(parse_checkpoint(bytes + "x"), DataError);
    }
    SUBCASE("shape mismatch names the entry")
    {
        auto c = ck;
        c.entries[0].shape = {1};
        c.entries[0].values = {0.0f};
        auto reg = model.registry();
        CHECK_THROWS_WITH_AS(load_into(reg, c), doctest::Contains(ck.entries[0].name.c_str()), DataError);
    }
    SUBCASE("missing entry names the parameter")
    {
        auto c = ck;
        const auto name = c.entries.back().name;
        c.entries.pop_back();
        auto reg = model.registry();
        CHECK_THROWS_WITH_AS(load_into(reg, c), doctest::Contains(name.c_str()), DataError);
    }
    SUBCASE("missing file")
    {
        CHECK_THROWS_AS(read_checkpoint(temp("scg_no_such_file.ckpt")), IoError);
    }
}
