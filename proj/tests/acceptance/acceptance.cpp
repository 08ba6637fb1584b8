// Acceptance gate. One PASS/FAIL line per criterion; exit status is the
// number of failures. `--only 2,4` runs a subset.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "scg/checkpoint.hpp"
#include "scg/gnn.hpp"
#include "scg/gradcheck.hpp"
#include "scg/losses.hpp"
#include "scg/scg.hpp"
#include "scg/train.hpp"

using namespace scg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Tensor<double> dense(Shape shape, std::vector<double> v)
{
    return Tensor<double>(std::move(shape), std::move(v));
}

Tensor<double> uniform(Rng& rng, Shape shape, double lo, double hi)
{
    Tensor<double> t(std::move(shape), 0.0);
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.values())
        v = d(rng);
    return t;
}

double max_abs_diff(const Tensor<double>& a, const std::vector<double>& b)
{
    double m = 0;
    for (std::size_t i = 0; i < b.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return a.numel() == b.size() ? m : INFINITY;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---- 1 -------------------------------------------------------------------

Verdict gradient_suite()
{
    const auto t0 = Clock::now();
    const auto ops = gradcheck_ops();
    double worst = 0;
    std::string failed;
    for (const auto& op : ops) {
        const auto r = run_gradcheck(op, 20, 1234, 1e-4);
        worst = std::max(worst, r.worst);
        if (!r.passed || r.instances < 20)
            failed += " " + op;
    }
    const bool has_losses = std::count(ops.begin(), ops.end(), "kl_loss") && std::count(ops.begin(), ops.end(), "dl_loss");
    const double dt = seconds_since(t0);
    return {failed.empty() && has_losses && dt <= 120,
            fmt("%zu ops x 20 instances, worst rel err %.2e (<= 1e-4), %.1f s (<= 120 s)%s%s", ops.size(), worst,
                dt, failed.empty() ? "" : ", failing:", failed.c_str())};
}

// ---- 2 -------------------------------------------------------------------

// (1+ω)·z_i + Σ_j A_ij z_j through θ and bias, one node at a time.
std::vector<double> gin_node_form(const Tensor<double>& a, const Tensor<double>& z, double omega,
                                  const Tensor<double>& theta, const Tensor<double>& bias)
{
    const std::size_t n = z.size(0), din = z.size(1), dout = theta.size(1);
    std::vector<double> out(n * dout);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> agg(din);
        for (std::size_t k = 0; k < din; ++k) {
            agg[k] = (1 + omega) * z[i * din + k];
            for (std::size_t j = 0; j < n; ++j)
                agg[k] += a[i * n + j] * z[j * din + k];
        }
        for (std::size_t o = 0; o < dout; ++o) {
            double s = bias[o];
            for (std::size_t k = 0; k < din; ++k)
                s += agg[k] * theta[k * dout + o];
            out[i * dout + o] = s;
        }
    }
    return out;
}

Verdict gin_equivalence()
{
    Rng rng(2024);
    std::uniform_int_distribution<std::size_t> size(1, 8), width(1, 6);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = size(rng), din = width(rng), dout = width(rng);
        GinLayer<double> layer(din, dout, false, false, rng);
        layer.omega.values()[0] = std::uniform_real_distribution<double>(-1, 1)(rng);
        fill_uniform(layer.linear.bias, rng, 1.0);
        const auto a = uniform(rng, {n, n}, 0, 3);
        const auto z = uniform(rng, {n, din}, -1, 1);
        const auto got = layer.forward(a, z, Mode::eval);
        worst = std::max(worst, max_abs_diff(got, gin_node_form(a, z, layer.omega[0], layer.linear.weight,
                                                                 layer.linear.bias)));
    }
    return {worst <= 1e-9, fmt("100 graphs, n <= 8, max |node - matrix| %.2e (<= 1e-9)", worst)};
}

// ---- 3 -------------------------------------------------------------------

Verdict permutation_equivariance()
{
    Rng rng(77);
    double worst[2] = {0, 0};
    const GnnKind kinds[2] = {GnnKind::gcn, GnnKind::gin};
    for (int k = 0; k < 2; ++k) {
        for (int t = 0; t < 50; ++t) {
            const std::size_t n = 2 + t % 9;
            GraphLayer<double> layer(kinds[k], 5, 4, true, false, rng);
            const auto a = uniform(rng, {n, n}, 0, 1);
            const auto z = uniform(rng, {n, 5}, -1, 1);
            std::vector<std::size_t> p(n);
            std::iota(p.begin(), p.end(), 0);
            std::shuffle(p.begin(), p.end(), rng);
            Tensor<double> pa(Shape{n, n}), pz(Shape{n, 5});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j)
                    pa.values()[p[i] * n + p[j]] = a[i * n + j];
                for (std::size_t c = 0; c < 5; ++c)
                    pz.values()[p[i] * 5 + c] = z[i * 5 + c];
            }
            const auto base = layer.forward(a, normalize_adjacency(a), z, Mode::eval);
            const auto moved = layer.forward(pa, normalize_adjacency(pa), pz, Mode::eval);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < 4; ++c)
                    worst[k] = std::max(worst[k], std::abs(moved[p[i] * 4 + c] - base[i * 4 + c]));
        }
    }
    return {worst[0] <= 1e-6 && worst[1] <= 1e-6,
            fmt("50 permutations each, GCN %.2e, GIN %.2e (<= 1e-6)", worst[0], worst[1])};
}

// ---- 4 -------------------------------------------------------------------

Verdict closed_forms()
{
    const double kl = kl_loss(Tensor<double>(Shape{3, 4}, 0.0), Tensor<double>(Shape{3, 4}, 0.0)).item();
    const auto r = adaptive_factor_and_dl_loss(dense({2, 2}, {0.5, 0.2, 0.2, 0.5}), 1e-7);
    const double gamma = r.gamma[0], dl = r.dl_loss.item();
    const double d0 = dice_loss(dense({1, 2}, {1, 0}), dense({1, 2}, {1, 0}), 1).item();
    const double d5 = dice_loss(dense({1, 2}, {0.5, 0.5}), dense({1, 2}, {1, 0}), 1).item();
    const double d1 = dice_loss(dense({1, 2}, {0, 1}), dense({1, 2}, {1, 0}), 1).item();
    const double ahat = max_abs_diff(normalize_adjacency(dense({2, 2}, {0, 1, 1, 0})), {0.5, 0.5, 0.5, 0.5});
    const bool ok_kl = kl == 0.0;
    const bool ok_gamma = std::abs(gamma - std::sqrt(3.0)) <= 1e-6;
    const bool ok_dl = std::abs(dl - 0.60034) <= 1e-5;
    const bool ok_dice = std::abs(d0) <= 1e-9 && std::abs(d5 - 0.5) <= 1e-9 && std::abs(d1 - 1) <= 1e-9;
    const bool ok_ahat = ahat <= 1e-9;
    return {ok_kl && ok_gamma && ok_dl && ok_dice && ok_ahat,
            fmt("KL %g (== 0) %s; gamma %.9f (sqrt3 +- 1e-6) %s; L_dl %.7f (0.60034 +- 1e-5, |diff| %.1e) %s; "
                "dice %g/%g/%g %s; A_hat err %.1e %s",
                kl + 0.0, ok_kl ? "ok" : "BAD", gamma, ok_gamma ? "ok" : "BAD", dl, std::abs(dl - 0.60034),
                ok_dl ? "ok" : "BAD", d0, d5, d1, ok_dice ? "ok" : "BAD", ahat, ok_ahat ? "ok" : "BAD")};
}

// ---- 5 -------------------------------------------------------------------

Verdict shape_conformance()
{
    const auto t0 = Clock::now();
    Rng rng(5);
    Tensor<float> x(Shape{1, 3, 448, 448}, 0.0f);
    std::uniform_real_distribution<float> d(0, 1);
    for (auto& v : x.values())
        v = d(rng);
    std::string bad;
    std::size_t count = 0;
    for (const auto& name : ModelConfig::preset_names()) {
        const auto c = ModelConfig::preset(name);
        const std::size_t df = c.backbone.feature_width, n = 784, cls = c.classes, d1 = c.hidden;
        ScgNet<float> model(c, 1);
        const auto out = model.forward(x, Mode::train, rng);
        const bool gcn = c.gnn1 == GnnKind::gcn || c.gnn2 == GnnKind::gcn;
        const bool ok = out.feature_map.shape() == Shape{1, df, 28, 28} &&
                        out.scg.adjacency.shape() == Shape{1, n, n} &&
                        out.scg.features.shape() == Shape{1, n, df} &&
                        out.scg.residual.shape() == Shape{1, n, cls} &&
                        (!gcn || out.normalized.shape() == Shape{1, n, n}) &&
                        out.hidden.shape() == Shape{1, n, d1} && out.prediction.shape() == Shape{1, n, cls} &&
                        out.logits.shape() == Shape{1, cls, 448, 448};
        ++count;
        if (!ok)
            bad += " " + name;
    }
    const double dt = seconds_since(t0);
    return {bad.empty() && count == 7 && dt <= 60,
            fmt("%zu variants at 448x448: F 28x28, A 784x784, Z1 784xd, logits 448x448%s%s, %.1f s (<= 60 s)", count,
                bad.empty() ? "" : "; wrong:", bad.c_str(), dt)};
}

// ---- 6 -------------------------------------------------------------------

Verdict overfit()
{
    const auto t0 = Clock::now();
    RunConfig cfg;
    std::vector<Patch> patches;
    for (std::size_t i = 0; i < cfg.train.batch_size; ++i) {
        auto rng = derive_rng(7, i);
        auto [img, lab] = synth_tile(cfg.model.input_size, cfg.model.input_size, cfg.model.classes, rng);
        patches.push_back({img, lab});
    }
    const auto batch = make_batch<float>(patches);
    ScgNet<float> model(cfg.model, 0);
    Trainer<float> trainer(model, cfg);
    StepResult last;
    for (int s = 0; s < 200; ++s)
        last = trainer.step(batch, 0);
    Rng rng(0);
    NoGradGuard guard;
    const auto out = model.forward(batch.images, Mode::eval, rng);
    const double dice = dice_loss_from_logits(out.logits, batch.labels, cfg.train.ignore_index).item();
    return {dice <= 0.05, fmt("default SCG-GCN, batch %zu at %zu px, 200 steps: L_dice %.4f (<= 0.05, eval "
                              "forward); last train-mode L_dice %.4f; %.0f s",
                              cfg.train.batch_size, cfg.model.input_size, dice, last.dice, seconds_since(t0))};
}

// ---- 7 -------------------------------------------------------------------

RunConfig reduced_config(std::uint64_t seed, bool full)
{
    RunConfig c;
    c.model.classes = 3;
    c.model.hidden = 32;
    c.model.nodes_h = c.model.nodes_w = 8;
    c.model.input_size = 128;
    c.model.backbone.stage_widths = {16, 32, 64, 64};
    c.model.backbone.feature_width = 64;
    c.model.sum_residual = full;
    c.train.kl_loss = full;
    c.train.dl_loss = full;
    c.train.patches_per_epoch = 400;
    c.train.epochs = 10;
    c.train.seed = seed;
    c.infer.window = 128;
    c.infer.stride = 128;
    return c;
}

Verdict end_to_end(const fs::path& work)
{
    const auto root = work / "synthetic";
    fs::remove_all(root);
    SynthConfig s;
    s.tiles = 200;
    s.size = 128;
    s.classes = 3;
    s.seed = 11;
    generate_synthetic(root / "train", s);
    s.tiles = 40;
    s.seed = 12;
    generate_synthetic(root / "test", s);
    const auto tr = load_dataset(root, Split::train, 3, 255);
    const auto te = load_dataset(root, Split::test, 3, 255);

    double mean_epoch[2] = {0, 0}, slowest = 0;
    bool full_reached = true;
    std::string per_seed[2];
    for (int variant = 0; variant < 2; ++variant) {
        const bool full = variant == 0;
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            const auto t0 = Clock::now();
            const auto cfg = reduced_config(seed, full);
            ScgNet<float> model(cfg.model, seed);
            const auto result = train(model, cfg, tr, &te);
            slowest = std::max(slowest, seconds_since(t0));
            std::size_t crossed = 11;
            double best = 0;
            for (const auto& rec : result.history) {
                best = std::max(best, rec.validation->mean_f1);
                if (crossed == 11 && rec.validation->mean_f1 >= 0.85)
                    crossed = rec.epoch;
            }
            if (full && crossed > 10)
                full_reached = false;
            mean_epoch[variant] += static_cast<double>(crossed) / 3;
            per_seed[variant] += fmt("%s%zu(best %.3f)", per_seed[variant].empty() ? "" : ",", crossed, best);
        }
    }
    const bool faster = mean_epoch[0] < mean_epoch[1];
    return {full_reached && faster && slowest <= 900,
            fmt("epochs to test mF1 >= 0.85 over seeds 0-2: full %s mean %.2f; all-disabled %s mean %.2f; "
                "full reaches 0.85 within 10 epochs: %s; full converges sooner: %s; slowest run %.0f s (<= 900 s)",
                per_seed[0].c_str(), mean_epoch[0], per_seed[1].c_str(), mean_epoch[1], full_reached ? "yes" : "NO",
                faster ? "yes" : "NO", slowest)};
}

// ---- 8 -------------------------------------------------------------------

Verdict inference_protocol()
{
    Rng rng(8);
    ModelConfig mc;
    ScgNet<float> model(mc, 3);
    {
        // Non-trivial running statistics.
        Tensor<float> x(Shape{2, 3, 448, 448}, 0.0f);
        std::uniform_real_distribution<float> d(0, 1);
        for (auto& v : x.values())
            v = d(rng);
        NoGradGuard g;
        model.forward(x, Mode::train, rng);
    }
    const InferConfig ic; // window 448, stride 100, 4-way TTA

    const auto origins = window_origins(600, ic.window, ic.stride);
    const bool placement = origins == std::vector<std::size_t>{0, 100, 152};
    const auto cover = coverage_counts(600, 600, ic.window, ic.stride);
    const bool covered = std::all_of(cover.begin(), cover.end(), [](auto c) { return c > 0; });

    Image tile{600, 600, std::vector<std::uint8_t>(600 * 600 * 3)};
    for (std::size_t p = 0; p < 600 * 600; ++p)
        tile.rgb[p * 3] = 70, tile.rgb[p * 3 + 1] = 140, tile.rgb[p * 3 + 2] = 200;
    Image win{448, 448, std::vector<std::uint8_t>(tile.rgb.begin(), tile.rgb.begin() + 448 * 448 * 3)};
    const auto stitched = sliding_window_infer(model, tile, ic);
    const auto single = window_probabilities(model, win, tta_transforms(ic));
    double constant_err = 0;
    for (std::size_t k = 0; k < mc.classes; ++k)
        for (std::size_t y = 0; y < 600; ++y)
            for (std::size_t x = 0; x < 600; ++x)
                constant_err = std::max(constant_err, std::abs(double(stitched.prob(k, y, x)) -
                                                               single[(k * 448 + std::min(y, 447ul)) * 448 +
                                                                      std::min(x, 447ul)]));

    // Mirror-symmetric in both axes: the TTA set maps onto itself.
    Image sym{448, 448, std::vector<std::uint8_t>(448 * 448 * 3)};
    std::uniform_int_distribution<int> byte(0, 255);
    for (std::size_t y = 0; y < 224; ++y)
        for (std::size_t x = 0; x < 224; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const auto v = static_cast<std::uint8_t>(byte(rng));
                sym.at(y, x, c) = sym.at(y, 447 - x, c) = sym.at(447 - y, x, c) = sym.at(447 - y, 447 - x, c) = v;
            }
    const auto pred = sliding_window_infer(model, sym, ic);
    double sym_err = 0;
    for (std::size_t k = 0; k < mc.classes; ++k)
        for (std::size_t y = 0; y < 448; ++y)
            for (std::size_t x = 0; x < 448; ++x) {
                const double v = pred.prob(k, y, x);
                sym_err = std::max({sym_err, std::abs(v - pred.prob(k, y, 447 - x)),
                                    std::abs(v - pred.prob(k, 447 - y, x))});
            }
    return {placement && covered && constant_err <= 1e-6 && sym_err <= 1e-5,
            fmt("600 px origins {%zu,%zu,%zu} %s, full coverage %s; constant tile vs single window %.2e (<= 1e-6); "
                "TTA mirror/flip symmetry %.2e (<= 1e-5)",
                origins.size() > 0 ? origins[0] : 0, origins.size() > 1 ? origins[1] : 0,
                origins.size() > 2 ? origins[2] : 0, placement ? "ok" : "BAD", covered ? "ok" : "NO", constant_err,
                sym_err)};
}

// ---- 9 -------------------------------------------------------------------

Verdict determinism(const fs::path& work)
{
    const auto root = work / "determinism";
    fs::remove_all(root);
    SynthConfig s;
    s.tiles = 6;
    s.size = 96;
    s.classes = 4;
    s.seed = 21;
    generate_synthetic(root / "train", s);
    s.tiles = 3;
    s.seed = 22;
    generate_synthetic(root / "val", s);
    RunConfig cfg;
    cfg.model.classes = 4;
    cfg.model.hidden = 16;
    cfg.model.nodes_h = cfg.model.nodes_w = 4;
    cfg.model.input_size = 64;
    cfg.model.backbone.stage_widths = {8, 16, 16, 32};
    cfg.model.backbone.feature_width = 32;
    cfg.train.batch_size = 3;
    cfg.train.patches_per_epoch = 12;
    cfg.train.epochs = 3;
    cfg.train.seed = 5;
    cfg.infer.window = 64;
    cfg.infer.stride = 32;
    const auto tr = load_dataset(root, Split::train, 4, 255);
    const auto val = load_dataset(root, Split::val, 4, 255);
    for (const char* run : {"run_a", "run_b"}) {
        ScgNet<float> model(cfg.model, cfg.train.seed);
        TrainOptions o;
        o.out_dir = root / run;
        train(model, cfg, tr, &val, o);
    }
    std::string same;
    bool ok = true;
    for (const char* f : {"model.ckpt", "train_log.csv", "metrics.csv"}) {
        const auto a = slurp(root / "run_a" / f), b = slurp(root / "run_b" / f);
        const bool eq = !a.empty() && a == b;
        ok &= eq;
        same += fmt("%s%s %zu B %s", same.empty() ? "" : ", ", f, a.size(), eq ? "identical" : "DIFFER");
    }
    return {ok, "two seeded runs: " + same};
}

// ---- 10 ------------------------------------------------------------------

Verdict parameter_accounting()
{
    ModelConfig c;
    c.backbone.feature_width = 1024;
    const std::size_t df = 1024, cls = c.classes, d = c.hidden;
    const auto b = parameter_breakdown(ScgNet<float>(c, 0));
    const bool heads = b.gnn1 == df * d + d && b.gnn1 == 131200 && b.mean_head == 9 * df * cls + cls &&
                       b.deviation_head == df * cls + cls && b.gnn2 == d * cls + cls && b.gnn1_bn == 2 * d;
    bool invariant = true;
    const auto base = b.total;
    for (std::size_t g : {1u, 4u, 7u, 14u, 28u}) {
        c.nodes_h = c.nodes_w = g;
        invariant &= ScgNet<float>(c, 0).parameter_count() == base;
    }
    return {heads && invariant,
            fmt("d_f 1024, d 128: GNN1 %zu (131200), mean head %zu, deviation head %zu, GNN2 %zu %s; total %zu "
                "invariant over node grids 1..28: %s",
                b.gnn1, b.mean_head, b.deviation_head, b.gnn2, heads ? "ok" : "BAD", base, invariant ? "yes" : "NO")};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    fs::path work = fs::temp_directory_path() / "scgnet_acceptance";
    app.add_option("--only", only, "Criterion numbers to run")->delimiter(',');
    app.add_option("--work", work, "Scratch directory");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"gradient suite", gradient_suite},
        {"GIN node vs matrix form", gin_equivalence},
        {"permutation equivariance", permutation_equivariance},
        {"closed forms", closed_forms},
        {"shape conformance", shape_conformance},
        {"overfit sanity", overfit},
        {"synthetic end-to-end", [&] { return end_to_end(work); }},
        {"inference protocol", inference_protocol},
        {"determinism", [&] { return determinism(work); }},
        {"parameter accounting", parameter_accounting},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end())
            continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failures += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << "  [" << id << "] " << criteria[i].first << ": " << v.detail
                  << std::endl;
    }
    fs::remove_all(work);
    return failures;
}
