// Command-line front end: train, eval, infer, export-graph, gradcheck,
// synth, convert-labels, params, init-config.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "scg/checkpoint.hpp"
#include "scg/error.hpp"
#include "scg/gradcheck.hpp"
#include "scg/outputs.hpp"
#include "scg/train.hpp"

namespace fs = std::filesystem;
using namespace scg;

namespace {

struct InferFlags {
    std::optional<std::size_t> window;
    std::optional<std::size_t> stride;
    bool no_tta = false;
    bool tta8 = false;

    void add(CLI::App* app)
    {
        app->add_option("--window", window, "Sliding window size (default from the checkpoint config)");
        app->add_option("--stride", stride, "Sliding window stride");
        app->add_flag("--no-tta", no_tta, "Disable flip/mirror test-time augmentation");
        app->add_flag("--tta8", tta8, "Add the four transposed variants to TTA");
    }

    InferConfig apply(InferConfig c) const
    {
        if (window)
            c.window = *window;
        if (stride)
            c.stride = *stride;
        if (no_tta)
            c.tta = false;
        if (tta8)
            c.tta_transpose = true;
        c.validate();
        return c;
    }
};

int run_train(const std::optional<fs::path>& config_path, const fs::path& data, const fs::path& out,
              std::optional<std::size_t> epochs, std::optional<std::uint64_t> seed)
{
    RunConfig cfg = config_path ? load_config(*config_path) : RunConfig{};
    if (epochs)
        cfg.train.epochs = *epochs;
    if (seed)
        cfg.train.seed = *seed;
    cfg.validate();
    const auto ignore = cfg.train.ignore_index;
    const auto tr = load_dataset(data, Split::train, cfg.model.classes, ignore, &std::cerr);
    std::optional<TileDataset> val;
    if (fs::is_directory(data / "val"))
        val = load_dataset(data, Split::val, cfg.model.classes, ignore, &std::cerr);

    fs::create_directories(out);
    save_config(out / "config.json", cfg);
    ScgNet<float> model(cfg.model, cfg.train.seed);
    std::cout << "training " << model.parameter_count() << " parameters on " << tr.size() << " tiles";
    if (val)
        std::cout << ", validating on " << val->size();
    std::cout << std::endl;
    TrainOptions opts;
    opts.out_dir = out;
    opts.log = &std::cout;
    train(model, cfg, tr, val ? &*val : nullptr, opts);
    std::cout << "wrote " << (out / "model.ckpt").string() << std::endl;
    return 0;
}

int run_eval(const fs::path& ckpt, const fs::path& data, const fs::path& report, const std::string& split,
             const InferFlags& flags, const std::optional<fs::path>& pred_dir)
{
    RunConfig cfg;
    auto model = load_model<float>(ckpt, &cfg);
    const auto infer = flags.apply(cfg.infer);
    const auto ds = load_dataset(data, parse_split(split), cfg.model.classes, cfg.train.ignore_index, &std::cerr);
    ConfusionMatrix cm(cfg.model.classes);
    for (const auto& tile : ds.tiles) {
        if (tile.label.labels.empty())
            throw DataError("tile " + tile.image_path.string() + " has no label mask to evaluate against");
        const auto pred = sliding_window_infer(model, tile.image, infer);
        cm.update(pred.labels, tile.label, cfg.train.ignore_index);
        if (pred_dir)
            write_outputs(pred, ds.palette, *pred_dir, tile.name);
        std::cout << tile.name << " done" << std::endl;
    }
    const auto m = compute_metrics(cm, cfg.train.reported_classes);
    if (report.has_parent_path())
        fs::create_directories(report.parent_path());
    write_metrics_csv(report, m, ds.palette);
    std::cout << std::fixed << std::setprecision(4) << "OA " << m.overall_accuracy << "  mF1 " << m.mean_f1
              << "  mIoU " << m.mean_iou << "\n";
    return 0;
}

int run_infer(const fs::path& ckpt, const fs::path& image, const fs::path& out, const InferFlags& flags,
              const std::optional<fs::path>& palette_path, bool probs)
{
    RunConfig cfg;
    auto model = load_model<float>(ckpt, &cfg);
    const auto palette = palette_path ? Palette::load(*palette_path) : Palette::for_classes(cfg.model.classes);
    const auto pred = sliding_window_infer(model, read_png_rgb(image), flags.apply(cfg.infer));
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    write_png_indexed(out, pred.labels, palette);
    if (probs) {
        const auto dir = out.parent_path().empty() ? fs::path(".") : out.parent_path();
        OutputOptions o;
        o.probability_rasters = true;
        write_outputs(pred, palette, dir, out.stem().string(), o);
    }
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

std::vector<std::size_t> parse_nodes(const std::string& text)
{
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v < 0)
                throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::logic_error&) {
            throw DataError("--nodes expects comma-separated node indices, got '" + item + "'");
        }
    }
    if (out.empty())
        throw DataError("--nodes is empty");
    return out;
}

int run_export_graph(const fs::path& ckpt, const fs::path& image_path, const std::string& nodes_text,
                     const fs::path& out, std::size_t top_k)
{
    RunConfig cfg;
    auto model = load_model<float>(ckpt, &cfg);
    const auto image = read_png_rgb(image_path);
    const auto nodes = parse_nodes(nodes_text);
    const auto maps = export_relation_maps(model, image, nodes, top_k);
    const std::size_t h = image.height / 16 * 16, w = image.width / 16 * 16;
    Image crop{h, w, std::vector<std::uint8_t>(h * w * 3)};
    for (std::size_t y = 0; y < h; ++y)
        std::copy_n(image.rgb.begin() + static_cast<std::ptrdiff_t>(y * image.width * 3), w * 3,
                    crop.rgb.begin() + static_cast<std::ptrdiff_t>(y * w * 3));
    fs::create_directories(out);
    for (const auto& m : maps) {
        const std::string stem = "node_" + std::to_string(m.node);
        const auto heat = render_heatmap(m, h, w);
        write_png_rgb(out / (stem + "_heatmap.png"), heat);
        write_png_rgb(out / (stem + "_overlay.png"), blend(crop, heat, 0.5));
        std::ofstream csv(out / (stem + "_weights.csv"));
        csv << "row,col,weight\n";
        for (std::size_t r = 0; r < m.grid_h; ++r)
            for (std::size_t c = 0; c < m.grid_w; ++c)
                csv << r << ',' << c << ',' << m.weights[r * m.grid_w + c] << '\n';
    }
    std::cout << "wrote " << maps.size() << " relation maps to " << out.string() << "\n";
    return 0;
}

int cmd_gradcheck(const std::optional<std::string>& op, std::size_t instances, std::uint64_t seed)
{
    const std::vector<std::string> ops = op ? std::vector<std::string>{*op} : gradcheck_ops();
    bool ok = true;
    std::cout << std::left << std::setw(28) << "op" << std::setw(11) << "instances" << std::setw(14) << "worst"
              << "status\n";
    for (const auto& name : ops) {
        const auto r = run_gradcheck(name, instances, seed);
        ok &= r.passed;
        std::cout << std::left << std::setw(28) << r.op << std::setw(11) << r.instances << std::setw(14)
                  << std::scientific << std::setprecision(3) << r.worst << (r.passed ? "PASS" : "FAIL") << "\n";
    }
    return ok ? 0 : 1;
}

int run_convert_labels(const fs::path& in, const fs::path& out, const std::optional<fs::path>& palette_path)
{
    const auto palette = palette_path ? Palette::load(*palette_path) : Palette::isprs();
    std::vector<fs::path> files;
    if (fs::is_directory(in)) {
        for (const auto& e : fs::directory_iterator(in))
            if (e.path().extension() == ".png")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(in);
    }
    fs::create_directories(out);
    for (const auto& f : files) {
        const auto labels = rgb_to_labels(read_png_rgb(f), palette);
        write_png_gray(out / f.filename(), labels.height, labels.width, labels.labels);
    }
    palette.save(out / "palette.txt");
    std::cout << "converted " << files.size() << " masks into " << out.string() << "\n";
    return 0;
}

int run_params(const std::optional<fs::path>& config_path, const std::optional<std::string>& variant)
{
    RunConfig cfg = config_path ? load_config(*config_path) : RunConfig{};
    if (variant) {
        const auto backbone = cfg.model.backbone;
        cfg.model = ModelConfig::preset(*variant);
        cfg.model.backbone = backbone;
    }
    const ScgNet<float> model(cfg.model, 0);
    const auto b = parameter_breakdown(model);
    std::cout << "backbone        " << b.backbone << "\n"
              << "mean head       " << b.mean_head << "\n"
              << "deviation head  " << b.deviation_head << "\n"
              << "gnn1            " << b.gnn1 << " (+" << b.gnn1_bn << " batch-norm)\n"
              << "gnn2            " << b.gnn2 << " (+" << b.gnn2_bn << " batch-norm)\n"
              << "total           " << b.total << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SCG-Net: self-constructing graph segmentation"};
    app.require_subcommand(1);

    auto* train_cmd = app.add_subcommand("train", "Train a model on a tile dataset");
    std::optional<fs::path> config;
    fs::path data, out;
    std::optional<std::size_t> epochs;
    std::optional<std::uint64_t> seed;
    train_cmd->add_option("--config", config, "JSON run configuration (defaults if omitted)")->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data, "Dataset root with train/ and optional val/")->required();
    train_cmd->add_option("--out", out, "Output directory")->required();
    train_cmd->add_option("--epochs", epochs, "Override train.epochs");
    train_cmd->add_option("--seed", seed, "Override train.seed");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled split");
    fs::path ckpt, report;
    std::string split = "test";
    std::optional<fs::path> pred_dir;
    InferFlags eval_flags;
    eval_cmd->add_option("--checkpoint", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", data, "Dataset root")->required();
    eval_cmd->add_option("--report", report, "Metric CSV to write")->required();
    eval_cmd->add_option("--split", split, "train, val or test")->capture_default_str();
    eval_cmd->add_option("--predictions", pred_dir, "Also write per-tile prediction PNGs here");
    eval_flags.add(eval_cmd);

    auto* infer_cmd = app.add_subcommand("infer", "Segment one image");
    fs::path image;
    std::optional<fs::path> palette;
    bool probs = false;
    InferFlags infer_flags;
    infer_cmd->add_option("--checkpoint", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--image", image, "RGB PNG")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--out", out, "Indexed-color PNG to write")->required();
    infer_cmd->add_option("--palette", palette, "Palette file for the output colors")->check(CLI::ExistingFile);
    infer_cmd->add_flag("--probs", probs, "Also write per-class probability rasters");
    infer_flags.add(infer_cmd);

    auto* graph_cmd = app.add_subcommand("export-graph", "Write relation maps for selected nodes");
    std::string nodes = "8,86,165";
    std::size_t top_k = 9;
    graph_cmd->add_option("--checkpoint", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    graph_cmd->add_option("--image", image, "RGB PNG")->required()->check(CLI::ExistingFile);
    graph_cmd->add_option("--nodes", nodes, "Comma-separated node indices")->capture_default_str();
    graph_cmd->add_option("--out", out, "Output directory")->required();
    graph_cmd->add_option("--top-k", top_k, "Edges kept per node")->capture_default_str();

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    std::optional<std::string> op;
    std::size_t instances = 20;
    std::uint64_t grad_seed = 1234;
    grad_cmd->add_option("--op", op, "Check one op only");
    grad_cmd->add_option("--instances", instances, "Random instances per op")->capture_default_str();
    grad_cmd->add_option("--seed", grad_seed, "Instance generator seed")->capture_default_str();

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic tile dataset");
    SynthConfig sc;
    synth_cmd->add_option("--tiles", sc.tiles, "Number of tiles")->capture_default_str();
    synth_cmd->add_option("--size", sc.size, "Tile side in pixels")->capture_default_str();
    synth_cmd->add_option("--classes", sc.classes, "Classes (3 to 6)")->capture_default_str();
    synth_cmd->add_option("--seed", sc.seed, "Generator seed")->capture_default_str();
    synth_cmd->add_option("--out", out, "Output directory")->required();

    auto* convert_cmd = app.add_subcommand("convert-labels", "Map RGB color-legend masks to index masks");
    fs::path in;
    convert_cmd->add_option("--in", in, "RGB mask PNG or directory of them")->required()->check(CLI::ExistingPath);
    convert_cmd->add_option("--out", out, "Output directory")->required();
    convert_cmd->add_option("--palette", palette, "Palette file (ISPRS legend if omitted)")
        ->check(CLI::ExistingFile);

    auto* params_cmd = app.add_subcommand("params", "Print the parameter breakdown of a configuration");
    std::optional<std::string> variant;
    params_cmd->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    params_cmd->add_option("--variant", variant, "Model preset, e.g. SCG-GCN-GIN");

    auto* init_cmd = app.add_subcommand("init-config", "Write the default run configuration");
    init_cmd->add_option("--out", out, "JSON file to write")->required();
    init_cmd->add_option("--variant", variant, "Model preset, e.g. SCG-GCN-GIN");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*train_cmd)
            return run_train(config, data, out, epochs, seed);
        if (*eval_cmd)
            return run_eval(ckpt, data, report, split, eval_flags, pred_dir);
        if (*infer_cmd)
            return run_infer(ckpt, image, out, infer_flags, palette, probs);
        if (*graph_cmd)
            return run_export_graph(ckpt, image, nodes, out, top_k);
        if (*grad_cmd)
            return cmd_gradcheck(op, instances, grad_seed);
        if (*synth_cmd) {
            generate_synthetic(out, sc);
            std::cout << "wrote " << sc.tiles << " tiles to " << out.string() << "\n";
            return 0;
        }
        if (*convert_cmd)
            return run_convert_labels(in, out, palette);
        if (*params_cmd)
            return run_params(config, variant);
        if (*init_cmd) {
            RunConfig cfg;
            if (variant)
                cfg.model = ModelConfig::preset(*variant);
            save_config(out, cfg);
            std::cout << "wrote " << out.string() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
