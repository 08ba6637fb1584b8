#include "scg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scg/error.hpp"

namespace scg {

using nlohmann::json;

ScgConfig ModelConfig::scg_config() const
{
    ScgConfig c;
    c.variant = scg_variant;
    c.feature_width = backbone.feature_width;
    c.classes = classes;
    c.nodes_h = nodes_h;
    c.nodes_w = nodes_w;
    c.epsilon = scg_epsilon;
    return c;
}

void ModelConfig::validate() const
{
    auto need = [](bool ok, const std::string& what) {
        if (!ok)
            throw DataError("invalid model config: " + what);
    };
    need(classes >= 2 && classes <= 255, "model.classes must be in [2, 255]");
    need(hidden > 0, "model.hidden must be positive");
    need(nodes_h > 0 && nodes_w > 0, "scg.nodes must be positive");
    need(scg_epsilon > 0, "scg.epsilon must be positive");
    need(input_size > 0 && input_size % BackboneConfig::kStride == 0, "model.input_size must be a multiple of 16");
    need(nodes_h <= input_size / BackboneConfig::kStride && nodes_w <= input_size / BackboneConfig::kStride,
         "scg.nodes exceeds the feature grid of model.input_size / 16");
    need(backbone.stage_widths.size() == 4, "backbone.stage_widths needs 4 entries");
    for (auto w : backbone.stage_widths)
        need(w > 0, "backbone.stage_widths entries must be positive");
    need(backbone.feature_width > 0, "backbone.feature_width must be positive");
}

ModelConfig ModelConfig::preset(const std::string& name)
{
    ModelConfig c;
    if (name == "SCG-GCN")
        return c;
    if (name == "SCG-GIN") {
        c.gnn1 = c.gnn2 = GnnKind::gin;
    } else if (name == "SCG-GCN-GIN") {
        c.gnn2 = GnnKind::gin;
    } else if (name == "SCG_ae-GCN") {
        c.scg_variant = ScgVariant::ae;
    } else if (name == "SCG_dir-GCN") {
        c.scg_variant = ScgVariant::directed;
    } else if (name == "SCG_dir-GCN-GIN") {
        c.scg_variant = ScgVariant::directed;
        c.gnn2 = GnnKind::gin;
    } else if (name == "SCG-GCN_ns") {
        c.sum_residual = false;
    } else {
        std::string known;
        for (const auto& n : preset_names())
            known += (known.empty() ? "" : ", ") + n;
        throw DataError("unknown model variant '" + name + "' (known: " + known + ")");
    }
    return c;
}

std::vector<std::string> ModelConfig::preset_names()
{
    return {"SCG-GCN", "SCG-GIN", "SCG-GCN-GIN", "SCG_ae-GCN", "SCG_dir-GCN", "SCG_dir-GCN-GIN", "SCG-GCN_ns"};
}

void TrainConfig::validate() const
{
    auto need = [](bool ok, const std::string& what) {
        if (!ok)
            throw DataError("invalid train config: " + what);
    };
    need(learning_rate > 0 && bias_lr_multiplier > 0, "learning rates must be positive");
    need(weight_decay >= 0, "train.weight_decay must be nonnegative");
    need(poly_power > 0 && max_iter > 0, "poly schedule needs positive power and max_iter");
    need(step_factor > 0 && step_factor < 1, "train.step_factor must be in (0, 1)");
    need(step_epochs > 0, "train.step_epochs must be positive");
    need(batch_size > 0 && patches_per_epoch > 0, "batch size and patches per epoch must be positive");
    need(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0, "invalid Adam coefficients");
}

void InferConfig::validate() const
{
    if (window == 0 || window % BackboneConfig::kStride != 0)
        throw DataError("invalid infer config: infer.window must be a positive multiple of 16");
    if (stride == 0 || stride > window)
        throw DataError("invalid infer config: infer.stride must be in [1, infer.window]");
}

namespace {

// Reads known keys from one section and rejects the rest.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object())
            throw DataError("config section '" + name_ + "' must be an object");
    }

    template <typename V>
    void get(const char* key, V& out)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        try {
            out = j_.at(key).get<V>();
        } catch (const json::exception&) {
            throw DataError("config key " + name_ + "." + key + " has the wrong type (" + j_.at(key).dump() + ")");
        }
    }

    template <typename V, typename Parse>
    void get_as(const char* key, V& out, Parse parse)
    {
        std::string s;
        const bool present = j_.contains(key);
        get(key, s);
        if (present)
            out = parse(s);
    }

    void finish() const
    {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k))
                throw DataError("unknown config key " + name_ + "." + k);
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

json section_or_empty(const json& root, const char* key)
{
    return root.contains(key) ? root.at(key) : json::object();
}

} // namespace

RunConfig parse_config(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object())
        throw DataError("config must be a JSON object");
    if (!root.contains("schema_version"))
        throw DataError("config is missing schema_version");
    if (root.at("schema_version") != kConfigSchemaVersion)
        throw DataError("unsupported config schema_version " + root.at("schema_version").dump() + " (expected " +
                        std::to_string(kConfigSchemaVersion) + ")");

    RunConfig cfg;
    Section top(root, "<root>");
    int version = 0;
    top.get("schema_version", version);
    std::string variant;
    top.get("variant", variant);
    if (!variant.empty())
        cfg.model = ModelConfig::preset(variant);
    for (const char* s : {"scg", "gnn1", "gnn2", "model", "backbone", "train", "infer"}) {
        json dummy;
        top.get(s, dummy);
    }
    top.finish();

    auto& m = cfg.model;
    {
        const auto j = section_or_empty(root, "scg");
        Section s(j, "scg");
        s.get_as("variant", m.scg_variant, parse_scg_variant);
        std::vector<std::size_t> nodes{m.nodes_h, m.nodes_w};
        s.get("nodes", nodes);
        if (nodes.size() != 2)
            throw DataError("scg.nodes must be [rows, cols]");
        m.nodes_h = nodes[0];
        m.nodes_w = nodes[1];
        s.get("epsilon", m.scg_epsilon);
        s.finish();
    }
    for (auto [key, slot] : {std::pair{"gnn1", &m.gnn1}, std::pair{"gnn2", &m.gnn2}}) {
        const auto j = section_or_empty(root, key);
        Section s(j, key);
        s.get_as("kind", *slot, parse_gnn_kind);
        s.finish();
    }
    {
        const auto j = section_or_empty(root, "model");
        Section s(j, "model");
        s.get("hidden", m.hidden);
        s.get("classes", m.classes);
        s.get("input_size", m.input_size);
        s.get("sum_residual", m.sum_residual);
        s.get("double_gamma", m.double_gamma);
        s.get("literal_normalization", m.literal_normalization);
        s.finish();
    }
    {
        const auto j = section_or_empty(root, "backbone");
        Section s(j, "backbone");
        s.get("stage_widths", m.backbone.stage_widths);
        s.get("feature_width", m.backbone.feature_width);
        s.finish();
    }
    {
        auto& t = cfg.train;
        const auto j = section_or_empty(root, "train");
        Section s(j, "train");
        s.get("learning_rate", t.learning_rate);
        s.get("bias_lr_multiplier", t.bias_lr_multiplier);
        s.get("weight_decay", t.weight_decay);
        s.get("poly_power", t.poly_power);
        s.get("max_iter", t.max_iter);
        s.get("step_factor", t.step_factor);
        s.get("step_epochs", t.step_epochs);
        s.get("batch_size", t.batch_size);
        s.get("patches_per_epoch", t.patches_per_epoch);
        s.get("epochs", t.epochs);
        s.get("seed", t.seed);
        s.get("beta1", t.beta1);
        s.get("beta2", t.beta2);
        s.get("adam_eps", t.adam_eps);
        s.get("kl_loss", t.kl_loss);
        s.get("dl_loss", t.dl_loss);
        s.get("augment", t.augment);
        if (j.contains("ignore_index") && j.at("ignore_index").is_null()) {
            json tmp;
            s.get("ignore_index", tmp);
            t.ignore_index.reset();
        } else {
            int ignore = t.ignore_index ? *t.ignore_index : -1;
            s.get("ignore_index", ignore);
            if (ignore < -1 || ignore > 255)
                throw DataError("train.ignore_index must be in [0, 255] or null");
            if (ignore >= 0)
                t.ignore_index = static_cast<std::uint8_t>(ignore);
            else
                t.ignore_index.reset();
        }
        s.get("reported_classes", t.reported_classes);
        s.finish();
    }
    {
        auto& i = cfg.infer;
        const auto j = section_or_empty(root, "infer");
        Section s(j, "infer");
        s.get("window", i.window);
        s.get("stride", i.stride);
        s.get("tta", i.tta);
        s.get("tta_transpose", i.tta_transpose);
        s.finish();
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string dump_config(const RunConfig& cfg)
{
    const auto& m = cfg.model;
    const auto& t = cfg.train;
    const auto& i = cfg.infer;
    json root = json::object();
    root["schema_version"] = kConfigSchemaVersion;
    root["scg"] = {{"variant", to_string(m.scg_variant)},
                   {"nodes", std::vector<std::size_t>{m.nodes_h, m.nodes_w}},
                   {"epsilon", m.scg_epsilon}};
    root["gnn1"] = {{"kind", to_string(m.gnn1)}};
    root["gnn2"] = {{"kind", to_string(m.gnn2)}};
    root["model"] = {{"hidden", m.hidden},
                     {"classes", m.classes},
                     {"input_size", m.input_size},
                     {"sum_residual", m.sum_residual},
                     {"double_gamma", m.double_gamma},
                     {"literal_normalization", m.literal_normalization}};
    root["backbone"] = {{"stage_widths", m.backbone.stage_widths}, {"feature_width", m.backbone.feature_width}};
    root["train"] = {{"learning_rate", t.learning_rate},
                     {"bias_lr_multiplier", t.bias_lr_multiplier},
                     {"weight_decay", t.weight_decay},
                     {"poly_power", t.poly_power},
                     {"max_iter", t.max_iter},
                     {"step_factor", t.step_factor},
                     {"step_epochs", t.step_epochs},
                     {"batch_size", t.batch_size},
                     {"patches_per_epoch", t.patches_per_epoch},
                     {"epochs", t.epochs},
                     {"seed", t.seed},
                     {"beta1", t.beta1},
                     {"beta2", t.beta2},
                     {"adam_eps", t.adam_eps},
                     {"kl_loss", t.kl_loss},
                     {"dl_loss", t.dl_loss},
                     {"augment", t.augment},
                     {"ignore_index", t.ignore_index ? json(*t.ignore_index) : json(nullptr)},
                     {"reported_classes", t.reported_classes}};
    root["infer"] = {{"window", i.window}, {"stride", i.stride}, {"tta", i.tta}, {"tta_transpose", i.tta_transpose}};
    return root.dump(2) + "\n";
}

void save_config(const std::filesystem::path& path, const RunConfig& config)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write config " + path.string());
    out << dump_config(config);
}

} // namespace scg
