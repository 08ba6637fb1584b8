#pragma once
// Run configuration. On disk it is a JSON document (schema_version 1) whose
// top-level sections mirror the dotted key names used in docs and on the
// command line: scg.variant, scg.nodes, gnn1.kind, train.batch_size, ...
// See docs/config.md for every key and default.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scg/backbone.hpp"
#include "scg/gnn.hpp"
#include "scg/scg.hpp"

namespace scg {

inline constexpr int kConfigSchemaVersion = 1;

struct ModelConfig {
    ScgVariant scg_variant = ScgVariant::variational;
    GnnKind gnn1 = GnnKind::gcn;
    GnnKind gnn2 = GnnKind::gcn;
    std::size_t hidden = 128; // d
    std::size_t classes = 6;  // c
    std::size_t nodes_h = 28;
    std::size_t nodes_w = 28;
    double scg_epsilon = 1e-7;
    bool sum_residual = true;
    std::size_t input_size = 448;
    bool double_gamma = false;
    bool literal_normalization = false;
    BackboneConfig backbone;

    std::size_t nodes() const { return nodes_h * nodes_w; }
    ScgConfig scg_config() const;
    /// DataError describing the first violated constraint.
    void validate() const;

    /// Named variants: SCG-GCN, SCG-GIN, SCG-GCN-GIN, SCG_ae-GCN,
    /// SCG_dir-GCN, SCG_dir-GCN-GIN, SCG-GCN_ns.
    static ModelConfig preset(const std::string& name);
    static std::vector<std::string> preset_names();
};

struct TrainConfig {
    double learning_rate = 8.5e-5 / std::sqrt(2.0);
    double bias_lr_multiplier = 2.0;
    double weight_decay = 2e-5;
    double poly_power = 0.9;
    double max_iter = 1e8;
    double step_factor = 0.85;
    std::size_t step_epochs = 15;
    std::size_t batch_size = 4;
    std::size_t patches_per_epoch = 4000;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool kl_loss = true;
    bool dl_loss = true;
    bool augment = true;
    std::optional<std::uint8_t> ignore_index = 255;
    /// Classes averaged into mF1/mIoU; empty means all.
    std::vector<std::size_t> reported_classes;

    void validate() const;
};

struct InferConfig {
    std::size_t window = 448;
    std::size_t stride = 100;
    bool tta = true;
    /// Adds the four transposed variants to the flip/mirror set.
    bool tta_transpose = false;

    void validate() const;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    InferConfig infer;

    void validate() const
    {
        model.validate();
        train.validate();
        infer.validate();
    }
};

/// Parses the JSON text. Missing keys keep defaults; unknown keys, wrong
/// types and a schema_version other than 1 raise DataError. A top-level
/// "variant" (e.g. "SCG-GIN") seeds the model section before other keys apply.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every key present.
std::string dump_config(const RunConfig& config);
void save_config(const std::filesystem::path& path, const RunConfig& config);

} // namespace scg
