#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scg/infer.hpp"

namespace scg {

struct OutputOptions {
    bool probability_rasters = false;
    /// Written as `<tile>_metrics.csv` when set.
    const Metrics* metrics = nullptr;
};

/// Writes `<tile>_pred.png` (indexed color), optionally `<tile>_prob_<k>.png`
/// (probability × 255, grayscale) per class, and the metric CSV. Returns the
/// paths written. IoError if the directory cannot be created or written.
std::vector<std::filesystem::path> write_outputs(const Prediction& prediction, const Palette& palette,
                                                 const std::filesystem::path& out_dir, const std::string& tile_name,
                                                 const OutputOptions& options = {});

void write_metrics_csv(const std::filesystem::path& path, const Metrics& metrics, const Palette& palette);

} // namespace scg
