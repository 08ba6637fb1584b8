#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "scg/data.hpp"
#include "scg/metrics.hpp"
#include "scg/model.hpp"

namespace scg {

/// Class probabilities [c, H, W] (row-major) and their argmax.
struct Prediction {
    std::size_t classes = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> probs;
    LabelMap labels;

    float prob(std::size_t k, std::size_t y, std::size_t x) const { return probs[(k * height + y) * width + x]; }
};

/// Window origins along one axis: every multiple of `stride` that still fits,
/// plus a final window flush to the far border. 600/448/100 -> {0, 100, 152}.
/// DataError when stride > window (gaps) or size < window.
std::vector<std::size_t> window_origins(std::size_t size, std::size_t window, std::size_t stride);

/// Number of windows covering each pixel, row-major [H, W].
std::vector<std::uint32_t> coverage_counts(std::size_t height, std::size_t width, std::size_t window,
                                           std::size_t stride);

/// Reflects rows/columns past the bottom and right edges (mirror without
/// repeating the edge pixel) until the image is at least `window` on each
/// side. DataError if a side would need a pad of its own length or more.
Image pad_reflect(const Image& image, std::size_t window);

/// Geometric TTA transforms on a square window: bit 0 mirrors left-right,
/// bit 1 flips up-down, bit 2 transposes (applied last).
Image apply_transform(const Image& image, unsigned transform);
std::vector<unsigned> tta_transforms(const InferConfig& config);

/// Argmax over classes per pixel; ties go to the lowest class index.
LabelMap argmax_labels(const std::vector<float>& probs, std::size_t classes, std::size_t height, std::size_t width);

/// Softmax probabilities of one window averaged over the TTA set, in window
/// coordinates.
template <typename T>
std::vector<float> window_probabilities(ScgNet<T>& model, const Image& window, const std::vector<unsigned>& transforms);

/// Stitches window predictions over the tile by per-pixel averaging in
/// softmax space. Tiles smaller than the window are reflect-padded and the
/// result is cropped back.
template <typename T>
Prediction sliding_window_infer(ScgNet<T>& model, const Image& tile, const InferConfig& config);

/// Confusion matrix of stitched predictions over every labeled tile.
template <typename T>
ConfusionMatrix evaluate(ScgNet<T>& model, const TileDataset& data, const InferConfig& config,
                         std::optional<std::uint8_t> ignore_index);

/// One node's strongest edges on the node grid: row `node` of the adjacency
/// divided by its maximum, everything but the `top_k` largest set to 0
/// (ties keep the lower node index).
struct RelationMap {
    std::size_t node = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<float> weights; // [grid_h * grid_w]
};

/// `adjacency` is [n, n] or [1, n, n] with n = grid_h·grid_w. RangeError for
/// node ≥ n.
template <typename T>
RelationMap relation_map(const Tensor<T>& adjacency, std::size_t node, std::size_t grid_h, std::size_t grid_w,
                         std::size_t top_k = 9);

/// Runs the model in eval mode on the image (cropped to multiples of 16) and
/// extracts relation maps from the enhanced adjacency.
template <typename T>
std::vector<RelationMap> export_relation_maps(ScgNet<T>& model, const Image& image,
                                              const std::vector<std::size_t>& nodes, std::size_t top_k = 9);

/// Nearest-neighbour upsampling of the map to height×width through a
/// dark-blue to yellow-green ramp.
Image render_heatmap(const RelationMap& map, std::size_t height, std::size_t width);
/// alpha·overlay + (1−alpha)·base, per channel.
Image blend(const Image& base, const Image& overlay, double alpha = 0.5);

} // namespace scg
