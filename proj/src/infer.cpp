#include "scg/infer.hpp"

#include <algorithm>
#include <numeric>

#include "scg/error.hpp"

namespace scg {

std::vector<std::size_t> window_origins(std::size_t size, std::size_t window, std::size_t stride)
{
    if (window == 0 || stride == 0)
        throw DataError("window and stride must be positive");
    if (stride > window)
        throw DataError("stride " + std::to_string(stride) + " exceeds the " + std::to_string(window) +
                        "px window and would leave pixels uncovered");
    if (size < window)
        throw DataError("extent " + std::to_string(size) + " is smaller than the " + std::to_string(window) +
                        "px window");
    std::vector<std::size_t> out;
    for (std::size_t o = 0; o + window <= size; o += stride)
        out.push_back(o);
    if (out.back() + window < size)
        out.push_back(size - window);
    return out;
}

std::vector<std::uint32_t> coverage_counts(std::size_t height, std::size_t width, std::size_t window,
                                           std::size_t stride)
{
    std::vector<std::uint32_t> out(height * width, 0);
    for (auto oy : window_origins(height, window, stride))
        for (auto ox : window_origins(width, window, stride))
            for (std::size_t y = oy; y < oy + window; ++y)
                for (std::size_t x = ox; x < ox + window; ++x)
                    ++out[y * width + x];
    return out;
}

Image pad_reflect(const Image& image, std::size_t window)
{
    if (image.height == 0 || image.width == 0)
        throw DataError("cannot pad an empty image");
    const std::size_t h = std::max(image.height, window), w = std::max(image.width, window);
    if (h - image.height >= image.height || w - image.width >= image.width)
        throw DataError("tile " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                        " is too small to reflect-pad to a " + std::to_string(window) +
                        "px window; it must exceed half the window on each side");
    if (h == image.height && w == image.width)
        return image;
    auto mirror = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * n - 2 - i; };
    Image out{h, w, std::vector<std::uint8_t>(h * w * 3)};
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.at(y, x, c) = image.at(mirror(y, image.height), mirror(x, image.width), c);
    return out;
}

namespace {

// Source pixel (in the untransformed window) for transformed pixel (y, x).
inline std::pair<std::size_t, std::size_t> source_of(unsigned t, std::size_t y, std::size_t x, std::size_t h,
                                                     std::size_t w)
{
    if (t & 4u)
        std::swap(y, x);
    if (t & 2u)
        y = h - 1 - y;
    if (t & 1u)
        x = w - 1 - x;
    return {y, x};
}

} // namespace

Image apply_transform(const Image& image, unsigned t)
{
    if ((t & 4u) && image.height != image.width)
        throw DimensionError("transposed TTA needs a square window");
    Image out{image.height, image.width, std::vector<std::uint8_t>(image.rgb.size())};
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x) {
            const auto [sy, sx] = source_of(t, y, x, image.height, image.width);
            for (std::size_t c = 0; c < 3; ++c)
                out.at(y, x, c) = image.at(sy, sx, c);
        }
    return out;
}

std::vector<unsigned> tta_transforms(const InferConfig& config)
{
    if (!config.tta)
        return {0};
    if (config.tta_transpose)
        return {0, 1, 2, 3, 4, 5, 6, 7};
    return {0, 1, 2, 3};
}

LabelMap argmax_labels(const std::vector<float>& probs, std::size_t classes, std::size_t height, std::size_t width)
{
    const std::size_t plane = height * width;
    if (probs.size() != classes * plane)
        throw DimensionError("argmax_labels: probability buffer does not match [c,H,W]");
    LabelMap out{height, width, std::vector<std::uint8_t>(plane, 0)};
    for (std::size_t p = 0; p < plane; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < classes; ++k)
            if (probs[k * plane + p] > probs[best * plane + p])
                best = k;
        out.labels[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

template <typename T>
std::vector<float> window_probabilities(ScgNet<T>& model, const Image& window, const std::vector<unsigned>& transforms)
{
    const std::size_t h = window.height, w = window.width, plane = h * w;
    const std::size_t c = model.config().classes;
    std::vector<Image> views;
    std::vector<const Image*> ptrs;
    views.reserve(transforms.size());
    for (auto t : transforms)
        views.push_back(apply_transform(window, t));
    for (const auto& v : views)
        ptrs.push_back(&v);

    NoGradGuard no_grad;
    Rng unused(0);
    const auto out = model.forward(to_tensor<T>(ptrs), Mode::eval, unused);
    const auto probs = softmax(out.logits, 1);
    const auto pv = probs.values();

    std::vector<double> acc(c * plane, 0.0);
    for (std::size_t i = 0; i < transforms.size(); ++i)
        for (std::size_t k = 0; k < c; ++k) {
            const T* src = pv.data() + (i * c + k) * plane;
            double* dst = acc.data() + k * plane;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    // Transformed pixel (y, x) shows source pixel (sy, sx).
                    const auto [sy, sx] = source_of(transforms[i], y, x, h, w);
                    dst[sy * w + sx] += static_cast<double>(src[y * w + x]);
                }
        }
    std::vector<float> result(acc.size());
    const double inv = 1.0 / static_cast<double>(transforms.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        result[i] = static_cast<float>(acc[i] * inv);
    return result;
}

template <typename T>
Prediction sliding_window_infer(ScgNet<T>& model, const Image& tile, const InferConfig& config)
{
    config.validate();
    const std::size_t win = config.window;
    const Image padded = pad_reflect(tile, win);
    const std::size_t H = padded.height, W = padded.width, c = model.config().classes;
    const auto transforms = tta_transforms(config);

    std::vector<double> acc(c * H * W, 0.0);
    std::vector<std::uint32_t> count(H * W, 0);
    Image crop{win, win, std::vector<std::uint8_t>(win * win * 3)};
    for (auto oy : window_origins(H, win, config.stride))
        for (auto ox : window_origins(W, win, config.stride)) {
            for (std::size_t y = 0; y < win; ++y)
                std::copy_n(padded.rgb.begin() + static_cast<std::ptrdiff_t>(((oy + y) * W + ox) * 3), win * 3,
                            crop.rgb.begin() + static_cast<std::ptrdiff_t>(y * win * 3));
            const auto probs = window_probabilities(model, crop, transforms);
            for (std::size_t k = 0; k < c; ++k)
                for (std::size_t y = 0; y < win; ++y)
                    for (std::size_t x = 0; x < win; ++x)
                        acc[(k * H + oy + y) * W + ox + x] += probs[(k * win + y) * win + x];
            for (std::size_t y = 0; y < win; ++y)
                for (std::size_t x = 0; x < win; ++x)
                    ++count[(oy + y) * W + ox + x];
        }

    Prediction pred;
    pred.classes = c;
    pred.height = tile.height;
    pred.width = tile.width;
    pred.probs.resize(c * tile.height * tile.width);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < tile.height; ++y)
            for (std::size_t x = 0; x < tile.width; ++x)
                pred.probs[(k * tile.height + y) * tile.width + x] =
                    static_cast<float>(acc[(k * H + y) * W + x] / count[y * W + x]);
    pred.labels = argmax_labels(pred.probs, c, tile.height, tile.width);
    return pred;
}

template <typename T>
ConfusionMatrix evaluate(ScgNet<T>& model, const TileDataset& data, const InferConfig& config,
                         std::optional<std::uint8_t> ignore_index)
{
    ConfusionMatrix cm(model.config().classes);
    for (const auto& tile : data.tiles) {
        if (tile.label.labels.empty())
            continue;
        const auto pred = sliding_window_infer(model, tile.image, config);
        cm.update(pred.labels, tile.label, ignore_index);
    }
    return cm;
}

template <typename T>
RelationMap relation_map(const Tensor<T>& adjacency, std::size_t node, std::size_t grid_h, std::size_t grid_w,
                         std::size_t top_k)
{
    const std::size_t n = grid_h * grid_w;
    const bool batched = adjacency.rank() == 3 && adjacency.size(0) == 1;
    if (!(adjacency.rank() == 2 || batched) || adjacency.size(adjacency.rank() - 1) != n ||
        adjacency.size(adjacency.rank() - 2) != n)
        throw DimensionError("relation_map: adjacency must be [n,n] or [1,n,n] with n = " + std::to_string(n) +
                             ", got " + shape_str(adjacency.shape()));
    if (node >= n)
        throw RangeError("node id " + std::to_string(node) + " is out of range; the graph has " +
                         std::to_string(n) + " nodes (0.." + std::to_string(n - 1) + ")");
    const auto row = adjacency.values().subspan(node * n, n);
    RelationMap map{node, grid_h, grid_w, std::vector<float>(n, 0.0f)};
    const T peak = *std::max_element(row.begin(), row.end());
    if (!(peak > T(0)))
        return map;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t i = 0; i < std::min(top_k, n); ++i)
        map.weights[order[i]] = static_cast<float>(std::max(row[order[i]], T(0)) / peak);
    return map;
}

template <typename T>
std::vector<RelationMap> export_relation_maps(ScgNet<T>& model, const Image& image,
                                              const std::vector<std::size_t>& nodes, std::size_t top_k)
{
    const std::size_t s = BackboneConfig::kStride;
    const std::size_t h = image.height / s * s, w = image.width / s * s;
    if (h == 0 || w == 0)
        throw DataError("image must be at least 16x16 to export relation maps");
    Image crop{h, w, std::vector<std::uint8_t>(h * w * 3)};
    for (std::size_t y = 0; y < h; ++y)
        std::copy_n(image.rgb.begin() + static_cast<std::ptrdiff_t>(y * image.width * 3), w * 3,
                    crop.rgb.begin() + static_cast<std::ptrdiff_t>(y * w * 3));
    NoGradGuard no_grad;
    Rng unused(0);
    const auto out = model.forward(to_tensor<T>({&crop}), Mode::eval, unused);
    std::vector<RelationMap> maps;
    for (auto node : nodes)
        maps.push_back(relation_map(out.scg.adjacency, node, model.config().nodes_h, model.config().nodes_w, top_k));
    return maps;
}

Image render_heatmap(const RelationMap& map, std::size_t height, std::size_t width)
{
    static const double stops[3][3] = {{30, 30, 120}, {35, 145, 140}, {180, 225, 60}};
    Image out{height, width, std::vector<std::uint8_t>(height * width * 3)};
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t gy = y * map.grid_h / height, gx = x * map.grid_w / width;
            const double v = std::clamp(static_cast<double>(map.weights[gy * map.grid_w + gx]), 0.0, 1.0);
            const std::size_t seg = v < 0.5 ? 0 : 1;
            const double f = v < 0.5 ? v * 2 : (v - 0.5) * 2;
            for (std::size_t c = 0; c < 3; ++c)
                out.at(y, x, c) =
                    static_cast<std::uint8_t>(std::lround(stops[seg][c] + f * (stops[seg + 1][c] - stops[seg][c])));
        }
    return out;
}

Image blend(const Image& base, const Image& overlay, double alpha)
{
    if (base.height != overlay.height || base.width != overlay.width)
        throw DimensionError("blend: images differ in size");
    Image out = base;
    for (std::size_t i = 0; i < out.rgb.size(); ++i)
        out.rgb[i] = static_cast<std::uint8_t>(std::lround(alpha * overlay.rgb[i] + (1 - alpha) * base.rgb[i]));
    return out;
}

#define SCG_INSTANTIATE(T)                                                                                       \
    template std::vector<float> window_probabilities(ScgNet<T>&, const Image&, const std::vector<unsigned>&);   \
    template Prediction sliding_window_infer(ScgNet<T>&, const Image&, const InferConfig&);                     \
    template ConfusionMatrix evaluate(ScgNet<T>&, const TileDataset&, const InferConfig&,                       \
                                      std::optional<std::uint8_t>);                                              \
    template RelationMap relation_map(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t);    \
    template std::vector<RelationMap> export_relation_maps(ScgNet<T>&, const Image&,                            \
                                                           const std::vector<std::size_t>&, std::size_t);

SCG_INSTANTIATE(float)
SCG_INSTANTIATE(double)

} // namespace scg
