#include "scg/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "scg/error.hpp"

namespace scg {

namespace fs = std::filesystem;

std::string to_string(Split s)
{
    switch (s) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    }
    return "?";
}

Split parse_split(const std::string& s)
{
    if (s == "train")
        return Split::train;
    if (s == "val")
        return Split::val;
    if (s == "test")
        return Split::test;
    throw DataError("unknown split '" + s + "' (expected train, val or test)");
}

namespace {

std::map<std::string, fs::path> png_files(const fs::path& dir)
{
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir))
        return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            out[e.path().stem().string()] = e.path();
    return out;
}

} // namespace

TileDataset load_dataset(const fs::path& root, Split split, std::size_t classes,
                         std::optional<std::uint8_t> ignore_index, std::ostream* warnings)
{
    if (!fs::is_directory(root))
        throw IoError("dataset root " + root.string() + " is not a directory");
    TileDataset ds;
    ds.root = root;
    ds.split = split;
    const fs::path base = fs::is_directory(root / to_string(split)) ? root / to_string(split) : root;
    ds.palette = fs::exists(root / "palette.txt") ? Palette::load(root / "palette.txt") : Palette::for_classes(classes);
    if (ds.palette.size() < classes)
        throw DataError((root / "palette.txt").string() + " defines " + std::to_string(ds.palette.size()) +
                        " classes, config needs " + std::to_string(classes));

    const auto images = png_files(base / "images");
    const auto labels = png_files(base / "labels");
    const bool need_labels = split != Split::test || !labels.empty();
    if (images.empty()) {
        if (warnings)
            *warnings << "warning: no images found under " << (base / "images").string() << "\n";
        return ds;
    }
    for (const auto& [name, path] : labels)
        if (!images.count(name))
            throw DataError("label " + path.string() + " has no matching image");

    for (const auto& [name, path] : images) {
        Tile t;
        t.name = name;
        t.image_path = path;
        t.image = read_png_rgb(path);
        const auto it = labels.find(name);
        if (it == labels.end()) {
            if (need_labels)
                throw DataError("image " + path.string() + " has no label mask in " + (base / "labels").string());
        } else {
            t.label_path = it->second;
            t.label = read_png_labels(it->second);
            if (t.label.height != t.image.height || t.label.width != t.image.width)
                throw DataError("label " + it->second.string() + " is " + std::to_string(t.label.width) + "x" +
                                std::to_string(t.label.height) + " but its image is " +
                                std::to_string(t.image.width) + "x" + std::to_string(t.image.height));
            for (std::size_t i = 0; i < t.label.labels.size(); ++i) {
                const auto v = t.label.labels[i];
                if (v >= classes && !(ignore_index && v == *ignore_index))
                    throw DataError("label " + it->second.string() + " has value " + std::to_string(v) +
                                    " at pixel (" + std::to_string(i % t.label.width) + "," +
                                    std::to_string(i / t.label.width) + "); max legal index is " +
                                    std::to_string(classes - 1));
            }
        }
        ds.tiles.push_back(std::move(t));
    }
    return ds;
}

Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
    return Rng(seq);
}

PatchSampler::PatchSampler(std::size_t patch_size, std::size_t patches_per_epoch, std::uint64_t seed, bool shuffle)
    : patch_size_(patch_size), patches_per_epoch_(patches_per_epoch), seed_(seed), shuffle_(shuffle),
      rng_(derive_rng(seed, ~0ull))
{
    if (patch_size == 0)
        throw DataError("patch size must be positive");
}

Patch PatchSampler::draw(const TileDataset& data, Rng& rng) const
{
    if (data.empty())
        throw DataError("cannot sample patches from an empty dataset");
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);
    const auto& tile = data.tiles[k];
    if (tile.image.height < patch_size_ || tile.image.width < patch_size_)
        throw DataError("tile " + tile.image_path.string() + " (" + std::to_string(tile.image.width) + "x" +
                        std::to_string(tile.image.height) + ") is smaller than the " + std::to_string(patch_size_) +
                        "px patch; pad tiles to at least the patch size before training");
    if (tile.label.labels.empty())
        throw DataError("tile " + tile.image_path.string() + " has no label mask");
    Patch p;
    p.tile = k;
    p.y = std::uniform_int_distribution<std::size_t>(0, tile.image.height - patch_size_)(rng);
    p.x = std::uniform_int_distribution<std::size_t>(0, tile.image.width - patch_size_)(rng);
    p.image = Image{patch_size_, patch_size_, std::vector<std::uint8_t>(patch_size_ * patch_size_ * 3)};
    p.label = LabelMap{patch_size_, patch_size_, std::vector<std::uint8_t>(patch_size_ * patch_size_)};
    for (std::size_t r = 0; r < patch_size_; ++r) {
        const auto* src = tile.image.rgb.data() + ((p.y + r) * tile.image.width + p.x) * 3;
        std::copy_n(src, patch_size_ * 3, p.image.rgb.data() + r * patch_size_ * 3);
        const auto* lsrc = tile.label.labels.data() + (p.y + r) * tile.label.width + p.x;
        std::copy_n(lsrc, patch_size_, p.label.labels.data() + r * patch_size_);
    }
    return p;
}

Patch PatchSampler::sample(const TileDataset& data)
{
    return draw(data, rng_);
}

Patch PatchSampler::sample_at(const TileDataset& data, std::size_t epoch, std::size_t index) const
{
    auto rng = derive_rng(seed_, epoch, index);
    return draw(data, rng);
}

std::vector<std::size_t> PatchSampler::epoch_order(std::size_t epoch) const
{
    std::vector<std::size_t> order(patches_per_epoch_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle_) {
        auto rng = derive_rng(seed_, epoch, ~0ull);
        std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
}

void flip_horizontal(Image& img)
{
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width / 2; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
}

void flip_vertical(Image& img)
{
    const std::size_t row = img.width * 3;
    for (std::size_t y = 0; y < img.height / 2; ++y)
        std::swap_ranges(img.rgb.begin() + static_cast<std::ptrdiff_t>(y * row),
                         img.rgb.begin() + static_cast<std::ptrdiff_t>((y + 1) * row),
                         img.rgb.begin() + static_cast<std::ptrdiff_t>((img.height - 1 - y) * row));
}

void flip_horizontal(LabelMap& m)
{
    for (std::size_t y = 0; y < m.height; ++y)
        std::reverse(m.labels.begin() + static_cast<std::ptrdiff_t>(y * m.width),
                     m.labels.begin() + static_cast<std::ptrdiff_t>((y + 1) * m.width));
}

void flip_vertical(LabelMap& m)
{
    for (std::size_t y = 0; y < m.height / 2; ++y)
        std::swap_ranges(m.labels.begin() + static_cast<std::ptrdiff_t>(y * m.width),
                         m.labels.begin() + static_cast<std::ptrdiff_t>((y + 1) * m.width),
                         m.labels.begin() + static_cast<std::ptrdiff_t>((m.height - 1 - y) * m.width));
}

void augment(Image& image, LabelMap& label, Rng& rng)
{
    std::bernoulli_distribution coin(0.5);
    if (coin(rng)) {
        flip_horizontal(image);
        flip_horizontal(label);
    }
    if (coin(rng)) {
        flip_vertical(image);
        flip_vertical(label);
    }
}

template <typename T>
Tensor<T> to_tensor(const std::vector<const Image*>& images)
{
    if (images.empty())
        throw DataError("to_tensor: no images");
    const std::size_t h = images[0]->height, w = images[0]->width, plane = h * w;
    Tensor<T> out(Shape{images.size(), 3, h, w});
    auto v = out.values();
    for (std::size_t n = 0; n < images.size(); ++n) {
        const auto& img = *images[n];
        if (img.height != h || img.width != w)
            throw DimensionError("to_tensor: images in a batch must share a size");
        for (std::size_t p = 0; p < plane; ++p)
            for (std::size_t c = 0; c < 3; ++c)
                v[(n * 3 + c) * plane + p] = static_cast<T>(img.rgb[p * 3 + c]) / T(255);
    }
    return out;
}

template Tensor<float> to_tensor(const std::vector<const Image*>&);
template Tensor<double> to_tensor(const std::vector<const Image*>&);

namespace {

struct Style {
    double base[3];
    double stripe[3];
    double period;
    double angle;
};

// Background plus up to five foreground classes with well-separated colors;
// each also carries a distinct stripe texture.
const Style kStyles[] = {
    {{95, 110, 85}, {20, 20, 20}, 7, 0.3},
    {{200, 70, 60}, {30, 10, 10}, 5, 1.2},
    {{60, 90, 210}, {10, 15, 35}, 9, 2.0},
    {{225, 205, 70}, {25, 25, 10}, 6, 0.8},
    {{150, 60, 190}, {25, 10, 30}, 8, 2.6},
    {{70, 200, 200}, {10, 30, 30}, 4, 1.6},
};

} // namespace

std::pair<Image, LabelMap> synth_tile(std::size_t height, std::size_t width, std::size_t classes, Rng& rng)
{
    if (classes < 2 || classes > 6)
        throw DataError("synthetic generator supports 2 to 6 classes");
    LabelMap label{height, width, std::vector<std::uint8_t>(height * width, 0)};
    std::uniform_real_distribution<double> unit(0, 1);
    const double scale = static_cast<double>(std::min(height, width));
    const std::size_t shapes = 2 + static_cast<std::size_t>(unit(rng) * 3);
    for (std::size_t s = 0; s < shapes; ++s) {
        const auto cls = static_cast<std::uint8_t>(1 + s % (classes - 1));
        const double cy = unit(rng) * height, cx = unit(rng) * width;
        const double ry = scale * (0.12 + 0.16 * unit(rng)), rx = scale * (0.12 + 0.16 * unit(rng));
        const bool ellipse = unit(rng) < 0.5;
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
                const bool inside = ellipse ? dy * dy + dx * dx <= 1 : std::abs(dy) <= 1 && std::abs(dx) <= 1;
                if (inside)
                    label.at(y, x) = cls;
            }
    }

    Image image{height, width, std::vector<std::uint8_t>(height * width * 3)};
    std::normal_distribution<double> noise(0, 12);
    const double shift = unit(rng) * 6.28;
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const auto& st = kStyles[label.at(y, x)];
            const double u = std::cos(st.angle) * x + std::sin(st.angle) * y;
            const double wave = std::sin(6.283185307 * u / st.period + shift);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = st.base[c] + st.stripe[c] * wave + noise(rng);
                image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    return {std::move(image), std::move(label)};
}

void generate_synthetic(const fs::path& out, const SynthConfig& config)
{
    fs::create_directories(out / "images");
    fs::create_directories(out / "labels");
    Palette palette = Palette::for_classes(config.classes);
    palette.save(out / "palette.txt");
    for (std::size_t i = 0; i < config.tiles; ++i) {
        auto rng = derive_rng(config.seed, i);
        auto [image, label] = synth_tile(config.size, config.size, config.classes, rng);
        char name[32];
        std::snprintf(name, sizeof name, "tile_%04zu.png", i);
        write_png_rgb(out / "images" / name, image);
        write_png_indexed(out / "labels" / name, label, palette);
    }
}

} // namespace scg
