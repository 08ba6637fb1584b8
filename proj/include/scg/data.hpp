#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scg/image.hpp"
#include "scg/nn.hpp"

namespace scg {

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct Tile {
    std::string name;
    std::filesystem::path image_path;
    std::filesystem::path label_path; // empty when the split has no labels
    Image image;
    LabelMap label; // empty when unlabeled
};

struct TileDataset {
    std::filesystem::path root;
    Split split = Split::train;
    Palette palette;
    std::vector<Tile> tiles;

    std::size_t size() const { return tiles.size(); }
    bool empty() const { return tiles.empty(); }
};

/// Reads `<root>/<split>/{images,labels}` when that directory exists, else
/// `<root>/{images,labels}`. Tiles pair by basename. The palette comes from
/// `<root>/palette.txt` if present, else Palette::for_classes(classes).
/// Labels are required for train and val. DataError names the offending
/// file for a missing pair, a size mismatch, or an out-of-range label. An
/// empty directory yields an empty dataset and a warning on `warnings`.
TileDataset load_dataset(const std::filesystem::path& root, Split split, std::size_t classes,
                         std::optional<std::uint8_t> ignore_index, std::ostream* warnings = nullptr);

struct Patch {
    Image image;
    LabelMap label;
    std::size_t tile = 0;
    std::size_t y = 0;
    std::size_t x = 0;
};

/// Uniform tile, then uniform in-bounds offset.
class PatchSampler {
public:
    PatchSampler(std::size_t patch_size, std::size_t patches_per_epoch, std::uint64_t seed, bool shuffle = true);

    /// Draws one patch from the sampler's own stream.
    Patch sample(const TileDataset& data);
    /// Draws patch `index` of `epoch` from a stream derived from (seed, epoch,
    /// index) alone, so workers can fill a batch in any order.
    Patch sample_at(const TileDataset& data, std::size_t epoch, std::size_t index) const;
    /// Visiting order of one epoch's patch indices (a permutation when
    /// shuffling, identity otherwise).
    std::vector<std::size_t> epoch_order(std::size_t epoch) const;

    std::size_t patch_size() const { return patch_size_; }
    std::size_t patches_per_epoch() const { return patches_per_epoch_; }

private:
    Patch draw(const TileDataset& data, Rng& rng) const;

    std::size_t patch_size_;
    std::size_t patches_per_epoch_;
    std::uint64_t seed_;
    bool shuffle_;
    Rng rng_;
};

/// Deterministic stream for (seed, a, b).
Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

void flip_horizontal(Image& image);
void flip_vertical(Image& image);
void flip_horizontal(LabelMap& label);
void flip_vertical(LabelMap& label);

/// Mirrors (left-right) and flips (up-down) image and label together, each
/// independently with probability 0.5.
void augment(Image& image, LabelMap& label, Rng& rng);

/// Stacks RGB images into [N, 3, H, W] scaled to [0, 1].
template <typename T>
Tensor<T> to_tensor(const std::vector<const Image*>& images);

struct SynthConfig {
    std::size_t tiles = 10;
    std::size_t size = 512;
    std::size_t classes = 3;
    std::uint64_t seed = 0;
};

/// One tile of random shapes on a textured background. Class 0 is the
/// background; each other class has its own hue and texture.
std::pair<Image, LabelMap> synth_tile(std::size_t height, std::size_t width, std::size_t classes, Rng& rng);

/// Writes `<out>/images/tile_XXXX.png`, `<out>/labels/tile_XXXX.png` and
/// `<out>/palette.txt`.
void generate_synthetic(const std::filesystem::path& out, const SynthConfig& config);

} // namespace scg
