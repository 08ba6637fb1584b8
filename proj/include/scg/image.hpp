#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scg {

/// 8-bit RGB, interleaved, row-major.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t ch) { return rgb[(y * width + x) * 3 + ch]; }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const { return rgb[(y * width + x) * 3 + ch]; }
};

/// Single-channel class-index mask.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;

    std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
};

using Rgb = std::array<std::uint8_t, 3>;

/// Class index <-> (name, display color).
struct Palette {
    std::vector<std::string> names;
    std::vector<Rgb> colors;

    std::size_t size() const { return colors.size(); }

    /// The six ISPRS land-cover classes in their legend colors.
    static Palette isprs();
    /// ISPRS colors for c ≤ 6, otherwise a deterministic generated palette.
    static Palette for_classes(std::size_t classes);

    /// Text format, one class per line: `<index> <name> <r> <g> <b>`; `#` comments.
    static Palette load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

Image read_png_rgb(const std::filesystem::path& path);
/// Grayscale or palette PNG read as raw 8-bit indices. RGB masks are
/// rejected (convert them with `convert-labels`).
LabelMap read_png_labels(const std::filesystem::path& path);

void write_png_rgb(const std::filesystem::path& path, const Image& image);
/// Indexed-color PNG; pixel values are palette indices.
void write_png_indexed(const std::filesystem::path& path, const LabelMap& map, const Palette& palette);
void write_png_gray(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    const std::vector<std::uint8_t>& pixels);

/// Maps an RGB color-legend mask to indices; unknown colors raise DataError.
LabelMap rgb_to_labels(const Image& mask, const Palette& palette);

} // namespace scg
