#include "scg/image.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "scg/error.hpp"

namespace scg {

Palette Palette::isprs()
{
    return Palette{{"impervious_surfaces", "building", "low_vegetation", "tree", "car", "clutter"},
                   {Rgb{255, 255, 255}, Rgb{0, 0, 255}, Rgb{0, 255, 255}, Rgb{0, 255, 0}, Rgb{255, 255, 0},
                    Rgb{255, 0, 0}}};
}

Palette Palette::for_classes(std::size_t classes)
{
    Palette base = isprs();
    if (classes <= base.size()) {
        base.names.resize(classes);
        base.colors.resize(classes);
        return base;
    }
    Palette p;
    for (std::size_t i = 0; i < classes; ++i) {
        p.names.push_back("class_" + std::to_string(i));
        p.colors.push_back(Rgb{static_cast<std::uint8_t>((i * 97) % 256), static_cast<std::uint8_t>((i * 57 + 80) % 256),
                               static_cast<std::uint8_t>((i * 151 + 160) % 256)});
    }
    return p;
}

Palette Palette::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open palette file " + path.string());
    std::map<std::size_t, std::pair<std::string, Rgb>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::istringstream ls(line);
        std::size_t idx;
        std::string name;
        int r, g, b;
        if (!(ls >> idx))
            continue;
        if (!(ls >> name >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected '<index> <name> <r> <g> <b>'");
        entries[idx] = {name, Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                  static_cast<std::uint8_t>(b)}};
    }
    Palette p;
    std::size_t expect = 0;
    for (auto& [idx, e] : entries) {
        if (idx != expect++)
            throw DataError(path.string() + ": class indices must be contiguous from 0");
        p.names.push_back(e.first);
        p.colors.push_back(e.second);
    }
    return p;
}

void Palette::save(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write palette file " + path.string());
    out << "# index name r g b\n";
    for (std::size_t i = 0; i < size(); ++i)
        out << i << ' ' << names[i] << ' ' << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' '
            << int(colors[i][2]) << '\n';
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg)
{
    (void)png;
    throw IoError(std::string("libpng: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

struct DecodedPng {
    std::size_t height = 0, width = 0, channels = 0;
    int color_type = 0;
    std::vector<std::uint8_t> pixels;
};

// Reads an 8-bit PNG. `keep_indices` leaves palette images as raw indices.
DecodedPng decode(const std::filesystem::path& path, bool keep_indices)
{
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp)
        throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    DecodedPng out;
    try {
        png_init_io(png, fp.get());
        png_read_info(png, info);
        const int bit_depth = png_get_bit_depth(png, info);
        out.color_type = png_get_color_type(png, info);
        if (bit_depth == 16)
            png_set_strip_16(png);
        if (bit_depth < 8) {
            if (out.color_type == PNG_COLOR_TYPE_PALETTE && keep_indices)
                png_set_packing(png);
            else
                png_set_expand(png);
        }
        if (out.color_type == PNG_COLOR_TYPE_PALETTE && !keep_indices)
            png_set_palette_to_rgb(png);
        if (out.color_type & PNG_COLOR_MASK_ALPHA)
            png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS) && !(out.color_type == PNG_COLOR_TYPE_PALETTE && keep_indices))
            png_set_strip_alpha(png);
        png_read_update_info(png, info);
        out.width = png_get_image_width(png, info);
        out.height = png_get_image_height(png, info);
        out.channels = png_get_channels(png, info);
        const std::size_t stride = png_get_rowbytes(png, info);
        out.pixels.resize(stride * out.height);
        std::vector<png_bytep> rows(out.height);
        for (std::size_t y = 0; y < out.height; ++y)
            rows[y] = out.pixels.data() + y * stride;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void encode(const std::filesystem::path& path, std::size_t height, std::size_t width, int color_type,
            const std::uint8_t* pixels, std::size_t channels, const Palette* palette)
{
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp)
        throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    try {
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        std::vector<png_color> colors;
        if (palette) {
            for (const auto& c : palette->colors)
                colors.push_back(png_color{c[0], c[1], c[2]});
            png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
        }
        png_write_info(png, info);
        for (std::size_t y = 0; y < height; ++y)
            png_write_row(png, const_cast<png_bytep>(pixels + y * width * channels));
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

} // namespace

Image read_png_rgb(const std::filesystem::path& path)
{
    auto d = decode(path, false);
    Image img{d.height, d.width, {}};
    img.rgb.resize(d.height * d.width * 3);
    for (std::size_t i = 0; i < d.height * d.width; ++i)
        for (std::size_t ch = 0; ch < 3; ++ch)
            img.rgb[i * 3 + ch] = d.channels >= 3 ? d.pixels[i * d.channels + ch] : d.pixels[i * d.channels];
    return img;
}

LabelMap read_png_labels(const std::filesystem::path& path)
{
    auto d = decode(path, true);
    if (d.channels != 1)
        throw DataError(path.string() + ": label masks must be single-channel index images (got " +
                        std::to_string(d.channels) + " channels; see convert-labels)");
    return LabelMap{d.height, d.width, std::move(d.pixels)};
}

void write_png_rgb(const std::filesystem::path& path, const Image& image)
{
    encode(path, image.height, image.width, PNG_COLOR_TYPE_RGB, image.rgb.data(), 3, nullptr);
}

void write_png_indexed(const std::filesystem::path& path, const LabelMap& map, const Palette& palette)
{
    for (auto v : map.labels)
        if (v >= palette.size())
            throw DataError("class index " + std::to_string(v) + " has no palette entry (palette has " +
                            std::to_string(palette.size()) + ")");
    encode(path, map.height, map.width, PNG_COLOR_TYPE_PALETTE, map.labels.data(), 1, &palette);
}

void write_png_gray(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    const std::vector<std::uint8_t>& pixels)
{
    encode(path, height, width, PNG_COLOR_TYPE_GRAY, pixels.data(), 1, nullptr);
}

LabelMap rgb_to_labels(const Image& mask, const Palette& palette)
{
    LabelMap out{mask.height, mask.width, std::vector<std::uint8_t>(mask.height * mask.width)};
    for (std::size_t y = 0; y < mask.height; ++y)
        for (std::size_t x = 0; x < mask.width; ++x) {
            const Rgb c{mask.at(y, x, 0), mask.at(y, x, 1), mask.at(y, x, 2)};
            std::size_t k = 0;
            while (k < palette.size() && palette.colors[k] != c)
                ++k;
            if (k == palette.size())
                throw DataError("color (" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                                std::to_string(c[2]) + ") at pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                ") is not in the palette");
            out.at(y, x) = static_cast<std::uint8_t>(k);
        }
    return out;
}

} // namespace scg
