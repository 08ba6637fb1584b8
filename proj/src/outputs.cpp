#include "scg/outputs.hpp"

#include <cmath>
#include <fstream>

#include "scg/error.hpp"

namespace scg {

namespace fs = std::filesystem;

void write_metrics_csv(const fs::path& path, const Metrics& metrics, const Palette& palette)
{
    std::vector<std::string> names;
    for (std::size_t k = 0; k < metrics.f1.size(); ++k)
        names.push_back(k < palette.names.size() ? palette.names[k] : "class" + std::to_string(k));
    std::ofstream f(path);
    if (!f)
        throw IoError("cannot write " + path.string());
    write_metrics_csv(f, metrics, names);
    if (!f)
        throw IoError("failed writing " + path.string());
}

std::vector<fs::path> write_outputs(const Prediction& prediction, const Palette& palette, const fs::path& out_dir,
                                    const std::string& tile_name, const OutputOptions& options)
{
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir))
        throw IoError("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));

    std::vector<fs::path> written;
    written.push_back(out_dir / (tile_name + "_pred.png"));
    write_png_indexed(written.back(), prediction.labels, palette);

    if (options.probability_rasters) {
        const std::size_t plane = prediction.height * prediction.width;
        std::vector<std::uint8_t> pixels(plane);
        for (std::size_t k = 0; k < prediction.classes; ++k) {
            for (std::size_t p = 0; p < plane; ++p)
                pixels[p] = static_cast<std::uint8_t>(std::lround(255.0 * prediction.probs[k * plane + p]));
            written.push_back(out_dir / (tile_name + "_prob_" + std::to_string(k) + ".png"));
            write_png_gray(written.back(), prediction.height, prediction.width, pixels);
        }
    }
    if (options.metrics) {
        written.push_back(out_dir / (tile_name + "_metrics.csv"));
        write_metrics_csv(written.back(), *options.metrics, palette);
    }
    return written;
}

} // namespace scg
