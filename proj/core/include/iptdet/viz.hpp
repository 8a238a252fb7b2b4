#pragma once

// Raster figures: confusion-matrix heatmap and prediction piano-roll,
// written as RGB PNG files.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "iptdet/dataset.hpp"
#include "iptdet/evaluation.hpp"
#include "iptdet/model.hpp"

namespace iptdet {

/// 8-bit RGB raster, row-major, three bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> px;

    Image() = default;
    Image(int w, int h, std::uint8_t r = 255, std::uint8_t g = 255, std::uint8_t b = 255);

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    /// Axis-aligned filled rectangle, clipped to the image.
    void fill_rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    /// Renders `text` with a built-in 5x7 pixel font at integer `scale`.
    /// Characters outside the font are drawn as a hollow box.
    void draw_text(int x, int y, std::string_view text, int scale,
                   std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// Pixel width of `text` under draw_text at the given scale.
int text_width(std::string_view text, int scale);

/// Writes the image as a PNG file. Throws IoError on failure.
void write_png(const std::filesystem::path& path, const Image& img);

/// Row-normalized confusion-matrix heatmap with class labels on both axes
/// and the raw count printed in each cell.
Image render_confusion(const MlcmMatrix& m);

/// Piano-roll of per-frame likelihoods, one band per class (class 0 on top).
/// Likelihood maps to color saturation; cells at or above `threshold` are
/// drawn in the active color. When `truth` is given, reference activity is
/// underlaid as a light band so misses and false alarms stand out.
Image render_piano_roll(const Prediction& pred,
                        const FrameLabelMatrix* truth = nullptr,
                        double threshold = 0.5);

} // namespace iptdet
