#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pagmil/synth_data.hpp"

namespace pagmil {

struct Rgb8 {
    uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb8&) const = default;
};

struct Image8 {
    int width = 0, height = 0;
    std::vector<Rgb8> px;

    Rgb8& at(int r, int c) { return px[size_t(r) * width + c]; }
    const Rgb8& at(int r, int c) const { return px[size_t(r) * width + c]; }
    bool operator==(const Image8&) const = default;
};

/// Grid raster of min-max normalized raw scores, blue (low) to red (high).
/// Cells without a patch are white. Constant scores map to mid-color.
Image8 score_heatmap(const Bag& bag, std::span<const double> raw_scores);

/// Binary PPM (P6). write(read(x)) is byte-identical.
void write_ppm(const Image8& img, const std::string& path);
Image8 read_ppm(const std::string& path);

} // namespace pagmil
