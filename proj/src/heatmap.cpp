#include "pagmil/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pagmil/errors.hpp"

namespace pagmil {

Image8 score_heatmap(const Bag& bag, std::span<const double> raw_scores) {
    if (int(raw_scores.size()) != bag.size())
        throw std::invalid_argument("score_heatmap: score/bag size mismatch");
    if (bag.size() == 0) throw std::invalid_argument("score_heatmap: empty bag");

    int side = 0;
    for (const Point2& p : bag.coords) side = std::max({side, p.row + 1, p.col + 1});

    double lo = raw_scores[0], hi = raw_scores[0];
    for (double s : raw_scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    double span = hi - lo;

    Image8 img;
    img.width = side;
    img.height = side;
    img.px.assign(size_t(side) * side, Rgb8{255, 255, 255}); // white = no patch
    for (int i = 0; i < bag.size(); ++i) {
        double v = span > 0.0 ? (raw_scores[i] - lo) / span : 0.5;
        auto& px = img.at(bag.coords[i].row, bag.coords[i].col);
        px.r = uint8_t(std::llround(255.0 * v));
        px.g = 0;
        px.b = uint8_t(std::llround(255.0 * (1.0 - v)));
    }
    return img;
}

void write_ppm(const Image8& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    for (const Rgb8& p : img.px) {
        char buf[3] = {char(p.r), char(p.g), char(p.b)};
        os.write(buf, 3);
    }
    if (!os) throw std::runtime_error("ppm write failed: " + path);
}

Image8 read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open ppm: " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
        throw ConfigError("read_ppm: unsupported ppm header in " + path);
    is.get(); // single whitespace after header
    Image8 img;
    img.width = w;
    img.height = h;
    img.px.resize(size_t(w) * h);
    is.read(reinterpret_cast<char*>(img.px.data()), std::streamsize(img.px.size() * 3));
    if (!is) throw ConfigError("read_ppm: truncated pixel data in " + path);
    return img;
}

} // namespace pagmil
