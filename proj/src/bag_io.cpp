#include "pagmil/bag_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pagmil/errors.hpp"

namespace pagmil {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void bad_line(int line_no, const std::string& what) {
    throw ConfigError("bag parse error at line " + std::to_string(line_no) + ": " + what);
}

} // namespace

void serialize_bag(const Bag& bag, std::ostream& os) {
    const int n = bag.size();
    os << "PAGMIL-BAG 1\n";
    os << "task " << bag.task_id << "\n";
    os << "label " << bag.label << "\n";
    os << "dim " << bag.features.cols << "\n";
    os << "patches " << n << "\n";
    os << "thumb " << bag.thumbnail.side << "\n";
    for (int i = 0; i < n; ++i) {
        os << "P " << bag.coords[i].row << " " << bag.coords[i].col;
        for (double f : bag.features.row(i)) os << " " << fmt_double(f);
        os << "\n";
    }
    const int s = bag.thumbnail.side;
    for (int r = 0; r < s; ++r) {
        os << "T";
        for (int c = 0; c < s; ++c)
            for (int ch = 0; ch < 3; ++ch) os << " " << fmt_double(bag.thumbnail.at(r, c, ch));
        os << "\n";
    }
    os << "M";
    for (PatchTag t : bag.mask) os << " " << int(t);
    os << "\n";
}

Bag parse_bag(std::istream& is) {
    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(is, line)) {
            ++line_no;
            if (!line.empty()) return true;
        }
        return false;
    };

    if (!next_line() || line != "PAGMIL-BAG 1")
        bad_line(line_no ? line_no : 1, "expected header 'PAGMIL-BAG 1'");

    Bag bag;
    int dim = -1, patches = -1, thumb = -1;
    for (int h = 0; h < 5; ++h) {
        if (!next_line()) bad_line(line_no, "truncated header");
        std::istringstream ss(line);
        std::string key;
        long long value;
        if (!(ss >> key >> value)) bad_line(line_no, "malformed header entry '" + line + "'");
        if (key == "task") bag.task_id = int(value);
        else if (key == "label") bag.label = int(value);
        else if (key == "dim") dim = int(value);
        else if (key == "patches") patches = int(value);
        else if (key == "thumb") thumb = int(value);
        else bad_line(line_no, "unknown header key '" + key + "'");
    }
    if (dim < 1 || patches < 1 || thumb < 1) bad_line(line_no, "incomplete header");

    bag.features = Mat(patches, dim);
    bag.coords.reserve(patches);
    for (int i = 0; i < patches; ++i) {
        if (!next_line()) bad_line(line_no, "expected patch line");
        std::istringstream ss(line);
        std::string tag;
        Point2 p;
        if (!(ss >> tag >> p.row >> p.col) || tag != "P")
            bad_line(line_no, "expected 'P <row> <col> <features...>'");
        if (p.row < 0 || p.col < 0) bad_line(line_no, "negative patch coordinate");
        bag.coords.push_back(p);
        auto row = bag.features.row(i);
        for (int k = 0; k < dim; ++k)
            if (!(ss >> row[k])) bad_line(line_no, "patch line has fewer than dim features");
        double extra;
        if (ss >> extra) bad_line(line_no, "patch line has more than dim features");
    }

    bag.thumbnail.side = thumb;
    bag.thumbnail.rgb.assign(size_t(thumb) * thumb * 3, 0.0);
    for (int r = 0; r < thumb; ++r) {
        if (!next_line()) bad_line(line_no, "expected thumbnail line");
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag != "T") bad_line(line_no, "expected thumbnail line 'T ...'");
        for (int c = 0; c < thumb; ++c)
            for (int ch = 0; ch < 3; ++ch)
                if (!(ss >> bag.thumbnail.at(r, c, ch)))
                    bad_line(line_no, "thumbnail row too short");
    }

    if (!next_line()) bad_line(line_no, "expected mask line");
    {
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag != "M") bad_line(line_no, "expected mask line 'M ...'");
        bag.mask.resize(patches);
        for (int i = 0; i < patches; ++i) {
            int t;
            if (!(ss >> t) || t < 0 || t > 2) bad_line(line_no, "mask entry must be 0, 1 or 2");
            bag.mask[i] = PatchTag(t);
        }
    }
    for (double v : bag.thumbnail.rgb)
        if (!std::isfinite(v)) throw ConfigError("bag parse error: non-finite thumbnail value");
    std::vector<Point2> sorted = bag.coords;
    std::sort(sorted.begin(), sorted.end(), [](const Point2& a, const Point2& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("bag parse error: duplicate patch coordinates");
    return bag;
}

void write_bag_file(const Bag& bag, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    serialize_bag(bag, os);
    if (!os) throw std::runtime_error("write failed: " + path);
}

Bag read_bag_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open bag file: " + path);
    return parse_bag(is);
}

} // namespace pagmil
