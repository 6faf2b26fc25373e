#include "pagmil/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pagmil/errors.hpp"
#include "pagmil/rng.hpp"

namespace pagmil {

namespace {

constexpr int kPlacementAttempts = 400;

struct GridMap {
    int g;
    std::vector<int> blob_id;   // -1 = none
    std::vector<PatchTag> tag;

    explicit GridMap(int g_) : g(g_), blob_id(size_t(g_) * g_, -1), tag(size_t(g_) * g_, PatchTag::Normal) {}
    int idx(int r, int c) const { return r * g + c; }
    bool inside(int r, int c) const { return r >= 0 && r < g && c >= 0 && c < g; }
};

/// True when (r,c) may join blob `id`: free cell with no 8-neighbor in a
/// different blob (keeps distinct blobs from merging into one component).
bool blob_cell_allowed(const GridMap& m, int r, int c, int id) {
    if (!m.inside(r, c) || m.tag[m.idx(r, c)] != PatchTag::Normal) return false;
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
            int rr = r + dr, cc = c + dc;
            if (!m.inside(rr, cc)) continue;
            int b = m.blob_id[m.idx(rr, cc)];
            if (b != -1 && b != id) return false;
        }
    return true;
}

bool grow_blob(GridMap& m, int id, int target_size, Rng& rng) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        int r0 = rng.uniform_int(0, m.g - 1);
        int c0 = rng.uniform_int(0, m.g - 1);
        if (!blob_cell_allowed(m, r0, c0, id)) continue;

        std::vector<Point2> cells{{r0, c0}};
        while (int(cells.size()) < target_size) {
            // Frontier: cells 8-adjacent to the blob so far, deduplicated in
            // scan order for determinism.
            std::vector<Point2> frontier;
            for (const Point2& p : cells)
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        int rr = p.row + dr, cc = p.col + dc;
                        if (!blob_cell_allowed(m, rr, cc, id)) continue;
                        Point2 q{rr, cc};
                        if (std::find(cells.begin(), cells.end(), q) != cells.end()) continue;
                        if (std::find(frontier.begin(), frontier.end(), q) != frontier.end()) continue;
                        frontier.push_back(q);
                    }
            if (frontier.empty()) break;
            cells.push_back(frontier[rng.next_below(frontier.size())]);
        }
        if (int(cells.size()) < target_size) continue; // stuck, retry elsewhere

        for (const Point2& p : cells) {
            m.tag[m.idx(p.row, p.col)] = PatchTag::Tumor;
            m.blob_id[m.idx(p.row, p.col)] = id;
        }
        return true;
    }
    return false;
}

bool place_noise(GridMap& m, Rng& rng) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        int r = rng.uniform_int(0, m.g - 1);
        int c = rng.uniform_int(0, m.g - 1);
        if (m.tag[m.idx(r, c)] != PatchTag::Normal) continue;
        bool isolated = true;
        for (int dr = -1; dr <= 1 && isolated; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                int rr = r + dr, cc = c + dc;
                if (!m.inside(rr, cc)) continue;
                if (m.tag[m.idx(rr, cc)] != PatchTag::Normal) {
                    isolated = false;
                    break;
                }
            }
        if (!isolated) continue;
        m.tag[m.idx(r, c)] = PatchTag::Noise;
        return true;
    }
    return false;
}

double squash(double x) { return 1.0 / (1.0 + std::exp(-0.5 * x)); }

void validate_spec(const SlideSpec& spec) {
    if (spec.grid_size < 8)
        throw ConfigError("SlideSpec: grid_size must be >= 8, got " + std::to_string(spec.grid_size));
    if (spec.feature_dim < 1) throw ConfigError("SlideSpec: feature_dim must be >= 1");
    if (spec.n_tumor_blobs < 0 || spec.n_tumor_blobs > 3)
        throw ConfigError("SlideSpec: n_tumor_blobs must be in 0..3");
    if (spec.blob_size_range[0] < 2 || spec.blob_size_range[1] < spec.blob_size_range[0])
        throw ConfigError("SlideSpec: blob_size_range must satisfy 2 <= min <= max");
    if (spec.n_isolated_noise < 0) throw ConfigError("SlideSpec: n_isolated_noise must be >= 0");
    if (spec.label < 0) throw ConfigError("SlideSpec: label must be >= 0");
    if (spec.thumb_side < 1) throw ConfigError("SlideSpec: thumb_side must be >= 1");
    if (!spec.tumor_shift.empty() && int(spec.tumor_shift.size()) != spec.feature_dim)
        throw ConfigError("SlideSpec: tumor_shift dimension does not match feature_dim");
}

} // namespace

Bag generate_bag(const SlideSpec& spec, const TaskStyle& style) {
    validate_spec(spec);
    if (!style.feature_offset.empty() && int(style.feature_offset.size()) != spec.feature_dim)
        throw ConfigError("TaskStyle: feature_offset dimension does not match feature_dim");
    if (style.noise_scale < 0) throw ConfigError("TaskStyle: noise_scale must be >= 0");
    for (double t : style.tint)
        if (t < 0.0 || t > 1.0) throw ConfigError("TaskStyle: tint channels must be in [0,1]");

    Rng rng(spec.seed);
    const int g = spec.grid_size;
    GridMap map(g);

    for (int b = 0; b < spec.n_tumor_blobs; ++b) {
        int size = rng.uniform_int(spec.blob_size_range[0], spec.blob_size_range[1]);
        if (!grow_blob(map, b, size, rng))
            throw ConfigError("generate_bag: could not place tumor blob " + std::to_string(b) +
                              " of size " + std::to_string(size) + " on a " + std::to_string(g) +
                              "x" + std::to_string(g) + " grid");
    }
    for (int k = 0; k < spec.n_isolated_noise; ++k) {
        if (!place_noise(map, rng))
            throw ConfigError("generate_bag: could not place isolated noise patch " +
                              std::to_string(k));
    }

    Bag bag;
    bag.label = spec.label;
    bag.task_id = spec.task_id;
    const int n = g * g;
    const int d = spec.feature_dim;
    bag.coords.reserve(n);
    bag.features = Mat(n, d);
    bag.mask.resize(n);

    double blob_scale = double(std::max(1, spec.label));
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            int i = map.idx(r, c);
            bag.coords.push_back({r, c});
            bag.mask[i] = map.tag[i];
            auto row = bag.features.row(i);
            for (int k = 0; k < d; ++k) row[k] = rng.normal(0.0, style.noise_scale);
            if (!spec.tumor_shift.empty()) {
                if (map.tag[i] == PatchTag::Tumor) axpy(blob_scale, spec.tumor_shift, row);
                else if (map.tag[i] == PatchTag::Noise) axpy(1.0, spec.tumor_shift, row);
            }
            if (!style.feature_offset.empty()) axpy(1.0, style.feature_offset, row);
        }
    }

    bag.thumbnail = render_thumbnail(bag, spec.thumb_side, style.tint);
    return bag;
}

Raster render_thumbnail(const Bag& bag, int side, const std::array<double, 3>& tint) {
    if (bag.size() == 0) throw std::invalid_argument("render_thumbnail: empty bag");
    const int n = bag.size();
    const int m = int(std::ceil(std::sqrt(double(n))));

    // Per-patch colors in index order; spare mosaic cells get the mean color.
    std::vector<std::array<double, 3>> colors(static_cast<size_t>(n));
    std::array<double, 3> mean{0, 0, 0};
    const int d = bag.features.cols;
    for (int i = 0; i < n; ++i) {
        auto f = bag.features.row(i);
        for (int ch = 0; ch < 3; ++ch) {
            colors[i][ch] = ch < d ? squash(f[ch]) : 0.5;
            mean[ch] += colors[i][ch];
        }
    }
    for (int ch = 0; ch < 3; ++ch) mean[ch] /= n;

    auto mosaic_color = [&](int cell) -> const std::array<double, 3>& {
        return cell < n ? colors[cell] : mean;
    };

    Raster out;
    out.side = side;
    out.rgb.assign(size_t(side) * side * 3, 0.0);
    const double scale = double(m) / side;
    for (int i = 0; i < side; ++i) {
        double y0 = i * scale, y1 = (i + 1) * scale;
        for (int j = 0; j < side; ++j) {
            double x0 = j * scale, x1 = (j + 1) * scale;
            std::array<double, 3> acc{0, 0, 0};
            double area = 0.0;
            for (int r = int(y0); r < m && r < y1; ++r) {
                double wy = std::min(y1, double(r + 1)) - std::max(y0, double(r));
                if (wy <= 0) continue;
                for (int c = int(x0); c < m && c < x1; ++c) {
                    double wx = std::min(x1, double(c + 1)) - std::max(x0, double(c));
                    if (wx <= 0) continue;
                    const auto& col = mosaic_color(r * m + c);
                    double w = wy * wx;
                    for (int ch = 0; ch < 3; ++ch) acc[ch] += w * col[ch];
                    area += w;
                }
            }
            for (int ch = 0; ch < 3; ++ch) {
                double v = area > 0 ? acc[ch] / area : mean[ch];
                out.at(i, j, ch) = 0.5 * (v + tint[ch]);
            }
        }
    }
    return out;
}

std::vector<uint64_t> dataset_bag_seeds(int count, uint64_t base_seed, bool train_split) {
    std::vector<uint64_t> seeds(count);
    for (int i = 0; i < count; ++i)
        seeds[i] = seed_mix(base_seed, train_split ? "bag-train" : "bag-test", uint64_t(i));
    return seeds;
}

namespace {

/// Largest-remainder apportionment of n bags over class probabilities.
std::vector<int> stratified_counts(int n, const std::vector<double>& balance) {
    int c = int(balance.size());
    std::vector<int> counts(c);
    std::vector<std::pair<double, int>> rema(c);
    int assigned = 0;
    for (int k = 0; k < c; ++k) {
        double exact = n * balance[k];
        counts[k] = int(exact);
        assigned += counts[k];
        rema[k] = {exact - counts[k], k};
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int r = 0; r < n - assigned; ++r) counts[rema[r % c].second]++;
    return counts;
}

std::vector<Bag> generate_split(const TaskDataSpec& spec, int n, uint64_t base_seed,
                                bool train_split) {
    std::vector<double> balance = spec.class_balance;
    if (balance.empty()) balance.assign(spec.classes, 1.0 / spec.classes);
    if (int(balance.size()) != spec.classes)
        throw ConfigError("generate_task_dataset: class_balance size does not match classes");

    std::vector<int> counts = stratified_counts(n, balance);
    std::vector<int> labels;
    for (int k = 0; k < spec.classes; ++k) labels.insert(labels.end(), counts[k], k);
    // Deterministic shuffle so classes interleave in the training stream.
    Rng order_rng(seed_mix(base_seed, train_split ? "order-train" : "order-test"));
    for (int i = int(labels.size()) - 1; i > 0; --i)
        std::swap(labels[i], labels[size_t(order_rng.next_below(uint64_t(i) + 1))]);

    std::vector<uint64_t> seeds = dataset_bag_seeds(n, base_seed, train_split);
    std::vector<Bag> bags;
    bags.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng spec_rng(seed_mix(seeds[i], "layout"));
        SlideSpec s;
        s.grid_size = spec.grid;
        s.feature_dim = spec.feature_dim;
        s.thumb_side = spec.thumb_side;
        s.label = labels[i];
        s.task_id = spec.task_id;
        s.tumor_shift = spec.tumor_shift;
        s.blob_size_range = spec.blob_size_range;
        s.n_tumor_blobs =
            labels[i] == 0 ? 0 : spec_rng.uniform_int(spec.blob_count_range[0], spec.blob_count_range[1]);
        s.n_isolated_noise = spec_rng.uniform_int(spec.noise_count_range[0], spec.noise_count_range[1]);
        s.seed = seeds[i];
        bags.push_back(generate_bag(s, spec.style));
    }
    return bags;
}

} // namespace

TaskDataset generate_task_dataset(const TaskDataSpec& spec, int n_train, int n_test,
                                  uint64_t base_seed) {
    if (n_train <= 0 || n_test <= 0)
        throw ConfigError("generate_task_dataset: counts must be positive");
    if (spec.classes < 2) throw ConfigError("generate_task_dataset: classes must be >= 2");
    if (spec.blob_count_range[0] < 1 || spec.blob_count_range[1] > 3 ||
        spec.blob_count_range[1] < spec.blob_count_range[0])
        throw ConfigError("generate_task_dataset: blob_count_range must be within 1..3");

    TaskDataset ds;
    ds.train = generate_split(spec, n_train, base_seed, true);
    ds.test = generate_split(spec, n_test, base_seed, false);
    return ds;
}

} // namespace pagmil
