#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pagmil/numerics.hpp"

namespace pagmil {

/// Per-task appearance shift: the synthetic analog of staining/equipment
/// differences between institutions.
struct TaskStyle {
    int task_id = 0;
    Vec feature_offset;                      // added to every patch feature
    std::array<double, 3> tint{0.5, 0.5, 0.5}; // blended into thumbnail channels
    double noise_scale = 1.0;                // sigma of the patch feature Gaussians
};

/// Recipe for one synthetic slide.
struct SlideSpec {
    int grid_size = 16;   // G patches per side
    int feature_dim = 16;
    int n_tumor_blobs = 0; // 0..3
    std::array<int, 2> blob_size_range{8, 12};
    int n_isolated_noise = 0;
    int label = 0;  // 0 = normal, >=1 tumor grades
    int task_id = 0;
    uint64_t seed = 0;
    int thumb_side = 16;
    /// Class-conditional mean shift: tumor patches of a label-c bag are drawn
    /// from N(c * tumor_shift, sigma^2 I); isolated noise patches mimic grade 1.
    Vec tumor_shift;
};

enum class PatchTag : uint8_t { Normal = 0, Tumor = 1, Noise = 2 };

/// Square RGB raster, row-major, channels interleaved, values in [0,1].
struct Raster {
    int side = 0;
    std::vector<double> rgb; // side*side*3

    double& at(int r, int c, int ch) { return rgb[(size_t(r) * side + c) * 3 + ch]; }
    double at(int r, int c, int ch) const { return rgb[(size_t(r) * side + c) * 3 + ch]; }
    bool operator==(const Raster&) const = default;
};

/// One synthetic slide: patch features on a grid plus a thumbnail.
/// The mask records ground truth for evaluation; training never reads it.
struct Bag {
    std::vector<Point2> coords;
    Mat features; // n x d, row i = patch i
    int label = 0;
    int task_id = 0;
    Raster thumbnail;
    std::vector<PatchTag> mask;

    int size() const { return int(coords.size()); }
    bool operator==(const Bag&) const = default;
};

/// Deterministic bag synthesis. Tumor blobs are 8-connected random-growth
/// regions with a Chebyshev gap >= 2 between distinct blobs; isolated noise
/// patches have no 8-neighbor that is tumor or noise. Throws ConfigError when
/// the requested layout does not fit the grid.
Bag generate_bag(const SlideSpec& spec, const TaskStyle& style);

/// Stitch per-patch colors (first three feature coordinates squashed to [0,1])
/// into a near-square mosaic, blend with the task tint, and resize to
/// side x side by area averaging.
Raster render_thumbnail(const Bag& bag, int side, const std::array<double, 3>& tint);

/// Everything generate_task_dataset needs to know about one task.
struct TaskDataSpec {
    int task_id = 0;
    int classes = 2;
    int grid = 16;
    int feature_dim = 16;
    int thumb_side = 16;
    std::array<int, 2> blob_count_range{2, 3};
    std::array<int, 2> blob_size_range{8, 12};
    std::array<int, 2> noise_count_range{1, 3};
    Vec tumor_shift;
    TaskStyle style;
    std::vector<double> class_balance; // empty = uniform
};

struct TaskDataset {
    std::vector<Bag> train;
    std::vector<Bag> test;
};

/// Stratified train/test bags with disjoint per-bag seed streams.
TaskDataset generate_task_dataset(const TaskDataSpec& spec, int n_train, int n_test,
                                  uint64_t base_seed);

/// Per-bag seeds used by generate_task_dataset (exposed for the
/// train/test-disjointness check and for reproducing single bags).
std::vector<uint64_t> dataset_bag_seeds(int count, uint64_t base_seed, bool train_split);

} // namespace pagmil
