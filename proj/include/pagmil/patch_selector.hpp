#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pagmil/numerics.hpp"
#include "pagmil/synth_data.hpp"

namespace pagmil {

enum class Neighborhood { Four, Eight };

struct SelectorConfig {
    int B = 8;               // positives and negatives per bag
    double k_percent = 10.0; // candidate fraction of the bag
    Neighborhood neighborhood = Neighborhood::Eight;
    int kmeans_restarts = 20;
    int kmeans_max_iters = 100;
    uint64_t seed = 0;
};

struct SelectionResult {
    std::vector<int> negatives;  // B lowest-scoring patches
    std::vector<int> candidates; // top-ceil(n*k/100) patches
    std::vector<int> survivors;  // candidates with a candidate neighbor
    std::vector<int> positives;  // B diversified representatives
    bool fallback_used = false;
};

/// B lowest raw scores, ties broken by lower index. Requires bag >= 2B.
std::vector<int> select_negatives(std::span<const double> raw_scores, int b);

/// Top ceil(n*k/100) raw scores, ties broken by lower index, returned in
/// ascending index order.
std::vector<int> candidate_positives(std::span<const double> raw_scores, double k_percent);

/// Keeps exactly the candidates that have at least one other candidate in
/// their grid neighborhood; isolated candidates are dropped.
std::vector<int> adjacency_filter(const std::vector<int>& candidates,
                                  std::span<const Point2> coords, Neighborhood nb);

/// K-means (B clusters) on survivor coordinates; per cluster, the member
/// nearest the centroid (ties: higher score, then lower index). Falls back to
/// score order when fewer than B survivors exist.
std::vector<int> diversify(const std::vector<int>& survivors, const std::vector<int>& candidates,
                           std::span<const double> raw_scores, std::span<const Point2> coords,
                           const SelectorConfig& cfg, bool& fallback_used);

/// Full pipeline; guarantees |positives| = |negatives| = B and disjointness.
SelectionResult select(const Bag& bag, std::span<const double> raw_scores,
                       const SelectorConfig& cfg);

/// Text table (index, row, col, raw score, role) for external inspection.
std::string selection_table(const Bag& bag, std::span<const double> raw_scores,
                            const SelectionResult& sel);

} // namespace pagmil
