#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pagmil/numerics.hpp"
#include "pagmil/patch_selector.hpp"
#include "pagmil/prompt_guide.hpp"

namespace pagmil {

struct CheckResult {
    std::string name;
    bool pass = false;
    double max_err = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

/// The full self-verification suite: gradient checks for every loss and
/// network, plus the AUC, k-means, and adjacency oracles.
std::vector<CheckResult> run_verification(uint64_t seed);

std::string check_table(const std::vector<CheckResult>& results);
bool all_pass(const std::vector<CheckResult>& results);

// ---- independent oracles (deliberately naive implementations) ----

/// AUC as concordant pairs + half ties over pos x neg pairs.
double auc_pair_counting(std::span<const double> scores, std::span<const int> labels);

/// Optimal 2-cluster inertia by exhausting every bipartition (n <= 20).
double best_two_partition_inertia(std::span<const Point2> points);

/// Non-isolated candidates by a direct O(n^2) neighborhood scan.
std::vector<int> adjacency_scan_oracle(const std::vector<int>& candidates,
                                       std::span<const Point2> coords, Neighborhood nb);

// ---- individual gradient checks (each runs `points` random evaluations and
//      returns the worst relative error) ----

double check_intra_grad(uint64_t seed, int points);
double check_inter_grad(uint64_t seed, int points, InterVariant variant);
double check_smooth_svm_grad(uint64_t seed, int points);
double check_slide_loss_grad(uint64_t seed, int points);
double check_attention_grad(uint64_t seed, int points);
double check_prompt_generator_grad(uint64_t seed, int points);

} // namespace pagmil
