#pragma once

#include <cstdint>
#include <vector>

#include "pagmil/numerics.hpp"
#include "pagmil/synth_data.hpp"

namespace pagmil {

/// Two-layer perceptron over the flattened thumbnail, tanh hidden layer.
struct PromptGeneratorParams {
    Mat W1; // hidden x (S*S*3)
    Vec b1;
    Mat W2; // p_dim x hidden
    Vec b2;

    int input_dim() const { return W1.cols; }
    int p_dim() const { return W2.rows; }
    bool operator==(const PromptGeneratorParams&) const = default;
};

PromptGeneratorParams init_prompt_generator(int thumb_side, int hidden, int p_dim, uint64_t seed);

/// Forward pass: prompt vector for one thumbnail.
Vec generate_prompt(const Raster& thumbnail, const PromptGeneratorParams& params);

struct PromptGenGrads {
    Mat dW1;
    Vec db1;
    Mat dW2;
    Vec db2;
};

/// Accumulates parameter gradients for one thumbnail given dL/dprompt.
void prompt_backward(const Raster& thumbnail, const PromptGeneratorParams& params,
                     std::span<const double> d_prompt, PromptGenGrads& grads);

/// Finalized per-task mean prompt paired with its head.
struct TaskPromptEntry {
    int task_id = -1;
    Vec mean_prompt;
    int head_id = -1;
    bool operator==(const TaskPromptEntry&) const = default;
};

struct TaskPromptRegistry {
    std::vector<TaskPromptEntry> entries;
    double min_margin = 1.0; // hinge margin of the inter loss
    bool operator==(const TaskPromptRegistry&) const = default;
};

struct PromptLoss {
    double loss = 0.0;
    std::vector<Vec> grads; // one per input prompt
};

/// 1/2 sum_i ||m_i - mean||^2. The epoch mean is treated as a constant.
PromptLoss intra_loss(const std::vector<Vec>& prompts, const Vec& epoch_mean);

enum class InterVariant {
    HingeOnly,   // (1/2NT) sum max(0, margin - d)^2 : pure repulsion
    Eq2Verbatim, // -(1/2NT) sum [d^2 + max(0, margin - d)^2]
};

/// Separation loss against the stored per-task means. Empty registry gives
/// zero loss and zero gradients (first task).
PromptLoss inter_loss(const std::vector<Vec>& prompts, const TaskPromptRegistry& registry,
                      InterVariant variant);

/// Stores the mean of the final-epoch prompts; immutable afterwards.
/// Throws on double finalization of the same task.
void finalize_task(const std::vector<Vec>& final_epoch_prompts, TaskPromptRegistry& registry,
                   int task_id, int head_id);

struct RouteResult {
    int task_id = -1;
    int head_id = -1;
    double similarity = 0.0;
};

/// Nearest stored prompt by cosine similarity; ties go to the earlier task.
/// Throws on an empty registry.
RouteResult route(std::span<const double> prompt, const TaskPromptRegistry& registry);

} // namespace pagmil
