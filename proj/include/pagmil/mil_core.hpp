#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "pagmil/numerics.hpp"
#include "pagmil/patch_selector.hpp"
#include "pagmil/prompt_guide.hpp"
#include "pagmil/synth_data.hpp"
#include "pagmil/task_heads.hpp"

namespace pagmil {

/// Gated attention scorer: s_i = w^T (tanh(V h_i) * sigmoid(U h_i)).
struct AttentionNetParams {
    Mat V; // hidden x d
    Mat U; // hidden x d
    Vec w; // hidden
    bool operator==(const AttentionNetParams&) const = default;
};

struct AttentionScores {
    Vec raw;        // s_i
    Vec normalized; // softmax over the bag
};

/// Binary positive/negative patch classifier.
struct InstanceClassifierParams {
    Mat W; // 2 x d
    Vec b; // 2
    bool operator==(const InstanceClassifierParams&) const = default;
};

struct ModelDims {
    int feature_dim = 16;
    int attn_hidden = 32;
    int thumb_side = 16;
    int prompt_hidden = 32;
    int p_dim = 32;
    bool operator==(const ModelDims&) const = default;
};

/// Everything that trains: scorer, instance classifier, prompt generator,
/// plus the per-task head and prompt registries.
struct ModelState {
    ModelDims dims;
    AttentionNetParams attn;
    InstanceClassifierParams inst;
    PromptGeneratorParams pgen;
    HeadRegistry heads;
    TaskPromptRegistry prompts;
    bool operator==(const ModelState&) const = default;
};

ModelState init_model(const ModelDims& dims, uint64_t seed);

AttentionScores score_patches(const Bag& bag, const AttentionNetParams& params);

SlideEmbedding aggregate(const Bag& bag, const AttentionScores& scores);

struct LossGrad {
    double loss = 0.0;
    Vec grad;
};

/// Temperature-smoothed multiclass SVM:
///   loss = tau * logsumexp_j((margin(j,label) + s_j - s_label) / tau)
/// with unit margin off the true class. grad = softmax(shifted) - onehot.
LossGrad smooth_svm_loss(const Vec& scores, int label, double tau);

/// Softmax cross-entropy over slide logits. grad = softmax - onehot.
LossGrad slide_loss(const Vec& logits, int label);

struct LossWeights {
    double instance = 1.0; // c1, smooth SVM on selected patches
    double intra = 0.1;    // c2
    double inter = 0.1;    // c3
};

struct StepContext {
    SelectorConfig selector;
    LossWeights weights;
    double svm_tau = 1.0;
    InterVariant inter_variant = InterVariant::HingeOnly;
    /// Epoch-frozen mean prompt; required when use_prompt_losses.
    const Vec* epoch_mean_prompt = nullptr;
    bool use_selector = true;      // PS branch (instance loss on selected patches)
    bool use_prompt_losses = true; // PG branch (intra/inter losses)
};

struct StepDiagnostics {
    double slide = 0.0;
    double instance = 0.0;
    double intra = 0.0;
    double inter = 0.0;
    double total = 0.0;
    std::optional<SelectionResult> selection;
    AttentionScores scores;
    Vec prompt;
};

/// Gradients for every unfrozen parameter group.
struct ModelGrads {
    Mat dV, dU;
    Vec dw;
    Mat dWinst;
    Vec dbinst;
    PromptGenGrads pgen;
    Mat dWhead;
    Vec dbhead;
};

/// Forward + analytic backward for one bag; does not modify the model.
StepDiagnostics compute_gradients(const ModelState& model, const Bag& bag, const StepContext& ctx,
                                  ModelGrads& grads);

/// Forward-only total loss (for finite-difference checks).
double total_loss(const ModelState& model, const Bag& bag, const StepContext& ctx);

struct SgdConfig {
    double lr = 1e-2;
    double momentum = 0.9;
};

/// SGD with momentum; velocity buffers keyed by parameter-group name so the
/// active head can change between tasks.
class SgdOptimizer {
public:
    explicit SgdOptimizer(const SgdConfig& cfg) : cfg_(cfg) {}

    void apply(const std::string& key, std::vector<double>& param,
               const std::vector<double>& grad);

    const SgdConfig& config() const { return cfg_; }

private:
    SgdConfig cfg_;
    std::map<std::string, Vec> velocity_;
};

/// One training step: gradients, then an SGD update of every unfrozen group.
/// Requires an active (unfrozen) head.
StepDiagnostics train_step(ModelState& model, const Bag& bag, const StepContext& ctx,
                           SgdOptimizer& opt);

} // namespace pagmil
