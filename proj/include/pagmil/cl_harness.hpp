#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pagmil/mil_core.hpp"
#include "pagmil/synth_data.hpp"

namespace pagmil {

enum class Method { Pagmil, NaiveBaseline, SeparateUpperBound };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct TaskConfig {
    TaskDataSpec data;
    int n_train = 24;
    int n_test = 50;
};

struct ExperimentConfig {
    uint64_t seed = 1;
    Method method = Method::Pagmil;
    int threads = 1;
    int epochs = 30;
    ModelDims dims;
    SgdConfig optimizer;
    LossWeights weights;
    SelectorConfig selector;
    double svm_tau = 1.0;
    double min_margin = 1.0;
    InterVariant inter_variant = InterVariant::HingeOnly;
    std::vector<TaskConfig> tasks;
};

/// Metrics of one (stage, task) cell. seen = the task had been trained on
/// by this stage; the headline averages only use seen cells.
struct CellMetrics {
    std::optional<double> acc;
    std::optional<double> auc;
    bool seen = false;
};

struct ForgettingSummary {
    double final_average_acc = 0.0;
    std::optional<double> backward_transfer; // mean over earlier tasks of final - just-trained
    std::optional<double> task1_retention;   // first task: final acc - just-trained acc
};

struct RunReport {
    Method method = Method::Pagmil;
    std::vector<std::vector<CellMetrics>> matrix; // stage x task
    std::vector<std::optional<double>> routing_acc; // per stage, over seen tasks
    ForgettingSummary summary;
    std::string config_echo; // canonical JSON of the config that produced the run
    /// Measured but intentionally kept out of the serialized report so that
    /// identical config+seed gives byte-identical report files.
    double wall_clock_seconds = 0.0;
};

struct EvalMetrics {
    std::optional<double> acc;
    std::optional<double> auc;
    int routing_hits = 0; // pagmil only
    int count = 0;
};

/// Forward-only evaluation of one task's test set. For pagmil each bag is
/// routed through the prompt registry; oracle_routing instead forces the head
/// whose task matches the bag (sanity baseline).
EvalMetrics evaluate(const ModelState& model, const std::vector<Bag>& test_bags, Method method,
                     int threads = 1, bool oracle_routing = false);

ForgettingSummary forgetting_metrics(const std::vector<std::vector<CellMetrics>>& matrix);

struct StageHooks {
    /// Called after each stage with the model that just finished training
    /// (for separate-upper-bound: that stage's model).
    std::function<void(int stage, const ModelState& model)> after_stage;
};

struct ExperimentResult {
    RunReport report;
    ModelState model;                    // pagmil / naive final state
    std::vector<ModelState> task_models; // separate-upper-bound
    std::vector<TaskDataset> datasets;
};

ExperimentResult run_experiment_full(const ExperimentConfig& config,
                                     const StageHooks* hooks = nullptr);
RunReport run_experiment(const ExperimentConfig& config, const StageHooks* hooks = nullptr);

/// Same experiment over externally supplied bags (e.g. a 'generate' directory).
ExperimentResult run_experiment_with_data(const ExperimentConfig& config,
                                          std::vector<TaskDataset> datasets,
                                          const StageHooks* hooks = nullptr);

/// Fig.-3-style score raster written as a binary PPM.
void export_heatmap(const Bag& bag, const AttentionScores& scores, const std::string& path);

/// Human-readable report: final-stage ACC/AUC per task plus the full
/// stage-by-task matrix and summary lines.
std::string report_table(const RunReport& report);

/// Machine-readable report as a canonical JSON string (byte-stable).
std::string report_json(const RunReport& report);

} // namespace pagmil
