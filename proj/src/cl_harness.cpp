#include "pagmil/cl_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

#include "pagmil/config.hpp"
#include "pagmil/errors.hpp"
#include "pagmil/heatmap.hpp"
#include "pagmil/parallel.hpp"
#include "pagmil/rng.hpp"

namespace pagmil {

std::string method_name(Method m) {
    switch (m) {
        case Method::Pagmil: return "pagmil";
        case Method::NaiveBaseline: return "naive-baseline";
        case Method::SeparateUpperBound: return "separate-upper-bound";
    }
    throw std::logic_error("unreachable");
}

Method method_from_name(const std::string& name) {
    if (name == "pagmil") return Method::Pagmil;
    if (name == "naive-baseline") return Method::NaiveBaseline;
    if (name == "separate-upper-bound") return Method::SeparateUpperBound;
    throw ConfigError("unknown method '" + name +
                      "' (expected pagmil, naive-baseline or separate-upper-bound)");
}

namespace {

int argmax_class(const Vec& logits) {
    int best = 0;
    for (int c = 1; c < int(logits.size()); ++c)
        if (logits[c] > logits[best]) best = c;
    return best;
}

const Head& head_for_task(const ModelState& model, int task_id) {
    for (const Head& h : model.heads.all())
        if (h.task_id == task_id) return h;
    throw std::logic_error("evaluate: no head trained for task " + std::to_string(task_id));
}

} // namespace

EvalMetrics evaluate(const ModelState& model, const std::vector<Bag>& test_bags, Method method,
                     int threads, bool oracle_routing) {
    if (model.heads.size() == 0) throw std::logic_error("evaluate: model has no heads");
    const int n = int(test_bags.size());
    if (n == 0) throw std::invalid_argument("evaluate: empty test set");

    int classes = 2;
    for (const Bag& b : test_bags) classes = std::max(classes, b.label + 1);

    std::vector<int> preds(n), hits(n, 0);
    std::vector<Vec> probs(n);
    parallel_for(n, threads, [&](int i) {
        const Bag& bag = test_bags[i];
        AttentionScores scores = score_patches(bag, model.attn);
        SlideEmbedding emb = aggregate(bag, scores);

        const Head* head = nullptr;
        if (method == Method::Pagmil) {
            if (oracle_routing) {
                head = &head_for_task(model, bag.task_id);
            } else {
                RouteResult r = route(generate_prompt(bag.thumbnail, model.pgen), model.prompts);
                head = &model.heads.head(r.head_id);
                if (r.task_id == bag.task_id) hits[i] = 1;
            }
        } else {
            head = &model.heads.head(0);
        }
        Vec logits = predict(emb, *head);
        preds[i] = argmax_class(logits);
        Vec p = softmax(logits);
        p.resize(classes, 0.0); // pad when the routed head knows fewer classes
        probs[i] = std::move(p);
    });

    EvalMetrics out;
    out.count = n;
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        if (preds[i] == test_bags[i].label) ++correct;
        out.routing_hits += hits[i];
    }
    out.acc = double(correct) / n;

    // Binary AUC on the class-1 probability; macro one-vs-rest above 2 classes.
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = test_bags[i].label;
    if (classes == 2) {
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = probs[i][1];
            y[i] = labels[i] == 1 ? 1 : 0;
        }
        try {
            out.auc = auc_binary(s, y);
        } catch (const UndefinedMetricError&) {
        }
    } else {
        double sum = 0.0;
        int defined = 0;
        for (int c = 0; c < classes; ++c) {
            std::vector<double> s(n);
            std::vector<int> y(n);
            for (int i = 0; i < n; ++i) {
                s[i] = probs[i][c];
                y[i] = labels[i] == c ? 1 : 0;
            }
            try {
                sum += auc_binary(s, y);
                ++defined;
            } catch (const UndefinedMetricError&) {
            }
        }
        if (defined > 0) out.auc = sum / defined;
    }
    return out;
}

ForgettingSummary forgetting_metrics(const std::vector<std::vector<CellMetrics>>& matrix) {
    if (matrix.empty()) throw std::invalid_argument("forgetting_metrics: empty matrix");
    const int stages = int(matrix.size());
    const int tasks = int(matrix[0].size());
    const auto& last = matrix[stages - 1];

    ForgettingSummary s;
    double sum = 0.0;
    int cnt = 0;
    for (int t = 0; t < tasks; ++t) {
        if (last[t].acc) {
            sum += *last[t].acc;
            ++cnt;
        }
    }
    s.final_average_acc = cnt > 0 ? sum / cnt : 0.0;

    if (tasks > 1 && stages == tasks) {
        double bwt = 0.0;
        int bcnt = 0;
        for (int t = 0; t < tasks - 1; ++t) {
            if (last[t].acc && matrix[t][t].acc) {
                bwt += *last[t].acc - *matrix[t][t].acc;
                ++bcnt;
            }
        }
        if (bcnt > 0) s.backward_transfer = bwt / bcnt;
        if (last[0].acc && matrix[0][0].acc) s.task1_retention = *last[0].acc - *matrix[0][0].acc;
    }
    return s;
}

namespace {

/// Epoch-frozen mean prompt over the training split with current parameters.
Vec epoch_mean_prompt(const ModelState& model, const std::vector<Bag>& train) {
    Vec mean(model.dims.p_dim, 0.0);
    for (const Bag& bag : train) axpy(1.0, generate_prompt(bag.thumbnail, model.pgen), mean);
    for (double& v : mean) v /= double(train.size());
    return mean;
}

void train_one_task(ModelState& model, SgdOptimizer& opt, const std::vector<Bag>& train,
                    const ExperimentConfig& cfg, const SelectorConfig& selector, bool with_ps_pg,
                    std::vector<Vec>* final_prompts) {
    StepContext ctx;
    ctx.selector = selector;
    ctx.weights = cfg.weights;
    ctx.svm_tau = cfg.svm_tau;
    ctx.inter_variant = cfg.inter_variant;
    ctx.use_selector = with_ps_pg;
    ctx.use_prompt_losses = with_ps_pg;

    Vec mean;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<Vec> prompts_epoch;
        if (with_ps_pg) {
            mean = epoch_mean_prompt(model, train);
            ctx.epoch_mean_prompt = &mean;
            prompts_epoch.reserve(train.size());
        }
        for (const Bag& bag : train) {
            StepDiagnostics diag = train_step(model, bag, ctx, opt);
            if (with_ps_pg) prompts_epoch.push_back(std::move(diag.prompt));
        }
        if (with_ps_pg && epoch == cfg.epochs - 1 && final_prompts)
            *final_prompts = std::move(prompts_epoch);
    }
}

} // namespace

ExperimentResult run_experiment_full(const ExperimentConfig& config, const StageHooks* hooks) {
    validate_experiment_config(config);
    const int tasks = int(config.tasks.size());
    std::vector<TaskDataset> datasets;
    datasets.reserve(tasks);
    for (int t = 0; t < tasks; ++t)
        datasets.push_back(generate_task_dataset(config.tasks[t].data, config.tasks[t].n_train,
                                                 config.tasks[t].n_test,
                                                 seed_mix(config.seed, "data-task", t)));
    return run_experiment_with_data(config, std::move(datasets), hooks);
}

ExperimentResult run_experiment_with_data(const ExperimentConfig& config,
                                          std::vector<TaskDataset> datasets,
                                          const StageHooks* hooks) {
    validate_experiment_config(config);
    auto t_start = std::chrono::steady_clock::now();

    const int tasks = int(config.tasks.size());
    if (int(datasets.size()) != tasks)
        throw ConfigError("run_experiment: dataset count does not match task count");
    ExperimentResult result;
    result.datasets = std::move(datasets);

    RunReport& report = result.report;
    report.method = config.method;
    report.matrix.assign(tasks, std::vector<CellMetrics>(tasks));
    report.routing_acc.assign(tasks, std::nullopt);
    report.config_echo = experiment_config_to_json(config);

    SelectorConfig selector = config.selector;
    selector.seed = seed_mix(config.seed, "kmeans");

    auto eval_stage = [&](int stage, const ModelState& model) {
        int hits = 0, total = 0;
        for (int u = 0; u < tasks; ++u) {
            EvalMetrics em =
                evaluate(model, result.datasets[u].test, config.method, config.threads);
            report.matrix[stage][u] = {em.acc, em.auc, u <= stage};
            if (config.method == Method::Pagmil && u <= stage) {
                hits += em.routing_hits;
                total += em.count;
            }
        }
        if (config.method == Method::Pagmil && total > 0)
            report.routing_acc[stage] = double(hits) / total;
    };

    if (config.method == Method::Pagmil) {
        ModelState model = init_model(config.dims, seed_mix(config.seed, "init"));
        model.prompts.min_margin = config.min_margin;
        SgdOptimizer opt(config.optimizer);
        for (int t = 0; t < tasks; ++t) {
            int head_id = model.heads.new_head(config.tasks[t].data.classes,
                                               config.dims.feature_dim,
                                               seed_mix(config.seed, "head", t), t);
            std::vector<Vec> final_prompts;
            train_one_task(model, opt, result.datasets[t].train, config, selector, true,
                           &final_prompts);
            finalize_task(final_prompts, model.prompts, t, head_id);
            model.heads.freeze_active();
            eval_stage(t, model);
            if (hooks && hooks->after_stage) hooks->after_stage(t, model);
        }
        result.model = std::move(model);
    } else if (config.method == Method::NaiveBaseline) {
        ModelState model = init_model(config.dims, seed_mix(config.seed, "init"));
        model.heads.new_head(config.tasks[0].data.classes, config.dims.feature_dim,
                             seed_mix(config.seed, "head", 0), 0);
        SgdOptimizer opt(config.optimizer);
        for (int t = 0; t < tasks; ++t) {
            train_one_task(model, opt, result.datasets[t].train, config, selector, false,
                           nullptr);
            eval_stage(t, model);
            if (hooks && hooks->after_stage) hooks->after_stage(t, model);
        }
        result.model = std::move(model);
    } else {
        // One independent model per task; task t's metrics are fixed once trained.
        std::vector<EvalMetrics> own(tasks);
        for (int t = 0; t < tasks; ++t) {
            ModelState model = init_model(config.dims, seed_mix(config.seed, "init-task", t));
            SgdOptimizer opt(config.optimizer);
            model.heads.new_head(config.tasks[t].data.classes, config.dims.feature_dim,
                                 seed_mix(config.seed, "head", t), t);
            train_one_task(model, opt, result.datasets[t].train, config, selector, false,
                           nullptr);
            model.heads.freeze_active();
            own[t] = evaluate(model, result.datasets[t].test, config.method, config.threads);
            for (int stage = t; stage < tasks; ++stage)
                report.matrix[stage][t] = {own[t].acc, own[t].auc, true};
            if (hooks && hooks->after_stage) hooks->after_stage(t, model);
            result.task_models.push_back(std::move(model));
        }
    }

    report.summary = forgetting_metrics(report.matrix);
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

RunReport run_experiment(const ExperimentConfig& config, const StageHooks* hooks) {
    return run_experiment_full(config, hooks).report;
}

void export_heatmap(const Bag& bag, const AttentionScores& scores, const std::string& path) {
    write_ppm(score_heatmap(bag, scores.raw), path);
}

namespace {

std::string fmt_metric(const std::optional<double>& v) {
    if (!v) return "   -  ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * *v);
    return buf;
}

nlohmann::json metric_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

} // namespace

std::string report_table(const RunReport& report) {
    const int tasks = report.matrix.empty() ? 0 : int(report.matrix[0].size());
    const int stages = int(report.matrix.size());
    std::string out;
    char buf[256];

    out += "method: " + method_name(report.method) + "\n\n";
    out += "final metrics (x100)\n";
    out += "method              ";
    for (int t = 0; t < tasks; ++t) {
        std::snprintf(buf, sizeof(buf), " | task%-2d ACC    AUC", t + 1);
        out += buf;
    }
    out += "\n";
    std::snprintf(buf, sizeof(buf), "%-20s", method_name(report.method).c_str());
    out += buf;
    for (int t = 0; t < tasks; ++t) {
        const CellMetrics& c = report.matrix[stages - 1][t];
        out += " |      " + fmt_metric(c.acc) + " " + fmt_metric(c.auc);
    }
    out += "\n\nstage-by-task ACC matrix (x100, '*' = not yet trained)\n";
    for (int s = 0; s < stages; ++s) {
        std::snprintf(buf, sizeof(buf), "after task %d:", s + 1);
        out += buf;
        for (int t = 0; t < tasks; ++t) {
            const CellMetrics& c = report.matrix[s][t];
            out += " " + fmt_metric(c.acc) + (c.seen ? " " : "*");
        }
        if (report.routing_acc[s]) {
            std::snprintf(buf, sizeof(buf), "  routing %6.2f", 100.0 * *report.routing_acc[s]);
            out += buf;
        }
        out += "\n";
    }
    out += "\nsummary\n";
    std::snprintf(buf, sizeof(buf), "  final average ACC : %s\n",
                  fmt_metric(report.summary.final_average_acc).c_str());
    out += buf;
    out += "  backward transfer : " + fmt_metric(report.summary.backward_transfer) + "\n";
    out += "  task-1 retention  : " + fmt_metric(report.summary.task1_retention) + "\n";
    return out;
}

std::string report_json(const RunReport& report) {
    nlohmann::json j;
    j["method"] = method_name(report.method);
    j["config"] = nlohmann::json::parse(report.config_echo);
    nlohmann::json matrix = nlohmann::json::array();
    for (const auto& row : report.matrix) {
        nlohmann::json jrow = nlohmann::json::array();
        for (const CellMetrics& c : row) {
            jrow.push_back({{"acc", metric_json(c.acc)},
                            {"auc", metric_json(c.auc)},
                            {"seen", c.seen}});
        }
        matrix.push_back(std::move(jrow));
    }
    j["matrix"] = std::move(matrix);
    nlohmann::json routing = nlohmann::json::array();
    for (const auto& r : report.routing_acc) routing.push_back(metric_json(r));
    j["routing_acc"] = std::move(routing);
    j["summary"] = {{"final_average_acc", report.summary.final_average_acc},
                    {"backward_transfer", metric_json(report.summary.backward_transfer)},
                    {"task1_retention", metric_json(report.summary.task1_retention)}};
    return j.dump(2) + "\n";
}

} // namespace pagmil
