#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "pagmil/bag_io.hpp"
#include "pagmil/checkpoint.hpp"
#include "pagmil/cl_harness.hpp"
#include "pagmil/config.hpp"
#include "pagmil/errors.hpp"
#include "pagmil/heatmap.hpp"
#include "pagmil/rng.hpp"
#include "pagmil/verify.hpp"

namespace fs = std::filesystem;
using namespace pagmil;

namespace {

// Exit codes: 0 success, 1 usage/config error, 2 runtime failure,
// 3 verification failure.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerification = 3;

struct CommonFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> method;
    std::optional<int> threads;
    std::optional<std::string> inter_variant;
};

/// Flag values take precedence over the config file, which overrides defaults.
ExperimentConfig resolve_config(const CommonFlags& flags) {
    ExperimentConfig cfg = flags.config_path.empty() ? default_experiment_config()
                                                     : read_config_file(flags.config_path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.method) cfg.method = method_from_name(*flags.method);
    if (flags.threads) cfg.threads = *flags.threads;
    if (flags.inter_variant) {
        if (*flags.inter_variant == "hinge-only") cfg.inter_variant = InterVariant::HingeOnly;
        else if (*flags.inter_variant == "eq2-verbatim") cfg.inter_variant = InterVariant::Eq2Verbatim;
        else throw ConfigError("--inter-variant must be hinge-only or eq2-verbatim");
    }
    validate_experiment_config(cfg);
    return cfg;
}

void prepare_out_dir(const std::string& out, bool force) {
    fs::path p(out);
    if (fs::exists(p)) {
        if (!force && !fs::is_empty(p))
            throw ConfigError("output directory '" + out +
                              "' already exists and is not empty (use --force to overwrite)");
    }
    fs::create_directories(p);
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << text;
}

std::string bag_file_name(const char* split, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d.bag", split, index);
    return buf;
}

int cmd_generate(const CommonFlags& flags, const std::string& out, bool force) {
    ExperimentConfig cfg = resolve_config(flags);
    prepare_out_dir(out, force);

    nlohmann::json manifest;
    manifest["seed"] = cfg.seed;
    nlohmann::json jtasks = nlohmann::json::array();
    int total = 0;
    for (size_t t = 0; t < cfg.tasks.size(); ++t) {
        TaskDataset ds = generate_task_dataset(cfg.tasks[t].data, cfg.tasks[t].n_train,
                                               cfg.tasks[t].n_test,
                                               seed_mix(cfg.seed, "data-task", t));
        fs::path task_dir = fs::path(out) / ("task_" + std::to_string(t));
        fs::create_directories(task_dir);
        nlohmann::json jt;
        jt["task_id"] = t;
        nlohmann::json train_files = nlohmann::json::array();
        for (size_t i = 0; i < ds.train.size(); ++i) {
            std::string name = bag_file_name("train", int(i));
            write_bag_file(ds.train[i], (task_dir / name).string());
            train_files.push_back("task_" + std::to_string(t) + "/" + name);
        }
        nlohmann::json test_files = nlohmann::json::array();
        for (size_t i = 0; i < ds.test.size(); ++i) {
            std::string name = bag_file_name("test", int(i));
            write_bag_file(ds.test[i], (task_dir / name).string());
            test_files.push_back("task_" + std::to_string(t) + "/" + name);
        }
        jt["train"] = std::move(train_files);
        jt["test"] = std::move(test_files);
        jtasks.push_back(std::move(jt));
        total += cfg.tasks[t].n_train + cfg.tasks[t].n_test;
        std::cout << "task " << t << ": " << cfg.tasks[t].n_train << " train + "
                  << cfg.tasks[t].n_test << " test bags\n";
    }
    manifest["tasks"] = std::move(jtasks);
    write_text_file(fs::path(out) / "manifest.json", manifest.dump(2) + "\n");
    write_text_file(fs::path(out) / "config.json", experiment_config_to_json(cfg));
    std::cout << total << " bags written to " << out << "\n";
    return kExitOk;
}

std::vector<TaskDataset> load_dataset_dir(const std::string& dir, const ExperimentConfig& cfg) {
    fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream is(manifest_path);
    if (!is) throw ConfigError("no manifest.json in data directory: " + dir);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("bad manifest.json: " + std::string(e.what()));
    }
    if (!manifest.contains("tasks") || manifest["tasks"].size() != cfg.tasks.size())
        throw ConfigError("data directory has " +
                          std::to_string(manifest.value("tasks", nlohmann::json::array()).size()) +
                          " tasks but the config expects " + std::to_string(cfg.tasks.size()));
    std::vector<TaskDataset> out;
    for (const auto& jt : manifest["tasks"]) {
        TaskDataset ds;
        for (const auto& f : jt.at("train"))
            ds.train.push_back(read_bag_file((fs::path(dir) / f.get<std::string>()).string()));
        for (const auto& f : jt.at("test"))
            ds.test.push_back(read_bag_file((fs::path(dir) / f.get<std::string>()).string()));
        out.push_back(std::move(ds));
    }
    for (size_t t = 0; t < out.size(); ++t) {
        for (const Bag& b : out[t].train)
            if (b.features.cols != cfg.dims.feature_dim ||
                b.thumbnail.side != cfg.dims.thumb_side)
                throw ConfigError("task " + std::to_string(t) + " bag dims (" +
                                  std::to_string(b.features.cols) + ", thumb " +
                                  std::to_string(b.thumbnail.side) +
                                  ") do not match config model dims (" +
                                  std::to_string(cfg.dims.feature_dim) + ", thumb " +
                                  std::to_string(cfg.dims.thumb_side) + ")");
    }
    return out;
}

int cmd_train(const CommonFlags& flags, const std::string& out, bool force,
              const std::string& data_dir) {
    ExperimentConfig cfg = resolve_config(flags);
    prepare_out_dir(out, force);
    fs::path out_path(out);
    std::ofstream log(out_path / "run.log");
    log << "method " << method_name(cfg.method) << ", seed " << cfg.seed << ", "
        << cfg.tasks.size() << " tasks, " << cfg.epochs << " epochs/task\n";
    log.flush();

    try {
        ExperimentResult result;
        if (data_dir.empty()) {
            result = run_experiment_full(cfg);
        } else {
            result = run_experiment_with_data(cfg, load_dataset_dir(data_dir, cfg));
        }

        write_text_file(out_path / "config.json", experiment_config_to_json(cfg));
        write_text_file(out_path / "report.json", report_json(result.report));
        write_text_file(out_path / "report.txt", report_table(result.report));
        if (cfg.method == Method::SeparateUpperBound) {
            for (size_t t = 0; t < result.task_models.size(); ++t)
                write_checkpoint_file(result.task_models[t],
                                      (out_path / ("checkpoint_task" + std::to_string(t) + ".bin"))
                                          .string());
        } else {
            write_checkpoint_file(result.model, (out_path / "checkpoint.bin").string());
        }

        fs::create_directories(out_path / "heatmaps");
        for (size_t t = 0; t < result.datasets.size(); ++t) {
            const Bag& bag = result.datasets[t].test.front();
            const ModelState& m = cfg.method == Method::SeparateUpperBound
                                      ? result.task_models[t]
                                      : result.model;
            AttentionScores scores = score_patches(bag, m.attn);
            export_heatmap(bag, scores,
                           (out_path / "heatmaps" / ("task" + std::to_string(t) + ".ppm")).string());
        }

        log << "final average ACC " << result.report.summary.final_average_acc << "\n";
        log << "wall clock seconds " << result.report.wall_clock_seconds << "\n";
        std::cout << report_table(result.report);
        std::cout << "run written to " << out << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        log << "FATAL: " << e.what() << "\n";
        throw;
    }
}

int cmd_check(uint64_t seed, const std::string& out) {
    std::vector<CheckResult> results = run_verification(seed);
    std::string table = check_table(results);
    std::cout << table;
    if (!out.empty()) write_text_file(out, table);
    if (!all_pass(results)) {
        std::cerr << "verification FAILED\n";
        return kExitVerification;
    }
    std::cout << "all checks passed\n";
    return kExitOk;
}

int cmd_heatmap(const std::string& checkpoint_path, const std::string& bag_path,
                const std::string& out, const std::string& table_path) {
    ModelState model = read_checkpoint_file(checkpoint_path);
    Bag bag = read_bag_file(bag_path);
    if (bag.features.cols != model.dims.feature_dim)
        throw ConfigError("feature dim mismatch: checkpoint expects " +
                          std::to_string(model.dims.feature_dim) + ", bag has " +
                          std::to_string(bag.features.cols));
    AttentionScores scores = score_patches(bag, model.attn);
    export_heatmap(bag, scores, out);
    if (!table_path.empty()) {
        SelectorConfig sel;
        SelectionResult res = select(bag, scores.raw, sel);
        write_text_file(table_path, selection_table(bag, scores.raw, res));
    }
    std::cout << "heatmap written to " << out << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic continual-learning laboratory for attention MIL with "
                 "spatial patch selection and prompt-routed task heads"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string out_dir;
    bool force = false;
    std::string data_dir;
    uint64_t check_seed = 1;
    std::string check_out;
    std::string ckpt_path, bag_path, heat_out, table_path;

    auto add_common = [&](CLI::App* cmd, bool with_method) {
        cmd->add_option("--config", flags.config_path, "JSON config file");
        cmd->add_option("--seed", flags.seed, "root seed (overrides config)");
        cmd->add_option("--threads", flags.threads, "worker thread cap (overrides config)");
        if (with_method) {
            cmd->add_option("--method", flags.method,
                            "pagmil, naive-baseline or separate-upper-bound");
            cmd->add_option("--inter-variant", flags.inter_variant,
                            "hinge-only or eq2-verbatim");
        }
    };

    CLI::App* gen = app.add_subcommand("generate", "write synthetic task datasets as bag files");
    add_common(gen, false);
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_flag("--force", force, "overwrite a non-empty output directory");

    CLI::App* train = app.add_subcommand("train", "run a sequential-task experiment");
    add_common(train, true);
    train->add_option("--out", out_dir, "run directory")->required();
    train->add_flag("--force", force, "overwrite a non-empty run directory");
    train->add_option("--data", data_dir, "use bags from a 'generate' directory instead of "
                                          "generating inline");

    CLI::App* check = app.add_subcommand("check", "run the verification suite");
    check->add_option("--seed", check_seed, "seed for the randomized checks");
    check->add_option("--out", check_out, "also write the pass/fail table to this file");

    CLI::App* heat = app.add_subcommand("heatmap", "score a bag with a checkpoint and export "
                                                   "the attention heatmap");
    heat->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    heat->add_option("--bag", bag_path, "bag file")->required();
    heat->add_option("--out", heat_out, "output PPM path")->required();
    heat->add_option("--table", table_path, "also write the selection table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_generate(flags, out_dir, force);
        if (train->parsed()) return cmd_train(flags, out_dir, force, data_dir);
        if (check->parsed()) return cmd_check(check_seed, check_out);
        if (heat->parsed()) return cmd_heatmap(ckpt_path, bag_path, heat_out, table_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const VerificationError& e) {
        std::cerr << "verification error: " << e.what() << "\n";
        return kExitVerification;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
