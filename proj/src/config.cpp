#include "pagmil/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "pagmil/errors.hpp"

namespace pagmil {

using nlohmann::json;

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.seed = 1;
    cfg.method = Method::Pagmil;
    cfg.threads = 1;
    cfg.epochs = 30;
    cfg.dims = ModelDims{};
    cfg.optimizer = SgdConfig{};
    cfg.weights = LossWeights{};
    cfg.selector = SelectorConfig{};
    cfg.svm_tau = 1.0;
    cfg.min_margin = 1.0;
    cfg.inter_variant = InterVariant::HingeOnly;

    const int d = cfg.dims.feature_dim;
    // One shared tumor direction: what changes between tasks is the style
    // offset and tint. Each offset also shifts the tumor axis itself (the
    // stain-intensity confound), so a shared head is miscalibrated on every
    // earlier task while per-task frozen heads are unaffected. The large
    // offset components live in the color-bearing dims 1 and 2 so thumbnails
    // carry the task identity.
    const double class_sep = 2.0;
    const double sigma = 0.5;
    const std::array<int, 4> offset_dim{1, 2, 1, 2};
    const std::array<double, 4> offset_mag{3.0, 2.75, -2.5, -2.25};
    const std::array<double, 4> tumor_axis_shift{2.0, -2.0, 2.0, -2.0};
    const std::array<std::array<double, 3>, 4> tints{
        {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}}};

    for (int t = 0; t < 4; ++t) {
        TaskConfig task;
        task.n_train = 48;
        task.n_test = 50;
        task.data.task_id = t;
        task.data.classes = 2;
        task.data.grid = 16;
        task.data.feature_dim = d;
        task.data.thumb_side = cfg.dims.thumb_side;
        task.data.blob_count_range = {2, 3};
        task.data.blob_size_range = {12, 16};
        task.data.noise_count_range = {0, 1};
        task.data.tumor_shift.assign(d, 0.0);
        task.data.tumor_shift[t == 3 ? 6 : 0] = class_sep;
        task.data.style.task_id = t;
        task.data.style.feature_offset.assign(d, 0.0);
        task.data.style.feature_offset[offset_dim[t]] = offset_mag[t];
        task.data.style.feature_offset[0] = tumor_axis_shift[t];
        task.data.style.tint = tints[t];
        task.data.style.noise_scale = sigma;
        cfg.tasks.push_back(std::move(task));
    }
    return cfg;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config: " + path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) fail(path, "unknown key '" + it.key() + "'");
}

template <typename T>
void read_field(const json& obj, const std::string& path, const std::string& key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

void read_vec(const json& obj, const std::string& path, const std::string& key, Vec& out) {
    if (!obj.contains(key)) return;
    const json& arr = obj.at(key);
    if (!arr.is_array()) fail(path + "." + key, "expected an array of numbers");
    out.clear();
    for (const json& v : arr) {
        if (!v.is_number()) fail(path + "." + key, "expected an array of numbers");
        out.push_back(v.get<double>());
    }
}

void read_range(const json& obj, const std::string& path, const std::string& key,
                std::array<int, 2>& out) {
    if (!obj.contains(key)) return;
    const json& arr = obj.at(key);
    if (!arr.is_array() || arr.size() != 2 || !arr[0].is_number_integer() ||
        !arr[1].is_number_integer())
        fail(path + "." + key, "expected [min, max] integers");
    out = {arr[0].get<int>(), arr[1].get<int>()};
}

std::string variant_name(InterVariant v) {
    return v == InterVariant::HingeOnly ? "hinge-only" : "eq2-verbatim";
}

InterVariant variant_from_name(const std::string& s, const std::string& path) {
    if (s == "hinge-only") return InterVariant::HingeOnly;
    if (s == "eq2-verbatim") return InterVariant::Eq2Verbatim;
    fail(path, "unknown inter variant '" + s + "' (expected hinge-only or eq2-verbatim)");
}

std::string neighborhood_name(Neighborhood n) {
    return n == Neighborhood::Eight ? "8-conn" : "4-conn";
}

Neighborhood neighborhood_from_name(const std::string& s, const std::string& path) {
    if (s == "8-conn") return Neighborhood::Eight;
    if (s == "4-conn") return Neighborhood::Four;
    fail(path, "unknown neighborhood '" + s + "' (expected 8-conn or 4-conn)");
}

TaskConfig parse_task(const json& j, int index, const TaskConfig& defaults) {
    std::string path = "tasks[" + std::to_string(index) + "]";
    check_keys(j, path,
               {"n_train", "n_test", "classes", "grid", "blob_count_range", "blob_size_range",
                "noise_count_range", "tumor_shift", "class_balance", "style"});
    TaskConfig t = defaults;
    t.data.task_id = index;
    t.data.style.task_id = index;
    read_field(j, path, "n_train", t.n_train);
    read_field(j, path, "n_test", t.n_test);
    read_field(j, path, "classes", t.data.classes);
    read_field(j, path, "grid", t.data.grid);
    read_range(j, path, "blob_count_range", t.data.blob_count_range);
    read_range(j, path, "blob_size_range", t.data.blob_size_range);
    read_range(j, path, "noise_count_range", t.data.noise_count_range);
    read_vec(j, path, "tumor_shift", t.data.tumor_shift);
    read_vec(j, path, "class_balance", t.data.class_balance);
    if (j.contains("style")) {
        const json& s = j.at("style");
        std::string spath = path + ".style";
        check_keys(s, spath, {"feature_offset", "tint", "noise_scale"});
        read_vec(s, spath, "feature_offset", t.data.style.feature_offset);
        if (s.contains("tint")) {
            Vec tint;
            read_vec(s, spath, "tint", tint);
            if (tint.size() != 3) fail(spath + ".tint", "expected 3 channels");
            t.data.style.tint = {tint[0], tint[1], tint[2]};
        }
        read_field(s, spath, "noise_scale", t.data.style.noise_scale);
    }
    return t;
}

} // namespace

ExperimentConfig experiment_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    check_keys(j, "config",
               {"seed", "method", "threads", "epochs", "model", "optimizer", "loss_weights",
                "selector", "svm_tau", "prompt", "tasks"});

    ExperimentConfig cfg = default_experiment_config();
    read_field(j, "config", "seed", cfg.seed);
    if (j.contains("method")) {
        std::string m;
        read_field(j, "config", "method", m);
        cfg.method = method_from_name(m);
    }
    read_field(j, "config", "threads", cfg.threads);
    read_field(j, "config", "epochs", cfg.epochs);

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model", {"feature_dim", "attn_hidden", "thumb_side", "prompt_hidden", "p_dim"});
        read_field(m, "model", "feature_dim", cfg.dims.feature_dim);
        read_field(m, "model", "attn_hidden", cfg.dims.attn_hidden);
        read_field(m, "model", "thumb_side", cfg.dims.thumb_side);
        read_field(m, "model", "prompt_hidden", cfg.dims.prompt_hidden);
        read_field(m, "model", "p_dim", cfg.dims.p_dim);
    }
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_keys(o, "optimizer", {"lr", "momentum"});
        read_field(o, "optimizer", "lr", cfg.optimizer.lr);
        read_field(o, "optimizer", "momentum", cfg.optimizer.momentum);
    }
    if (j.contains("loss_weights")) {
        const json& w = j.at("loss_weights");
        check_keys(w, "loss_weights", {"instance", "intra", "inter"});
        read_field(w, "loss_weights", "instance", cfg.weights.instance);
        read_field(w, "loss_weights", "intra", cfg.weights.intra);
        read_field(w, "loss_weights", "inter", cfg.weights.inter);
    }
    if (j.contains("selector")) {
        const json& s = j.at("selector");
        check_keys(s, "selector",
                   {"B", "k_percent", "neighborhood", "kmeans_restarts", "kmeans_max_iters"});
        read_field(s, "selector", "B", cfg.selector.B);
        read_field(s, "selector", "k_percent", cfg.selector.k_percent);
        if (s.contains("neighborhood")) {
            std::string n;
            read_field(s, "selector", "neighborhood", n);
            cfg.selector.neighborhood = neighborhood_from_name(n, "selector.neighborhood");
        }
        read_field(s, "selector", "kmeans_restarts", cfg.selector.kmeans_restarts);
        read_field(s, "selector", "kmeans_max_iters", cfg.selector.kmeans_max_iters);
    }
    read_field(j, "config", "svm_tau", cfg.svm_tau);
    if (j.contains("prompt")) {
        const json& p = j.at("prompt");
        check_keys(p, "prompt", {"min_margin", "inter_variant"});
        read_field(p, "prompt", "min_margin", cfg.min_margin);
        if (p.contains("inter_variant")) {
            std::string v;
            read_field(p, "prompt", "inter_variant", v);
            cfg.inter_variant = variant_from_name(v, "prompt.inter_variant");
        }
    }
    if (j.contains("tasks")) {
        const json& tasks = j.at("tasks");
        if (!tasks.is_array() || tasks.empty()) fail("tasks", "expected a non-empty array");
        TaskConfig defaults = default_experiment_config().tasks[0];
        defaults.data.feature_dim = cfg.dims.feature_dim;
        defaults.data.thumb_side = cfg.dims.thumb_side;
        // Per-task defaults: neutral style, but keep the class signal so a
        // task entry without tumor_shift still describes a learnable task.
        defaults.data.tumor_shift.resize(cfg.dims.feature_dim, 0.0);
        defaults.data.style.feature_offset.clear();
        defaults.data.style.tint = {0.5, 0.5, 0.5};
        cfg.tasks.clear();
        for (size_t i = 0; i < tasks.size(); ++i)
            cfg.tasks.push_back(parse_task(tasks[i], int(i), defaults));
    } else {
        // Keep the default protocol consistent with any overridden dims.
        for (auto& t : cfg.tasks) {
            t.data.feature_dim = cfg.dims.feature_dim;
            t.data.thumb_side = cfg.dims.thumb_side;
        }
    }
    validate_experiment_config(cfg);
    return cfg;
}

ExperimentConfig read_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return experiment_config_from_json(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["method"] = method_name(cfg.method);
    j["threads"] = cfg.threads;
    j["epochs"] = cfg.epochs;
    j["model"] = {{"feature_dim", cfg.dims.feature_dim},
                  {"attn_hidden", cfg.dims.attn_hidden},
                  {"thumb_side", cfg.dims.thumb_side},
                  {"prompt_hidden", cfg.dims.prompt_hidden},
                  {"p_dim", cfg.dims.p_dim}};
    j["optimizer"] = {{"lr", cfg.optimizer.lr}, {"momentum", cfg.optimizer.momentum}};
    j["loss_weights"] = {{"instance", cfg.weights.instance},
                         {"intra", cfg.weights.intra},
                         {"inter", cfg.weights.inter}};
    j["selector"] = {{"B", cfg.selector.B},
                     {"k_percent", cfg.selector.k_percent},
                     {"neighborhood", neighborhood_name(cfg.selector.neighborhood)},
                     {"kmeans_restarts", cfg.selector.kmeans_restarts},
                     {"kmeans_max_iters", cfg.selector.kmeans_max_iters}};
    j["svm_tau"] = cfg.svm_tau;
    j["prompt"] = {{"min_margin", cfg.min_margin},
                   {"inter_variant", variant_name(cfg.inter_variant)}};
    json tasks = json::array();
    for (const TaskConfig& t : cfg.tasks) {
        json task;
        task["n_train"] = t.n_train;
        task["n_test"] = t.n_test;
        task["classes"] = t.data.classes;
        task["grid"] = t.data.grid;
        task["blob_count_range"] = t.data.blob_count_range;
        task["blob_size_range"] = t.data.blob_size_range;
        task["noise_count_range"] = t.data.noise_count_range;
        task["tumor_shift"] = t.data.tumor_shift;
        if (!t.data.class_balance.empty()) task["class_balance"] = t.data.class_balance;
        task["style"] = {{"feature_offset", t.data.style.feature_offset},
                         {"tint", t.data.style.tint},
                         {"noise_scale", t.data.style.noise_scale}};
        tasks.push_back(std::move(task));
    }
    j["tasks"] = std::move(tasks);
    return j.dump(2) + "\n";
}

void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.tasks.empty()) fail("tasks", "at least one task is required");
    if (cfg.epochs < 1) fail("epochs", "must be >= 1");
    if (cfg.threads < 1) fail("threads", "must be >= 1");
    if (cfg.dims.feature_dim < 1) fail("model.feature_dim", "must be >= 1");
    if (cfg.dims.attn_hidden < 1) fail("model.attn_hidden", "must be >= 1");
    if (cfg.dims.thumb_side < 1) fail("model.thumb_side", "must be >= 1");
    if (cfg.dims.prompt_hidden < 1) fail("model.prompt_hidden", "must be >= 1");
    if (cfg.dims.p_dim < 1) fail("model.p_dim", "must be >= 1");
    if (cfg.optimizer.lr <= 0) fail("optimizer.lr", "must be > 0");
    if (cfg.optimizer.momentum < 0 || cfg.optimizer.momentum >= 1)
        fail("optimizer.momentum", "must be in [0, 1)");
    if (cfg.selector.B < 1) fail("selector.B", "must be >= 1");
    if (cfg.selector.k_percent <= 0 || cfg.selector.k_percent > 100)
        fail("selector.k_percent", "must be in (0, 100]");
    if (cfg.selector.kmeans_restarts < 1) fail("selector.kmeans_restarts", "must be >= 1");
    if (cfg.selector.kmeans_max_iters < 1) fail("selector.kmeans_max_iters", "must be >= 1");
    if (cfg.svm_tau <= 0) fail("svm_tau", "must be > 0");
    if (cfg.min_margin < 0) fail("prompt.min_margin", "must be >= 0");

    for (size_t i = 0; i < cfg.tasks.size(); ++i) {
        const TaskConfig& t = cfg.tasks[i];
        std::string p = "tasks[" + std::to_string(i) + "]";
        if (t.n_train < 1) fail(p + ".n_train", "must be >= 1");
        if (t.n_test < 1) fail(p + ".n_test", "must be >= 1");
        if (t.data.classes < 2) fail(p + ".classes", "must be >= 2");
        if (t.data.grid < 8)
            fail(p + ".grid", "must be >= 8, got " + std::to_string(t.data.grid));
        if (t.data.grid * t.data.grid < 2 * cfg.selector.B)
            fail(p + ".grid", "bag too small for 2*B disjoint selections");
        if (t.data.blob_count_range[0] < 1 || t.data.blob_count_range[1] > 3 ||
            t.data.blob_count_range[1] < t.data.blob_count_range[0])
            fail(p + ".blob_count_range", "must be within 1..3 with min <= max");
        if (t.data.blob_size_range[0] < 2 || t.data.blob_size_range[1] < t.data.blob_size_range[0])
            fail(p + ".blob_size_range", "must satisfy 2 <= min <= max");
        if (t.data.noise_count_range[0] < 0 ||
            t.data.noise_count_range[1] < t.data.noise_count_range[0])
            fail(p + ".noise_count_range", "must satisfy 0 <= min <= max");
        if (!t.data.tumor_shift.empty() && int(t.data.tumor_shift.size()) != cfg.dims.feature_dim)
            fail(p + ".tumor_shift", "dimension must equal model.feature_dim");
        if (!t.data.style.feature_offset.empty() &&
            int(t.data.style.feature_offset.size()) != cfg.dims.feature_dim)
            fail(p + ".style.feature_offset", "dimension must equal model.feature_dim");
        for (double c : t.data.style.tint)
            if (c < 0 || c > 1) fail(p + ".style.tint", "channels must be in [0,1]");
        if (t.data.style.noise_scale < 0) fail(p + ".style.noise_scale", "must be >= 0");
        if (!t.data.class_balance.empty()) {
            if (int(t.data.class_balance.size()) != t.data.classes)
                fail(p + ".class_balance", "size must equal classes");
            double sum = 0;
            for (double b : t.data.class_balance) {
                if (b < 0) fail(p + ".class_balance", "entries must be >= 0");
                sum += b;
            }
            if (std::abs(sum - 1.0) > 1e-9) fail(p + ".class_balance", "must sum to 1");
        }
        if (t.data.task_id != int(i)) fail(p, "task_id mismatch (internal)");
    }
    if (cfg.method == Method::NaiveBaseline) {
        for (const TaskConfig& t : cfg.tasks)
            if (t.data.classes != cfg.tasks[0].data.classes)
                fail("tasks", "naive-baseline needs a uniform class count across tasks");
    }
}

} // namespace pagmil
