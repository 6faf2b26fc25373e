#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pagmil/bag_io.hpp"
#include "pagmil/checkpoint.hpp"
#include "pagmil/cl_harness.hpp"
#include "pagmil/config.hpp"
#include "pagmil/errors.hpp"
#include "pagmil/heatmap.hpp"
#include "pagmil/verify.hpp"

namespace py = pybind11;
using namespace pagmil;

namespace {

py::array_t<double> features_array(const Bag& bag) {
    py::array_t<double> out({bag.features.rows, bag.features.cols});
    std::copy(bag.features.a.begin(), bag.features.a.end(), out.mutable_data());
    return out;
}

py::array_t<double> thumbnail_array(const Bag& bag) {
    const Raster& r = bag.thumbnail;
    py::array_t<double> out({r.side, r.side, 3});
    std::copy(r.rgb.begin(), r.rgb.end(), out.mutable_data());
    return out;
}

std::vector<Point2> coords_from_list(const std::vector<std::pair<int, int>>& pts) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (auto [r, c] : pts) out.push_back({r, c});
    return out;
}

} // namespace

PYBIND11_MODULE(_pagmil, m) {
    m.doc() = "continual-learning MIL laboratory: attention scoring, spatial patch "
              "selection, prompt-routed task heads, and a sequential-task harness";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError");

    // ---- numerics ----
    m.def("l2_distance", [](const Vec& a, const Vec& b) { return l2_distance(a, b); });
    m.def("cosine_similarity",
          [](const Vec& a, const Vec& b) { return cosine_similarity(a, b); });
    m.def("softmax", [](const Vec& v) { return softmax(v); });
    m.def("logsumexp", [](const Vec& v) { return logsumexp(v); });
    m.def("auc_binary", [](const std::vector<double>& s, const std::vector<int>& y) {
        return auc_binary(s, y);
    });
    m.def(
        "kmeans",
        [](const std::vector<std::pair<int, int>>& pts, int b, int restarts, int max_iters,
           uint64_t seed) {
            KMeansResult r = kmeans(coords_from_list(pts), b, restarts, max_iters, seed);
            return py::make_tuple(r.centroids, r.assignment, r.inertia);
        },
        py::arg("points"), py::arg("b"), py::arg("restarts") = 20, py::arg("max_iters") = 100,
        py::arg("seed") = 0);

    // ---- synthetic data ----
    py::class_<TaskStyle>(m, "TaskStyle")
        .def(py::init<>())
        .def_readwrite("task_id", &TaskStyle::task_id)
        .def_readwrite("feature_offset", &TaskStyle::feature_offset)
        .def_readwrite("tint", &TaskStyle::tint)
        .def_readwrite("noise_scale", &TaskStyle::noise_scale);

    py::class_<SlideSpec>(m, "SlideSpec")
        .def(py::init<>())
        .def_readwrite("grid_size", &SlideSpec::grid_size)
        .def_readwrite("feature_dim", &SlideSpec::feature_dim)
        .def_readwrite("n_tumor_blobs", &SlideSpec::n_tumor_blobs)
        .def_readwrite("blob_size_range", &SlideSpec::blob_size_range)
        .def_readwrite("n_isolated_noise", &SlideSpec::n_isolated_noise)
        .def_readwrite("label", &SlideSpec::label)
        .def_readwrite("task_id", &SlideSpec::task_id)
        .def_readwrite("seed", &SlideSpec::seed)
        .def_readwrite("thumb_side", &SlideSpec::thumb_side)
        .def_readwrite("tumor_shift", &SlideSpec::tumor_shift);

    py::class_<Bag>(m, "Bag")
        .def_property_readonly("label", [](const Bag& b) { return b.label; })
        .def_property_readonly("task_id", [](const Bag& b) { return b.task_id; })
        .def_property_readonly("size", [](const Bag& b) { return b.size(); })
        .def_property_readonly("coords",
                               [](const Bag& b) {
                                   std::vector<std::pair<int, int>> out;
                                   for (const Point2& p : b.coords)
                                       out.emplace_back(p.row, p.col);
                                   return out;
                               })
        .def_property_readonly("features", &features_array)
        .def_property_readonly("thumbnail", &thumbnail_array)
        .def_property_readonly("mask", [](const Bag& b) {
            std::vector<int> out;
            for (PatchTag t : b.mask) out.push_back(int(t));
            return out;
        });

    m.def("generate_bag", &generate_bag, py::arg("spec"), py::arg("style"));
    m.def("write_bag_file", &write_bag_file);
    m.def("read_bag_file", &read_bag_file);

    // ---- model and training ----
    py::class_<AttentionScores>(m, "AttentionScores")
        .def_readonly("raw", &AttentionScores::raw)
        .def_readonly("normalized", &AttentionScores::normalized);

    py::class_<ModelState>(m, "ModelState")
        .def_property_readonly("head_count", [](const ModelState& s) { return s.heads.size(); })
        .def_property_readonly("task_prompt_count",
                               [](const ModelState& s) { return s.prompts.entries.size(); });

    m.def("init_model",
          [](int feature_dim, int attn_hidden, int thumb_side, int prompt_hidden, int p_dim,
             uint64_t seed) {
              return init_model({feature_dim, attn_hidden, thumb_side, prompt_hidden, p_dim},
                                seed);
          },
          py::arg("feature_dim") = 16, py::arg("attn_hidden") = 32, py::arg("thumb_side") = 16,
          py::arg("prompt_hidden") = 32, py::arg("p_dim") = 32, py::arg("seed") = 1);

    m.def("score_patches",
          [](const Bag& bag, const ModelState& model) { return score_patches(bag, model.attn); });
    m.def("aggregate", [](const Bag& bag, const AttentionScores& s) {
        return aggregate(bag, s).m;
    });
    m.def("smooth_svm_loss", [](const Vec& scores, int label, double tau) {
        LossGrad lg = smooth_svm_loss(scores, label, tau);
        return py::make_tuple(lg.loss, lg.grad);
    });
    m.def("slide_loss", [](const Vec& logits, int label) {
        LossGrad lg = slide_loss(logits, label);
        return py::make_tuple(lg.loss, lg.grad);
    });
    m.def("generate_prompt", [](const Bag& bag, const ModelState& model) {
        return generate_prompt(bag.thumbnail, model.pgen);
    });

    // ---- patch selector ----
    py::class_<SelectorConfig>(m, "SelectorConfig")
        .def(py::init<>())
        .def_readwrite("B", &SelectorConfig::B)
        .def_readwrite("k_percent", &SelectorConfig::k_percent)
        .def_readwrite("kmeans_restarts", &SelectorConfig::kmeans_restarts)
        .def_readwrite("kmeans_max_iters", &SelectorConfig::kmeans_max_iters)
        .def_readwrite("seed", &SelectorConfig::seed);

    py::class_<SelectionResult>(m, "SelectionResult")
        .def_readonly("negatives", &SelectionResult::negatives)
        .def_readonly("candidates", &SelectionResult::candidates)
        .def_readonly("survivors", &SelectionResult::survivors)
        .def_readonly("positives", &SelectionResult::positives)
        .def_readonly("fallback_used", &SelectionResult::fallback_used);

    m.def("select", [](const Bag& bag, const Vec& raw_scores, const SelectorConfig& cfg) {
        return select(bag, raw_scores, cfg);
    });

    // ---- experiments ----
    m.def("default_config_json", []() { return experiment_config_to_json(default_experiment_config()); });
    m.def("run_experiment", [](const std::string& config_json) {
        ExperimentConfig cfg = experiment_config_from_json(config_json);
        return report_json(run_experiment(cfg));
    });
    m.def("checkpoint_roundtrip_ok", [](const ModelState& model, const std::string& path) {
        write_checkpoint_file(model, path);
        return read_checkpoint_file(path) == model;
    });
    m.def("run_verification", [](uint64_t seed) {
        std::vector<CheckResult> rs = run_verification(seed);
        py::list out;
        for (const CheckResult& r : rs)
            out.append(py::make_tuple(r.name, r.pass, r.max_err));
        return out;
    });

    m.attr("__version__") = "0.1.0";
}
