#include "pagmil/prompt_guide.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pagmil/errors.hpp"
#include "pagmil/rng.hpp"

namespace pagmil {

PromptGeneratorParams init_prompt_generator(int thumb_side, int hidden, int p_dim, uint64_t seed) {
    if (thumb_side < 1 || hidden < 1 || p_dim < 1)
        throw std::invalid_argument("init_prompt_generator: all dimensions must be >= 1");
    int input = thumb_side * thumb_side * 3;
    PromptGeneratorParams p;
    p.W1 = Mat(hidden, input);
    p.b1.assign(hidden, 0.0);
    p.W2 = Mat(p_dim, hidden);
    p.b2.assign(p_dim, 0.0);
    Rng rng(seed);
    double bound1 = 1.0 / std::sqrt(double(input));
    for (double& w : p.W1.a) w = rng.uniform(-bound1, bound1);
    double bound2 = 1.0 / std::sqrt(double(hidden));
    for (double& w : p.W2.a) w = rng.uniform(-bound2, bound2);
    return p;
}

namespace {

/// Pixels arrive in [0,1]; centering removes the large common-mode component
/// so hidden units respond to the thumbnail pattern, not its overall level.
Vec centered_input(const Raster& thumbnail) {
    Vec x(thumbnail.rgb.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] = 2.0 * (thumbnail.rgb[i] - 0.5);
    return x;
}

} // namespace

Vec generate_prompt(const Raster& thumbnail, const PromptGeneratorParams& params) {
    if (int(thumbnail.rgb.size()) != params.input_dim())
        throw std::invalid_argument("generate_prompt: thumbnail size " +
                                    std::to_string(thumbnail.rgb.size()) +
                                    " does not match generator input " +
                                    std::to_string(params.input_dim()));
    Vec x = centered_input(thumbnail);
    Vec h = matvec(params.W1, x);
    for (size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + params.b1[i]);
    Vec m = matvec(params.W2, h);
    for (size_t i = 0; i < m.size(); ++i) m[i] += params.b2[i];
    return m;
}

void prompt_backward(const Raster& thumbnail, const PromptGeneratorParams& params,
                     std::span<const double> d_prompt, PromptGenGrads& grads) {
    if (grads.dW1.rows == 0) {
        grads.dW1 = Mat(params.W1.rows, params.W1.cols);
        grads.db1.assign(params.b1.size(), 0.0);
        grads.dW2 = Mat(params.W2.rows, params.W2.cols);
        grads.db2.assign(params.b2.size(), 0.0);
    }
    // Recompute the hidden activations; prompts are cheap at desk scale.
    Vec x = centered_input(thumbnail);
    Vec pre = matvec(params.W1, x);
    Vec h(pre.size());
    for (size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(pre[i] + params.b1[i]);

    add_outer(grads.dW2, d_prompt, h);
    axpy(1.0, d_prompt, grads.db2);

    Vec dh = matvec_t(params.W2, d_prompt);
    for (size_t i = 0; i < dh.size(); ++i) dh[i] *= 1.0 - h[i] * h[i];
    add_outer(grads.dW1, dh, x);
    axpy(1.0, dh, grads.db1);
}

PromptLoss intra_loss(const std::vector<Vec>& prompts, const Vec& epoch_mean) {
    if (prompts.empty()) throw std::invalid_argument("intra_loss: empty prompt list");
    PromptLoss out;
    out.grads.reserve(prompts.size());
    for (const Vec& m : prompts) {
        if (m.size() != epoch_mean.size())
            throw std::invalid_argument("intra_loss: prompt dimension mismatch");
        Vec g(m.size());
        double s = 0.0;
        for (size_t k = 0; k < m.size(); ++k) {
            g[k] = m[k] - epoch_mean[k];
            s += g[k] * g[k];
        }
        out.loss += 0.5 * s;
        out.grads.push_back(std::move(g));
    }
    return out;
}

PromptLoss inter_loss(const std::vector<Vec>& prompts, const TaskPromptRegistry& registry,
                      InterVariant variant) {
    PromptLoss out;
    out.grads.assign(prompts.size(), Vec());
    for (size_t i = 0; i < prompts.size(); ++i) out.grads[i].assign(prompts[i].size(), 0.0);
    size_t t_count = registry.entries.size();
    if (t_count == 0 || prompts.empty()) return out;

    const double margin = registry.min_margin;
    const double norm = 1.0 / (2.0 * double(prompts.size()) * double(t_count));
    for (size_t i = 0; i < prompts.size(); ++i) {
        const Vec& m = prompts[i];
        for (const TaskPromptEntry& e : registry.entries) {
            double d = l2_distance(m, e.mean_prompt);
            double hinge = std::max(0.0, margin - d);
            // diff = m - mean_t ; d(d)/dm = diff / d (subgradient 0 at d = 0)
            if (variant == InterVariant::HingeOnly) {
                out.loss += norm * hinge * hinge;
                if (hinge > 0.0 && d > 0.0) {
                    double coeff = -2.0 * norm * hinge / d;
                    for (size_t k = 0; k < m.size(); ++k)
                        out.grads[i][k] += coeff * (m[k] - e.mean_prompt[k]);
                }
            } else {
                out.loss += -norm * (d * d + hinge * hinge);
                double coeff = -2.0 * norm; // from the d^2 term: -norm * 2d * diff/d
                for (size_t k = 0; k < m.size(); ++k)
                    out.grads[i][k] += coeff * (m[k] - e.mean_prompt[k]);
                if (hinge > 0.0 && d > 0.0) {
                    double hc = 2.0 * norm * hinge / d;
                    for (size_t k = 0; k < m.size(); ++k)
                        out.grads[i][k] += hc * (m[k] - e.mean_prompt[k]);
                }
            }
        }
    }
    return out;
}

void finalize_task(const std::vector<Vec>& final_epoch_prompts, TaskPromptRegistry& registry,
                   int task_id, int head_id) {
    if (final_epoch_prompts.empty())
        throw std::invalid_argument("finalize_task: no prompts to average");
    for (const TaskPromptEntry& e : registry.entries)
        if (e.task_id == task_id)
            throw std::logic_error("finalize_task: task " + std::to_string(task_id) +
                                   " already finalized");
    Vec mean(final_epoch_prompts[0].size(), 0.0);
    for (const Vec& m : final_epoch_prompts) {
        if (m.size() != mean.size())
            throw std::invalid_argument("finalize_task: prompt dimension mismatch");
        axpy(1.0, m, mean);
    }
    for (double& v : mean) v /= double(final_epoch_prompts.size());
    registry.entries.push_back({task_id, std::move(mean), head_id});
}

RouteResult route(std::span<const double> prompt, const TaskPromptRegistry& registry) {
    if (registry.entries.empty())
        throw std::logic_error("route: prompt registry is empty; train a task first");
    RouteResult best;
    bool first = true;
    for (const TaskPromptEntry& e : registry.entries) {
        double sim = cosine_similarity(prompt, e.mean_prompt);
        bool wins = first || sim > best.similarity ||
                    (sim == best.similarity && e.task_id < best.task_id);
        if (wins) {
            best = {e.task_id, e.head_id, sim};
            first = false;
        }
    }
    return best;
}

} // namespace pagmil
