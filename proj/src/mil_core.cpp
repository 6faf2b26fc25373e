#include "pagmil/mil_core.hpp"

#include <cmath>
#include <stdexcept>

#include "pagmil/errors.hpp"
#include "pagmil/rng.hpp"

namespace pagmil {

ModelState init_model(const ModelDims& dims, uint64_t seed) {
    if (dims.feature_dim < 1 || dims.attn_hidden < 1 || dims.thumb_side < 1 ||
        dims.prompt_hidden < 1 || dims.p_dim < 1)
        throw ConfigError("init_model: all dimensions must be >= 1");
    ModelState m;
    m.dims = dims;

    double bound = 1.0 / std::sqrt(double(dims.feature_dim));
    Rng rng(seed_mix(seed, "attn"));
    m.attn.V = Mat(dims.attn_hidden, dims.feature_dim);
    m.attn.U = Mat(dims.attn_hidden, dims.feature_dim);
    m.attn.w.assign(dims.attn_hidden, 0.0);
    for (double& v : m.attn.V.a) v = rng.uniform(-bound, bound);
    for (double& v : m.attn.U.a) v = rng.uniform(-bound, bound);
    double wbound = 1.0 / std::sqrt(double(dims.attn_hidden));
    for (double& v : m.attn.w) v = rng.uniform(-wbound, wbound);

    Rng rng_inst(seed_mix(seed, "inst"));
    m.inst.W = Mat(2, dims.feature_dim);
    m.inst.b.assign(2, 0.0);
    for (double& v : m.inst.W.a) v = rng_inst.uniform(-bound, bound);

    m.pgen = init_prompt_generator(dims.thumb_side, dims.prompt_hidden, dims.p_dim,
                                   seed_mix(seed, "pgen"));
    return m;
}

AttentionScores score_patches(const Bag& bag, const AttentionNetParams& params) {
    if (bag.features.cols != params.V.cols)
        throw std::invalid_argument("score_patches: feature dim " +
                                    std::to_string(bag.features.cols) + " != scorer dim " +
                                    std::to_string(params.V.cols));
    const int n = bag.size();
    AttentionScores out;
    out.raw.resize(n);
    for (int i = 0; i < n; ++i) {
        auto h = bag.features.row(i);
        double s = 0.0;
        for (int j = 0; j < params.V.rows; ++j) {
            double t = std::tanh(dot(params.V.row(j), h));
            double g = 1.0 / (1.0 + std::exp(-dot(params.U.row(j), h)));
            s += params.w[j] * t * g;
        }
        out.raw[i] = s;
    }
    out.normalized = softmax(out.raw);
    return out;
}

SlideEmbedding aggregate(const Bag& bag, const AttentionScores& scores) {
    if (int(scores.normalized.size()) != bag.size())
        throw std::invalid_argument("aggregate: score/bag size mismatch");
    SlideEmbedding e;
    e.m.assign(bag.features.cols, 0.0);
    for (int i = 0; i < bag.size(); ++i) axpy(scores.normalized[i], bag.features.row(i), e.m);
    return e;
}

LossGrad smooth_svm_loss(const Vec& scores, int label, double tau) {
    if (tau <= 0.0) throw ConfigError("smooth_svm_loss: tau must be > 0");
    const int c = int(scores.size());
    if (c < 2) throw std::invalid_argument("smooth_svm_loss: need >= 2 classes");
    if (label < 0 || label >= c) throw std::invalid_argument("smooth_svm_loss: label out of range");
    Vec shifted(c);
    for (int j = 0; j < c; ++j) {
        double margin = j == label ? 0.0 : 1.0;
        shifted[j] = (margin + scores[j] - scores[label]) / tau;
    }
    LossGrad out;
    out.loss = tau * logsumexp(shifted);
    out.grad = softmax(shifted);
    out.grad[label] -= 1.0;
    return out;
}

LossGrad slide_loss(const Vec& logits, int label) {
    const int c = int(logits.size());
    if (label < 0 || label >= c) throw std::invalid_argument("slide_loss: label out of range");
    LossGrad out;
    out.loss = logsumexp(logits) - logits[label];
    out.grad = softmax(logits);
    out.grad[label] -= 1.0;
    return out;
}

namespace {

struct Forward {
    AttentionScores scores;
    SlideEmbedding embedding;
    Vec logits;
    std::optional<SelectionResult> selection;
    Vec prompt;
    double slide = 0.0, instance = 0.0, intra = 0.0, inter = 0.0, total = 0.0;
};

const Head& require_active_head(const ModelState& model) {
    if (!model.heads.has_active())
        throw std::logic_error("train step: no active head; call new_head first");
    const Head& h = model.heads.head(model.heads.active_id());
    if (h.frozen) throw std::logic_error("train step: active head is frozen");
    return h;
}

Forward forward_pass(const ModelState& model, const Bag& bag, const StepContext& ctx) {
    Forward f;
    const Head& head = require_active_head(model);
    if (bag.label < 0 || bag.label >= head.classes())
        throw std::invalid_argument("train step: bag label " + std::to_string(bag.label) +
                                    " out of range for head with " +
                                    std::to_string(head.classes()) + " classes");

    f.scores = score_patches(bag, model.attn);
    if (ctx.use_selector) f.selection = select(bag, f.scores.raw, ctx.selector);
    f.embedding = aggregate(bag, f.scores);
    f.logits = predict(f.embedding, head);
    f.slide = slide_loss(f.logits, bag.label).loss;

    if (ctx.use_selector) {
        // Mean smooth-SVM loss over the 2B pseudo-labeled instances.
        double acc = 0.0;
        for (int idx : f.selection->positives) {
            Vec s = matvec(model.inst.W, bag.features.row(idx));
            s[0] += model.inst.b[0];
            s[1] += model.inst.b[1];
            acc += smooth_svm_loss(s, 1, ctx.svm_tau).loss;
        }
        for (int idx : f.selection->negatives) {
            Vec s = matvec(model.inst.W, bag.features.row(idx));
            s[0] += model.inst.b[0];
            s[1] += model.inst.b[1];
            acc += smooth_svm_loss(s, 0, ctx.svm_tau).loss;
        }
        f.instance = acc / double(f.selection->positives.size() + f.selection->negatives.size());
    }

    if (ctx.use_prompt_losses) {
        if (!ctx.epoch_mean_prompt)
            throw std::logic_error("train step: prompt losses need an epoch mean prompt");
        f.prompt = generate_prompt(bag.thumbnail, model.pgen);
        f.intra = intra_loss({f.prompt}, *ctx.epoch_mean_prompt).loss;
        f.inter = inter_loss({f.prompt}, model.prompts, ctx.inter_variant).loss;
    }

    f.total = f.slide + ctx.weights.instance * f.instance + ctx.weights.intra * f.intra +
              ctx.weights.inter * f.inter;
    return f;
}

} // namespace

double total_loss(const ModelState& model, const Bag& bag, const StepContext& ctx) {
    return forward_pass(model, bag, ctx).total;
}

StepDiagnostics compute_gradients(const ModelState& model, const Bag& bag, const StepContext& ctx,
                                  ModelGrads& grads) {
    const Head& head = require_active_head(model);
    Forward f = forward_pass(model, bag, ctx);
    const int n = bag.size();
    const int d = model.dims.feature_dim;
    const int hidden = model.dims.attn_hidden;

    grads.dV = Mat(hidden, d);
    grads.dU = Mat(hidden, d);
    grads.dw.assign(hidden, 0.0);
    grads.dWinst = Mat(2, d);
    grads.dbinst.assign(2, 0.0);
    grads.dWhead = Mat(head.classes(), d);
    grads.dbhead.assign(head.classes(), 0.0);

    // Slide cross-entropy -> head and, through M and the softmax, the scorer.
    Vec dlogits = slide_loss(f.logits, bag.label).grad;
    add_outer(grads.dWhead, dlogits, f.embedding.m);
    axpy(1.0, dlogits, grads.dbhead);

    Vec dM = matvec_t(head.W, dlogits);
    // dL/da_i = h_i . dM ; softmax backward: dL/ds_i = a_i (dL/da_i - sum_j a_j dL/da_j)
    Vec da(n);
    double mix = 0.0;
    for (int i = 0; i < n; ++i) {
        da[i] = dot(bag.features.row(i), dM);
        mix += f.scores.normalized[i] * da[i];
    }
    for (int i = 0; i < n; ++i) {
        double ds = f.scores.normalized[i] * (da[i] - mix);
        if (ds == 0.0) continue;
        auto h = bag.features.row(i);
        for (int j = 0; j < hidden; ++j) {
            double tv = std::tanh(dot(model.attn.V.row(j), h));
            double gv = 1.0 / (1.0 + std::exp(-dot(model.attn.U.row(j), h)));
            grads.dw[j] += ds * tv * gv;
            double dt = ds * model.attn.w[j] * gv * (1.0 - tv * tv);
            double dg = ds * model.attn.w[j] * tv * gv * (1.0 - gv);
            axpy(dt, h, grads.dV.row(j));
            axpy(dg, h, grads.dU.row(j));
        }
    }

    // Instance branch: selection is a constant of the step.
    if (ctx.use_selector) {
        double scale =
            ctx.weights.instance /
            double(f.selection->positives.size() + f.selection->negatives.size());
        auto accumulate = [&](int idx, int label) {
            auto h = bag.features.row(idx);
            Vec s = matvec(model.inst.W, h);
            s[0] += model.inst.b[0];
            s[1] += model.inst.b[1];
            Vec g = smooth_svm_loss(s, label, ctx.svm_tau).grad;
            add_outer(grads.dWinst, g, h, scale);
            axpy(scale, g, grads.dbinst);
        };
        for (int idx : f.selection->positives) accumulate(idx, 1);
        for (int idx : f.selection->negatives) accumulate(idx, 0);
    }

    // Prompt branch: intra pulls toward the epoch mean, inter repels stored means.
    if (ctx.use_prompt_losses) {
        PromptLoss li = intra_loss({f.prompt}, *ctx.epoch_mean_prompt);
        PromptLoss le = inter_loss({f.prompt}, model.prompts, ctx.inter_variant);
        Vec dprompt(f.prompt.size(), 0.0);
        axpy(ctx.weights.intra, li.grads[0], dprompt);
        axpy(ctx.weights.inter, le.grads[0], dprompt);
        prompt_backward(bag.thumbnail, model.pgen, dprompt, grads.pgen);
    } else {
        grads.pgen.dW1 = Mat(model.pgen.W1.rows, model.pgen.W1.cols);
        grads.pgen.db1.assign(model.pgen.b1.size(), 0.0);
        grads.pgen.dW2 = Mat(model.pgen.W2.rows, model.pgen.W2.cols);
        grads.pgen.db2.assign(model.pgen.b2.size(), 0.0);
    }

    StepDiagnostics diag;
    diag.slide = f.slide;
    diag.instance = f.instance;
    diag.intra = f.intra;
    diag.inter = f.inter;
    diag.total = f.total;
    diag.selection = std::move(f.selection);
    diag.scores = std::move(f.scores);
    diag.prompt = std::move(f.prompt);
    return diag;
}

void SgdOptimizer::apply(const std::string& key, std::vector<double>& param,
                         const std::vector<double>& grad) {
    if (param.size() != grad.size())
        throw std::invalid_argument("SgdOptimizer::apply: size mismatch for " + key);
    Vec& v = velocity_[key];
    if (v.size() != param.size()) v.assign(param.size(), 0.0);
    for (size_t i = 0; i < param.size(); ++i) {
        v[i] = cfg_.momentum * v[i] - cfg_.lr * grad[i];
        param[i] += v[i];
    }
}

StepDiagnostics train_step(ModelState& model, const Bag& bag, const StepContext& ctx,
                           SgdOptimizer& opt) {
    ModelGrads g;
    StepDiagnostics diag = compute_gradients(model, bag, ctx, g);

    opt.apply("attn.V", model.attn.V.a, g.dV.a);
    opt.apply("attn.U", model.attn.U.a, g.dU.a);
    opt.apply("attn.w", model.attn.w, g.dw);
    if (ctx.use_selector) {
        opt.apply("inst.W", model.inst.W.a, g.dWinst.a);
        opt.apply("inst.b", model.inst.b, g.dbinst);
    }
    if (ctx.use_prompt_losses) {
        opt.apply("pgen.W1", model.pgen.W1.a, g.pgen.dW1.a);
        opt.apply("pgen.b1", model.pgen.b1, g.pgen.db1);
        opt.apply("pgen.W2", model.pgen.W2.a, g.pgen.dW2.a);
        opt.apply("pgen.b2", model.pgen.b2, g.pgen.db2);
    }
    Head& head = model.heads.active();
    std::string hk = "head." + std::to_string(model.heads.active_id());
    opt.apply(hk + ".W", head.W.a, g.dWhead.a);
    opt.apply(hk + ".b", head.b, g.dbhead);
    return diag;
}

} // namespace pagmil
