#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "pagmil/errors.hpp"
#include "pagmil/mil_core.hpp"
#include "pagmil/rng.hpp"
#include "pagmil/synth_data.hpp"

using namespace pagmil;

namespace {

Bag random_bag(int n, int d, int thumb, uint64_t seed, int label = 1) {
    Bag bag;
    Rng rng(seed);
    bag.features = Mat(n, d);
    for (auto& v : bag.features.a) v = rng.normal();
    int g = int(std::ceil(std::sqrt(double(n))));
    for (int i = 0; i < n; ++i) bag.coords.push_back({i / g, i % g});
    bag.mask.assign(n, PatchTag::Normal);
    bag.label = label;
    bag.thumbnail.side = thumb;
    bag.thumbnail.rgb.resize(size_t(thumb) * thumb * 3);
    for (auto& v : bag.thumbnail.rgb) v = rng.uniform();
    return bag;
}

ModelDims small_dims() { return {6, 5, 4, 5, 4}; }

} // namespace

TEST_CASE("score_patches symmetry and zero-parameter cases") {
    ModelState model = init_model(small_dims(), 3);
    Bag bag = random_bag(8, 6, 4, 10);
    // identical patches share one score and uniform attention
    for (int i = 1; i < bag.size(); ++i)
        for (int j = 0; j < 6; ++j) bag.features(i, j) = bag.features(0, j);
    AttentionScores s = score_patches(bag, model.attn);
    for (int i = 1; i < 8; ++i) CHECK(s.raw[i] == doctest::Approx(s.raw[0]));
    for (int i = 0; i < 8; ++i) CHECK(s.normalized[i] == doctest::Approx(1.0 / 8));

    AttentionNetParams zero = model.attn;
    std::fill(zero.V.a.begin(), zero.V.a.end(), 0.0);
    std::fill(zero.U.a.begin(), zero.U.a.end(), 0.0);
    Bag varied = random_bag(8, 6, 4, 11);
    AttentionScores sz = score_patches(varied, zero);
    for (double raw : sz.raw) CHECK(raw == 0.0);
    for (double a : sz.normalized) CHECK(a == doctest::Approx(0.125));
}

TEST_CASE("attention normalization sums to one") {
    ModelState model = init_model(small_dims(), 5);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Bag bag = random_bag(5 + int(seed % 30), 6, 4, seed);
        AttentionScores s = score_patches(bag, model.attn);
        CHECK(std::abs(std::accumulate(s.normalized.begin(), s.normalized.end(), 0.0) - 1.0) <
              1e-9);
    }
}

TEST_CASE("aggregate matches direct weighted sums") {
    ModelState model = init_model(small_dims(), 7);
    Bag one = random_bag(1, 6, 4, 20);
    AttentionScores s1 = score_patches(one, model.attn);
    SlideEmbedding e1 = aggregate(one, s1);
    for (int j = 0; j < 6; ++j) CHECK(e1.m[j] == doctest::Approx(one.features(0, j)));

    Bag bag = random_bag(9, 6, 4, 21);
    AttentionScores uniform;
    uniform.raw.assign(9, 0.0);
    uniform.normalized.assign(9, 1.0 / 9);
    SlideEmbedding mean = aggregate(bag, uniform);
    for (int j = 0; j < 6; ++j) {
        double m = 0;
        for (int i = 0; i < 9; ++i) m += bag.features(i, j) / 9;
        CHECK(mean.m[j] == doctest::Approx(m).epsilon(1e-12));
    }

    AttentionScores s = score_patches(bag, model.attn);
    SlideEmbedding e = aggregate(bag, s);
    for (int j = 0; j < 6; ++j) {
        double m = 0;
        for (int i = 0; i < 9; ++i) m += s.normalized[i] * bag.features(i, j);
        CHECK(e.m[j] == doctest::Approx(m).epsilon(1e-12));
    }
}

TEST_CASE("smooth_svm_loss closed forms") {
    LossGrad a = smooth_svm_loss(Vec{10, 0}, 0, 1.0);
    CHECK(a.loss == doctest::Approx(std::log(1 + std::exp(-9.0))).epsilon(1e-9));
    LossGrad b = smooth_svm_loss(Vec{0, 0}, 0, 1.0);
    CHECK(b.loss == doctest::Approx(std::log(1 + std::exp(1.0))).epsilon(1e-9));
    // hinge limit as tau -> 0: max margin violation (here 1.0)
    LossGrad c = smooth_svm_loss(Vec{0, 0}, 0, 0.01);
    CHECK(c.loss == doctest::Approx(1.0).epsilon(0.02));

    CHECK_THROWS_AS(smooth_svm_loss(Vec{0, 0}, 0, 0.0), ConfigError);

    // gradient sums to zero across classes
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Vec scores(4);
        for (auto& s : scores) s = rng.normal(0, 2);
        LossGrad lg = smooth_svm_loss(scores, int(rng.next_below(4)), 0.7);
        CHECK(std::abs(std::accumulate(lg.grad.begin(), lg.grad.end(), 0.0)) < 1e-12);
    }
}

TEST_CASE("slide_loss trivials") {
    LossGrad big = slide_loss(Vec{30, 0}, 0);
    CHECK(big.loss == doctest::Approx(0.0).epsilon(1e-9));
    LossGrad uni = slide_loss(Vec{0, 0}, 0);
    CHECK(uni.loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("train_step with zero extra weights equals the plain attention-MIL step") {
    ModelDims dims = small_dims();
    Bag bag = random_bag(12, 6, 4, 31);

    auto run = [&](bool use_ps_pg, LossWeights w) {
        ModelState model = init_model(dims, 9);
        model.heads.new_head(2, dims.feature_dim, 100, 0);
        SgdOptimizer opt({0.05, 0.9});
        StepContext ctx;
        ctx.selector.B = 3;
        ctx.weights = w;
        Vec mean(dims.p_dim, 0.0);
        ctx.epoch_mean_prompt = &mean;
        ctx.use_selector = use_ps_pg;
        ctx.use_prompt_losses = use_ps_pg;
        train_step(model, bag, ctx, opt);
        return model;
    };

    ModelState plain = run(false, {0, 0, 0});
    ModelState zeroed = run(true, {0, 0, 0});
    CHECK(plain.attn == zeroed.attn);
    CHECK(plain.heads.all()[0].W == zeroed.heads.all()[0].W);
    CHECK(plain.heads.all()[0].b == zeroed.heads.all()[0].b);
}

TEST_CASE("train_step is deterministic from identical state") {
    ModelDims dims = small_dims();
    Bag bag = random_bag(12, 6, 4, 37);
    auto run = [&]() {
        ModelState model = init_model(dims, 5);
        model.heads.new_head(2, dims.feature_dim, 101, 0);
        SgdOptimizer opt({0.01, 0.9});
        StepContext ctx;
        ctx.selector.B = 3;
        Vec mean(dims.p_dim, 0.1);
        ctx.epoch_mean_prompt = &mean;
        for (int i = 0; i < 3; ++i) train_step(model, bag, ctx, opt);
        return model;
    };
    CHECK(run() == run());
}

TEST_CASE("train_step total-loss gradient matches finite differences") {
    ModelDims dims = small_dims();
    Bag bag = random_bag(14, 6, 4, 41);
    ModelState model = init_model(dims, 13);
    model.heads.new_head(2, dims.feature_dim, 102, 0);
    model.prompts.entries.push_back({0, Vec(dims.p_dim, 0.3), 0});

    StepContext ctx;
    ctx.selector.B = 3;
    ctx.selector.k_percent = 25.0;
    ctx.selector.seed = 7;
    ctx.weights = {0.7, 0.4, 0.3};
    Vec mean(dims.p_dim, -0.2);
    ctx.epoch_mean_prompt = &mean;

    ModelGrads grads;
    compute_gradients(model, bag, ctx, grads);

    // flatten every trainable group, probe the total loss through it
    struct Group {
        std::vector<double>* param;
        const std::vector<double>* grad;
        const char* name;
    };
    Head& head = model.heads.active();
    std::vector<Group> groups{{&model.attn.V.a, &grads.dV.a, "V"},
                              {&model.attn.U.a, &grads.dU.a, "U"},
                              {&model.attn.w, &grads.dw, "w"},
                              {&model.inst.W.a, &grads.dWinst.a, "instW"},
                              {&model.inst.b, &grads.dbinst, "instb"},
                              {&model.pgen.W1.a, &grads.pgen.dW1.a, "W1"},
                              {&model.pgen.b1, &grads.pgen.db1, "b1"},
                              {&model.pgen.W2.a, &grads.pgen.dW2.a, "W2"},
                              {&model.pgen.b2, &grads.pgen.db2, "b2"},
                              {&head.W.a, &grads.dWhead.a, "headW"},
                              {&head.b, &grads.dbhead, "headb"}};
    for (const Group& g : groups) {
        CAPTURE(g.name);
        auto f = [&](const Vec& theta) {
            std::vector<double> saved = *g.param;
            *g.param = theta;
            double loss = total_loss(model, bag, ctx);
            *g.param = saved;
            return loss;
        };
        CHECK(grad_check(f, *g.param, *g.grad) < 1e-4);
    }
}

TEST_CASE("permutation invariance of scores, embedding and logits") {
    ModelDims dims = small_dims();
    ModelState model = init_model(dims, 17);
    model.heads.new_head(2, dims.feature_dim, 103, 0);
    Bag bag = random_bag(10, 6, 4, 43);

    AttentionScores s = score_patches(bag, model.attn);
    SlideEmbedding e = aggregate(bag, s);
    Vec logits = predict(e, model.heads.head(0));

    // reverse the patch order
    Bag rev = bag;
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 6; ++j) rev.features(i, j) = bag.features(9 - i, j);
        rev.coords[i] = bag.coords[9 - i];
    }
    AttentionScores sr = score_patches(rev, model.attn);
    SlideEmbedding er = aggregate(rev, sr);
    Vec logits_r = predict(er, model.heads.head(0));
    for (int i = 0; i < 10; ++i) CHECK(sr.raw[i] == doctest::Approx(s.raw[9 - i]).epsilon(1e-12));
    for (int j = 0; j < 6; ++j) CHECK(er.m[j] == doctest::Approx(e.m[j]).epsilon(1e-9));
    for (int c = 0; c < 2; ++c) CHECK(logits_r[c] == doctest::Approx(logits[c]).epsilon(1e-9));
}

TEST_CASE("frozen heads stay bit-identical through later training") {
    ModelDims dims = small_dims();
    ModelState model = init_model(dims, 19);
    int first = model.heads.new_head(2, dims.feature_dim, 104, 0);
    SgdOptimizer opt({0.02, 0.9});
    StepContext ctx;
    ctx.selector.B = 3;
    Vec mean(dims.p_dim, 0.0);
    ctx.epoch_mean_prompt = &mean;

    Bag bag0 = random_bag(12, 6, 4, 51, 1);
    for (int i = 0; i < 5; ++i) train_step(model, bag0, ctx, opt);
    model.heads.freeze_active();
    Mat w_frozen = model.heads.head(first).W;
    Vec b_frozen = model.heads.head(first).b;

    model.heads.new_head(2, dims.feature_dim, 105, 1);
    Bag bag1 = random_bag(12, 6, 4, 52, 0);
    for (int i = 0; i < 100; ++i) train_step(model, bag1, ctx, opt);

    CHECK(model.heads.head(first).W.a == w_frozen.a);
    CHECK(model.heads.head(first).b == b_frozen);
}

TEST_CASE("train_step without an active head is an invariant violation") {
    ModelDims dims = small_dims();
    ModelState model = init_model(dims, 23);
    model.heads.new_head(2, dims.feature_dim, 106, 0);
    model.heads.freeze_active();
    Bag bag = random_bag(12, 6, 4, 53);
    SgdOptimizer opt({0.01, 0.9});
    StepContext ctx;
    ctx.selector.B = 3;
    Vec mean(dims.p_dim, 0.0);
    ctx.epoch_mean_prompt = &mean;
    CHECK_THROWS_AS(train_step(model, bag, ctx, opt), std::logic_error);
}
