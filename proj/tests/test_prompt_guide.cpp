#include <cmath>
#include <stdexcept>

#include "doctest.h"

#include "pagmil/prompt_guide.hpp"
#include "pagmil/rng.hpp"
#include "pagmil/verify.hpp"

using namespace pagmil;

namespace {

Raster random_thumb(int side, uint64_t seed) {
    Raster r;
    r.side = side;
    r.rgb.resize(size_t(side) * side * 3);
    Rng rng(seed);
    for (auto& v : r.rgb) v = rng.uniform();
    return r;
}

} // namespace

TEST_CASE("generate_prompt zero weights and determinism") {
    PromptGeneratorParams p = init_prompt_generator(4, 5, 3, 1);
    std::fill(p.W1.a.begin(), p.W1.a.end(), 0.0);
    std::fill(p.W2.a.begin(), p.W2.a.end(), 0.0);
    Vec zero = generate_prompt(random_thumb(4, 2), p);
    for (double v : zero) CHECK(v == 0.0);

    PromptGeneratorParams q = init_prompt_generator(4, 5, 3, 7);
    Raster t = random_thumb(4, 3);
    CHECK(generate_prompt(t, q) == generate_prompt(t, q));
    CHECK_THROWS_AS(generate_prompt(random_thumb(5, 3), q), std::invalid_argument);
}

TEST_CASE("prompt generator gradients match finite differences") {
    CHECK(check_prompt_generator_grad(99, 10) < 1e-4);
}

TEST_CASE("intra_loss values and gradients") {
    // all prompts equal the mean
    std::vector<Vec> same{{1, 2}, {1, 2}};
    CHECK(intra_loss(same, Vec{1, 2}).loss == 0.0);

    // hand evaluation: prompts (0,0) and (2,0) around mean (1,0)
    std::vector<Vec> pair{{0, 0}, {2, 0}};
    PromptLoss out = intra_loss(pair, Vec{1, 0});
    CHECK(out.loss == doctest::Approx(1.0));
    CHECK(out.grads[0][0] == doctest::Approx(-1.0));
    CHECK(out.grads[1][0] == doctest::Approx(1.0));

    CHECK(check_intra_grad(7, 10) < 1e-4);

    // non-negativity on random prompts
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec> prompts(3, Vec(4));
        for (auto& p : prompts)
            for (auto& v : p) v = rng.normal();
        Vec mean(4);
        for (auto& v : mean) v = rng.normal();
        CHECK(intra_loss(prompts, mean).loss >= 0.0);
    }
}

TEST_CASE("inter_loss variants against hand evaluations") {
    TaskPromptRegistry reg;
    reg.min_margin = 1.0;

    // empty registry: first task contributes nothing
    std::vector<Vec> prompts{{0.5, 0.0}};
    PromptLoss empty = inter_loss(prompts, reg, InterVariant::HingeOnly);
    CHECK(empty.loss == 0.0);
    for (double g : empty.grads[0]) CHECK(g == 0.0);

    // single stored mean at distance 0.5
    reg.entries.push_back({0, Vec{0.0, 0.0}, 0});
    PromptLoss hinge = inter_loss(prompts, reg, InterVariant::HingeOnly);
    CHECK(hinge.loss == doctest::Approx(0.125)); // (1/2)(1 - 0.5)^2 / (1*1)
    PromptLoss verbatim = inter_loss(prompts, reg, InterVariant::Eq2Verbatim);
    CHECK(verbatim.loss == doctest::Approx(-0.25)); // -(1/2)(0.25 + 0.25)

    // hinge-only is zero once every distance clears the margin
    std::vector<Vec> far{{5.0, 0.0}};
    CHECK(inter_loss(far, reg, InterVariant::HingeOnly).loss == 0.0);

    CHECK(check_inter_grad(11, 10, InterVariant::HingeOnly) < 1e-4);
    CHECK(check_inter_grad(11, 10, InterVariant::Eq2Verbatim) < 1e-4);
}

TEST_CASE("hinge-only inter loss is non-negative") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        TaskPromptRegistry reg;
        reg.min_margin = 0.5 + rng.uniform();
        for (int t = 0; t < 2; ++t) {
            Vec m(3);
            for (auto& v : m) v = rng.normal();
            reg.entries.push_back({t, m, t});
        }
        std::vector<Vec> prompts(2, Vec(3));
        for (auto& p : prompts)
            for (auto& v : p) v = rng.normal();
        CHECK(inter_loss(prompts, reg, InterVariant::HingeOnly).loss >= 0.0);
    }
}

TEST_CASE("finalize_task stores immutable means") {
    TaskPromptRegistry reg;
    finalize_task({Vec{1, 0}, Vec{0, 1}}, reg, 0, 0);
    REQUIRE(reg.entries.size() == 1);
    CHECK(reg.entries[0].mean_prompt == Vec{0.5, 0.5});

    finalize_task({Vec{3, 3}}, reg, 1, 1);
    CHECK(reg.entries.size() == 2);
    CHECK(reg.entries[1].mean_prompt == Vec{3, 3});

    CHECK_THROWS_AS(finalize_task({Vec{0, 0}}, reg, 0, 2), std::logic_error);
}

TEST_CASE("route picks the most similar stored prompt") {
    TaskPromptRegistry reg;
    CHECK_THROWS_AS(route(Vec{1, 0}, reg), std::logic_error);

    reg.entries.push_back({0, Vec{1, 0}, 10});
    reg.entries.push_back({1, Vec{0, 1}, 11});

    RouteResult exact = route(Vec{1, 0}, reg);
    CHECK(exact.task_id == 0);
    CHECK(exact.head_id == 10);
    CHECK(exact.similarity == doctest::Approx(1.0));

    RouteResult near = route(Vec{0.9, 0.1}, reg);
    CHECK(near.task_id == 0);

    // scale invariance of the decision
    RouteResult scaled = route(Vec{4.5, 0.5}, reg);
    CHECK(scaled.task_id == near.task_id);
    CHECK(scaled.similarity == doctest::Approx(near.similarity).epsilon(1e-12));

    // ties break toward the earlier task: equidistant prompt
    RouteResult tie = route(Vec{1, 1}, reg);
    CHECK(tie.task_id == 0);

    // a zero prompt has no direction: every similarity is 0, earliest wins
    RouteResult zero = route(Vec{0, 0}, reg);
    CHECK(zero.task_id == 0);
    CHECK(zero.similarity == 0.0);
}
