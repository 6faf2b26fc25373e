#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "pagmil/patch_selector.hpp"
#include "pagmil/rng.hpp"
#include "pagmil/synth_data.hpp"
#include "pagmil/verify.hpp"

using namespace pagmil;

namespace {

Bag grid_bag(int g) {
    Bag bag;
    bag.features = Mat(g * g, 2);
    for (int r = 0; r < g; ++r)
        for (int c = 0; c < g; ++c) bag.coords.push_back({r, c});
    bag.mask.assign(g * g, PatchTag::Normal);
    return bag;
}

double mean_pairwise_distance(const std::vector<int>& idx, const std::vector<Point2>& coords) {
    double sum = 0;
    int pairs = 0;
    for (size_t a = 0; a < idx.size(); ++a)
        for (size_t b = a + 1; b < idx.size(); ++b) {
            double dr = coords[idx[a]].row - coords[idx[b]].row;
            double dc = coords[idx[a]].col - coords[idx[b]].col;
            sum += std::sqrt(dr * dr + dc * dc);
            ++pairs;
        }
    return pairs ? sum / pairs : 0.0;
}

} // namespace

TEST_CASE("select_negatives basics") {
    CHECK(select_negatives(std::vector<double>{1, 2, 3, 4}, 2) == std::vector<int>{0, 1});
    CHECK(select_negatives(std::vector<double>{5, 5, 5, 5, 5, 5}, 3) == std::vector<int>{0, 1, 2});
    CHECK_THROWS_AS(select_negatives(std::vector<double>{1, 2, 3}, 2), std::invalid_argument);

    Rng rng(3);
    std::vector<double> scores(40);
    for (auto& s : scores) s = rng.normal();
    std::vector<int> got = select_negatives(scores, 7);
    std::vector<std::pair<double, int>> ranked;
    for (int i = 0; i < 40; ++i) ranked.push_back({scores[i], i});
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> expect;
    for (int i = 0; i < 7; ++i) expect.push_back(ranked[i].second);
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
}

TEST_CASE("candidate_positives uses the ceiling rule") {
    std::vector<double> hundred(100);
    for (int i = 0; i < 100; ++i) hundred[i] = i;
    CHECK(candidate_positives(hundred, 10.0).size() == 10);

    std::vector<double> seven{1, 2, 3, 4, 5, 6, 7};
    std::vector<int> one = candidate_positives(seven, 10.0);
    CHECK(one == std::vector<int>{6});

    Rng rng(5);
    std::vector<double> scores(33);
    for (auto& s : scores) s = rng.normal();
    std::vector<int> got = candidate_positives(scores, 25.0);
    CHECK(got.size() == size_t(std::ceil(33 * 0.25)));
    std::vector<std::pair<double, int>> ranked;
    for (int i = 0; i < 33; ++i) ranked.push_back({-scores[i], i});
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> expect;
    for (size_t i = 0; i < got.size(); ++i) expect.push_back(ranked[i].second);
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
}

TEST_CASE("adjacency_filter keeps blocks, drops isolated candidates") {
    Bag bag = grid_bag(16);
    // a 2x2 block at (3,3) plus two isolated far points
    std::vector<int> block{3 * 16 + 3, 3 * 16 + 4, 4 * 16 + 3, 4 * 16 + 4};
    std::vector<int> kept = adjacency_filter(block, bag.coords, Neighborhood::Eight);
    CHECK(kept == block);

    std::vector<int> isolated{0, 3}; // Chebyshev distance 3 on row 0
    CHECK(adjacency_filter(isolated, bag.coords, Neighborhood::Eight).empty());

    // diagonal pair: adjacent under 8-conn, isolated under 4-conn
    std::vector<int> diag{0, 17};
    CHECK(adjacency_filter(diag, bag.coords, Neighborhood::Eight) == diag);
    CHECK(adjacency_filter(diag, bag.coords, Neighborhood::Four).empty());
}

TEST_CASE("adjacency_filter equals brute-force scan on random grids") {
    Bag bag = grid_bag(16);
    for (int trial = 0; trial < 30; ++trial) {
        Rng rng(seed_mix(7, "adjacency", uint64_t(trial)));
        std::vector<double> scores(bag.size());
        for (auto& s : scores) s = rng.uniform();
        for (Neighborhood nb : {Neighborhood::Eight, Neighborhood::Four}) {
            std::vector<int> cand = candidate_positives(scores, 12.0);
            CHECK(adjacency_filter(cand, bag.coords, nb) ==
                  adjacency_scan_oracle(cand, bag.coords, nb));
        }
    }
}

TEST_CASE("diversify returns survivors unchanged when they number exactly B") {
    Bag bag = grid_bag(16);
    std::vector<double> scores(bag.size(), 0.0);
    std::vector<int> survivors{10, 50, 200};
    SelectorConfig cfg;
    cfg.B = 3;
    bool fallback = false;
    std::vector<int> pos = diversify(survivors, survivors, scores, bag.coords, cfg, fallback);
    CHECK(pos == survivors);
    CHECK(!fallback);
}

TEST_CASE("diversify splits two distant blobs across clusters") {
    Bag bag = grid_bag(16);
    std::vector<double> scores(bag.size(), 0.0);
    // blob A near (2,2), blob B near (12,12), four patches each
    std::vector<int> blob_a{2 * 16 + 2, 2 * 16 + 3, 3 * 16 + 2, 3 * 16 + 3};
    std::vector<int> blob_b{12 * 16 + 12, 12 * 16 + 13, 13 * 16 + 12, 13 * 16 + 13};
    std::vector<int> survivors = blob_a;
    survivors.insert(survivors.end(), blob_b.begin(), blob_b.end());
    for (int i : survivors) scores[i] = 1.0;

    SelectorConfig cfg;
    cfg.B = 2;
    cfg.seed = 9;
    bool fallback = false;
    std::vector<int> pos = diversify(survivors, survivors, scores, bag.coords, cfg, fallback);
    REQUIRE(pos.size() == 2);
    CHECK(!fallback);
    bool in_a = std::count(blob_a.begin(), blob_a.end(), pos[0]) ||
                std::count(blob_a.begin(), blob_a.end(), pos[1]);
    bool in_b = std::count(blob_b.begin(), blob_b.end(), pos[0]) ||
                std::count(blob_b.begin(), blob_b.end(), pos[1]);
    CHECK(in_a);
    CHECK(in_b);
}

TEST_CASE("diversify fallback ladder") {
    Bag bag = grid_bag(16);
    Rng rng(11);
    std::vector<double> scores(bag.size());
    for (auto& s : scores) s = rng.uniform();

    SelectorConfig cfg;
    cfg.B = 4;
    bool fallback = false;

    // empty survivors: top-B candidates by score
    std::vector<int> cand = candidate_positives(scores, 5.0);
    std::vector<int> pos = diversify({}, cand, scores, bag.coords, cfg, fallback);
    CHECK(fallback);
    CHECK(pos.size() == 4);
    std::vector<int> ranked = cand;
    std::sort(ranked.begin(), ranked.end(),
              [&](int a, int b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
    std::set<int> expect(ranked.begin(), ranked.begin() + 4);
    for (int p : pos) CHECK(expect.count(p));

    // partial survivors are all kept
    std::vector<int> two{cand[0], cand[1]};
    pos = diversify(two, cand, scores, bag.coords, cfg, fallback);
    CHECK(fallback);
    CHECK(pos.size() == 4);
    for (int s : two) CHECK(std::count(pos.begin(), pos.end(), s) == 1);
}

TEST_CASE("select composes and keeps sets disjoint") {
    SlideSpec spec;
    spec.grid_size = 16;
    spec.feature_dim = 4;
    spec.thumb_side = 4;
    spec.n_tumor_blobs = 2;
    spec.blob_size_range = {10, 12};
    spec.n_isolated_noise = 3;
    spec.label = 1;
    spec.seed = 21;
    spec.tumor_shift.assign(4, 0.0);
    spec.tumor_shift[0] = 3.0;
    TaskStyle style;
    style.noise_scale = 1.0;
    Bag bag = generate_bag(spec, style);

    // a scorer that ranks tumor (and tumor-lookalike noise) strictly highest
    Rng jitter(22);
    std::vector<double> scores(bag.size());
    for (int i = 0; i < bag.size(); ++i)
        scores[i] = (bag.mask[i] == PatchTag::Normal ? 0.0 : 1.0) + 0.1 * jitter.uniform();

    SelectorConfig cfg; // defaults: B=8, 8-conn
    cfg.k_percent = 7.0; // top-18 of 256: only tumor/noise patches qualify
    SelectionResult res = select(bag, scores, cfg);
    CHECK(res.positives.size() == 8);
    CHECK(res.negatives.size() == 8);
    for (int p : res.positives)
        CHECK(std::count(res.negatives.begin(), res.negatives.end(), p) == 0);

    // with a strong scorer, positives are tumor and never isolated noise
    for (int p : res.positives) CHECK(bag.mask[p] == PatchTag::Tumor);

    // survivors exclude exactly the isolated candidates
    for (int c : res.candidates) {
        bool isolated = true;
        for (int q : res.candidates) {
            if (q == c) continue;
            if (std::abs(bag.coords[c].row - bag.coords[q].row) <= 1 &&
                std::abs(bag.coords[c].col - bag.coords[q].col) <= 1) {
                isolated = false;
                break;
            }
        }
        bool survived = std::count(res.survivors.begin(), res.survivors.end(), c) > 0;
        CHECK(survived == !isolated);
    }
}

TEST_CASE("select is deterministic and respects the tie rule under uniform scores") {
    Bag bag = grid_bag(16);
    std::vector<double> uniform(bag.size(), 1.0);
    SelectorConfig cfg;
    cfg.seed = 4;
    SelectionResult a = select(bag, uniform, cfg);
    SelectionResult b = select(bag, uniform, cfg);
    CHECK(a.positives == b.positives);
    CHECK(a.negatives == b.negatives);
    CHECK(a.candidates == b.candidates);

    // ties: candidates are the first ceil(n*k/100) indices
    int expect_count = int(std::ceil(256 * 0.10));
    REQUIRE(int(a.candidates.size()) == expect_count);
    for (int i = 0; i < expect_count; ++i) CHECK(a.candidates[i] == i);
    // negatives: first B indices by the tie rule
    for (int i = 0; i < cfg.B; ++i) CHECK(a.negatives[i] == i);
}

TEST_CASE("select swaps a colliding fallback positive away from negatives") {
    // k = 100% makes every patch a candidate, so bottom scores are both
    // negatives and (post-fallback) potential positives.
    Bag bag = grid_bag(8); // 64 patches
    Rng rng(31);
    std::vector<double> scores(bag.size());
    for (auto& s : scores) s = rng.uniform();
    SelectorConfig cfg;
    cfg.B = 8;
    cfg.k_percent = 100.0;
    cfg.seed = 2;
    SelectionResult res = select(bag, scores, cfg);
    CHECK(res.positives.size() == 8);
    for (int p : res.positives)
        CHECK(std::count(res.negatives.begin(), res.negatives.end(), p) == 0);
}

TEST_CASE("diversified positives spread wider than naive top-B on multi-blob bags") {
    int wins = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        SlideSpec spec;
        spec.grid_size = 16;
        spec.feature_dim = 4;
        spec.thumb_side = 4;
        spec.n_tumor_blobs = 3;
        spec.blob_size_range = {5, 8};
        spec.label = 1;
        spec.seed = seed_mix(13, "diversity", uint64_t(trial));
        spec.tumor_shift.assign(4, 0.0);
        spec.tumor_shift[0] = 3.0;
        TaskStyle style;
        style.noise_scale = 1.0;
        Bag bag = generate_bag(spec, style);

        // score concentrates on one blob, like an overconfident scorer
        Rng rng(seed_mix(13, "scores", uint64_t(trial)));
        std::vector<double> scores(bag.size());
        int first_blob_anchor = -1;
        for (int i = 0; i < bag.size(); ++i)
            if (bag.mask[i] == PatchTag::Tumor) {
                first_blob_anchor = i;
                break;
            }
        for (int i = 0; i < bag.size(); ++i) {
            double s = bag.mask[i] == PatchTag::Tumor ? 1.0 : 0.0;
            if (bag.mask[i] == PatchTag::Tumor &&
                std::abs(bag.coords[i].row - bag.coords[first_blob_anchor].row) <= 3 &&
                std::abs(bag.coords[i].col - bag.coords[first_blob_anchor].col) <= 3)
                s += 0.5;
            scores[i] = s + 0.05 * rng.normal();
        }

        SelectorConfig cfg;
        cfg.B = 3;
        cfg.seed = seed_mix(13, "selector", uint64_t(trial));
        SelectionResult res = select(bag, scores, cfg);

        std::vector<int> ranked(bag.size());
        for (int i = 0; i < bag.size(); ++i) ranked[i] = i;
        std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
            return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
        });
        std::vector<int> naive(ranked.begin(), ranked.begin() + cfg.B);

        if (mean_pairwise_distance(res.positives, bag.coords) >=
            mean_pairwise_distance(naive, bag.coords))
            ++wins;
    }
    CHECK(wins >= 90);
}
