#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "pagmil/errors.hpp"
#include "pagmil/numerics.hpp"
#include "pagmil/rng.hpp"
#include "pagmil/verify.hpp"

using namespace pagmil;

TEST_CASE("l2_distance basics") {
    CHECK(l2_distance(Vec{1, 2, 3}, Vec{1, 2, 3}) == 0.0);
    CHECK(l2_distance(Vec{0, 0}, Vec{3, 4}) == doctest::Approx(5.0));
    CHECK_THROWS_AS(l2_distance(Vec{1}, Vec{1, 2}), std::invalid_argument);

    // componentwise oracle on a random 16-dim pair
    Rng rng(7);
    Vec a(16), b(16);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    double sq = 0;
    for (int i = 0; i < 16; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(l2_distance(a, b) == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
    CHECK(l2_distance(a, b) == l2_distance(b, a));
}

TEST_CASE("l2_distance triangle inequality on random triples") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Vec a(8), b(8), c(8);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        for (auto& x : c) x = rng.normal();
        CHECK(l2_distance(a, c) <= l2_distance(a, b) + l2_distance(b, c) + 1e-12);
    }
}

TEST_CASE("cosine_similarity basics") {
    CHECK(cosine_similarity(Vec{1, 1}, Vec{1, 1}) == doctest::Approx(1.0));
    CHECK(cosine_similarity(Vec{1, 0}, Vec{0, 1}) == doctest::Approx(0.0));
    CHECK(cosine_similarity(Vec{2, 0}, Vec{1, 1}) == doctest::Approx(0.70710678).epsilon(1e-9));

    bool zero = false;
    CHECK(cosine_similarity(Vec{0, 0}, Vec{1, 2}, &zero) == 0.0);
    CHECK(zero);
}

TEST_CASE("cosine_similarity invariant under positive scaling") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Vec a(6), b(6);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        double s1 = 0.01 + 10 * rng.uniform();
        double s2 = 0.01 + 10 * rng.uniform();
        Vec a2 = a, b2 = b;
        for (auto& x : a2) x *= s1;
        for (auto& x : b2) x *= s2;
        CHECK(std::abs(cosine_similarity(a, b) - cosine_similarity(a2, b2)) < 1e-9);
    }
}

TEST_CASE("softmax and logsumexp") {
    Vec s = softmax(Vec{0, 0});
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));

    Vec big = softmax(Vec{1000, 0});
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(logsumexp(Vec{1000, 0})));

    // shift invariance
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        Vec v(5);
        for (auto& x : v) x = rng.normal(0, 3);
        double c = rng.normal(0, 50);
        Vec shifted = v;
        for (auto& x : shifted) x += c;
        Vec s1 = softmax(v), s2 = softmax(shifted);
        double sum = 0;
        for (size_t i = 0; i < v.size(); ++i) {
            CHECK(std::abs(s1[i] - s2[i]) < 1e-12);
            sum += s1[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("kmeans degenerate and separated cases") {
    std::vector<Point2> same(5, Point2{3, 4});
    KMeansResult r = kmeans(same, 1, 5, 50, 42);
    CHECK(r.centroids.size() == 1);
    CHECK(r.centroids[0][0] == doctest::Approx(3.0));
    CHECK(r.centroids[0][1] == doctest::Approx(4.0));
    CHECK(r.inertia == doctest::Approx(0.0));

    // two well-separated pairs split into one cluster each
    std::vector<Point2> pairs{{0, 0}, {0, 1}, {10, 10}, {10, 11}};
    KMeansResult r2 = kmeans(pairs, 2, 10, 50, 1);
    CHECK(r2.assignment[0] == r2.assignment[1]);
    CHECK(r2.assignment[2] == r2.assignment[3]);
    CHECK(r2.assignment[0] != r2.assignment[2]);
    CHECK(r2.inertia == doctest::Approx(best_two_partition_inertia(pairs)));

    CHECK_THROWS_AS(kmeans(std::vector<Point2>{{0, 0}}, 2, 1, 10, 0), std::invalid_argument);
}

TEST_CASE("kmeans matches exhaustive 2-partition oracle on small instances") {
    int hits = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(seed_mix(5, "kmeans-test", uint64_t(trial)));
        int n = 6;
        std::vector<Point2> pts(n);
        for (auto& p : pts) p = {int(rng.next_below(10)), int(rng.next_below(10))};
        KMeansResult km = kmeans(pts, 2, 20, 100, seed_mix(5, "kmeans-seed", uint64_t(trial)));
        if (km.inertia <= best_two_partition_inertia(pts) + 1e-9) ++hits;
    }
    CHECK(hits >= 95);
}

TEST_CASE("kmeans inertia trace never increases") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Point2> pts(30);
        for (auto& p : pts) p = {int(rng.next_below(20)), int(rng.next_below(20))};
        KMeansResult km = kmeans(pts, 4, 3, 100, trial);
        for (size_t i = 1; i < km.inertia_trace.size(); ++i)
            CHECK(km.inertia_trace[i] <= km.inertia_trace[i - 1] + 1e-9);
    }
}

TEST_CASE("kmeans deterministic given seed") {
    Rng rng(29);
    std::vector<Point2> pts(25);
    for (auto& p : pts) p = {int(rng.next_below(16)), int(rng.next_below(16))};
    KMeansResult a = kmeans(pts, 3, 8, 100, 99);
    KMeansResult b = kmeans(pts, 3, 8, 100, 99);
    CHECK(a.assignment == b.assignment);
    CHECK(a.centroids == b.centroids);
    CHECK(a.inertia == b.inertia);
}

TEST_CASE("auc_binary basics") {
    CHECK(auc_binary(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
    CHECK(auc_binary(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0}) ==
          doctest::Approx(0.5));
    CHECK_THROWS_AS(auc_binary(std::vector<double>{1, 2}, std::vector<int>{1, 1}),
                    UndefinedMetricError);
}

TEST_CASE("auc_binary equals pair-counting oracle on 200 random instances") {
    Rng rng(31);
    int n = 200;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        scores[i] = std::round(rng.uniform() * 10) / 10; // force ties
        labels[i] = int(rng.next_below(2));
    }
    labels[0] = 0;
    labels[1] = 1;
    CHECK(std::abs(auc_binary(scores, labels) - auc_pair_counting(scores, labels)) < 1e-12);
}

TEST_CASE("auc_binary invariant under strictly monotone transforms") {
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 40;
        std::vector<double> scores(n), warped(n);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) {
            scores[i] = rng.normal();
            warped[i] = std::exp(scores[i]) + 3.0; // strictly increasing map
            labels[i] = int(rng.next_below(2));
        }
        labels[0] = 0;
        labels[1] = 1;
        CHECK(auc_binary(scores, labels) == doctest::Approx(auc_binary(warped, labels)).epsilon(1e-12));
    }
}

TEST_CASE("grad_check validates an exact quadratic gradient") {
    Rng rng(41);
    Vec x(10);
    for (auto& v : x) v = rng.normal();
    auto f = [](const Vec& v) { return dot(v, v); };
    Vec analytic(10);
    for (int i = 0; i < 10; ++i) analytic[i] = 2 * x[i];
    CHECK(grad_check(f, x, analytic) < 1e-7);

    // negative control: a perturbed gradient must be flagged
    Vec wrong = analytic;
    wrong[3] += 0.5;
    CHECK(grad_check(f, x, wrong) > 1e-2);
}

TEST_CASE("matvec helpers agree with naive loops") {
    Rng rng(43);
    Mat a(4, 6);
    for (auto& v : a.a) v = rng.normal();
    Vec x(6), y(4);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();

    Vec ax = matvec(a, x);
    Vec aty = matvec_t(a, y);
    for (int i = 0; i < 4; ++i) {
        double s = 0;
        for (int j = 0; j < 6; ++j) s += a(i, j) * x[j];
        CHECK(ax[i] == doctest::Approx(s).epsilon(1e-12));
    }
    for (int j = 0; j < 6; ++j) {
        double s = 0;
        for (int i = 0; i < 4; ++i) s += a(i, j) * y[i];
        CHECK(aty[j] == doctest::Approx(s).epsilon(1e-12));
    }
}
