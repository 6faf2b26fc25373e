#include "pagmil/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pagmil/errors.hpp"
#include "pagmil/mil_core.hpp"
#include "pagmil/prompt_guide.hpp"
#include "pagmil/rng.hpp"

namespace pagmil {

double auc_pair_counting(std::span<const double> scores, std::span<const int> labels) {
    size_t pos = 0, neg = 0;
    for (int y : labels) (y == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw UndefinedMetricError("auc_pair_counting: single-class input");
    double agree = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j]) agree += 1.0;
            else if (scores[i] == scores[j]) agree += 0.5;
        }
    }
    return agree / (double(pos) * double(neg));
}

double best_two_partition_inertia(std::span<const Point2> points) {
    const int n = int(points.size());
    if (n < 2 || n > 20)
        throw std::invalid_argument("best_two_partition_inertia: need 2..20 points");
    auto side_inertia = [&](uint32_t mask, bool in) {
        double sr = 0, sc = 0;
        int cnt = 0;
        for (int i = 0; i < n; ++i) {
            if ((bool((mask >> i) & 1u)) != in) continue;
            sr += points[i].row;
            sc += points[i].col;
            ++cnt;
        }
        if (cnt == 0) return 0.0;
        double mr = sr / cnt, mc = sc / cnt;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            if ((bool((mask >> i) & 1u)) != in) continue;
            double dr = points[i].row - mr, dc = points[i].col - mc;
            acc += dr * dr + dc * dc;
        }
        return acc;
    };
    double best = std::numeric_limits<double>::infinity();
    // Point 0 stays on side A; every split with both sides non-empty.
    for (uint32_t mask = 1; mask < (1u << (n - 1)); ++mask) {
        uint32_t full = mask << 1; // point 0 has bit 0 = 0
        best = std::min(best, side_inertia(full, false) + side_inertia(full, true));
    }
    return best;
}

std::vector<int> adjacency_scan_oracle(const std::vector<int>& candidates,
                                       std::span<const Point2> coords, Neighborhood nb) {
    std::vector<int> out;
    for (int p : candidates) {
        bool keep = false;
        for (int q : candidates) {
            if (p == q) continue;
            int dr = std::abs(coords[p].row - coords[q].row);
            int dc = std::abs(coords[p].col - coords[q].col);
            bool adj = nb == Neighborhood::Eight ? (dr <= 1 && dc <= 1) : (dr + dc == 1);
            if (adj) {
                keep = true;
                break;
            }
        }
        if (keep) out.push_back(p);
    }
    return out;
}

namespace {

Vec random_vec(Rng& rng, int n, double scale = 1.0) {
    Vec v(n);
    for (double& x : v) x = rng.normal(0.0, scale);
    return v;
}

/// Flatten/unflatten helpers for finite-difference probes over structures.
struct Packer {
    std::vector<std::pair<double*, size_t>> blocks;
    size_t total = 0;

    void add(std::vector<double>& v) {
        blocks.push_back({v.data(), v.size()});
        total += v.size();
    }
    Vec flatten() const {
        Vec out;
        out.reserve(total);
        for (auto [p, n] : blocks) out.insert(out.end(), p, p + n);
        return out;
    }
    void scatter(const Vec& theta) const {
        size_t k = 0;
        for (auto [p, n] : blocks)
            for (size_t i = 0; i < n; ++i) p[i] = theta[k++];
    }
};

} // namespace

double check_intra_grad(uint64_t seed, int points) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        Rng rng(seed_mix(seed, "intra", uint64_t(p)));
        const int n = 3, dim = 8;
        std::vector<Vec> prompts(n);
        for (auto& m : prompts) m = random_vec(rng, dim);
        Vec mean = random_vec(rng, dim);

        Vec theta;
        for (const auto& m : prompts) theta.insert(theta.end(), m.begin(), m.end());
        auto f = [&](const Vec& t) {
            std::vector<Vec> ps(n);
            for (int i = 0; i < n; ++i) ps[i] = Vec(t.begin() + i * dim, t.begin() + (i + 1) * dim);
            return intra_loss(ps, mean).loss;
        };
        PromptLoss out = intra_loss(prompts, mean);
        Vec analytic;
        for (const auto& g : out.grads) analytic.insert(analytic.end(), g.begin(), g.end());
        worst = std::max(worst, grad_check(f, theta, analytic));
    }
    return worst;
}

double check_inter_grad(uint64_t seed, int points, InterVariant variant) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        Rng rng(seed_mix(seed, "inter", uint64_t(p)));
        const int n = 2, dim = 6;
        std::vector<Vec> prompts(n);
        for (auto& m : prompts) m = random_vec(rng, dim);
        TaskPromptRegistry reg;
        reg.min_margin = 1.0 + rng.uniform();
        reg.entries.push_back({0, random_vec(rng, dim), 0});
        reg.entries.push_back({1, random_vec(rng, dim), 1});

        Vec theta;
        for (const auto& m : prompts) theta.insert(theta.end(), m.begin(), m.end());
        auto f = [&](const Vec& t) {
            std::vector<Vec> ps(n);
            for (int i = 0; i < n; ++i) ps[i] = Vec(t.begin() + i * dim, t.begin() + (i + 1) * dim);
            return inter_loss(ps, reg, variant).loss;
        };
        PromptLoss out = inter_loss(prompts, reg, variant);
        Vec analytic;
        for (const auto& g : out.grads) analytic.insert(analytic.end(), g.begin(), g.end());
        worst = std::max(worst, grad_check(f, theta, analytic));
    }
    return worst;
}

double check_smooth_svm_grad(uint64_t seed, int points) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        Rng rng(seed_mix(seed, "ssvm", uint64_t(p)));
        const int c = 2 + int(rng.next_below(3));
        Vec scores = random_vec(rng, c, 2.0);
        int label = int(rng.next_below(uint64_t(c)));
        double tau = 0.5 + rng.uniform();
        auto f = [&](const Vec& s) { return smooth_svm_loss(s, label, tau).loss; };
        worst = std::max(worst, grad_check(f, scores, smooth_svm_loss(scores, label, tau).grad));
    }
    return worst;
}

double check_slide_loss_grad(uint64_t seed, int points) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        Rng rng(seed_mix(seed, "slide", uint64_t(p)));
        const int c = 2 + int(rng.next_below(3));
        Vec logits = random_vec(rng, c, 2.0);
        int label = int(rng.next_below(uint64_t(c)));
        auto f = [&](const Vec& s) { return slide_loss(s, label).loss; };
        worst = std::max(worst, grad_check(f, logits, slide_loss(logits, label).grad));
    }
    return worst;
}

double check_attention_grad(uint64_t seed, int points) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        Rng rng(seed_mix(seed, "attn", uint64_t(p)));
        const int n = 10, d = 6, hidden = 5;
        Bag bag;
        bag.features = Mat(n, d);
        for (double& v : bag.features.a) v = rng.normal(0.0, 1.0);
        for (int i = 0; i < n; ++i) bag.coords.push_back({i, 0});
        bag.mask.assign(n, PatchTag::Normal);

        AttentionNetParams params;
        params.V = Mat(hidden, d);
        params.U = Mat(hidden, d);
        params.w = random_vec(rng, hidden);
        for (double& v : params.V.a) v = rng.normal(0.0, 0.5);
        for (double& v : params.U.a) v = rng.normal(0.0, 0.5);
        Vec c = random_vec(rng, n); // random linear functional of the raw scores

        Packer pack;
        pack.add(params.V.a);
        pack.add(params.U.a);
        pack.add(params.w);
        Vec theta = pack.flatten();
        AttentionNetParams probe = params;
        Packer probe_pack;
        probe_pack.add(probe.V.a);
        probe_pack.add(probe.U.a);
        probe_pack.add(probe.w);
        auto f = [&](const Vec& t) {
            probe_pack.scatter(t);
            AttentionScores s = score_patches(bag, probe);
            return dot(c, s.raw);
        };

        // Analytic Jacobian-vector product for s_i = w^T (tanh(Vh) * sigmoid(Uh)).
        Mat dV(hidden, d), dU(hidden, d);
        Vec dw(hidden, 0.0);
        for (int i = 0; i < n; ++i) {
            auto h = bag.features.row(i);
            for (int j = 0; j < hidden; ++j) {
                double t = std::tanh(dot(params.V.row(j), h));
                double g = 1.0 / (1.0 + std::exp(-dot(params.U.row(j), h)));
                dw[j] += c[i] * t * g;
                axpy(c[i] * params.w[j] * g * (1.0 - t * t), h, dV.row(j));
                axpy(c[i] * params.w[j] * t * g * (1.0 - g), h, dU.row(j));
            }
        }
        Vec analytic;
        analytic.insert(analytic.end(), dV.a.begin(), dV.a.end());
        analytic.insert(analytic.end(), dU.a.begin(), dU.a.end());
        analytic.insert(analytic.end(), dw.begin(), dw.end());
        worst = std::max(worst, grad_check(f, theta, analytic));
    }
    return worst;
}

double check_prompt_generator_grad(uint64_t seed, int points) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        Rng rng(seed_mix(seed, "pgen", uint64_t(p)));
        const int side = 6, hidden = 5, pdim = 4;
        Raster thumb;
        thumb.side = side;
        thumb.rgb.resize(size_t(side) * side * 3);
        for (double& v : thumb.rgb) v = rng.uniform();

        PromptGeneratorParams params = init_prompt_generator(side, hidden, pdim,
                                                             seed_mix(seed, "pgen-init", uint64_t(p)));
        Vec c = random_vec(rng, pdim);

        PromptGeneratorParams probe = params;
        Packer probe_pack;
        probe_pack.add(probe.W1.a);
        probe_pack.add(probe.b1);
        probe_pack.add(probe.W2.a);
        probe_pack.add(probe.b2);
        Packer pack;
        pack.add(params.W1.a);
        pack.add(params.b1);
        pack.add(params.W2.a);
        pack.add(params.b2);
        auto f = [&](const Vec& t) {
            probe_pack.scatter(t);
            return dot(c, generate_prompt(thumb, probe));
        };

        PromptGenGrads g;
        prompt_backward(thumb, params, c, g);
        Vec analytic;
        analytic.insert(analytic.end(), g.dW1.a.begin(), g.dW1.a.end());
        analytic.insert(analytic.end(), g.db1.begin(), g.db1.end());
        analytic.insert(analytic.end(), g.dW2.a.begin(), g.dW2.a.end());
        analytic.insert(analytic.end(), g.db2.begin(), g.db2.end());
        worst = std::max(worst, grad_check(f, pack.flatten(), analytic));
    }
    return worst;
}

namespace {

CheckResult grad_result(const std::string& name, double err) {
    return {name, err < 1e-4, err, 1e-4, "max relative error vs central differences"};
}

CheckResult auc_oracle_check(uint64_t seed) {
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        Rng rng(seed_mix(seed, "auc-oracle", uint64_t(trial)));
        int n = 3 + int(rng.next_below(58));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            // Coarse quantization to force plenty of ties.
            scores[i] = std::round(rng.uniform() * 8.0) / 8.0;
            labels[i] = int(rng.next_below(2));
            (labels[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) labels[0] = labels[0] ? 0 : 1;
        worst = std::max(worst, std::abs(auc_binary(scores, labels) -
                                         auc_pair_counting(scores, labels)));
    }
    // One large instance as well.
    {
        Rng rng(seed_mix(seed, "auc-oracle-large"));
        int n = 200;
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) {
            scores[i] = std::round(rng.uniform() * 16.0) / 16.0;
            labels[i] = int(rng.next_below(2));
        }
        labels[0] = 0;
        labels[1] = 1;
        worst = std::max(worst, std::abs(auc_binary(scores, labels) -
                                         auc_pair_counting(scores, labels)));
    }
    return {"auc vs pair-counting oracle", worst < 1e-12, worst, 1e-12,
            "201 random instances with ties"};
}

CheckResult kmeans_oracle_check(uint64_t seed) {
    int hits = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(seed_mix(seed, "kmeans-oracle", uint64_t(trial)));
        int n = 4 + int(rng.next_below(5)); // 4..8 points
        std::vector<Point2> pts(n);
        for (auto& p : pts) p = {int(rng.next_below(12)), int(rng.next_below(12))};
        KMeansResult km = kmeans(pts, 2, 20, 100, seed_mix(seed, "kmeans-run", uint64_t(trial)));
        double oracle = best_two_partition_inertia(pts);
        if (km.inertia <= oracle + 1e-9) ++hits;
    }
    double misses = double(trials - hits);
    return {"kmeans vs exhaustive 2-partition oracle", hits >= 95, misses, 5.0,
            std::to_string(hits) + "/100 optimal with 20 restarts"};
}

CheckResult selector_oracle_check(uint64_t seed) {
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(seed_mix(seed, "adj-oracle", uint64_t(trial)));
        const int g = 16, n = g * g;
        std::vector<Point2> coords;
        coords.reserve(n);
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c) coords.push_back({r, c});
        std::vector<double> scores(n);
        for (double& s : scores) s = rng.uniform();
        Neighborhood nb = trial % 2 == 0 ? Neighborhood::Eight : Neighborhood::Four;

        std::vector<int> cand = candidate_positives(scores, 10.0);
        if (adjacency_filter(cand, coords, nb) != adjacency_scan_oracle(cand, coords, nb))
            ++mismatches;

        // Ranking oracles: full sort vs the implementations.
        std::vector<int> bottom = select_negatives(scores, 8);
        std::vector<std::pair<double, int>> ranked(n);
        for (int i = 0; i < n; ++i) ranked[i] = {scores[i], i};
        std::sort(ranked.begin(), ranked.end());
        std::vector<int> bottom_oracle;
        for (int i = 0; i < 8; ++i) bottom_oracle.push_back(ranked[i].second);
        std::sort(bottom_oracle.begin(), bottom_oracle.end());
        if (bottom != bottom_oracle) ++mismatches;

        std::vector<int> top_oracle;
        for (int i = 0; i < int(std::ceil(n * 0.10)); ++i)
            top_oracle.push_back(ranked[n - 1 - i].second);
        std::sort(top_oracle.begin(), top_oracle.end());
        if (cand != top_oracle) ++mismatches;
    }
    return {"selector vs brute-force oracles", mismatches == 0, double(mismatches), 0.0,
            "adjacency scan + full-sort ranking on 100 random grids"};
}

} // namespace

std::vector<CheckResult> run_verification(uint64_t seed) {
    std::vector<CheckResult> out;
    const int points = 100;
    out.push_back(grad_result("grad: intra prompt loss", check_intra_grad(seed, points)));
    out.push_back(grad_result("grad: inter loss (hinge-only)",
                              check_inter_grad(seed, points, InterVariant::HingeOnly)));
    out.push_back(grad_result("grad: inter loss (eq2-verbatim)",
                              check_inter_grad(seed, points, InterVariant::Eq2Verbatim)));
    out.push_back(grad_result("grad: smooth SVM loss", check_smooth_svm_grad(seed, points)));
    out.push_back(grad_result("grad: slide cross-entropy", check_slide_loss_grad(seed, points)));
    out.push_back(grad_result("grad: attention scorer", check_attention_grad(seed, points)));
    out.push_back(
        grad_result("grad: prompt generator", check_prompt_generator_grad(seed, points)));
    out.push_back(auc_oracle_check(seed));
    out.push_back(kmeans_oracle_check(seed));
    out.push_back(selector_oracle_check(seed));
    return out;
}

std::string check_table(const std::vector<CheckResult>& results) {
    std::string out;
    char buf[256];
    for (const CheckResult& r : results) {
        std::snprintf(buf, sizeof(buf), "[%s] %-38s max err %-12.3e tol %-9.0e %s\n",
                      r.pass ? "PASS" : "FAIL", r.name.c_str(), r.max_err, r.tolerance,
                      r.detail.c_str());
        out += buf;
    }
    return out;
}

bool all_pass(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

} // namespace pagmil
