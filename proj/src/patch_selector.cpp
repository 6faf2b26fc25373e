#include "pagmil/patch_selector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace pagmil {

namespace {

bool adjacent(const Point2& a, const Point2& b, Neighborhood nb) {
    int dr = std::abs(a.row - b.row);
    int dc = std::abs(a.col - b.col);
    if (dr == 0 && dc == 0) return false;
    if (nb == Neighborhood::Eight) return dr <= 1 && dc <= 1;
    return dr + dc == 1;
}

/// Indices sorted by descending score, ties by lower index.
std::vector<int> rank_descending(std::span<const double> raw) {
    std::vector<int> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (raw[i] != raw[j]) return raw[i] > raw[j];
        return i < j;
    });
    return order;
}

} // namespace

std::vector<int> select_negatives(std::span<const double> raw_scores, int b) {
    if (b < 1) throw std::invalid_argument("select_negatives: B must be >= 1");
    int n = int(raw_scores.size());
    if (n < 2 * b)
        throw std::invalid_argument("select_negatives: bag of " + std::to_string(n) +
                                    " patches is too small for disjoint sets with B = " +
                                    std::to_string(b));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (raw_scores[i] != raw_scores[j]) return raw_scores[i] < raw_scores[j];
        return i < j;
    });
    order.resize(b);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<int> candidate_positives(std::span<const double> raw_scores, double k_percent) {
    if (k_percent <= 0.0 || k_percent > 100.0)
        throw std::invalid_argument("candidate_positives: k_percent must be in (0, 100]");
    int n = int(raw_scores.size());
    int count = int(std::ceil(double(n) * k_percent / 100.0));
    count = std::min(count, n);
    std::vector<int> order = rank_descending(raw_scores);
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<int> adjacency_filter(const std::vector<int>& candidates,
                                  std::span<const Point2> coords, Neighborhood nb) {
    std::vector<int> survivors;
    for (int p : candidates) {
        bool has_neighbor = false;
        for (int q : candidates) {
            if (q == p) continue;
            if (adjacent(coords[p], coords[q], nb)) {
                has_neighbor = true;
                break;
            }
        }
        if (has_neighbor) survivors.push_back(p);
    }
    return survivors;
}

std::vector<int> diversify(const std::vector<int>& survivors, const std::vector<int>& candidates,
                           std::span<const double> raw_scores, std::span<const Point2> coords,
                           const SelectorConfig& cfg, bool& fallback_used) {
    fallback_used = false;
    const int b = cfg.B;

    if (int(survivors.size()) >= b) {
        std::vector<Point2> pts;
        pts.reserve(survivors.size());
        for (int i : survivors) pts.push_back(coords[i]);
        KMeansResult km = kmeans(pts, b, cfg.kmeans_restarts, cfg.kmeans_max_iters, cfg.seed);

        std::vector<int> chosen(b, -1);
        std::vector<double> best_d(b, 0.0);
        for (size_t s = 0; s < survivors.size(); ++s) {
            int k = km.assignment[s];
            int idx = survivors[s];
            double dr = coords[idx].row - km.centroids[k][0];
            double dc = coords[idx].col - km.centroids[k][1];
            double d = dr * dr + dc * dc;
            bool better = chosen[k] < 0 || d < best_d[k] ||
                          (d == best_d[k] && (raw_scores[idx] > raw_scores[chosen[k]] ||
                                              (raw_scores[idx] == raw_scores[chosen[k]] &&
                                               idx < chosen[k])));
            if (better) {
                chosen[k] = idx;
                best_d[k] = d;
            }
        }
        // Empty-cluster repair in kmeans guarantees every cluster has members.
        std::vector<int> positives;
        for (int k = 0; k < b; ++k)
            if (chosen[k] >= 0) positives.push_back(chosen[k]);
        std::sort(positives.begin(), positives.end());
        return positives;
    }

    // Degenerate bags: keep every survivor, then pad with the highest-scoring
    // remaining candidates (and, if those run out, any remaining patch).
    fallback_used = true;
    std::vector<int> positives = survivors;
    std::unordered_set<int> taken(positives.begin(), positives.end());
    std::vector<int> cand_rank = candidates;
    std::sort(cand_rank.begin(), cand_rank.end(), [&](int i, int j) {
        if (raw_scores[i] != raw_scores[j]) return raw_scores[i] > raw_scores[j];
        return i < j;
    });
    for (int idx : cand_rank) {
        if (int(positives.size()) >= b) break;
        if (taken.insert(idx).second) positives.push_back(idx);
    }
    if (int(positives.size()) < b) {
        for (int idx : rank_descending(raw_scores)) {
            if (int(positives.size()) >= b) break;
            if (taken.insert(idx).second) positives.push_back(idx);
        }
    }
    std::sort(positives.begin(), positives.end());
    return positives;
}

SelectionResult select(const Bag& bag, std::span<const double> raw_scores,
                       const SelectorConfig& cfg) {
    if (int(raw_scores.size()) != bag.size())
        throw std::invalid_argument("select: score/bag size mismatch");

    SelectionResult res;
    res.negatives = select_negatives(raw_scores, cfg.B);
    res.candidates = candidate_positives(raw_scores, cfg.k_percent);
    res.survivors = adjacency_filter(res.candidates, bag.coords, cfg.neighborhood);
    res.positives =
        diversify(res.survivors, res.candidates, raw_scores, bag.coords, cfg, res.fallback_used);

    // Positives must stay disjoint from negatives; swap any collision for the
    // next-highest unused patch.
    std::unordered_set<int> negset(res.negatives.begin(), res.negatives.end());
    std::unordered_set<int> posset(res.positives.begin(), res.positives.end());
    bool collided = false;
    for (int& p : res.positives) {
        if (!negset.count(p)) continue;
        collided = true;
        posset.erase(p);
        int replacement = -1;
        for (int idx : rank_descending(raw_scores)) {
            if (negset.count(idx) || posset.count(idx)) continue;
            replacement = idx;
            break;
        }
        if (replacement < 0)
            throw std::runtime_error("select: cannot keep positives and negatives disjoint");
        p = replacement;
        posset.insert(p);
    }
    if (collided) {
        res.fallback_used = true;
        std::sort(res.positives.begin(), res.positives.end());
    }

    if (int(res.positives.size()) != cfg.B)
        throw std::runtime_error("select: internal error, positive count " +
                                 std::to_string(res.positives.size()) + " != B");
    return res;
}

std::string selection_table(const Bag& bag, std::span<const double> raw_scores,
                            const SelectionResult& sel) {
    auto contains = [](const std::vector<int>& v, int x) {
        return std::find(v.begin(), v.end(), x) != v.end();
    };
    std::string out = "index\trow\tcol\tscore\trole\n";
    char buf[128];
    for (int i = 0; i < bag.size(); ++i) {
        const char* role = nullptr;
        if (contains(sel.positives, i)) role = "pos";
        else if (contains(sel.negatives, i)) role = "neg";
        else if (contains(sel.survivors, i)) role = "survivor";
        else if (contains(sel.candidates, i)) role = "candidate";
        if (!role) continue;
        std::snprintf(buf, sizeof(buf), "%d\t%d\t%d\t%.17g\t%s\n", i, bag.coords[i].row,
                      bag.coords[i].col, raw_scores[i], role);
        out += buf;
    }
    return out;
}

} // namespace pagmil
