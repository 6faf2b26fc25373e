#include "pagmil/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pagmil/errors.hpp"
#include "pagmil/rng.hpp"

namespace pagmil {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double nrm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec matvec(const Mat& A, std::span<const double> x) {
    Vec y(A.rows, 0.0);
    for (int i = 0; i < A.rows; ++i) y[i] = dot(A.row(i), x);
    return y;
}

Vec matvec_t(const Mat& A, std::span<const double> x) {
    Vec y(A.cols, 0.0);
    for (int i = 0; i < A.rows; ++i) axpy(x[i], A.row(i), y);
    return y;
}

void add_outer(Mat& A, std::span<const double> u, std::span<const double> v, double scale) {
    for (int i = 0; i < A.rows; ++i) axpy(scale * u[i], v, A.row(i));
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("l2_distance: dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b, bool* zero_norm) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double na = nrm2(a);
    double nb = nrm2(b);
    if (zero_norm) *zero_norm = false;
    if (na < 1e-12 || nb < 1e-12) {
        // A zero prompt carries no direction; it routes to nothing confidently.
        if (zero_norm) *zero_norm = true;
        return 0.0;
    }
    double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double logsumexp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

Vec softmax(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    Vec out(v.size());
    double s = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        s += out[i];
    }
    for (double& x : out) x /= s;
    return out;
}

namespace {

double sqdist(const Point2& p, const std::array<double, 2>& c) {
    double dr = p.row - c[0];
    double dc = p.col - c[1];
    return dr * dr + dc * dc;
}

struct LloydState {
    std::vector<std::array<double, 2>> centroids;
    std::vector<int> assignment;
};

void seed_kmeanspp(std::span<const Point2> pts, int b, Rng& rng, LloydState& st) {
    st.centroids.clear();
    size_t first = rng.next_below(pts.size());
    st.centroids.push_back({double(pts[first].row), double(pts[first].col)});
    std::vector<double> d2(pts.size());
    while (int(st.centroids.size()) < b) {
        double total = 0.0;
        for (size_t i = 0; i < pts.size(); ++i) {
            double best = sqdist(pts[i], st.centroids[0]);
            for (size_t k = 1; k < st.centroids.size(); ++k)
                best = std::min(best, sqdist(pts[i], st.centroids[k]));
            d2[i] = best;
            total += best;
        }
        size_t chosen;
        if (total <= 0.0) {
            // All remaining points coincide with existing centroids.
            chosen = rng.next_below(pts.size());
        } else {
            double r = rng.uniform() * total;
            double acc = 0.0;
            chosen = pts.size() - 1;
            for (size_t i = 0; i < pts.size(); ++i) {
                acc += d2[i];
                if (acc >= r) {
                    chosen = i;
                    break;
                }
            }
        }
        st.centroids.push_back({double(pts[chosen].row), double(pts[chosen].col)});
    }
}

/// Assign each point to its nearest centroid (ties: lower centroid index).
/// Returns true when any assignment changed.
bool assign_points(std::span<const Point2> pts, LloydState& st) {
    bool changed = false;
    for (size_t i = 0; i < pts.size(); ++i) {
        int best = 0;
        double bd = sqdist(pts[i], st.centroids[0]);
        for (size_t k = 1; k < st.centroids.size(); ++k) {
            double d = sqdist(pts[i], st.centroids[k]);
            if (d < bd) {
                bd = d;
                best = int(k);
            }
        }
        if (st.assignment[i] != best) {
            st.assignment[i] = best;
            changed = true;
        }
    }
    return changed;
}

/// Reseed every empty cluster with the point farthest from its assigned
/// centroid (ties: lower point index).
void repair_empty(std::span<const Point2> pts, LloydState& st) {
    int b = int(st.centroids.size());
    std::vector<int> count(b, 0);
    for (int a : st.assignment) count[a]++;
    for (int k = 0; k < b; ++k) {
        if (count[k] > 0) continue;
        int worst = -1;
        double wd = -1.0;
        for (size_t i = 0; i < pts.size(); ++i) {
            if (count[st.assignment[i]] <= 1) continue; // keep donor clusters non-empty
            double d = sqdist(pts[i], st.centroids[st.assignment[i]]);
            if (d > wd) {
                wd = d;
                worst = int(i);
            }
        }
        if (worst < 0) continue;
        count[st.assignment[worst]]--;
        st.assignment[worst] = k;
        count[k] = 1;
        st.centroids[k] = {double(pts[worst].row), double(pts[worst].col)};
    }
}

void update_centroids(std::span<const Point2> pts, LloydState& st) {
    int b = int(st.centroids.size());
    std::vector<std::array<double, 2>> sum(b, {0.0, 0.0});
    std::vector<int> count(b, 0);
    for (size_t i = 0; i < pts.size(); ++i) {
        int k = st.assignment[i];
        sum[k][0] += pts[i].row;
        sum[k][1] += pts[i].col;
        count[k]++;
    }
    for (int k = 0; k < b; ++k)
        if (count[k] > 0) st.centroids[k] = {sum[k][0] / count[k], sum[k][1] / count[k]};
}

double total_inertia(std::span<const Point2> pts, const LloydState& st) {
    double s = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) s += sqdist(pts[i], st.centroids[st.assignment[i]]);
    return s;
}

} // namespace

KMeansResult kmeans(std::span<const Point2> points, int b, int restarts, int max_iters,
                    uint64_t seed) {
    if (b < 1) throw std::invalid_argument("kmeans: B must be >= 1");
    if (int(points.size()) < b)
        throw std::invalid_argument("kmeans: need at least B points (" +
                                    std::to_string(points.size()) + " < " + std::to_string(b) + ")");
    restarts = std::max(1, restarts);

    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng(seed_mix(seed, "kmeans-restart", uint64_t(r)));
        LloydState st;
        st.assignment.assign(points.size(), -1);
        seed_kmeanspp(points, b, rng, st);
        std::vector<double> trace;
        for (int it = 0; it < max_iters; ++it) {
            bool changed = assign_points(points, st);
            repair_empty(points, st);
            update_centroids(points, st);
            trace.push_back(total_inertia(points, st));
            if (!changed && it > 0) break;
        }
        double inertia = trace.empty() ? 0.0 : trace.back();
        if (inertia < best.inertia) {
            best.centroids = st.centroids;
            best.assignment = st.assignment;
            best.inertia = inertia;
            best.inertia_trace = std::move(trace);
        }
    }
    return best;
}

double auc_binary(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc_binary: scores/labels length mismatch");
    size_t n = scores.size();
    size_t pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("auc_binary: labels must be 0 or 1");
        pos += size_t(y);
    }
    size_t neg = n - pos;
    if (pos == 0 || neg == 0)
        throw UndefinedMetricError("auc_binary: needs at least one positive and one negative label");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return scores[i] < scores[j]; });

    // Mid-ranks over tie blocks, 1-based.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double mid = 0.5 * double(i + 1 + j); // average of ranks i+1 .. j
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += mid;
        i = j;
    }
    double u = rank_sum_pos - 0.5 * double(pos) * double(pos + 1);
    return u / (double(pos) * double(neg));
}

double grad_check(const std::function<double(const Vec&)>& f, const Vec& x, const Vec& analytic,
                  double h) {
    if (x.size() != analytic.size())
        throw std::invalid_argument("grad_check: gradient size mismatch");
    Vec probe = x;
    double max_rel = 0.0;
    for (size_t k = 0; k < x.size(); ++k) {
        probe[k] = x[k] + h;
        double fp = f(probe);
        probe[k] = x[k] - h;
        double fm = f(probe);
        probe[k] = x[k];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: non-finite function value");
        double fd = (fp - fm) / (2.0 * h);
        double rel = std::abs(analytic[k] - fd) / std::max(1.0, std::abs(fd));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

} // namespace pagmil
