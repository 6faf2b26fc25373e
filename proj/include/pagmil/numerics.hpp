#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pagmil {

using Vec = std::vector<double>;

/// Dense row-major matrix.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(size_t(r) * size_t(c), fill) {}

    double& operator()(int i, int j) { return a[size_t(i) * cols + j]; }
    double operator()(int i, int j) const { return a[size_t(i) * cols + j]; }

    std::span<double> row(int i) { return {a.data() + size_t(i) * cols, size_t(cols)}; }
    std::span<const double> row(int i) const { return {a.data() + size_t(i) * cols, size_t(cols)}; }

    bool operator==(const Mat&) const = default;
};

/// Integer grid position of a patch.
struct Point2 {
    int row = 0;
    int col = 0;
    bool operator==(const Point2&) const = default;
};

// ---- dense kernels ----

double dot(std::span<const double> a, std::span<const double> b);
double nrm2(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// y = A x  (length rows)
Vec matvec(const Mat& A, std::span<const double> x);
/// y = A^T x  (length cols)
Vec matvec_t(const Mat& A, std::span<const double> x);
/// A += scale * u v^T
void add_outer(Mat& A, std::span<const double> u, std::span<const double> v, double scale = 1.0);

// ---- distances and similarities ----

/// Euclidean distance. Throws std::invalid_argument on dimension mismatch.
double l2_distance(std::span<const double> a, std::span<const double> b);

/// Cosine similarity in [-1, 1]. If either norm is below 1e-12 the result is
/// defined as 0 and *zero_norm (when given) is set.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         bool* zero_norm = nullptr);

// ---- stable softmax ----

double logsumexp(std::span<const double> v);
Vec softmax(std::span<const double> v);

// ---- k-means on grid coordinates ----

struct KMeansResult {
    std::vector<std::array<double, 2>> centroids;
    std::vector<int> assignment;
    double inertia = 0.0;
    /// Inertia after each Lloyd iteration of the winning restart; non-increasing.
    std::vector<double> inertia_trace;
};

/// Lloyd's algorithm with k-means++ seeding, multiple restarts, and
/// farthest-point repair of empty clusters. Deterministic given seed.
/// Requires points.size() >= b >= 1.
KMeansResult kmeans(std::span<const Point2> points, int b, int restarts, int max_iters,
                    uint64_t seed);

// ---- rank statistics ----

/// Mann-Whitney AUC with mid-rank tie handling. labels are {0,1}.
/// Throws UndefinedMetricError when only one class is present.
double auc_binary(std::span<const double> scores, std::span<const int> labels);

// ---- gradient checking ----

/// Max over coordinates of |analytic_k - fd_k| / max(1, |fd_k|), where fd is
/// the central difference of f with step h. Throws on non-finite f values.
double grad_check(const std::function<double(const Vec&)>& f, const Vec& x,
                  const Vec& analytic, double h = 1e-5);

} // namespace pagmil
