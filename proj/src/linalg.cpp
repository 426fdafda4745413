#include "linalg.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace snnzip {

namespace {

// One-sided Jacobi on the columns of a (rows x cols) matrix held column-major
// in `col`.  Rotations zero the off-diagonal entries of the implicit Gram
// matrix pair by pair; convergence is quadratic once sweeps settle.
void jacobi_orthogonalize(std::vector<std::vector<double>>& col) {
    const std::size_t n = col.size();
    if (n < 2) return;
    const double tol = 1e-15;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < col[p].size(); ++i) {
                    app += col[p][i] * col[p][i];
                    aqq += col[q][i] * col[q][i];
                    apq += col[p][i] * col[q][i];
                }
                if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < col[p].size(); ++i) {
                    const double vp = col[p][i], vq = col[q][i];
                    col[p][i] = c * vp - s * vq;
                    col[q][i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
}

}  // namespace

std::vector<double> svd_values(const double* m, std::size_t rows, std::size_t cols) {
    if (m == nullptr || rows == 0 || cols == 0)
        fail(Errc::invalid_argument, "svd_values: empty matrix");

    // Work on the transpose when rows < cols so the column count (and the
    // rotation work) is min(rows, cols); singular values are unchanged.
    const bool flip = rows < cols;
    const std::size_t height = flip ? cols : rows;
    const std::size_t width = flip ? rows : cols;

    std::vector<std::vector<double>> col(width, std::vector<double>(height));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = m[r * cols + c];
            if (flip)
                col[r][c] = v;
            else
                col[c][r] = v;
        }

    jacobi_orthogonalize(col);

    std::vector<double> sigma(width);
    for (std::size_t j = 0; j < width; ++j) {
        double ss = 0.0;
        for (double v : col[j]) ss += v * v;
        sigma[j] = std::sqrt(ss);
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<double>());
    return sigma;
}

std::vector<double> svd_values(const Tensor& m) {
    if (m.rank() != 2) fail(Errc::invalid_argument, "svd_values: expected a rank-2 tensor, got " + m.shape_str());
    return svd_values(m.data(), m.dim(0), m.dim(1));
}

double percentile(const std::vector<double>& values, double x) {
    if (values.empty()) fail(Errc::invalid_argument, "percentile: empty input");
    if (!(x > 0.0 && x < 1.0))
        fail(Errc::invalid_argument, "percentile: x must lie strictly inside (0, 1), got " + std::to_string(x));
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    const double rank = x * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double l1_mean(const std::vector<double>& values) {
    if (values.empty()) fail(Errc::invalid_argument, "l1_mean: empty input");
    double s = 0.0;
    for (double v : values) s += std::abs(v);
    return s / static_cast<double>(values.size());
}

double l1_mean(const Tensor& t) {
    if (t.size() == 0) fail(Errc::invalid_argument, "l1_mean: empty tensor");
    return l1_mean(t.values());
}

}  // namespace snnzip
