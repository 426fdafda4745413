#pragma once

// Small-matrix numerics used by the compression passes: singular values (the
// channel-importance scorer ranks time-averaged spike maps by rank), inclusive
// percentiles (quantizer range selection), and the mean-absolute statistic.

#include <cstddef>
#include <vector>

#include "tensor.hpp"

namespace snnzip {

// Singular values of a dense rows x cols matrix (row-major), descending,
// min(rows, cols) of them.  One-sided Jacobi: orthogonalizes column pairs
// until convergence, then the column norms are the singular values.  Accurate
// to near machine precision for the small matrices seen here.
std::vector<double> svd_values(const double* m, std::size_t rows, std::size_t cols);
std::vector<double> svd_values(const Tensor& m);  // rank-2 tensor

// Inclusive percentile with linear interpolation between closest ranks:
// rank = x * (n - 1) into the sorted copy.  x must lie strictly inside (0, 1).
double percentile(const std::vector<double>& values, double x);

// Mean absolute value, |v|_1 / n.  Empty input is an error.
double l1_mean(const std::vector<double>& values);
double l1_mean(const Tensor& t);

}  // namespace snnzip
