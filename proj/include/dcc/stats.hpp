#pragma once

#include <span>

namespace dcc {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stdev(std::span<const double> xs);

struct PairedTTest {
    double mean_diff = 0.0; ///< mean of a - b
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;         ///< one-sided, H1: mean(a - b) < 0
};

/// Paired one-sided Student t-test of H1: E[a - b] < 0. Needs at least two pairs.
PairedTTest paired_t_test_less(std::span<const double> a, std::span<const double> b);

} // namespace dcc
