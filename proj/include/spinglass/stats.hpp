#pragma once

#include <span>
#include <vector>

namespace spinglass {

double mean(std::span<const double> x);

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> x);

// Standard error of the mean.
double standard_error(std::span<const double> x);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
// distribution for the p-value.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Least-squares nondecreasing fit of y against x (pool adjacent violators).
// Returns fitted values in the original order.
std::vector<double> isotonic_fit(std::span<const double> x, std::span<const double> y);

}  // namespace spinglass
