#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

// Two-sample statistics for benchmark comparison: Welch's t-test with
// Welch-Satterthwaite degrees of freedom and a two-sided p-value from the
// t-distribution CDF.

namespace icdbm {

struct SampleSet {
    std::string label;
    std::vector<double> values;

    size_t n() const { return values.size(); }
    double mean() const;
    double variance() const;  // unbiased, n-1 denominator
    double stddev() const;
};

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    double alpha = 0.05;
    bool significant = false;
    bool degenerate = false;  // both variances zero
};

struct StatsError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Requires n >= 2 and finite values on both sides. Zero-variance pairs take
/// the p = 1 (equal means) / p = 0 (different means) convention and are
/// flagged degenerate.
WelchResult welch_t_test(const SampleSet& a, const SampleSet& b, double alpha = 0.05);

/// Regularized incomplete beta function I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided p-value of a t statistic: I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, double df);

}  // namespace icdbm
