#pragma once

#include <cstdint>
#include <vector>

namespace neurovid {

double pearson(const std::vector<double>& a, const std::vector<double>& b);
// atanh with r clamped to +/-(1 - 1e-7)
double fisher_z(double r);

// regularized incomplete beta I_x(a, b)
double incomplete_beta(double a, double b, double x);
// two-sided p-value of Student's t with df degrees of freedom
double t_two_sided_p(double t, double df);

// one-sample t-test of the mean against zero; returns (t, p)
struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};
TTestResult one_sample_t(const std::vector<double>& xs);
// pooled-variance two-sample t-test; equal means with zero variance -> p = 1
TTestResult two_sample_t(const std::vector<double>& a,
                         const std::vector<double>& b);

double mean_of(const std::vector<double>& xs);
double stddev_of(const std::vector<double>& xs);  // sample (n-1)

}  // namespace neurovid
