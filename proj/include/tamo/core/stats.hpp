#pragma once

#include <span>

namespace tamo::core {

struct Summary {
  double mean = 0.0;
  double sd = 0.0;    // sample standard deviation (n - 1)
  double ci95 = 0.0;  // 1.96 sd / sqrt(n)
};

Summary summarize(std::span<const double> values);

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

struct PairedTest {
  double mean_diff = 0.0;  // mean of a - b
  double t = 0.0;
  double p = 1.0;          // two-sided
};

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace tamo::core
