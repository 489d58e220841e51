#include "tamo/core/stats.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tamo/core/error.hpp"

namespace tamo::core {

Summary summarize(std::span<const double> v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= double(v.size());
  if (v.size() < 2) return s;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / double(v.size() - 1));
  s.ci95 = 1.96 * s.sd / std::sqrt(double(v.size()));
  return s;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw DomainError("student_t_two_sided needs df > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_test needs equal lengths");
  if (a.size() < 2) throw SizeError("paired_t_test needs at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const Summary s = summarize(d);
  PairedTest r;
  r.mean_diff = s.mean;
  if (s.sd == 0.0) {
    r.t = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
  } else {
    r.t = s.mean / (s.sd / std::sqrt(double(d.size())));
  }
  r.p = s.mean == 0.0 ? 1.0 : student_t_two_sided(r.t, double(d.size() - 1));
  return r;
}

}  // namespace tamo::core
