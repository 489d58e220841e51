#include "tamo/taskgen/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "tamo/core/error.hpp"

namespace tamo::taskgen {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ' && ch != '\t') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TabularRecords read_tabular_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("tabular CSV is empty");
  const auto header = split_csv_line(line);
  std::size_t dx = 0, dy = 0;
  for (const auto& name : header) {
    const std::string expect_x = "x" + std::to_string(dx + 1);
    const std::string expect_y = "y" + std::to_string(dy + 1);
    if (dy == 0 && name == expect_x) {
      ++dx;
    } else if (dx > 0 && name == expect_y) {
      ++dy;
    } else {
      throw FormatError("unexpected header column '" + name + "' (want x1..x{d_x},y1..y{d_y})");
    }
  }
  if (dx == 0 || dy == 0) throw FormatError("tabular header needs at least one x and one y column");
  std::vector<double> xs, ys;
  std::size_t n = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != dx + dy) {
      throw FormatError("line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(dx + dy));
    }
    for (std::size_t i = 0; i < dx; ++i) xs.push_back(parse_number(fields[i], lineno));
    for (std::size_t i = 0; i < dy; ++i) ys.push_back(parse_number(fields[dx + i], lineno));
    ++n;
  }
  if (n == 0) throw FormatError("tabular CSV has no records");
  return {Matrix({n, dx}, std::move(xs)), Matrix({n, dy}, std::move(ys))};
}

TabularRecords read_tabular_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  return read_tabular_csv(f);
}

void write_tabular_csv(std::ostream& out, const TabularRecords& r) {
  const std::size_t dx = r.X.cols(), dy = r.Y.cols();
  for (std::size_t i = 0; i < dx; ++i) out << (i ? "," : "") << "x" << i + 1;
  for (std::size_t i = 0; i < dy; ++i) out << ",y" << i + 1;
  out << "\n";
  for (std::size_t n = 0; n < r.X.rows(); ++n) {
    for (std::size_t i = 0; i < dx; ++i) out << (i ? "," : "") << format_double(r.X(n, i));
    for (std::size_t i = 0; i < dy; ++i) out << "," << format_double(r.Y(n, i));
    out << "\n";
  }
}

GridInterpolator::GridInterpolator(const TabularRecords& r) : d_y_(r.Y.cols()) {
  const std::size_t n = r.X.rows(), dx = r.X.cols();
  if (n == 0 || r.Y.rows() != n) throw FormatError("records are empty or inconsistent");
  axes_.resize(dx);
  for (std::size_t c = 0; c < dx; ++c) {
    for (std::size_t i = 0; i < n; ++i) axes_[c].push_back(r.X(i, c));
    std::sort(axes_[c].begin(), axes_[c].end());
    axes_[c].erase(std::unique(axes_[c].begin(), axes_[c].end()), axes_[c].end());
  }
  strides_.assign(dx, 1);
  std::size_t nodes = 1;
  for (std::size_t c = dx; c-- > 0;) {
    strides_[c] = nodes;
    nodes *= axes_[c].size();
  }
  if (nodes != n) {
    throw FormatError("records do not form a rectilinear grid (" + std::to_string(n) + " records, " +
                      std::to_string(nodes) + " grid nodes)");
  }
  values_.assign(nodes * d_y_, 0.0);
  std::vector<char> seen(nodes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t flat = 0;
    for (std::size_t c = 0; c < dx; ++c) {
      const auto it = std::lower_bound(axes_[c].begin(), axes_[c].end(), r.X(i, c));
      flat += static_cast<std::size_t>(it - axes_[c].begin()) * strides_[c];
    }
    if (seen[flat]) throw FormatError("duplicate grid node in records");
    seen[flat] = 1;
    for (std::size_t k = 0; k < d_y_; ++k) values_[flat * d_y_ + k] = r.Y(i, k);
  }
}

std::vector<double> GridInterpolator::operator()(const std::vector<double>& x) const {
  const std::size_t dx = axes_.size();
  if (x.size() != dx) throw DimensionError("interpolation point has wrong arity");
  std::vector<std::size_t> lo(dx);
  std::vector<double> frac(dx);
  for (std::size_t c = 0; c < dx; ++c) {
    const auto& a = axes_[c];
    if (a.size() == 1) {
      lo[c] = 0;
      frac[c] = 0.0;
      continue;
    }
    const double v = std::clamp(x[c], a.front(), a.back());
    std::size_t j = static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), v) - a.begin());
    j = std::clamp<std::size_t>(j, 1, a.size() - 1) - 1;
    lo[c] = j;
    frac[c] = (v - a[j]) / (a[j + 1] - a[j]);
  }
  std::vector<double> out(d_y_, 0.0);
  for (std::size_t corner = 0; corner < (std::size_t{1} << dx); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    bool valid = true;
    for (std::size_t c = 0; c < dx; ++c) {
      const bool up = (corner >> c) & 1u;
      if (up && axes_[c].size() == 1) {
        valid = false;
        break;
      }
      w *= up ? frac[c] : 1.0 - frac[c];
      flat += (lo[c] + (up ? 1 : 0)) * strides_[c];
    }
    if (!valid || w == 0.0) continue;
    for (std::size_t k = 0; k < d_y_; ++k) out[k] += w * values_[flat * d_y_ + k];
  }
  return out;
}

std::vector<double> InputScaling::to_domain(const std::vector<double>& x) const {
  std::vector<double> u(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    u[c] = hi[c] > lo[c] ? kDomainLo + (kDomainHi - kDomainLo) * (x[c] - lo[c]) / (hi[c] - lo[c]) : 0.0;
  }
  return u;
}

std::vector<double> InputScaling::from_domain(const std::vector<double>& u) const {
  std::vector<double> x(u.size());
  for (std::size_t c = 0; c < u.size(); ++c) {
    x[c] = lo[c] + (hi[c] - lo[c]) * (u[c] - kDomainLo) / (kDomainHi - kDomainLo);
  }
  return x;
}

SampledTask load_tabular_task(const TabularRecords& records, std::size_t d_x, std::size_t d_y,
                              const std::optional<Matrix>& pool, const std::string& id) {
  if (records.X.rows() == 0) throw FormatError("no records");
  if (records.X.cols() != d_x || records.Y.cols() != d_y || records.Y.rows() != records.X.rows()) {
    throw FormatError("records do not have the declared arity");
  }
  InputScaling scaling;
  scaling.lo.assign(d_x, 0.0);
  scaling.hi.assign(d_x, 0.0);
  for (std::size_t c = 0; c < d_x; ++c) {
    scaling.lo[c] = scaling.hi[c] = records.X(0, c);
    for (std::size_t i = 1; i < records.X.rows(); ++i) {
      scaling.lo[c] = std::min(scaling.lo[c], records.X(i, c));
      scaling.hi[c] = std::max(scaling.hi[c], records.X(i, c));
    }
  }
  SampledTask t;
  t.id = id;
  t.spec.d_x = d_x;
  t.spec.d_y = d_y;
  Matrix raw;
  if (!pool) {
    const std::size_t n = records.X.rows();
    t.pool_X = Matrix::matrix(n, d_x);
    for (std::size_t i = 0; i < n; ++i) {
      const auto u = scaling.to_domain(std::vector<double>(records.X.data() + i * d_x, records.X.data() + (i + 1) * d_x));
      std::copy(u.begin(), u.end(), t.pool_X.data() + i * d_x);
    }
    raw = records.Y;
  } else {
    if (pool->cols() != d_x) throw DimensionError("pool width does not match d_x");
    const GridInterpolator interp(records);
    t.pool_X = *pool;
    raw = Matrix::matrix(pool->rows(), d_y);
    for (std::size_t i = 0; i < pool->rows(); ++i) {
      const auto x = scaling.from_domain(std::vector<double>(pool->data() + i * d_x, pool->data() + (i + 1) * d_x));
      const auto y = interp(x);
      std::copy(y.begin(), y.end(), raw.data() + i * d_y);
    }
  }
  t.pool_Y = normalize_outputs(raw);
  finalize_task(t);
  return t;
}

}  // namespace tamo::taskgen
