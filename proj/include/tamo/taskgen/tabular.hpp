#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "tamo/taskgen/taskgen.hpp"

namespace tamo::taskgen {

/// Raw tabular observations, one row per record.
struct TabularRecords {
  Matrix X;  // n x d_x
  Matrix Y;  // n x d_y
};

/// CSV with a header x1..x{d_x},y1..y{d_y}.
TabularRecords read_tabular_csv(std::istream& in);
TabularRecords read_tabular_csv_file(const std::string& path);
void write_tabular_csv(std::ostream& out, const TabularRecords& records);

/// Multilinear interpolation over records that form a full rectilinear grid.
class GridInterpolator {
 public:
  explicit GridInterpolator(const TabularRecords& records);

  std::size_t d_x() const { return axes_.size(); }
  std::size_t d_y() const { return d_y_; }
  const std::vector<std::vector<double>>& axes() const { return axes_; }
  /// Inputs outside the grid are clamped to its bounding box.
  std::vector<double> operator()(const std::vector<double>& x) const;

 private:
  std::vector<std::vector<double>> axes_;
  std::vector<std::size_t> strides_;
  std::size_t d_y_ = 0;
  std::vector<double> values_;  // grid-ordered, d_y per node
};

/// Affine per-dimension map from the records' bounding box onto [-5, 5].
struct InputScaling {
  std::vector<double> lo, hi;
  std::vector<double> to_domain(const std::vector<double>& x) const;
  std::vector<double> from_domain(const std::vector<double>& u) const;
};

/// Task over the records. Without `pool` the candidates are the records
/// themselves; with a pool (given in [-5, 5]^{d_x}) the records must form a
/// grid and outputs are interpolated. Outputs are then normalized to [-1, 1].
SampledTask load_tabular_task(const TabularRecords& records, std::size_t d_x, std::size_t d_y,
                              const std::optional<Matrix>& pool = std::nullopt, const std::string& id = "tabular");

}  // namespace tamo::taskgen
