#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "marscost/errors.hpp"

namespace marscost {

struct CellIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Axis-aligned raster over the plane. Row index grows with y, column index with x.
/// Cell (i, j) covers [origin_x + j*res, origin_x + (j+1)*res) x [origin_y + i*res, ...).
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double resolution = 1.0;
  int rows = 1;
  int cols = 1;

  void validate() const {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
      throw ArgumentError("GridSpec: resolution must be positive");
    }
    if (rows < 1 || cols < 1) {
      throw ArgumentError("GridSpec: rows and cols must be >= 1");
    }
    if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
      throw ArgumentError("GridSpec: origin must be finite");
    }
  }

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }

  /// Cell containing (x, y) by floor arithmetic; may lie outside the grid.
  CellIndex cell_of(double x, double y) const {
    return {static_cast<int>(std::floor((y - origin_y) / resolution)),
            static_cast<int>(std::floor((x - origin_x) / resolution))};
  }

  bool contains(CellIndex c) const { return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols; }

  std::optional<CellIndex> locate(double x, double y) const {
    const double fy = std::floor((y - origin_y) / resolution);
    const double fx = std::floor((x - origin_x) / resolution);
    if (!(fy >= 0.0 && fy < rows && fx >= 0.0 && fx < cols)) return std::nullopt;
    return CellIndex{static_cast<int>(fy), static_cast<int>(fx)};
  }

  double center_x(int col) const { return origin_x + (col + 0.5) * resolution; }
  double center_y(int row) const { return origin_y + (row + 0.5) * resolution; }

  std::size_t flat(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(col);
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Square grid of `cells` x `cells` centered on the origin, used for rover-local BEV maps.
inline GridSpec centered_grid(int cells, double resolution) {
  GridSpec g;
  g.rows = cells;
  g.cols = cells;
  g.resolution = resolution;
  g.origin_x = -0.5 * cells * resolution;
  g.origin_y = -0.5 * cells * resolution;
  return g;
}

/// Row-major 2D array.
template <typename T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
    if (rows < 0 || cols < 0) throw ArgumentError("Grid2: negative dimensions");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Grid2&, const Grid2&) = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

/// Per-cell cost values with a validity mask. Labels live in [0,1] after normalization;
/// predictions are always valid.
struct DenseCostmap {
  GridSpec grid;
  std::vector<double> values;
  std::vector<unsigned char> valid;

  DenseCostmap() = default;
  explicit DenseCostmap(const GridSpec& g, double fill = 0.0, bool is_valid = false)
      : grid(g), values(g.size(), fill), valid(g.size(), is_valid ? 1 : 0) {}

  double& at(int row, int col) { return values[grid.flat(row, col)]; }
  double at(int row, int col) const { return values[grid.flat(row, col)]; }
  bool is_valid(int row, int col) const { return valid[grid.flat(row, col)] != 0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }

  friend bool operator==(const DenseCostmap&, const DenseCostmap&) = default;
};

}  // namespace marscost
