#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "jmgt/errors.hpp"

namespace jmgt::spectral {

// Uniform tensor grid of interior nodes on (0,L1) or (0,L1)x(0,L2); the
// boundary nodes carry homogeneous Dirichlet values and are not stored.
// Axis d has npts[d] interior nodes x_i = (i+1)*h_d with h_d = L_d/(npts[d]+1).
// 2-D fields are flattened x-major: idx = ix*npts[1] + iy.
class Grid {
 public:
  Grid(int dim, std::array<double, 2> length, std::array<int, 2> npts)
      : dim_(dim), length_(length), npts_(npts) {
    if (dim != 1 && dim != 2) throw DomainError("grid: dimension must be 1 or 2");
    for (int d = 0; d < dim; ++d) {
      if (length_[d] <= 0.0) throw DomainError("grid: extents must be strictly positive");
      if (npts_[d] < 8) throw DomainError("grid: at least 8 points per axis required");
    }
    if (dim == 1) {
      length_[1] = 0.0;
      npts_[1] = 1;
    }
  }

  static Grid interval(double length, int npts) { return Grid(1, {length, 0.0}, {npts, 1}); }
  static Grid rectangle(double lx, double ly, int nx, int ny) {
    return Grid(2, {lx, ly}, {nx, ny});
  }

  int dim() const { return dim_; }
  double length(int axis) const { return length_[axis]; }
  int npts(int axis) const { return npts_[axis]; }
  std::size_t size() const {
    return dim_ == 1 ? static_cast<std::size_t>(npts_[0])
                     : static_cast<std::size_t>(npts_[0]) * npts_[1];
  }
  double h(int axis) const { return length_[axis] / (npts_[axis] + 1); }
  // Quadrature weight of one interior node (trapezoid with zero boundary).
  double cell() const { return dim_ == 1 ? h(0) : h(0) * h(1); }
  double x(int axis, int i) const { return (i + 1) * h(axis); }

  std::size_t index(int ix, int iy = 0) const {
    return dim_ == 1 ? static_cast<std::size_t>(ix)
                     : static_cast<std::size_t>(ix) * npts_[1] + iy;
  }

  // Node coordinates of flat index, {x} or {x,y}.
  std::array<double, 2> coords(std::size_t idx) const {
    if (dim_ == 1) return {x(0, static_cast<int>(idx)), 0.0};
    const int ix = static_cast<int>(idx) / npts_[1];
    const int iy = static_cast<int>(idx) % npts_[1];
    return {x(0, ix), x(1, iy)};
  }

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && length_ == o.length_ && npts_ == o.npts_;
  }

 private:
  int dim_;
  std::array<double, 2> length_;
  std::array<int, 2> npts_;
};

using Field = std::vector<double>;  // node values, Grid::size() entries

}  // namespace jmgt::spectral
