#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "jmgt/grid.hpp"

namespace jmgt::spectral {

using ModalVector = std::vector<double>;
using Complex = std::complex<double>;
using ComplexModal = std::vector<Complex>;

// Indices of the modes sharing one (numerically grouped) eigenvalue.
struct EigenGroup {
  double lambda;             // representative eigenvalue of the group
  std::vector<int> modes;    // flat mode indices, |K^lambda| entries
};

// Discrete eigensystem of A = -(c0^2/c^2) Lap with Dirichlet conditions,
// orthonormal in the weighted inner product <u,v> = cell * sum w_i u_i v_i,
// w = c^2/c0^2. Immutable after construction.
class EigenBasis {
 public:
  const Grid& grid() const { return grid_; }
  int n_modes() const { return n_modes_; }
  double c() const { return c_; }
  double lambda(int j) const { return lambda_[j]; }
  const std::vector<double>& lambdas() const { return lambda_; }
  const std::vector<EigenGroup>& groups() const { return groups_; }
  const Field& weight() const { return weight_; }
  const Field& c0_sq() const { return c0_sq_; }

  // Grid values of eigenfunction j (row of the synthesis table).
  std::vector<double> eigenfunction(int j) const;

  ModalVector to_modal(const Field& v) const;
  Field to_grid(const ModalVector& m) const;
  // Complex variants share the real transform tables.
  ComplexModal to_modal(const std::vector<Complex>& v) const;
  std::vector<Complex> to_grid(const ComplexModal& m) const;

  double sobolev_norm(const ModalVector& m, double s) const;
  double sobolev_norm(const ComplexModal& m, double s) const;

  // Weighted L2 inner product / norm of grid fields (the product in which the
  // basis is orthonormal).
  double weighted_inner(const Field& u, const Field& v) const;
  // Plain L2 quadrature.
  double l2_inner(const Field& u, const Field& v) const;
  double l2_norm_sq(const Field& u) const { return l2_inner(u, u); }

  // A applied in modal coordinates: (A m)_j = lambda_j m_j.
  ModalVector apply_operator(const ModalVector& m) const;

  // Allocation-free transforms for the integrator hot path.
  void synth_into(const double* m, double* grid) const;
  void analyze_into(const double* grid, double* m) const;

  // Residual ||A_h phi_j - lambda_j phi_j|| / (lambda_j ||phi_j||), discrete operator.
  double spectral_residual(int j) const;

  void save(std::ostream& os) const;
  static EigenBasis load(std::istream& is);
  void save_file(const std::string& path) const;
  static EigenBasis load_file(const std::string& path);

  friend EigenBasis build_basis(const Grid& grid, const Field& c0_sq, double c, int n_modes);

 private:
  EigenBasis(Grid g) : grid_(g) {}

  Grid grid_;
  int n_modes_ = 0;
  double c_ = 1.0;
  std::vector<double> lambda_;         // nondecreasing, > 0
  std::vector<EigenGroup> groups_;
  Field c0_sq_;
  Field weight_;                        // c^2 / c0^2
  // synth_[i*n_modes + j] = phi_j(x_i); analysis_[j*n + i] = cell * w_i * phi_j(x_i)
  std::vector<double> synth_;
  std::vector<double> analysis_;
};

// Solves the generalized symmetric eigenproblem (-Lap_h) phi = lambda W phi
// (second-order centered differences, W = diag(c^2/c0^2)) and retains the
// n_modes smallest eigenpairs, grouped at relative gap 1e-8.
EigenBasis build_basis(const Grid& grid, const Field& c0_sq, double c, int n_modes);

// Assembles the dense (-Lap_h) matrix; exposed for oracles and diagnostics.
std::vector<double> dense_laplacian(const Grid& grid);

}  // namespace jmgt::spectral
