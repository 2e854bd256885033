#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "jmgt/model.hpp"
#include "jmgt/residues.hpp"
#include "jmgt/solver.hpp"
#include "jmgt/spectral.hpp"

namespace jmgt::inversion {

using model::CoefficientField;
using model::Cutoff;
using model::Excitation;
using model::FWeights;
using model::SpatialProfile;
using model::TimeProfile;
using model::Variant;
using spectral::Complex;
using spectral::EigenBasis;
using spectral::Field;
using spectral::Grid;
using spectral::ModalVector;

enum class ObsKind { point_samples, boundary_trace, local_averages };

// Linear bounded observation of grid fields; every kind reduces to a fixed
// set of grid functionals (rows), so observation of traces and of
// eigenfunctions share one code path.
class ObservationOp {
 public:
  static ObservationOp point_samples(const Grid& grid,
                                     const std::vector<std::array<double, 2>>& points);
  // count sensors spread along the open segment (a, b) inside the domain;
  // models a receiver manifold immersed in Omega.
  static ObservationOp boundary_trace(const Grid& grid, std::array<double, 2> a,
                                      std::array<double, 2> b, int count);
  static ObservationOp local_averages(const Grid& grid, std::vector<Field> weights);

  ObsKind kind() const { return kind_; }
  int n_obs() const { return static_cast<int>(rows_.size()); }
  const std::vector<Field>& rows() const { return rows_; }
  const std::vector<std::array<double, 2>>& points() const { return points_; }

  std::vector<double> observe(const Field& f) const;

 private:
  ObsKind kind_ = ObsKind::point_samples;
  std::vector<Field> rows_;
  std::vector<std::array<double, 2>> points_;
};

// Interpolation row of one point (tensor cubic Lagrange honoring the zero
// boundary); exposed for tests.
Field interpolation_row(const Grid& grid, std::array<double, 2> point);

struct EigenspaceMap {
  double lambda = 0.0;
  std::vector<int> modes;
  std::vector<std::vector<double>> columns;  // n_obs values per group mode
  std::vector<std::vector<double>> pinv;     // |K| x n_obs
  double condition = 0.0;
  double smin = 0.0, smax = 0.0;
  bool full_rank = true;
};

struct BlambdaSet {
  std::vector<EigenspaceMap> maps;  // one per eigenvalue group
};

// Columns O phi_k per eigenvalue group, pseudo-inverses and rank checks.
// With throw_on_deficient, a rank-deficient group raises InjectivityError
// naming every offending eigenvalue.
BlambdaSet build_blambda(const ObservationOp& op, const EigenBasis& basis,
                         bool throw_on_deficient = true);

// Applies B^-1 Proj (pseudo-inverse) to a complex sensor vector.
std::vector<Complex> apply_pinv(const EigenspaceMap& map, const std::vector<Complex>& y);

struct ResidueImage {
  std::vector<int> group_index;           // indices into basis groups (retained, ordered)
  std::vector<double> lambdas;
  std::vector<std::vector<Complex>> block1;  // B-coordinates, f1-weighted combination
  std::vector<std::vector<Complex>> block2;  // f2-weighted combination
};

double image_norm(const ResidueImage& img);
ResidueImage image_diff(const ResidueImage& a, const ResidueImage& b);
ResidueImage image_scale(const ResidueImage& a, double s);

struct FitOptions {
  double t0_margin = 0.0;        // fit window starts at T* + margin
  double min_window = 0.0;       // 0: use everything to the trajectory end
  bool subtract_reference = true;  // remove the designed separable response first
  bool refine_poles = false;       // matrix-pencil refinement of the fit poles
  int buffer_groups = 4;           // extra groups fitted beyond the retained set
};

// Everything the inversion formulas need at the design point: tables at the
// base poles, the excitation pack, the observation geometry, and the
// retained-mode selection (oscillatory, |nu| above threshold, B condition
// below cap).
struct Setup {
  const EigenBasis* basis = nullptr;
  Cutoff chi{1e-7, 1e-6};
  CoefficientField coeff;  // base coefficients (kappa = 0)
  SpatialProfile phi;
  TimeProfile psi{4, 2.0, 1.0};
  Excitation excitation;
  Variant variant = Variant::sound_speed;
  double s_exponent = 1.0;

  ObservationOp op;
  BlambdaSet bmaps;
  std::vector<residues::PolePair> pairs;  // per group, base poles
  std::vector<Complex> f1_plus, f1_minus, f2_plus, f2_minus;
  std::vector<model::NuFactor> nus;
  std::vector<int> retained;  // group indices
  std::vector<std::string> exclusions;  // one line per excluded group

  FitOptions fit;

  const FWeights& weights() const { return *weights_; }
  std::shared_ptr<FWeights> weights_;
};

struct SetupOptions {
  Variant variant = Variant::sound_speed;
  double s_exponent = 1.0;
  int max_retained = 8;
  double nu_rel_floor = 1e-12;
  double cond_cap = 1e6;
  FitOptions fit;
};

Setup make_setup(const EigenBasis& basis, const CoefficientField& base_coeff,
                 const Cutoff& chi, const SpatialProfile& phi, const TimeProfile& psi,
                 const ObservationOp& op, const SetupOptions& opts);

struct ForwardDiagnostics {
  double t_star = 0.0;
  double fit_residual = 0.0;
  double fit_condition = 0.0;
  double max_pole_shift = 0.0;  // refined vs assumed
};

// F-tilde: simulate -> observe u-traces -> per-group residues via the joint
// trace fit -> u->z conversion -> f-hat weighted combinations -> B^-1 Proj.
ResidueImage forward_residues(const Setup& setup, const CoefficientField& coeff_true,
                              const solver::SimOptions& sim, ForwardDiagnostics* diag = nullptr);

// Diagonal formula for the derivative at the design point, in B-coordinates:
// block1_m = nu_m rho_m <dkappa phi^2, phi_m^k>,
// block2_m = nu_m rho_m <dsecond_field, phi_m^k>  (dsecond = dc0^2 (-Lap phi)
// or db0 phi), rho_m = 1/(p+ - p-).
ResidueImage linearized_apply(const Setup& setup, const Field& dkappa, const Field& dsecond);

struct ReconstructionResult {
  ModalVector coef_a;   // modal coefficients of dkappa phi^2 (full-length, zeros off-retained)
  ModalVector coef_b;   // modal coefficients of the second block field
  Field dkappa;         // grid field, zero outside Omega_rec
  Field dsecond;        // dc0_sq or db0 on Omega_rec
  double c_nu = 0.0;    // max_m |nu_m|^-2 lambda_m^{s-1} over retained modes
  std::vector<double> amplification;  // per retained group |(p+-p-)/nu|
  double max_imag = 0.0;              // largest imaginary residual dropped
};

ReconstructionResult reconstruct(const Setup& setup, const ResidueImage& img);

struct NewtonOptions {
  int max_iterations = 10;
  double tol = 0.0;  // image-norm residual target (0: run to the cap)
};

struct NewtonResult {
  std::vector<double> a;          // X1 coordinates (modal coefficients of kappa phi^2)
  Field kappa;                    // grid field of the final iterate
  std::vector<double> residuals;  // image-norm history, one entry per iteration
  int iterations = 0;
};

// kappa field parameterized by its X1 coordinates; the division by phi^2 is
// smoothly regularized near the boundary where phi vanishes.
Field kappa_of_coeffs(const Setup& setup, const std::vector<double>& a);
std::vector<double> retained_modal_coeffs(const Setup& setup, const Field& product_field);

NewtonResult newton_kappa(const Setup& setup, const ResidueImage& observed,
                          const solver::SimOptions& sim, const NewtonOptions& opts);

}  // namespace jmgt::inversion
