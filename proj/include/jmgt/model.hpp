#pragma once

#include <array>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "jmgt/grid.hpp"
#include "jmgt/polyexp.hpp"
#include "jmgt/spectral.hpp"

namespace jmgt::model {

using spectral::ComplexModal;
using spectral::EigenBasis;
using spectral::Field;
using spectral::Grid;
using spectral::ModalVector;

// Degree-5 smoothstep between the thresholds (lo, hi): identically 0 below
// lo, identically 1 above hi, two continuous derivatives everywhere.
class Cutoff {
 public:
  Cutoff(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!(0.0 < lo && lo < hi)) throw DomainError("cutoff: need 0 < m_lo < m_hi");
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }

  struct Eval {
    double value;       // in [0,1]
    double derivative;  // >= 0, zero outside (lo, hi)
  };
  Eval eval(double s) const;
  double second_derivative(double s) const;

 private:
  double lo_, hi_;
};

// sigma = chi(|z|_L2^2) with the plain L2 norm of z = tau u_t + u.
double sigma_of_state(const Cutoff& chi, const Field& z, const EigenBasis& basis);

// Space-dependent PDE coefficients plus the scalar constants.
struct CoefficientField {
  Field kappa;
  Field c0_sq;
  Field b0;              // used when !constant_b0
  bool constant_b0 = true;
  double b_bar = 0.0;    // value when constant_b0
  double tau = 0.0;
  double c = 1.0;

  void validate(const Grid& grid) const;
  double b0_at(std::size_t i) const { return constant_b0 ? b_bar : b0[i]; }
};

// psi(t) = amplitude * t^q e^{-a t}, q >= 3 so psi(0)=psi'(0)=psi''(0)=0.
// The shipped default is q = 4, which additionally makes the excitation
// start from rest.
class TimeProfile {
 public:
  TimeProfile(int q, double a, double amplitude);

  int q() const { return q_; }
  double a() const { return a_; }
  double amplitude() const { return amplitude_; }

  const PolyExp& psi() const { return psi_; }
  const PolyExp& d1() const { return d1_; }
  const PolyExp& d2() const { return d2_; }
  const PolyExp& d3() const { return d3_; }

  // psi_tau = tau psi' + psi and its derivatives.
  PolyExp psi_tau(double tau) const { return tau * d1_ + psi_; }

 private:
  int q_;
  double a_, amplitude_;
  PolyExp psi_, d1_, d2_, d3_;
};

// Spatial excitation profile: a field in the basis span that stays bounded
// away from zero (and has Laplacian bounded away from zero) on the
// reconstruction subdomain.
struct SpatialProfile {
  ModalVector coeffs;       // modal coefficients on the basis
  Field values;             // phi on the grid
  Field laplacian;          // Lap phi on the grid
  Field a_phi;              // (A phi) on the grid
  double l2_sq = 0.0;       // |phi|_L2^2, plain norm
  double min_abs_phi = 0.0;     // over the reconstruction subdomain
  double min_abs_lap = 0.0;
  std::array<double, 2> rec_fraction{0.25, 0.75};  // per-axis [lo,hi] of Omega_rec

  static SpatialProfile from_modal(const EigenBasis& basis, ModalVector coeffs,
                                   std::array<double, 2> rec_fraction);
  // Default profile: the product-sine bump projected on the first n_fit modes,
  // normalized to unit sup norm.
  static SpatialProfile default_bump(const EigenBasis& basis, int n_fit,
                                     std::array<double, 2> rec_fraction);
};

bool in_rec_domain(const Grid& grid, std::size_t idx, const std::array<double, 2>& frac);

// Separable excitation r(x,t) = phi(x) g2(t) + c^2 (A phi)(x) g0(t) + b phi(x) g1(t)
// with g0 = tau psi' + psi, g1 = g0', g2 = g0''. With kappa = 0, constant b0
// and zero initial data the solution is exactly u = phi psi.
class Excitation {
 public:
  Excitation(const EigenBasis& design_basis, const SpatialProfile& phi,
             const TimeProfile& psi, const CoefficientField& coeff);

  // Modal coefficients of r(.,t) with respect to an arbitrary basis; the
  // per-mode time dependence stays polynomial-exponential.
  struct ModalSource {
    std::vector<PolyExp> per_mode;  // r_j(t)
    void eval(double t, double* out) const {
      for (std::size_t j = 0; j < per_mode.size(); ++j) out[j] = per_mode[j](t);
    }
    Complex laplace(int j, Complex z) const { return per_mode[j].laplace(z); }
    Complex laplace_tail(int j, Complex z, double t0) const {
      return per_mode[j].laplace_tail(z, t0);
    }
  };
  ModalSource project(const EigenBasis& basis) const;

  double r_at(std::size_t node, double t, const EigenBasis& basis) const;

  const SpatialProfile& phi() const { return phi_; }
  const TimeProfile& psi() const { return psi_; }
  const PolyExp& g0() const { return g0_; }  // tau psi' + psi
  const PolyExp& g1() const { return g1_; }
  const PolyExp& g2() const { return g2_; }
  double b_bar() const { return b_bar_; }
  double tau() const { return tau_; }
  double c() const { return c_; }
  const Field& phi_field() const { return phi_.values; }
  const Field& a_phi_field() const { return phi_.a_phi; }

 private:
  SpatialProfile phi_;
  TimeProfile psi_;
  PolyExp g0_, g1_, g2_;
  double b_bar_, tau_, c_;
};

enum class Variant { sound_speed, attenuation };

// The pair (f1, f2) of excitation weight functions and their transforms:
// sound-speed variant f1 = tau psi' + psi, attenuation variant
// f1 = tau psi'' + psi'; in both f2(t) = chi(|phi|^2 (tau psi'+psi)^2) (psi^2)''.
// f1-hat is closed form; f2-hat is adaptive Gauss quadrature with panel
// boundaries at the cutoff crossing times.
class FWeights {
 public:
  FWeights(const TimeProfile& psi, const Cutoff& chi, double phi_l2_sq, double tau,
           Variant variant);

  double f1(double t) const { return f1_(t); }
  double f2(double t) const;
  Complex f1_hat(Complex z) const { return f1_.laplace(z); }
  Complex f2_hat(Complex z) const;

  const PolyExp& f1_profile() const { return f1_; }
  Variant variant() const { return variant_; }

 private:
  PolyExp f1_;
  PolyExp psi_tau_;      // tau psi' + psi (cutoff argument)
  PolyExp psi_sq_dd_;    // (psi^2)''
  Cutoff chi_;
  double phi_l2_sq_;
  Variant variant_;
  double t_quad_end_;
  std::vector<double> breakpoints_;
};

struct NuFactor {
  Complex nu;
  bool flagged;  // |nu| below the design-violation threshold
};

// nu_m = f1(p-) f2(p+) - f1(p+) f2(p-) for each pole pair; flags near-zero
// values instead of throwing.
std::vector<NuFactor> nu_factors(const std::function<Complex(Complex)>& f1_hat,
                                 const std::function<Complex(Complex)>& f2_hat,
                                 const std::vector<std::array<Complex, 2>>& poles);

// Adaptive composite Gauss-Legendre quadrature of f over [a,b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-11);
Complex integrate(const std::function<Complex(double)>& f, double a, double b,
                  double rel_tol = 1e-11);

}  // namespace jmgt::model
