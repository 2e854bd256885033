#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "jmgt/errors.hpp"

namespace jmgt::residues {

using Complex = std::complex<double>;

enum class Regime { oscillatory, overdamped, critical };

// Roots p(+/-) of omega_lambda(z) = z^2 + b z + c^2 lambda, with the
// discriminant-based regime classification.
struct PolePair {
  double lambda = 0.0;
  Complex plus;
  Complex minus;
  double discriminant = 0.0;  // 4 c^2 lambda - b^2
  Regime regime = Regime::oscillatory;
};

Complex omega(double lambda, double b, double c, Complex z);

// Throws DoublePoleError within relative 1e-12 of the critical case.
PolePair poles(double lambda, double b, double c);

// Res(1/omega; p+) = 1/(p+ - p-); the residue at p- is its negative.
Complex resolvent_residue(const PolePair& pair);

// Residue conversion between u- and z-traces (z = tau u_t + u):
// R_z = (tau p + 1) R_u.
Complex u_to_z_residue(Complex r_u, Complex pole, double tau);
Complex z_to_u_residue(Complex r_z, Complex pole, double tau);

// Closed-form residue of the full-history modal z-trace at p+, from terminal
// data (z, z')(T*) and the tail transform of the modal source
// r_tail(p) = int_{T*}^inf e^{-pt} r_j(t) dt:
//   Res = [r_tail(p+) + e^{-p+ T*}(z1 + (p+ + b) z0)] / (p+ - p-).
struct ModalResiduePair {
  Complex plus;
  Complex minus;
};
ModalResiduePair modal_residue_closed_form(const PolePair& pair, double b, double t_star,
                                           double z0, double z1, Complex r_tail_plus,
                                           Complex r_tail_minus);

enum class TraceMethod { fit, limit };

struct TraceFit {
  Complex r_plus;
  Complex r_minus;
  double residual = 0.0;      // relative l2 misfit over the window
  double condition = 0.0;     // condition of the fit columns
  bool model_mismatch = false;
};

// Estimates the residues of the full-history transform of a sampled trace
// over [t.front(), t.back()], which must lie inside the linear tail. The fit
// method solves the 2-column least squares g ~ R+ e^{p+ t} + R- e^{p- t}
// (columns anchored at t0 for conditioning); the limit method averages
// e^{-p t} g(t) over the last oscillation period. An optional known forcing
// response is subtracted first and its analytic residue added back.
struct ForcingCorrection {
  std::vector<double> particular;  // response samples aligned with t
  Complex residue_plus;            // analytic residue of the particular part
  Complex residue_minus;
};
TraceFit residue_from_trace(std::span<const double> t, std::span<const double> g,
                            const PolePair& pair, TraceMethod method,
                            const ForcingCorrection* forcing = nullptr,
                            double mismatch_tol = 1e-6);

// Joint multi-pair variant for traces carrying several modes; returns one
// residue pair per input pole pair (same anchoring and conventions).
struct MultiTraceFit {
  std::vector<ModalResiduePair> residues;
  double residual = 0.0;
  double condition = 0.0;
};
MultiTraceFit residues_from_trace_multi(std::span<const double> t, std::span<const double> g,
                                        std::span<const PolePair> pairs,
                                        const std::vector<double>* subtract = nullptr);

// Matrix-pencil estimate of the dominant complex poles of a uniformly
// sampled signal. Diagnostic: validates assumed poles against data.
std::vector<Complex> estimate_poles(std::span<const double> samples, double dt, int order);

}  // namespace jmgt::residues
