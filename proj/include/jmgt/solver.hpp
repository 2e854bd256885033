#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "jmgt/model.hpp"
#include "jmgt/residues.hpp"
#include "jmgt/spectral.hpp"

namespace jmgt::solver {

using model::CoefficientField;
using model::Cutoff;
using model::Excitation;
using spectral::Complex;
using spectral::ComplexModal;
using spectral::EigenBasis;
using spectral::Field;
using spectral::ModalVector;

// Modal source callback: fills r_j(t) for j < n_modes.
using SourceFn = std::function<void(double t, double* out, int n_modes)>;

SourceFn zero_source();
SourceFn source_from_excitation(const Excitation::ModalSource& src);

struct State {
  double t = 0.0;
  ModalVector u, v, w;  // u, u_t, u_tt (modal)
  double sigma = 0.0;
  double sigma_dot = 0.0;
  double z_l2sq = 0.0;
  double min_nondegeneracy = 1.0;  // min over nodes of 1 - 2 kappa sigma u
};

struct SimOptions {
  double horizon = 1.0;
  double dt = 1e-3;
  int sample_every = 10;
  double delta0 = 0.5;  // accepted lower bound for 1 - 2 kappa sigma u
  // Integrate past the horizon (up to cap * horizon) until |z|^2 stays below
  // the switching floor, so T* + margin is always covered.
  bool extend_to_switch_off = false;
  double extend_cap = 4.0;
  // Observation rows (grid functionals); u and u_t channels are both recorded.
  const std::vector<Field>* obs_rows = nullptr;
  bool check_z_consistency = false;  // co-integrate z and compare (diagnostic)
};

struct Trajectory {
  std::vector<double> times;
  std::vector<ModalVector> u, v, w;
  std::vector<double> energy;          // E0 with the spectral gradient term
  std::vector<double> energy_grad_fd;  // E0 with the |c0 grad z|^2 finite-difference term
  std::vector<double> sigma;
  std::vector<double> z_l2sq;
  std::vector<std::vector<double>> obs_u;   // [sample][channel]
  std::vector<std::vector<double>> obs_ut;
  double dt = 0.0;
  int sample_every = 1;
  double min_nondegeneracy = std::numeric_limits<double>::infinity();
  double max_z_consistency_err = 0.0;

  std::size_t n_samples() const { return times.size(); }
  ModalVector z_modal(std::size_t k, double tau) const;
  ModalVector zdot_modal(std::size_t k, double tau) const;
};

// One classical RK4 step of the switched system; checks non-degeneracy and
// NaN on the accepted state.
class Stepper {
 public:
  Stepper(const EigenBasis& basis, const CoefficientField& coeff, const Cutoff& chi,
          SourceFn source, double delta0);
  ~Stepper();
  Stepper(Stepper&&) noexcept;

  void step(State& s, double dt);
  void refresh_diagnostics(State& s) const;

  const EigenBasis& basis() const;

  struct Impl;
  Impl* impl() { return impl_.get(); }

 private:
  std::unique_ptr<Impl> impl_;
};

State make_state(const EigenBasis& basis, const ModalVector& u0, const ModalVector& u1,
                 const ModalVector& u2);

double stability_dt_limit(const EigenBasis& basis, const CoefficientField& coeff);

Trajectory simulate(const EigenBasis& basis, const CoefficientField& coeff, const Cutoff& chi,
                    SourceFn source, const ModalVector& u0, const ModalVector& u1,
                    const ModalVector& u2, const SimOptions& opts);

// First sample time after which |z|^2 stays at or below the switching floor,
// with a persistence window of 2/b covered by the trajectory.
double detect_t_star(const Trajectory& traj, const Cutoff& chi, double b_bar);

// E0[z] = (|z_t|^2 + c^2 sum lambda_j z_j^2) / 2 on a sampled state.
double energy_of_sample(const Trajectory& traj, std::size_t k, const EigenBasis& basis,
                        double tau);

// Closed-form modal propagation of the linear tail from (z, z')(T*), plus the
// particular response to a polynomial-exponential source on [T*, inf).
class LinearTail {
 public:
  LinearTail(const EigenBasis& basis, const CoefficientField& coeff, double t_star,
             ModalVector z0, ModalVector z1, const Excitation::ModalSource* source);

  double t_star() const { return t_star_; }
  const std::vector<residues::PolePair>& pairs() const { return pairs_; }
  Complex amplitude_plus(int j) const { return a_plus_[j]; }
  Complex amplitude_minus(int j) const { return a_minus_[j]; }
  const ModalVector& z0() const { return z0_; }
  const ModalVector& z1() const { return z1_; }

  ModalVector eval_z(double t) const;
  ModalVector eval_zdot(double t) const;

  // Closed-form residues of the full-history modal z-traces.
  std::vector<residues::ModalResiduePair> residues() const;

 private:
  double t_star_;
  double b_bar_;
  std::vector<residues::PolePair> pairs_;
  std::vector<Complex> a_plus_, a_minus_;
  ModalVector z0_, z1_;
  const Excitation::ModalSource* source_;
};

LinearTail linear_tail(const Trajectory& traj, const EigenBasis& basis,
                       const CoefficientField& coeff, double t_star,
                       const Excitation::ModalSource* source);

struct Direction {
  Field dkappa;  // empty = zero
  Field dc0_sq;
  Field db0;
};

// Tangent (Frechet-derivative) trajectory; co-integrates the base state so the
// tangent is the exact derivative of the discrete flow.
Trajectory solve_linearized(const EigenBasis& basis, const CoefficientField& coeff,
                            const Cutoff& chi, SourceFn source, const ModalVector& u0,
                            const ModalVector& u1, const ModalVector& u2,
                            const Direction& dir, const SimOptions& opts);

struct TaylorSample {
  double amplitude;        // ||delta||_inf scale
  double remainder_norm;   // sup_t sqrt(E0[tau w_t + w])
};

struct TaylorResult {
  std::vector<TaylorSample> samples;
  double slope = 0.0;  // log-log LS slope
};

TaylorResult taylor_remainder_check(const EigenBasis& basis, const CoefficientField& coeff,
                                    const Cutoff& chi, SourceFn source, const ModalVector& u0,
                                    const ModalVector& u1, const ModalVector& u2,
                                    const Direction& dir, const std::vector<double>& amplitudes,
                                    const SimOptions& opts);

// Energy norm of the difference trajectory sup_t sqrt(E0[tau d_t + d]) between
// aligned trajectories (a - b - scale * c form used by the Taylor check).
double trajectory_energy_norm(const Trajectory& traj, const EigenBasis& basis, double tau);

}  // namespace jmgt::solver
