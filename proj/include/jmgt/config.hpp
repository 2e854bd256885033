#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "jmgt/grid.hpp"
#include "jmgt/inversion.hpp"
#include "jmgt/model.hpp"

namespace jmgt::harness {

using spectral::Field;
using spectral::Grid;

// Constant, closed-form expression, or explicit node values.
struct FieldSpec {
  std::optional<double> constant;
  std::optional<std::string> expression;
  std::optional<std::vector<double>> values;

  Field realize(const Grid& grid) const;
  bool is_constant() const { return constant.has_value(); }
};

struct ExperimentConfig {
  // grid
  int dim = 1;
  std::vector<double> length{M_PI};
  std::vector<int> points{63};
  // coefficients
  double c = 1.0;
  double tau = 0.1;
  FieldSpec b0;    // constant => b_bar
  FieldSpec c0_sq;
  FieldSpec kappa;
  // cutoff
  double m_lo = 1e-7;
  double m_hi = 1e-6;
  // excitation
  int psi_q = 4;
  double psi_a = 2.0;
  double psi_amplitude = 3.4;
  int phi_modes = 6;
  // observation
  std::string obs_kind = "point-samples";
  std::vector<std::array<double, 2>> obs_points;
  std::array<std::array<double, 2>, 2> trace_endpoints{{{0.0, 0.0}, {0.0, 0.0}}};
  int trace_count = 0;
  double average_width = 0.0;  // local-averages bump half-width
  // time
  double horizon = 45.0;
  double dt = 2e-3;
  int sample_every = 10;
  // modes
  int n_modes = 32;
  int retained = 8;
  int fit_buffer = 4;
  // inversion
  std::string variant = "kappa-c0";  // kappa-only | kappa-c0 | kappa-b0
  double s_exponent = 1.0;
  std::array<double, 2> rec_fraction{0.25, 0.75};
  bool refine_poles = false;
  double fit_t0_margin = 0.0;
  double direction_amplitude = 1e-3;
  FieldSpec dkappa;
  FieldSpec dsecond;
  // misc
  unsigned long seed = 12345;
  std::string output = "out";

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_json_text() const;
  void save(const std::string& path) const;

  Grid make_grid() const;
  model::CoefficientField base_coefficients(const Grid& grid) const;  // kappa = 0
  model::CoefficientField true_coefficients(const Grid& grid) const;
  model::Cutoff make_cutoff() const { return model::Cutoff(m_lo, m_hi); }
  model::TimeProfile make_time_profile() const {
    return model::TimeProfile(psi_q, psi_a, psi_amplitude);
  }
  inversion::ObservationOp make_observation(const Grid& grid) const;
  model::Variant make_variant() const;
};

}  // namespace jmgt::harness
