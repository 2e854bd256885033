#pragma once

#include <string>
#include <vector>

#include "jmgt/config.hpp"
#include "jmgt/inversion.hpp"
#include "jmgt/solver.hpp"

namespace jmgt::harness {

struct ReportEntry {
  std::string name;
  bool pass = true;
  double value = 0.0;
  std::string details;
};

struct RunReport {
  std::string variant;
  double t_star = 0.0;
  double decay_rate = 0.0;  // fitted alpha-hat of the energy tail
  double fit_residual = 0.0;
  double recon_rel_err_kappa = -1.0;   // -1: not applicable
  double recon_rel_err_second = -1.0;
  std::vector<ReportEntry> entries;
  std::vector<std::string> timings;  // "stage: seconds"

  bool all_pass() const;
  std::string to_json_text() const;
  void save(const std::string& path) const;
};

// Executes the configured pipeline end to end (simulate -> extract -> invert
// -> verify against the synthetic truth) and writes every artifact under
// cfg.output. Deterministic for a fixed config and seed.
RunReport run(const ExperimentConfig& cfg);

// Stage entry points used by the CLI subcommands.
void run_simulate(const ExperimentConfig& cfg);
void run_extract(const ExperimentConfig& cfg);

void write_trajectory_csv(const std::string& path, const solver::Trajectory& traj);
void write_residues_json(const std::string& path,
                         const std::vector<residues::PolePair>& pairs,
                         const std::vector<residues::ModalResiduePair>& res,
                         const std::vector<double>& fit_residuals);
void write_reconstruction_csv(const std::string& path, const spectral::Grid& grid,
                              const spectral::Field& dkappa, const spectral::Field& dsecond,
                              const std::string& second_name);

std::string format_g17(double v);

}  // namespace jmgt::harness
