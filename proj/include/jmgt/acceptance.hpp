#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace jmgt::harness {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string details;
  double seconds = 0.0;
};

// Acceptance criteria 1..10 plus the module invariant bundles 11..14
// (spectral, solver, residue, inversion). All tolerances are pinned here.
CriterionResult run_criterion(int id, unsigned long seed);

std::vector<int> suite_ids(const std::string& suite);  // throws ConfigError on unknown suite

// Runs the ids, prints one pass/fail line per criterion, returns overall pass.
bool run_suite(const std::vector<int>& ids, unsigned long seed, std::ostream& os);

}  // namespace jmgt::harness
