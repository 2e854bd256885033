#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "jmgt/acceptance.hpp"
#include "jmgt/config.hpp"
#include "jmgt/errors.hpp"
#include "jmgt/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerification = 4;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  long seed = -1;
  int modes = 0;
  bool quiet = false;
};

jmgt::harness::ExperimentConfig load_config(const CommonOpts& o) {
  auto cfg = jmgt::harness::ExperimentConfig::load(o.config_path);
  if (!o.out_dir.empty()) cfg.output = o.out_dir;
  if (o.seed >= 0) cfg.seed = static_cast<unsigned long>(o.seed);
  if (o.modes > 0) cfg.retained = o.modes;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jmgt: switched JMGT simulation and coefficient-inversion laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string suite = "all";
  std::string report_path;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config (JSON)");
    if (needs_config) c->required();
    cmd->add_option("--out", opts.out_dir, "output directory override");
    cmd->add_option("--seed", opts.seed, "seed override for randomized checks");
    cmd->add_option("--modes", opts.modes, "retained mode count override");
    cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
  };

  auto* sim = app.add_subcommand("simulate", "run the forward solver, write trajectory.csv");
  add_common(sim, true);
  auto* ext = app.add_subcommand("extract", "simulate and extract residues, write residues.json");
  add_common(ext, true);
  auto* inv = app.add_subcommand("invert", "full pipeline: simulate, extract, reconstruct");
  add_common(inv, true);
  auto* ver = app.add_subcommand("verify", "run a verification suite");
  add_common(ver, false);
  ver->add_option("--suite", suite, "spectral|solver|residue|inversion|acceptance|all");
  auto* rep = app.add_subcommand("report", "pretty-print a run report");
  rep->add_option("--in", report_path, "report.json path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (sim->parsed()) {
      jmgt::harness::run_simulate(load_config(opts));
      if (!opts.quiet) std::cout << "trajectory written\n";
    } else if (ext->parsed()) {
      jmgt::harness::run_extract(load_config(opts));
      if (!opts.quiet) std::cout << "residues written\n";
    } else if (inv->parsed()) {
      const auto report = jmgt::harness::run(load_config(opts));
      if (!opts.quiet) std::cout << report.to_json_text() << "\n";
      if (!report.all_pass()) return kExitVerification;
    } else if (ver->parsed()) {
      unsigned long seed = 12345;
      if (!opts.config_path.empty()) seed = load_config(opts).seed;
      if (opts.seed >= 0) seed = static_cast<unsigned long>(opts.seed);
      std::ostringstream sink;
      const bool ok = jmgt::harness::run_suite(jmgt::harness::suite_ids(suite), seed,
                                               opts.quiet ? sink : std::cout);
      if (!ok) return kExitVerification;
    } else if (rep->parsed()) {
      std::ifstream is(report_path);
      if (!is) throw jmgt::DomainError("report: cannot open " + report_path);
      nlohmann::json j;
      is >> j;
      std::cout << "variant:    " << j.value("variant", "?") << "\n";
      std::cout << "T*:         " << j.value("t_star", 0.0) << "\n";
      std::cout << "decay rate: " << j.value("decay_rate", 0.0) << "\n";
      for (const auto& e : j.value("entries", nlohmann::json::array())) {
        std::cout << (e.value("pass", false) ? "  [PASS] " : "  [FAIL] ")
                  << e.value("name", "?") << " = " << e.value("value", 0.0) << "\n";
      }
      for (const auto& t : j.value("timings", nlohmann::json::array())) {
        std::cout << "  " << t.get<std::string>() << "\n";
      }
    }
  } catch (const jmgt::DomainError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const jmgt::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
