#include "jmgt/config.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "jmgt/expr.hpp"

namespace jmgt::harness {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  }
}

FieldSpec parse_field(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  reject_unknown(j, {"constant", "expression", "values"}, where);
  FieldSpec spec;
  int given = 0;
  if (j.contains("constant")) {
    spec.constant = j.at("constant").get<double>();
    ++given;
  }
  if (j.contains("expression")) {
    spec.expression = j.at("expression").get<std::string>();
    ++given;
  }
  if (j.contains("values")) {
    spec.values = j.at("values").get<std::vector<double>>();
    ++given;
  }
  if (given != 1) {
    throw ConfigError("config: " + where +
                      " needs exactly one of constant/expression/values");
  }
  return spec;
}

json dump_field(const FieldSpec& spec) {
  json j = json::object();
  if (spec.constant) j["constant"] = *spec.constant;
  if (spec.expression) j["expression"] = *spec.expression;
  if (spec.values) j["values"] = *spec.values;
  return j;
}

}  // namespace

Field FieldSpec::realize(const Grid& grid) const {
  if (constant) return Field(grid.size(), *constant);
  if (expression) return model::eval_on_grid(*expression, grid);
  if (values) {
    if (values->size() != grid.size()) {
      throw ConfigError("config: field value array does not match the grid");
    }
    return *values;
  }
  throw ConfigError("config: empty field specification");
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse failure: ") + e.what());
  }
  reject_unknown(j,
                 {"grid", "coefficients", "cutoff", "excitation", "observation", "time",
                  "modes", "inversion", "seed", "output"},
                 "top level");
  ExperimentConfig cfg;
  cfg.dkappa.constant = 0.0;
  cfg.dsecond.constant = 0.0;
  cfg.kappa.constant = 0.0;
  cfg.b0.constant = 1.0;
  cfg.c0_sq.constant = 1.0;

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    reject_unknown(g, {"dim", "length", "points"}, "grid");
    if (g.contains("dim")) cfg.dim = g.at("dim").get<int>();
    if (g.contains("length")) cfg.length = g.at("length").get<std::vector<double>>();
    if (g.contains("points")) cfg.points = g.at("points").get<std::vector<int>>();
  }
  if (j.contains("coefficients")) {
    const auto& cj = j.at("coefficients");
    reject_unknown(cj, {"c", "tau", "b0", "c0_sq", "kappa"}, "coefficients");
    if (cj.contains("c")) cfg.c = cj.at("c").get<double>();
    if (cj.contains("tau")) cfg.tau = cj.at("tau").get<double>();
    if (cj.contains("b0")) cfg.b0 = parse_field(cj.at("b0"), "coefficients.b0");
    if (cj.contains("c0_sq")) cfg.c0_sq = parse_field(cj.at("c0_sq"), "coefficients.c0_sq");
    if (cj.contains("kappa")) cfg.kappa = parse_field(cj.at("kappa"), "coefficients.kappa");
  }
  if (j.contains("cutoff")) {
    const auto& cj = j.at("cutoff");
    reject_unknown(cj, {"m_lo", "m_hi"}, "cutoff");
    if (cj.contains("m_lo")) cfg.m_lo = cj.at("m_lo").get<double>();
    if (cj.contains("m_hi")) cfg.m_hi = cj.at("m_hi").get<double>();
    if (!(cfg.m_lo < cfg.m_hi)) {
      throw ConfigError("config: cutoff.m_lo must be strictly below cutoff.m_hi");
    }
  }
  if (j.contains("excitation")) {
    const auto& e = j.at("excitation");
    reject_unknown(e, {"q", "a", "amplitude", "phi_modes"}, "excitation");
    if (e.contains("q")) cfg.psi_q = e.at("q").get<int>();
    if (e.contains("a")) cfg.psi_a = e.at("a").get<double>();
    if (e.contains("amplitude")) cfg.psi_amplitude = e.at("amplitude").get<double>();
    if (e.contains("phi_modes")) cfg.phi_modes = e.at("phi_modes").get<int>();
  }
  if (j.contains("observation")) {
    const auto& o = j.at("observation");
    reject_unknown(o, {"kind", "points", "trace_endpoints", "trace_count", "average_width"},
                   "observation");
    if (o.contains("kind")) cfg.obs_kind = o.at("kind").get<std::string>();
    if (o.contains("points")) {
      cfg.obs_points.clear();
      for (const auto& p : o.at("points")) {
        const auto v = p.get<std::vector<double>>();
        cfg.obs_points.push_back({v.at(0), v.size() > 1 ? v.at(1) : 0.0});
      }
    }
    if (o.contains("trace_endpoints")) {
      const auto eps = o.at("trace_endpoints").get<std::vector<std::vector<double>>>();
      for (int k = 0; k < 2; ++k) {
        cfg.trace_endpoints[k] = {eps.at(k).at(0),
                                  eps.at(k).size() > 1 ? eps.at(k).at(1) : 0.0};
      }
    }
    if (o.contains("trace_count")) cfg.trace_count = o.at("trace_count").get<int>();
    if (o.contains("average_width")) cfg.average_width = o.at("average_width").get<double>();
  }
  if (j.contains("time")) {
    const auto& t = j.at("time");
    reject_unknown(t, {"horizon", "dt", "sample_every"}, "time");
    if (t.contains("horizon")) cfg.horizon = t.at("horizon").get<double>();
    if (t.contains("dt")) cfg.dt = t.at("dt").get<double>();
    if (t.contains("sample_every")) cfg.sample_every = t.at("sample_every").get<int>();
  }
  if (j.contains("modes")) {
    const auto& m = j.at("modes");
    reject_unknown(m, {"n_modes", "retained", "fit_buffer"}, "modes");
    if (m.contains("n_modes")) cfg.n_modes = m.at("n_modes").get<int>();
    if (m.contains("retained")) cfg.retained = m.at("retained").get<int>();
    if (m.contains("fit_buffer")) cfg.fit_buffer = m.at("fit_buffer").get<int>();
  }
  if (j.contains("inversion")) {
    const auto& iv = j.at("inversion");
    reject_unknown(iv,
                   {"variant", "s_exponent", "rec_fraction", "refine_poles", "fit_t0_margin",
                    "direction_amplitude", "dkappa", "dsecond"},
                   "inversion");
    if (iv.contains("variant")) cfg.variant = iv.at("variant").get<std::string>();
    if (iv.contains("s_exponent")) cfg.s_exponent = iv.at("s_exponent").get<double>();
    if (iv.contains("rec_fraction")) {
      const auto rf = iv.at("rec_fraction").get<std::vector<double>>();
      cfg.rec_fraction = {rf.at(0), rf.at(1)};
    }
    if (iv.contains("refine_poles")) cfg.refine_poles = iv.at("refine_poles").get<bool>();
    if (iv.contains("fit_t0_margin")) {
      cfg.fit_t0_margin = iv.at("fit_t0_margin").get<double>();
    }
    if (iv.contains("direction_amplitude")) {
      cfg.direction_amplitude = iv.at("direction_amplitude").get<double>();
    }
    if (iv.contains("dkappa")) cfg.dkappa = parse_field(iv.at("dkappa"), "inversion.dkappa");
    if (iv.contains("dsecond")) {
      cfg.dsecond = parse_field(iv.at("dsecond"), "inversion.dsecond");
    }
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<unsigned long>();
  if (j.contains("output")) cfg.output = j.at("output").get<std::string>();

  if (cfg.variant != "kappa-only" && cfg.variant != "kappa-c0" && cfg.variant != "kappa-b0") {
    throw ConfigError("config: variant must be kappa-only, kappa-c0 or kappa-b0");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["grid"] = {{"dim", dim}, {"length", length}, {"points", points}};
  j["coefficients"] = {{"c", c},
                       {"tau", tau},
                       {"b0", dump_field(b0)},
                       {"c0_sq", dump_field(c0_sq)},
                       {"kappa", dump_field(kappa)}};
  j["cutoff"] = {{"m_lo", m_lo}, {"m_hi", m_hi}};
  j["excitation"] = {
      {"q", psi_q}, {"a", psi_a}, {"amplitude", psi_amplitude}, {"phi_modes", phi_modes}};
  json obs = {{"kind", obs_kind}};
  if (!obs_points.empty()) {
    json pts = json::array();
    for (const auto& p : obs_points) {
      pts.push_back(dim == 1 ? json::array({p[0]}) : json::array({p[0], p[1]}));
    }
    obs["points"] = pts;
  }
  if (trace_count > 0) {
    obs["trace_endpoints"] = {json::array({trace_endpoints[0][0], trace_endpoints[0][1]}),
                              json::array({trace_endpoints[1][0], trace_endpoints[1][1]})};
    obs["trace_count"] = trace_count;
  }
  if (average_width > 0.0) obs["average_width"] = average_width;
  j["observation"] = obs;
  j["time"] = {{"horizon", horizon}, {"dt", dt}, {"sample_every", sample_every}};
  j["modes"] = {{"n_modes", n_modes}, {"retained", retained}, {"fit_buffer", fit_buffer}};
  j["inversion"] = {{"variant", variant},
                    {"s_exponent", s_exponent},
                    {"rec_fraction", json::array({rec_fraction[0], rec_fraction[1]})},
                    {"refine_poles", refine_poles},
                    {"fit_t0_margin", fit_t0_margin},
                    {"direction_amplitude", direction_amplitude},
                    {"dkappa", dump_field(dkappa)},
                    {"dsecond", dump_field(dsecond)}};
  j["seed"] = seed;
  j["output"] = output;
  return j.dump(2);
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("config: cannot write " + path);
  os << to_json_text() << "\n";
}

Grid ExperimentConfig::make_grid() const {
  if (dim == 1) {
    if (length.size() != 1 || points.size() != 1) {
      throw ConfigError("config: 1-D grid needs one length and one point count");
    }
    return Grid::interval(length[0], points[0]);
  }
  if (length.size() != 2 || points.size() != 2) {
    throw ConfigError("config: 2-D grid needs two lengths and two point counts");
  }
  return Grid::rectangle(length[0], length[1], points[0], points[1]);
}

model::CoefficientField ExperimentConfig::base_coefficients(const Grid& grid) const {
  model::CoefficientField cf;
  cf.c = c;
  cf.tau = tau;
  cf.c0_sq = c0_sq.realize(grid);
  cf.kappa.assign(grid.size(), 0.0);
  if (b0.is_constant()) {
    cf.constant_b0 = true;
    cf.b_bar = *b0.constant;
  } else {
    cf.constant_b0 = false;
    cf.b0 = b0.realize(grid);
  }
  cf.validate(grid);
  return cf;
}

model::CoefficientField ExperimentConfig::true_coefficients(const Grid& grid) const {
  model::CoefficientField cf = base_coefficients(grid);
  cf.kappa = kappa.realize(grid);
  const double eps = direction_amplitude;
  const Field dk = dkappa.realize(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) cf.kappa[i] += eps * dk[i];
  if (variant == "kappa-c0") {
    const Field ds = dsecond.realize(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) cf.c0_sq[i] += eps * ds[i];
  } else if (variant == "kappa-b0") {
    const Field ds = dsecond.realize(grid);
    bool nonzero = false;
    for (double v : ds) nonzero = nonzero || v != 0.0;
    if (nonzero) {
      if (cf.constant_b0) {
        cf.b0.assign(grid.size(), cf.b_bar);
        cf.constant_b0 = false;
      }
      for (std::size_t i = 0; i < grid.size(); ++i) cf.b0[i] += eps * ds[i];
    }
  }
  cf.validate(grid);
  return cf;
}

inversion::ObservationOp ExperimentConfig::make_observation(const Grid& grid) const {
  if (obs_kind == "point-samples") {
    return inversion::ObservationOp::point_samples(grid, obs_points);
  }
  if (obs_kind == "boundary-trace-set") {
    return inversion::ObservationOp::boundary_trace(grid, trace_endpoints[0],
                                                    trace_endpoints[1], trace_count);
  }
  if (obs_kind == "local-averages") {
    if (obs_points.empty() || !(average_width > 0.0)) {
      throw ConfigError("config: local-averages needs points and average_width");
    }
    std::vector<Field> weights;
    for (const auto& p : obs_points) {
      Field w(grid.size(), 0.0);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto xy = grid.coords(i);
        double d2 = 0.0;
        for (int dcoord = 0; dcoord < grid.dim(); ++dcoord) {
          const double dd = xy[dcoord] - p[dcoord];
          d2 += dd * dd;
        }
        w[i] = std::exp(-d2 / (average_width * average_width));
      }
      // normalize to unit mass
      double mass = 0.0;
      for (double v : w) mass += v * grid.cell();
      for (double& v : w) v /= mass;
      weights.push_back(std::move(w));
    }
    return inversion::ObservationOp::local_averages(grid, std::move(weights));
  }
  throw ConfigError("config: unknown observation kind '" + obs_kind + "'");
}

model::Variant ExperimentConfig::make_variant() const {
  return variant == "kappa-b0" ? model::Variant::attenuation : model::Variant::sound_speed;
}

}  // namespace jmgt::harness
