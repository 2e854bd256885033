#include "jmgt/inversion.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "jmgt/kernels.hpp"

namespace jmgt::inversion {

namespace ker = jmgt::kernels;
using residues::PolePair;
using residues::Regime;

namespace {

// 4-node Lagrange stencil on the extended axis (boundary nodes included with
// value zero). Returns the extended start index and the four weights.
struct AxisStencil {
  int start;
  std::array<double, 4> w;
};

AxisStencil axis_stencil(double x, double h, int npts, double length) {
  if (x < -1e-12 || x > length + 1e-12) {
    throw DomainError("observation: point outside the domain");
  }
  x = std::clamp(x, 0.0, length);
  const int ext = npts + 1;  // extended indices 0..ext
  const double s = x / h;
  int k = std::clamp(static_cast<int>(std::floor(s)), 0, ext - 1);
  int start = std::clamp(k - 1, 0, ext - 3);
  AxisStencil st;
  st.start = start;
  for (int j = 0; j < 4; ++j) {
    double w = 1.0;
    const double xj = (start + j) * h;
    for (int m = 0; m < 4; ++m) {
      if (m == j) continue;
      const double xm = (start + m) * h;
      w *= (x - xm) / (xj - xm);
    }
    st.w[j] = w;
  }
  return st;
}

}  // namespace

Field interpolation_row(const Grid& grid, std::array<double, 2> point) {
  Field row(grid.size(), 0.0);
  if (grid.dim() == 1) {
    const auto st = axis_stencil(point[0], grid.h(0), grid.npts(0), grid.length(0));
    for (int j = 0; j < 4; ++j) {
      const int e = st.start + j;
      if (e >= 1 && e <= grid.npts(0)) row[e - 1] += st.w[j];
    }
  } else {
    const auto sx = axis_stencil(point[0], grid.h(0), grid.npts(0), grid.length(0));
    const auto sy = axis_stencil(point[1], grid.h(1), grid.npts(1), grid.length(1));
    for (int jx = 0; jx < 4; ++jx) {
      const int ex = sx.start + jx;
      if (ex < 1 || ex > grid.npts(0)) continue;
      for (int jy = 0; jy < 4; ++jy) {
        const int ey = sy.start + jy;
        if (ey < 1 || ey > grid.npts(1)) continue;
        row[grid.index(ex - 1, ey - 1)] += sx.w[jx] * sy.w[jy];
      }
    }
  }
  return row;
}

ObservationOp ObservationOp::point_samples(const Grid& grid,
                                           const std::vector<std::array<double, 2>>& points) {
  if (points.empty()) throw DomainError("observation: need at least one point");
  ObservationOp op;
  op.kind_ = ObsKind::point_samples;
  op.points_ = points;
  for (const auto& p : points) op.rows_.push_back(interpolation_row(grid, p));
  return op;
}

ObservationOp ObservationOp::boundary_trace(const Grid& grid, std::array<double, 2> a,
                                            std::array<double, 2> b, int count) {
  if (count < 1) throw DomainError("observation: trace needs at least one sample point");
  std::vector<std::array<double, 2>> pts;
  for (int k = 0; k < count; ++k) {
    const double t = (k + 1.0) / (count + 1.0);
    pts.push_back({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])});
  }
  ObservationOp op = point_samples(grid, pts);
  op.kind_ = ObsKind::boundary_trace;
  return op;
}

ObservationOp ObservationOp::local_averages(const Grid& grid, std::vector<Field> weights) {
  if (weights.empty()) throw DomainError("observation: need at least one weight field");
  ObservationOp op;
  op.kind_ = ObsKind::local_averages;
  for (auto& w : weights) {
    if (w.size() != grid.size()) throw DomainError("observation: weight size mismatch");
    Field row = std::move(w);
    ker::scal(grid.cell(), row.data(), row.size());
    op.rows_.push_back(std::move(row));
  }
  return op;
}

std::vector<double> ObservationOp::observe(const Field& f) const {
  if (rows_.empty()) throw DomainError("observation: empty operator");
  if (f.size() != rows_[0].size()) throw DomainError("observation: field size mismatch");
  std::vector<double> out;
  out.reserve(rows_.size());
  for (const auto& row : rows_) out.push_back(ker::dot(row.data(), f.data(), f.size()));
  return out;
}

BlambdaSet build_blambda(const ObservationOp& op, const EigenBasis& basis,
                         bool throw_on_deficient) {
  std::size_t kmax = 0;
  for (const auto& g : basis.groups()) kmax = std::max(kmax, g.modes.size());
  if (static_cast<std::size_t>(op.n_obs()) < kmax) {
    throw DomainError("observation: fewer sensors than the largest eigenvalue multiplicity");
  }

  BlambdaSet set;
  double global_smax = 0.0;
  std::vector<Eigen::JacobiSVD<Eigen::MatrixXd>> svds;
  for (const auto& g : basis.groups()) {
    EigenspaceMap map;
    map.lambda = g.lambda;
    map.modes = g.modes;
    Eigen::MatrixXd o(op.n_obs(), g.modes.size());
    for (std::size_t k = 0; k < g.modes.size(); ++k) {
      const auto col = op.observe(basis.eigenfunction(g.modes[k]));
      map.columns.push_back(col);
      for (int i = 0; i < op.n_obs(); ++i) o(i, k) = col[i];
    }
    svds.emplace_back(o, Eigen::ComputeThinU | Eigen::ComputeThinV);
    map.smax = svds.back().singularValues()(0);
    map.smin = svds.back().singularValues()(g.modes.size() - 1);
    global_smax = std::max(global_smax, map.smax);
    set.maps.push_back(std::move(map));
  }

  std::vector<double> deficient;
  for (std::size_t gi = 0; gi < set.maps.size(); ++gi) {
    EigenspaceMap& map = set.maps[gi];
    map.full_rank = map.smin > 1e-8 * global_smax;
    map.condition = map.full_rank ? map.smax / map.smin
                                  : std::numeric_limits<double>::infinity();
    const std::size_t k = map.modes.size();
    map.pinv.assign(k, std::vector<double>(op.n_obs(), 0.0));
    if (map.full_rank) {
      const auto& svd = svds[gi];
      // pinv = V S^-1 U^T
      Eigen::MatrixXd pinv = svd.matrixV() *
                             svd.singularValues().cwiseInverse().asDiagonal() *
                             svd.matrixU().transpose();
      for (std::size_t r = 0; r < k; ++r) {
        for (int cidx = 0; cidx < op.n_obs(); ++cidx) map.pinv[r][cidx] = pinv(r, cidx);
      }
    } else {
      deficient.push_back(map.lambda);
    }
  }
  if (throw_on_deficient && !deficient.empty()) {
    std::ostringstream msg;
    msg << "observation geometry loses eigenspace rank (B_lambda not injective) at lambda =";
    for (double l : deficient) msg << " " << l;
    throw InjectivityError(msg.str());
  }
  return set;
}

std::vector<Complex> apply_pinv(const EigenspaceMap& map, const std::vector<Complex>& y) {
  if (!map.full_rank) throw InjectivityError("apply_pinv: rank-deficient eigenspace map");
  std::vector<Complex> out(map.modes.size(), Complex(0.0, 0.0));
  for (std::size_t r = 0; r < map.pinv.size(); ++r) {
    Complex acc(0.0, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) acc += map.pinv[r][i] * y[i];
    out[r] = acc;
  }
  return out;
}

double image_norm(const ResidueImage& img) {
  double acc = 0.0;
  for (std::size_t m = 0; m < img.lambdas.size(); ++m) {
    double s = 0.0;
    for (const Complex& v : img.block1[m]) s += std::norm(v);
    for (const Complex& v : img.block2[m]) s += std::norm(v);
    acc += img.lambdas[m] * img.lambdas[m] * s;
  }
  return std::sqrt(acc);
}

ResidueImage image_diff(const ResidueImage& a, const ResidueImage& b) {
  if (a.lambdas.size() != b.lambdas.size()) throw DomainError("image_diff: shape mismatch");
  ResidueImage out = a;
  for (std::size_t m = 0; m < a.lambdas.size(); ++m) {
    for (std::size_t k = 0; k < a.block1[m].size(); ++k) {
      out.block1[m][k] -= b.block1[m][k];
      out.block2[m][k] -= b.block2[m][k];
    }
  }
  return out;
}

ResidueImage image_scale(const ResidueImage& a, double s) {
  ResidueImage out = a;
  for (std::size_t m = 0; m < a.lambdas.size(); ++m) {
    for (auto& v : out.block1[m]) v *= s;
    for (auto& v : out.block2[m]) v *= s;
  }
  return out;
}

Setup make_setup(const EigenBasis& basis, const CoefficientField& base_coeff,
                 const Cutoff& chi, const SpatialProfile& phi, const TimeProfile& psi,
                 const ObservationOp& op, const SetupOptions& opts) {
  base_coeff.validate(basis.grid());
  if (!base_coeff.constant_b0) {
    throw UnsupportedConfigError("inversion setup: requires constant b0");
  }

  Setup s{.basis = &basis,
          .chi = chi,
          .coeff = base_coeff,
          .phi = phi,
          .psi = psi,
          .excitation = Excitation(basis, phi, psi, base_coeff),
          .variant = opts.variant,
          .s_exponent = opts.s_exponent,
          .op = op,
          .bmaps = build_blambda(op, basis, /*throw_on_deficient=*/false),
          .fit = opts.fit};
  s.weights_ = std::make_shared<FWeights>(psi, chi, phi.l2_sq, base_coeff.tau, opts.variant);

  const double b = base_coeff.b_bar;
  const double c = base_coeff.c;
  const double lambda_floor = b * b / (3.0 * c * c);

  std::vector<std::array<Complex, 2>> pole_list;
  std::vector<bool> usable;
  for (const auto& g : basis.groups()) {
    bool ok = true;
    PolePair pair;
    try {
      pair = residues::poles(g.lambda, b, c);
    } catch (const DoublePoleError&) {
      ok = false;
      s.exclusions.push_back("lambda=" + std::to_string(g.lambda) + ": critical (double pole)");
    }
    if (ok && pair.regime != Regime::oscillatory) {
      ok = false;
      s.exclusions.push_back("lambda=" + std::to_string(g.lambda) + ": overdamped");
    }
    if (ok && g.lambda < lambda_floor) {
      ok = false;
      s.exclusions.push_back("lambda=" + std::to_string(g.lambda) +
                             ": below b^2/(3c^2) residue bound");
    }
    s.pairs.push_back(pair);
    usable.push_back(ok);
    pole_list.push_back({pair.plus, pair.minus});
  }

  s.f1_plus.resize(pole_list.size());
  s.f1_minus.resize(pole_list.size());
  s.f2_plus.resize(pole_list.size());
  s.f2_minus.resize(pole_list.size());
  for (std::size_t gi = 0; gi < pole_list.size(); ++gi) {
    if (!usable[gi]) continue;
    s.f1_plus[gi] = s.weights().f1_hat(pole_list[gi][0]);
    s.f1_minus[gi] = s.weights().f1_hat(pole_list[gi][1]);
    s.f2_plus[gi] = s.weights().f2_hat(pole_list[gi][0]);
    // conjugate symmetry of real profiles
    s.f2_minus[gi] = std::conj(s.f2_plus[gi]);
  }

  std::vector<std::array<Complex, 2>> usable_poles;
  std::vector<std::size_t> usable_idx;
  for (std::size_t gi = 0; gi < pole_list.size(); ++gi) {
    if (usable[gi]) {
      usable_poles.push_back(pole_list[gi]);
      usable_idx.push_back(gi);
    }
  }
  const auto nus = model::nu_factors(
      [&s](Complex z) { return s.weights().f1_hat(z); },
      [&s](Complex z) { return s.weights().f2_hat(z); }, usable_poles);
  s.nus.resize(pole_list.size());
  double nu_max = 0.0;
  for (std::size_t k = 0; k < usable_idx.size(); ++k) {
    s.nus[usable_idx[k]] = nus[k];
    nu_max = std::max(nu_max, std::abs(nus[k].nu));
  }

  for (std::size_t gi = 0; gi < basis.groups().size(); ++gi) {
    if (static_cast<int>(s.retained.size()) >= opts.max_retained) break;
    if (!usable[gi]) continue;
    if (std::abs(s.nus[gi].nu) <= opts.nu_rel_floor * nu_max || s.nus[gi].flagged) {
      s.exclusions.push_back("lambda=" + std::to_string(basis.groups()[gi].lambda) +
                             ": |nu| below threshold");
      continue;
    }
    if (!s.bmaps.maps[gi].full_rank || s.bmaps.maps[gi].condition >= opts.cond_cap) {
      s.exclusions.push_back("lambda=" + std::to_string(basis.groups()[gi].lambda) +
                             ": observation map rank/condition");
      continue;
    }
    s.retained.push_back(static_cast<int>(gi));
  }
  if (s.retained.empty()) throw DomainError("inversion setup: no usable modes retained");
  return s;
}

namespace {

struct FitGroup {
  PolePair pair;           // pole pair used in the fit (possibly refined)
  std::vector<int> modes;  // mode indices of the (true-basis) group
  int base_group = -1;     // retained base-group this contributes to, or -1
};

// Matches each expected pole pair against the matrix-pencil estimates; keeps
// the assumed pair when no estimate lands within half the pair separation.
double refine_pairs(std::vector<FitGroup>& groups, const std::vector<Complex>& est) {
  double max_shift = 0.0;
  for (auto& g : groups) {
    if (g.pair.regime != Regime::oscillatory) continue;
    Complex best = g.pair.plus;
    double bd = std::numeric_limits<double>::infinity();
    for (const Complex& e : est) {
      if (e.imag() <= 0.0) continue;
      const double d = std::abs(e - g.pair.plus);
      if (d < bd) {
        bd = d;
        best = e;
      }
    }
    const double sep = 0.5 * std::abs(g.pair.plus - g.pair.minus);
    if (bd < sep) {
      max_shift = std::max(max_shift, bd);
      g.pair.plus = best;
      g.pair.minus = std::conj(best);
    }
  }
  return max_shift;
}

}  // namespace

ResidueImage forward_residues(const Setup& setup, const CoefficientField& coeff_true,
                              const solver::SimOptions& sim, ForwardDiagnostics* diag) {
  const EigenBasis& base = *setup.basis;
  coeff_true.validate(base.grid());

  // The extraction basis tracks the coefficient (the resolvent poles belong
  // to the data); for unchanged c0^2 the base tables are reused.
  std::optional<EigenBasis> built;
  const EigenBasis* tb = &base;
  if (coeff_true.c0_sq != setup.coeff.c0_sq) {
    built.emplace(spectral::build_basis(base.grid(), coeff_true.c0_sq, coeff_true.c,
                                        base.n_modes()));
    tb = &*built;
  }
  const EigenBasis& tbasis = *tb;

  const auto modal_source = setup.excitation.project(tbasis);
  solver::SimOptions opts = sim;
  opts.obs_rows = &setup.op.rows();
  opts.extend_to_switch_off = true;

  const int nm = tbasis.n_modes();
  const ModalVector zero(nm, 0.0);
  const auto traj = solver::simulate(tbasis, coeff_true, setup.chi,
                                     solver::source_from_excitation(modal_source), zero, zero,
                                     zero, opts);
  const double b_ref = setup.coeff.b_bar;
  const double t_star = solver::detect_t_star(traj, setup.chi, b_ref);

  // Fit window
  const double t0 = t_star + setup.fit.t0_margin;
  std::size_t k0 = 0;
  while (k0 < traj.n_samples() && traj.times[k0] < t0 - 1e-12) ++k0;
  if (traj.n_samples() - k0 < 32) {
    throw DomainError("forward_residues: fit window too short; extend the horizon");
  }
  std::vector<double> tw(traj.times.begin() + k0, traj.times.end());

  // Fit groups: retained base groups plus a buffer of higher ones, realized
  // on the true basis' grouping (a perturbed coefficient may split a
  // multiple eigenvalue; split parts are summed back into the base group).
  int max_mode = 0;
  for (int gi : setup.retained) {
    for (int m : base.groups()[gi].modes) max_mode = std::max(max_mode, m);
  }
  std::vector<int> mode_to_base(base.n_modes(), -1);
  for (std::size_t r = 0; r < setup.retained.size(); ++r) {
    for (int m : base.groups()[setup.retained[r]].modes) {
      mode_to_base[m] = static_cast<int>(r);
    }
  }
  std::vector<FitGroup> fit_groups;
  int buffered = 0;
  for (const auto& g : tbasis.groups()) {
    const bool in_retained_range = g.modes.front() <= max_mode;
    if (!in_retained_range && buffered >= setup.fit.buffer_groups) break;
    PolePair pair;
    try {
      pair = residues::poles(g.lambda, b_ref, coeff_true.c);
    } catch (const DoublePoleError&) {
      continue;  // critical buffer mode: leave its (tiny) content to the residual
    }
    FitGroup fg;
    fg.pair = pair;
    fg.modes = g.modes;
    fg.base_group = mode_to_base[g.modes.front()];
    fit_groups.push_back(std::move(fg));
    if (!in_retained_range) ++buffered;
  }

  // Reference subtraction: the designed separable response O(phi) psi(t).
  const int n_obs = setup.op.n_obs();
  std::vector<std::vector<double>> traces(n_obs, std::vector<double>(tw.size()));
  {
    std::vector<double> obs_phi = setup.op.observe(setup.excitation.phi_field());
    for (int i = 0; i < n_obs; ++i) {
      for (std::size_t k = 0; k < tw.size(); ++k) {
        double v = traj.obs_u[k0 + k][i];
        if (setup.fit.subtract_reference) {
          v -= obs_phi[i] * setup.excitation.psi().psi()(tw[k]);
        }
        traces[i][k] = v;
      }
    }
  }

  double max_shift = 0.0;
  if (setup.fit.refine_poles) {
    // strongest sensor trace drives the pencil estimate
    int best = 0;
    double bestn = -1.0;
    for (int i = 0; i < n_obs; ++i) {
      const double nrm = std::abs(traces[i].front());
      if (nrm > bestn) {
        bestn = nrm;
        best = i;
      }
    }
    const double dts = tw[1] - tw[0];
    const int order = static_cast<int>(2 * fit_groups.size());
    if (static_cast<int>(tw.size()) >= 4 * order) {
      const auto est = residues::estimate_poles(traces[best], dts, order);
      max_shift = refine_pairs(fit_groups, est);
    }
  }

  std::vector<PolePair> fit_pairs;
  for (const auto& fg : fit_groups) fit_pairs.push_back(fg.pair);

  // Joint fit per sensor
  std::vector<std::vector<residues::ModalResiduePair>> per_sensor(n_obs);
  double max_res = 0.0, max_cond = 0.0;
  for (int i = 0; i < n_obs; ++i) {
    const auto fit = residues::residues_from_trace_multi(tw, traces[i], fit_pairs, nullptr);
    per_sensor[i] = fit.residues;
    max_res = std::max(max_res, fit.residual);
    max_cond = std::max(max_cond, fit.condition);
  }

  // Assemble the image: per retained base group, f-hat weighted combinations
  // of the z-residue sensor vectors, then B^-1 Proj in base coordinates.
  ResidueImage img;
  img.group_index = setup.retained;
  std::vector<std::vector<Complex>> y1(setup.retained.size()),
      y2(setup.retained.size());
  for (std::size_t r = 0; r < setup.retained.size(); ++r) {
    y1[r].assign(n_obs, Complex(0.0, 0.0));
    y2[r].assign(n_obs, Complex(0.0, 0.0));
    img.lambdas.push_back(base.groups()[setup.retained[r]].lambda);
  }
  const double tau = coeff_true.tau;
  const bool base_tables = (tb == &base) && !setup.fit.refine_poles;
  for (std::size_t fg = 0; fg < fit_groups.size(); ++fg) {
    const int r = fit_groups[fg].base_group;
    if (r < 0) continue;
    const PolePair& pair = fit_groups[fg].pair;
    Complex f1p, f1m, f2p, f2m;
    if (base_tables) {
      const int gi = setup.retained[r];
      f1p = setup.f1_plus[gi];
      f1m = setup.f1_minus[gi];
      f2p = setup.f2_plus[gi];
      f2m = setup.f2_minus[gi];
    } else {
      f1p = setup.weights().f1_hat(pair.plus);
      f1m = setup.weights().f1_hat(pair.minus);
      f2p = setup.weights().f2_hat(pair.plus);
      f2m = std::conj(f2p);
    }
    for (int i = 0; i < n_obs; ++i) {
      const Complex ru_p = per_sensor[i][fg].plus;
      const Complex ru_m = per_sensor[i][fg].minus;
      const Complex rz_p = residues::u_to_z_residue(ru_p, pair.plus, tau);
      const Complex rz_m = residues::u_to_z_residue(ru_m, pair.minus, tau);
      y1[r][i] += f1m * rz_p + f1p * rz_m;
      y2[r][i] += f2m * rz_p + f2p * rz_m;
    }
  }
  for (std::size_t r = 0; r < setup.retained.size(); ++r) {
    const auto& map = setup.bmaps.maps[setup.retained[r]];
    img.block1.push_back(apply_pinv(map, y1[r]));
    img.block2.push_back(apply_pinv(map, y2[r]));
  }

  if (diag) {
    diag->t_star = t_star;
    diag->fit_residual = max_res;
    diag->fit_condition = max_cond;
    diag->max_pole_shift = max_shift;
  }
  return img;
}

ResidueImage linearized_apply(const Setup& setup, const Field& dkappa, const Field& dsecond) {
  const EigenBasis& basis = *setup.basis;
  const std::size_t ng = basis.grid().size();
  if (dkappa.size() != ng) throw DomainError("linearized_apply: dkappa size mismatch");
  if (dsecond.size() != ng) throw DomainError("linearized_apply: direction size mismatch");

  Field pk(ng), ps(ng);
  for (std::size_t i = 0; i < ng; ++i) {
    const double phi = setup.phi.values[i];
    pk[i] = dkappa[i] * phi * phi;
    ps[i] = setup.variant == Variant::sound_speed ? dsecond[i] * (-setup.phi.laplacian[i])
                                                  : dsecond[i] * phi;
  }
  const ModalVector a = basis.to_modal(pk);
  const ModalVector bf = basis.to_modal(ps);

  ResidueImage img;
  img.group_index = setup.retained;
  for (int gi : setup.retained) {
    const auto& group = basis.groups()[gi];
    const Complex rho = residues::resolvent_residue(setup.pairs[gi]);
    const Complex factor = setup.nus[gi].nu * rho;
    std::vector<Complex> b1, b2;
    for (int m : group.modes) {
      b1.push_back(factor * a[m]);
      b2.push_back(factor * bf[m]);
    }
    img.lambdas.push_back(group.lambda);
    img.block1.push_back(std::move(b1));
    img.block2.push_back(std::move(b2));
  }
  return img;
}

ReconstructionResult reconstruct(const Setup& setup, const ResidueImage& img) {
  const EigenBasis& basis = *setup.basis;
  if (img.group_index != setup.retained) {
    throw DomainError("reconstruct: image does not match the retained mode set");
  }
  ReconstructionResult res;
  res.coef_a.assign(basis.n_modes(), 0.0);
  res.coef_b.assign(basis.n_modes(), 0.0);
  double c_nu = 0.0;
  for (std::size_t r = 0; r < setup.retained.size(); ++r) {
    const int gi = setup.retained[r];
    const auto& group = basis.groups()[gi];
    const Complex rho = residues::resolvent_residue(setup.pairs[gi]);
    const Complex factor = setup.nus[gi].nu * rho;
    if (std::abs(factor) <= 0.0) {
      throw ReconstructionDomainError("reconstruct: vanishing diagonal factor");
    }
    res.amplification.push_back(1.0 / std::abs(factor));
    c_nu = std::max(c_nu, std::pow(group.lambda, setup.s_exponent - 1.0) /
                              std::norm(setup.nus[gi].nu));
    for (std::size_t k = 0; k < group.modes.size(); ++k) {
      const Complex a = img.block1[r][k] / factor;
      const Complex b = img.block2[r][k] / factor;
      res.coef_a[group.modes[k]] = a.real();
      res.coef_b[group.modes[k]] = b.real();
      res.max_imag = std::max({res.max_imag, std::abs(a.imag()), std::abs(b.imag())});
    }
  }
  res.c_nu = c_nu;

  const Field fa = basis.to_grid(res.coef_a);
  const Field fb = basis.to_grid(res.coef_b);
  const auto& grid = basis.grid();
  res.dkappa.assign(grid.size(), 0.0);
  res.dsecond.assign(grid.size(), 0.0);
  const double floor_phi = 1e-12 * (1.0 + setup.phi.min_abs_phi);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!model::in_rec_domain(grid, i, setup.phi.rec_fraction)) continue;
    const double phi = setup.phi.values[i];
    const double lap = setup.phi.laplacian[i];
    const double div2 = setup.variant == Variant::sound_speed ? -lap : phi;
    if (std::abs(phi) * std::abs(phi) < floor_phi || std::abs(div2) < floor_phi) {
      throw ReconstructionDomainError(
          "reconstruct: division field below threshold on the reconstruction subdomain");
    }
    res.dkappa[i] = fa[i] / (phi * phi);
    res.dsecond[i] = fb[i] / div2;
  }
  return res;
}

Field kappa_of_coeffs(const Setup& setup, const std::vector<double>& a) {
  const EigenBasis& basis = *setup.basis;
  ModalVector full(basis.n_modes(), 0.0);
  std::size_t idx = 0;
  for (int gi : setup.retained) {
    for (int m : basis.groups()[gi].modes) {
      if (idx >= a.size()) throw DomainError("kappa_of_coeffs: coefficient vector too short");
      full[m] = a[idx++];
    }
  }
  if (idx != a.size()) throw DomainError("kappa_of_coeffs: coefficient vector too long");
  const Field prod = basis.to_grid(full);
  double phimax = 0.0;
  for (double v : setup.phi.values) phimax = std::max(phimax, std::abs(v));
  const double mu = 0.05 * phimax;
  const double mu4 = mu * mu * mu * mu;
  Field kappa(prod.size());
  // smooth regularization of 1/phi^2 near the boundary
  for (std::size_t i = 0; i < prod.size(); ++i) {
    const double p2 = setup.phi.values[i] * setup.phi.values[i];
    kappa[i] = prod[i] * p2 / (p2 * p2 + mu4);
  }
  return kappa;
}

std::vector<double> retained_modal_coeffs(const Setup& setup, const Field& product_field) {
  const ModalVector m = setup.basis->to_modal(product_field);
  std::vector<double> a;
  for (int gi : setup.retained) {
    for (int mode : setup.basis->groups()[gi].modes) a.push_back(m[mode]);
  }
  return a;
}

NewtonResult newton_kappa(const Setup& setup, const ResidueImage& observed,
                          const solver::SimOptions& sim, const NewtonOptions& opts) {
  std::size_t dim = 0;
  for (int gi : setup.retained) dim += setup.basis->groups()[gi].modes.size();

  NewtonResult result;
  result.a.assign(dim, 0.0);

  int grow_streak = 0;
  double prev_res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iterations; ++it) {
    CoefficientField coeff = setup.coeff;
    coeff.kappa = kappa_of_coeffs(setup, result.a);
    const ResidueImage y = forward_residues(setup, coeff, sim);
    const ResidueImage diff = image_diff(observed, y);
    const double res = image_norm(diff);
    result.residuals.push_back(res);
    result.iterations = it + 1;
    if (res >= prev_res) {
      if (++grow_streak >= 3) {
        throw OutsideLocalBallError(
            "newton_kappa: residual grew over three consecutive iterations");
      }
    } else {
      grow_streak = 0;
    }
    prev_res = res;
    if (opts.tol > 0.0 && res < opts.tol) break;

    // frozen derivative at kappa = 0: divide blockwise by nu rho
    std::size_t idx = 0;
    for (std::size_t r = 0; r < setup.retained.size(); ++r) {
      const int gi = setup.retained[r];
      const Complex rho = residues::resolvent_residue(setup.pairs[gi]);
      const Complex factor = setup.nus[gi].nu * rho;
      for (std::size_t k = 0; k < setup.basis->groups()[gi].modes.size(); ++k) {
        result.a[idx++] += (diff.block1[r][k] / factor).real();
      }
    }
  }
  result.kappa = kappa_of_coeffs(setup, result.a);
  return result;
}

}  // namespace jmgt::inversion
