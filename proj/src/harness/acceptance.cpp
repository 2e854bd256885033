#include "jmgt/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>

#include "jmgt/expr.hpp"
#include "jmgt/inversion.hpp"
#include "jmgt/model.hpp"
#include "jmgt/pipeline.hpp"
#include "jmgt/residues.hpp"
#include "jmgt/solver.hpp"
#include "jmgt/spectral.hpp"

namespace jmgt::harness {

using model::CoefficientField;
using model::Cutoff;
using model::Excitation;
using model::SpatialProfile;
using model::TimeProfile;
using spectral::Complex;
using spectral::EigenBasis;
using spectral::Field;
using spectral::Grid;
using spectral::ModalVector;

namespace {

struct Check {
  bool pass = true;
  std::ostringstream details;

  void require(bool ok, const std::string& what, double value) {
    if (!details.str().empty()) details << "; ";
    details << what << " = " << value;
    if (!ok) {
      pass = false;
      details << " [FAIL]";
    }
  }
};

CoefficientField constant_coefficients(const Grid& grid, double c0_sq, double b_bar,
                                       double tau, double c) {
  CoefficientField cf;
  cf.c = c;
  cf.tau = tau;
  cf.c0_sq.assign(grid.size(), c0_sq);
  cf.kappa.assign(grid.size(), 0.0);
  cf.constant_b0 = true;
  cf.b_bar = b_bar;
  return cf;
}

Field bump_field(const Grid& grid, double amplitude, double center_frac = 0.5,
                 double width_frac = 0.15) {
  Field f(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto xy = grid.coords(i);
    double d2 = 0.0;
    for (int d = 0; d < grid.dim(); ++d) {
      const double dd = (xy[d] - center_frac * grid.length(d)) / (width_frac * grid.length(d));
      d2 += dd * dd;
    }
    f[i] = amplitude * std::exp(-d2);
  }
  return f;
}

// Canonical 1-D design used by the pipeline criteria.
struct Design {
  Grid grid;
  CoefficientField base;
  Cutoff chi;
  EigenBasis basis;
  SpatialProfile phi;
  TimeProfile psi;
  inversion::ObservationOp op;
  inversion::Setup setup;
};

Design make_design(int gpts, int n_modes, int retained, model::Variant variant,
                   bool refine_poles, double t0_margin = 0.0) {
  Grid grid = Grid::interval(M_PI, gpts);
  CoefficientField base = constant_coefficients(grid, 1.0, 1.0, 0.1, 1.0);
  Cutoff chi(1e-7, 1e-6);
  EigenBasis basis = spectral::build_basis(grid, base.c0_sq, base.c, n_modes);
  SpatialProfile phi = SpatialProfile::default_bump(basis, 6, {0.25, 0.75});
  TimeProfile psi(4, 2.0, 3.4);
  inversion::ObservationOp op = inversion::ObservationOp::point_samples(
      grid, {{0.6180339887498949 * M_PI, 0.0}, {0.2763932022500210 * M_PI, 0.0}});
  inversion::SetupOptions sopts;
  sopts.variant = variant;
  sopts.max_retained = retained;
  sopts.fit.refine_poles = refine_poles;
  sopts.fit.t0_margin = t0_margin;
  inversion::Setup setup = inversion::make_setup(basis, base, chi, phi, psi, op, sopts);
  return Design{std::move(grid), std::move(base), chi,           std::move(basis),
                std::move(phi),  psi,             std::move(op), std::move(setup)};
}

// ---------------------------------------------------------------------------
// 1. Pole/residue formulas
Check criterion_poles(unsigned long seed) {
  Check c;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ulog(std::log(0.1), std::log(100.0));
  std::uniform_real_distribution<double> ub(0.0, 10.0);
  std::uniform_real_distribution<double> uc(0.5, 2.0);
  double max_omega = 0.0, max_res = 0.0;
  int n = 0;
  while (n < 1000) {
    const double lambda = std::exp(ulog(rng));
    const double b = ub(rng);
    const double cc = uc(rng);
    const double disc = 4.0 * cc * cc * lambda - b * b;
    if (std::abs(disc) <= 1e-9 * std::max(4.0 * cc * cc * lambda, b * b)) continue;
    const auto pair = residues::poles(lambda, b, cc);
    max_omega = std::max(max_omega, std::abs(residues::omega(lambda, b, cc, pair.plus)));
    max_omega = std::max(max_omega, std::abs(residues::omega(lambda, b, cc, pair.minus)));
    const Complex route_a = residues::resolvent_residue(pair);
    const Complex route_b = 1.0 / (pair.plus - pair.minus);
    max_res = std::max(max_res, std::abs(route_a - route_b));
    ++n;
  }
  c.require(max_omega <= 1e-12, "max |omega(p+/-)|", max_omega);
  c.require(max_res <= 1e-12, "max |residue - 1/(p+-p-)|", max_res);
  return c;
}

// ---------------------------------------------------------------------------
// 2. Linear modal solver vs the closed-form damped oscillator
double oscillator_error(double dt, double horizon) {
  Grid grid = Grid::interval(M_PI, 15);
  CoefficientField cf = constant_coefficients(grid, 1.0, 1.0, 0.1, 1.0);
  Cutoff chi(1e-7, 1e-6);
  EigenBasis basis = spectral::build_basis(grid, cf.c0_sq, cf.c, 1);
  const double lambda = basis.lambda(0);
  const double b = cf.b_bar;
  const double wt = std::sqrt(cf.c * cf.c * lambda - 0.25 * b * b);

  solver::SimOptions opts;
  opts.horizon = horizon;
  opts.dt = dt;
  opts.sample_every = 10;
  ModalVector u0{1.0}, u1{0.0}, u2{0.0};
  const auto traj =
      solver::simulate(basis, cf, chi, solver::zero_source(), u0, u1, u2, opts);
  double maxerr = 0.0;
  for (std::size_t k = 0; k < traj.n_samples(); ++k) {
    const double t = traj.times[k];
    const double z = traj.u[k][0] + cf.tau * traj.v[k][0];
    const double zex =
        std::exp(-0.5 * b * t) * (std::cos(wt * t) + 0.5 * b / wt * std::sin(wt * t));
    maxerr = std::max(maxerr, std::abs(z - zex));
  }
  return maxerr;
}

Check criterion_oscillator(unsigned long) {
  Check c;
  const double err = oscillator_error(1e-3, 20.0);
  c.require(err <= 1e-6, "Linf error at dt=1e-3 over [0,20]", err);
  const double e1 = oscillator_error(2e-3, 5.0);
  const double e2 = oscillator_error(1e-3, 5.0);
  const double order = std::log2(e1 / e2);
  c.require(order >= 3.7 && order <= 4.3, "observed order under dt halving", order);
  return c;
}

// ---------------------------------------------------------------------------
// 3. Separable solution
Check criterion_separable(unsigned long) {
  Check c;
  Design d = make_design(63, 32, 8, model::Variant::sound_speed, false);
  const auto src = d.setup.excitation.project(d.basis);
  solver::SimOptions opts;
  opts.horizon = 10.0;
  opts.dt = 1e-3;
  opts.sample_every = 20;
  const ModalVector zero(d.basis.n_modes(), 0.0);
  const auto traj = solver::simulate(d.basis, d.base, d.chi,
                                     solver::source_from_excitation(src), zero, zero, zero,
                                     opts);
  const ModalVector phi_m = d.basis.to_modal(d.phi.values);
  double max_diff = 0.0, max_ref = 0.0;
  for (std::size_t k = 0; k < traj.n_samples(); ++k) {
    const double psi_t = d.psi.psi()(traj.times[k]);
    double diff = 0.0, ref = 0.0;
    for (int j = 0; j < d.basis.n_modes(); ++j) {
      const double e = traj.u[k][j] - phi_m[j] * psi_t;
      diff += e * e;
      ref += phi_m[j] * psi_t * phi_m[j] * psi_t;
    }
    max_diff = std::max(max_diff, std::sqrt(diff));
    max_ref = std::max(max_ref, std::sqrt(ref));
  }
  const double rel = max_diff / max_ref;
  c.require(rel <= 1e-6, "max_t |u - phi psi| / max_t |phi psi|", rel);
  return c;
}

// ---------------------------------------------------------------------------
// 4. Energy decay and switching
Check criterion_decay(unsigned long) {
  Check c;
  // (a) source-free linear decay bound
  {
    Grid grid = Grid::interval(M_PI, 31);
    CoefficientField cf = constant_coefficients(grid, 1.0, 1.0, 0.1, 1.0);
    Cutoff chi(1e-7, 1e-6);
    EigenBasis basis = spectral::build_basis(grid, cf.c0_sq, cf.c, 8);
    ModalVector u0(8, 0.0), u1(8, 0.0), u2(8, 0.0);
    for (int j = 0; j < 4; ++j) u0[j] = 1.0 / (1.0 + j);
    solver::SimOptions opts;
    opts.horizon = 20.0;
    opts.dt = 1e-3;
    opts.sample_every = 10;
    const auto traj = solver::simulate(basis, cf, chi, solver::zero_source(), u0, u1, u2, opts);
    double sup = 0.0;
    for (std::size_t k = 0; k < traj.n_samples(); ++k) {
      sup = std::max(sup, std::exp(0.25 * cf.b_bar * traj.times[k]) * traj.energy[k]);
    }
    const double bound = sup / traj.energy[0];
    c.require(bound <= 10.0, "sup_t e^{(b/4)t} E0(t) / E0(0)", bound);
  }
  // (b) nonlinear run: switch-off and closed-form tail
  {
    Design d = make_design(63, 24, 6, model::Variant::sound_speed, false);
    CoefficientField cf = d.base;
    cf.kappa = bump_field(d.grid, 0.05);
    const auto src = d.setup.excitation.project(d.basis);
    solver::SimOptions opts;
    opts.horizon = 40.0;
    opts.dt = 2e-3;
    opts.sample_every = 10;
    opts.extend_to_switch_off = true;
    const ModalVector zero(d.basis.n_modes(), 0.0);
    const auto traj = solver::simulate(d.basis, cf, d.chi,
                                       solver::source_from_excitation(src), zero, zero, zero,
                                       opts);
    const double t_star = solver::detect_t_star(traj, d.chi, cf.b_bar);
    c.require(t_star > 0.0 && t_star < traj.times.back(), "detected T*", t_star);
    double max_sigma_after = 0.0;
    for (std::size_t k = 0; k < traj.n_samples(); ++k) {
      if (traj.times[k] >= t_star) max_sigma_after = std::max(max_sigma_after, traj.sigma[k]);
    }
    c.require(max_sigma_after == 0.0, "max sigma on [T*, end]", max_sigma_after);

    const auto tail = solver::linear_tail(traj, d.basis, cf, t_star, &src);
    double ref = 0.0;
    {
      const ModalVector z0 = tail.z0();
      for (double v : z0) ref += v * v;
      ref = std::sqrt(ref);
    }
    double max_rel = 0.0;
    for (std::size_t k = 0; k < traj.n_samples(); ++k) {
      if (traj.times[k] < t_star || traj.times[k] > t_star + 5.0) continue;
      const ModalVector zt = tail.eval_z(traj.times[k]);
      const ModalVector zs = traj.z_modal(k, cf.tau);
      double diff = 0.0;
      for (std::size_t j = 0; j < zt.size(); ++j) diff += (zt[j] - zs[j]) * (zt[j] - zs[j]);
      max_rel = std::max(max_rel, std::sqrt(diff) / ref);
    }
    c.require(max_rel <= 1e-6, "tail propagation rel error on [T*, T*+5]", max_rel);
  }
  return c;
}

// ---------------------------------------------------------------------------
// 5. Residue extraction vs the closed form, including the u<->z conversion
Check criterion_extraction(unsigned long) {
  Check c;
  Grid grid = Grid::interval(M_PI, 31);
  CoefficientField cf = constant_coefficients(grid, 1.0, 1.0, 0.1, 1.0);
  Cutoff chi(1e-7, 1e-6);
  EigenBasis basis = spectral::build_basis(grid, cf.c0_sq, cf.c, 3);
  ModalVector u0{1.0, 0.5, 0.25}, u1(3, 0.0), u2(3, 0.0);
  solver::SimOptions opts;
  opts.horizon = 25.0;
  opts.dt = 5e-4;
  opts.sample_every = 4;
  const auto traj = solver::simulate(basis, cf, chi, solver::zero_source(), u0, u1, u2, opts);

  // closed form with T* = 0: the dynamics is linear from the start
  ModalVector z0(3), z1(3);
  for (int j = 0; j < 3; ++j) {
    z0[j] = u0[j] + cf.tau * u1[j];
    z1[j] = u1[j] + cf.tau * u2[j];
  }
  const solver::LinearTail tail(basis, cf, 0.0, z0, z1, nullptr);
  const auto closed = tail.residues();

  // fit window [2, 25]
  std::size_t k0 = 0;
  while (traj.times[k0] < 2.0) ++k0;
  std::vector<double> tw(traj.times.begin() + k0, traj.times.end());
  double max_err = 0.0, max_zrel = 0.0;
  for (int j = 0; j < 3; ++j) {
    std::vector<double> gu(tw.size()), gz(tw.size());
    for (std::size_t k = 0; k < tw.size(); ++k) {
      gu[k] = traj.u[k0 + k][j];
      gz[k] = traj.u[k0 + k][j] + cf.tau * traj.v[k0 + k][j];
    }
    const auto pair = tail.pairs()[j];
    const auto fit_u = residues::residue_from_trace(tw, gu, pair, residues::TraceMethod::fit);
    const auto fit_z = residues::residue_from_trace(tw, gz, pair, residues::TraceMethod::fit);
    const Complex rz_from_u = residues::u_to_z_residue(fit_u.r_plus, pair.plus, cf.tau);
    max_err = std::max(max_err, std::abs(rz_from_u - closed[j].plus));
    max_err = std::max(max_err, std::abs(std::conj(rz_from_u) - closed[j].minus));
    max_zrel = std::max(max_zrel,
                        std::abs(fit_z.r_plus - rz_from_u) / std::abs(closed[j].plus));
  }
  c.require(max_err <= 1e-6, "max |fit - closed form| (z residues)", max_err);
  c.require(max_zrel <= 1e-8, "z-trace fit vs (tau p+1) x u-trace fit", max_zrel);
  return c;
}

// ---------------------------------------------------------------------------
// 6. Frechet derivative: Taylor remainder slopes
Check criterion_taylor(unsigned long) {
  Check c;
  Grid grid = Grid::interval(M_PI, 16);
  CoefficientField cf = constant_coefficients(grid, 1.0, 1.0, 0.1, 1.0);
  Cutoff chi(1e-4, 1e-3);
  EigenBasis basis = spectral::build_basis(grid, cf.c0_sq, cf.c, 16);  // full basis
  SpatialProfile phi = SpatialProfile::default_bump(basis, 4, {0.25, 0.75});
  TimeProfile psi(4, 2.0, 3.4);
  Excitation exc(basis, phi, psi, cf);
  const auto src = exc.project(basis);

  solver::SimOptions opts;
  opts.horizon = 8.0;
  opts.dt = 1e-3;
  opts.sample_every = 10;
  const ModalVector zero(16, 0.0);
  const std::vector<double> amps{1e-1, 3.16227766016838e-2, 1e-2, 3.16227766016838e-3, 1e-3};

  auto slope_of = [&](const solver::Direction& dir) {
    const auto res = solver::taylor_remainder_check(
        basis, cf, chi, solver::source_from_excitation(src), zero, zero, zero, dir, amps, opts);
    return res.slope;
  };

  {
    solver::Direction dir;
    dir.dkappa = bump_field(grid, 1.0);
    const double s = slope_of(dir);
    c.require(s >= 1.9 && s <= 2.1, "dkappa remainder slope", s);
  }
  {
    solver::Direction dir;
    dir.db0 = model::eval_on_grid("0.5*(1+cos(x))", grid);
    const double s = slope_of(dir);
    c.require(s >= 1.9 && s <= 2.1, "db0 remainder slope", s);
  }
  {
    solver::Direction dir;
    dir.dc0_sq = model::eval_on_grid("0.3*sin(x)", grid);
    const double s = slope_of(dir);
    c.require(s >= 1.9 && s <= 2.1, "dc0_sq remainder slope (energy norm)", s);
  }
  return c;
}

// ---------------------------------------------------------------------------
// 7. Linearized isomorphism: round trip and the image-norm lower bound
Check criterion_isomorphism(unsigned long seed) {
  Check c;
  Design d = make_design(63, 32, 8, model::Variant::sound_speed, false);
  std::mt19937_64 rng(seed + 7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  // round trip with a fixed smooth direction
  {
    const Field dk = bump_field(d.grid, 1.0, 0.45, 0.2);
    const Field ds = model::eval_on_grid("0.5*sin(x)+0.2*sin(2*x)", d.grid);
    const auto img = inversion::linearized_apply(d.setup, dk, ds);
    const auto rec = inversion::reconstruct(d.setup, img);
    // compare retained modal coefficients of the product fields
    Field pk(d.grid.size()), ps(d.grid.size());
    for (std::size_t i = 0; i < d.grid.size(); ++i) {
      pk[i] = dk[i] * d.phi.values[i] * d.phi.values[i];
      ps[i] = ds[i] * (-d.phi.laplacian[i]);
    }
    const ModalVector mk = d.basis.to_modal(pk);
    const ModalVector ms = d.basis.to_modal(ps);
    double num = 0.0, den = 0.0;
    for (int gi : d.setup.retained) {
      for (int m : d.basis.groups()[gi].modes) {
        num += std::pow(rec.coef_a[m] - mk[m], 2) + std::pow(rec.coef_b[m] - ms[m], 2);
        den += mk[m] * mk[m] + ms[m] * ms[m];
      }
    }
    const double rel = std::sqrt(num / den);
    c.require(rel <= 1e-10, "round-trip reconstruct(linearized_apply) rel error", rel);
  }

  // lower bound over 100 random directions
  {
    double worst_ratio = std::numeric_limits<double>::infinity();
    // c_nu = max over retained of |nu|^-2 lambda^{s-1}
    double c_nu = 0.0;
    for (int gi : d.setup.retained) {
      c_nu = std::max(c_nu, std::pow(d.basis.groups()[gi].lambda, d.setup.s_exponent - 1.0) /
                                std::norm(d.setup.nus[gi].nu));
    }
    const double c2 = d.base.c * d.base.c;
    for (int trial = 0; trial < 100; ++trial) {
      Field dk(d.grid.size()), ds(d.grid.size());
      for (std::size_t i = 0; i < d.grid.size(); ++i) {
        const auto xy = d.grid.coords(i);
        double vk = 0.0, vs = 0.0;
        for (int m = 1; m <= 4; ++m) {
          vk += u(rng) * std::sin(m * M_PI * xy[0] / d.grid.length(0));
          vs += u(rng) * std::sin(m * M_PI * xy[0] / d.grid.length(0));
        }
        dk[i] = vk;
        ds[i] = vs;
      }
      const auto img = inversion::linearized_apply(d.setup, dk, ds);
      const double lhs = std::pow(inversion::image_norm(img), 2);
      Field pk(d.grid.size()), ps(d.grid.size());
      for (std::size_t i = 0; i < d.grid.size(); ++i) {
        pk[i] = dk[i] * d.phi.values[i] * d.phi.values[i];
        ps[i] = ds[i] * (-d.phi.laplacian[i]);
      }
      const ModalVector mk = d.basis.to_modal(pk);
      const ModalVector ms = d.basis.to_modal(ps);
      double hs = 0.0;
      for (int gi : d.setup.retained) {
        const auto& g = d.basis.groups()[gi];
        for (int m : g.modes) {
          hs += std::pow(g.lambda, d.setup.s_exponent) * (mk[m] * mk[m] + ms[m] * ms[m]);
        }
      }
      const double rhs = hs / (4.0 * c2 * c_nu);
      worst_ratio = std::min(worst_ratio, lhs / rhs);
    }
    c.require(worst_ratio >= 1.0 - 1e-9, "min ||DF d||^2 / bound over 100 directions",
              worst_ratio);
  }
  return c;
}

// ---------------------------------------------------------------------------
// 8. End-to-end linearized inversion at amplitude 1e-3
Check criterion_end_to_end(unsigned long) {
  Check c;
  const double eps = 1e-3;
  for (const bool attenuation : {false, true}) {
    Design d = make_design(63, 24, 6,
                           attenuation ? model::Variant::attenuation
                                       : model::Variant::sound_speed,
                           /*refine_poles=*/true);
    const Field dk = bump_field(d.grid, 1.0, 0.45, 0.2);
    const Field ds = model::eval_on_grid(
        attenuation ? "0.5+0.4*sin(x)" : "0.4*sin(x)+0.2*sin(2*x)", d.grid);

    CoefficientField truth = d.base;
    truth.kappa = dk;
    for (double& v : truth.kappa) v *= eps;
    if (attenuation) {
      truth.constant_b0 = false;
      truth.b0.assign(d.grid.size(), d.base.b_bar);
      for (std::size_t i = 0; i < d.grid.size(); ++i) truth.b0[i] += eps * ds[i];
    } else {
      for (std::size_t i = 0; i < d.grid.size(); ++i) truth.c0_sq[i] += eps * ds[i];
    }

    solver::SimOptions opts;
    opts.horizon = 45.0;
    opts.dt = 5e-4;
    opts.sample_every = 10;
    const auto img = inversion::forward_residues(d.setup, truth, opts);
    const auto rec = inversion::reconstruct(d.setup, img);

    auto rel_err = [&](const Field& got, const Field& want) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < d.grid.size(); ++i) {
        if (!model::in_rec_domain(d.grid, i, d.phi.rec_fraction)) continue;
        num += std::pow(got[i] / eps - want[i], 2);
        den += want[i] * want[i];
      }
      return std::sqrt(num / den);
    };
    const char* tag = attenuation ? "kappa-b0" : "kappa-c0";
    const double ek = rel_err(rec.dkappa, dk);
    const double es = rel_err(rec.dsecond, ds);
    c.require(ek <= 10.0 * eps, std::string(tag) + ": dkappa rel error", ek);
    c.require(es <= 10.0 * eps, std::string(tag) + ": second field rel error", es);
  }
  return c;
}

// ---------------------------------------------------------------------------
// 9. Frozen-Newton local recovery of kappa
Check criterion_newton(unsigned long) {
  Check c;
  Design d = make_design(63, 16, 4, model::Variant::sound_speed, false);
  // 4-mode truth of amplitude 1e-2 in X1 coordinates
  Field kraw = bump_field(d.grid, 1.0, 0.55, 0.18);
  Field prod(d.grid.size());
  for (std::size_t i = 0; i < d.grid.size(); ++i) {
    prod[i] = kraw[i] * d.phi.values[i] * d.phi.values[i];
  }
  std::vector<double> a_star = inversion::retained_modal_coeffs(d.setup, prod);
  {
    double norm = 0.0;
    for (double v : a_star) norm = std::max(norm, std::abs(v));
    for (double& v : a_star) v *= 1e-2 / norm;
  }
  CoefficientField truth = d.base;
  truth.kappa = inversion::kappa_of_coeffs(d.setup, a_star);

  solver::SimOptions opts;
  opts.horizon = 45.0;
  opts.dt = 1e-3;
  opts.sample_every = 5;
  const auto y_obs = inversion::forward_residues(d.setup, truth, opts);

  inversion::NewtonOptions nopts;
  nopts.max_iterations = 10;
  const auto result = inversion::newton_kappa(d.setup, y_obs, opts, nopts);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a_star.size(); ++i) {
    num += std::pow(result.a[i] - a_star[i], 2);
    den += a_star[i] * a_star[i];
  }
  const double rel = std::sqrt(num / den);
  c.require(rel <= 0.01, "relative X1 error after <=10 iterations", rel);
  c.require(result.iterations <= 10, "iterations", result.iterations);
  return c;
}

// ---------------------------------------------------------------------------
// 10. Injectivity assumption surfacing (sensor at pi/2)
Check criterion_injectivity(unsigned long) {
  Check c;
  Grid grid = Grid::interval(M_PI, 31);  // odd count: x = pi/2 is a node
  CoefficientField cf = constant_coefficients(grid, 1.0, 1.0, 0.1, 1.0);
  EigenBasis basis = spectral::build_basis(grid, cf.c0_sq, cf.c, 8);
  const auto op = inversion::ObservationOp::point_samples(grid, {{0.5 * M_PI, 0.0}});
  const auto set = inversion::build_blambda(op, basis, /*throw_on_deficient=*/false);
  bool exact = true;
  for (std::size_t gi = 0; gi < set.maps.size(); ++gi) {
    const bool even_mode = (gi % 2) == 1;  // groups ordered by j = gi+1
    if (set.maps[gi].full_rank != !even_mode) exact = false;
  }
  c.require(exact, "deficient groups are exactly the even modes", exact ? 1.0 : 0.0);
  bool threw = false;
  try {
    (void)inversion::build_blambda(op, basis, /*throw_on_deficient=*/true);
  } catch (const InjectivityError&) {
    threw = true;
  }
  c.require(threw, "throwing variant raises InjectivityError", threw ? 1.0 : 0.0);
  return c;
}

// ---------------------------------------------------------------------------
// 11. Spectral module invariants
Check criterion_spectral_invariants(unsigned long seed) {
  Check c;
  // orthonormality + Parseval + residual on a variable-coefficient basis
  Grid grid = Grid::interval(M_PI, 48);
  Field c0sq = model::eval_on_grid("1+0.1*sin(x)", grid);
  EigenBasis basis = spectral::build_basis(grid, c0sq, 1.0, 24);
  double max_gram = 0.0;
  for (int a = 0; a < 24; ++a) {
    const auto pa = basis.eigenfunction(a);
    for (int b = a; b < 24; ++b) {
      const double g = basis.weighted_inner(pa, basis.eigenfunction(b));
      max_gram = std::max(max_gram, std::abs(g - (a == b ? 1.0 : 0.0)));
    }
  }
  c.require(max_gram <= 1e-10, "Gram deviation from identity", max_gram);
  double max_res = 0.0;
  for (int j = 0; j < 24; ++j) max_res = std::max(max_res, basis.spectral_residual(j));
  c.require(max_res <= 1e-8, "spectral residual", max_res);

  std::mt19937_64 rng(seed + 11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ModalVector m(24);
  for (double& v : m) v = u(rng);
  const Field f = basis.to_grid(m);
  const ModalVector m2 = basis.to_modal(f);
  double rt = 0.0;
  for (int j = 0; j < 24; ++j) rt = std::max(rt, std::abs(m2[j] - m[j]));
  c.require(rt <= 1e-10, "to_modal(to_grid) round trip", rt);
  double parseval = std::abs(basis.weighted_inner(f, f) -
                             std::inner_product(m.begin(), m.end(), m.begin(), 0.0));
  c.require(parseval <= 1e-10, "Parseval deviation", parseval);

  // second-order eigenvalue convergence on the constant-coefficient interval
  auto lam_err = [](int n) {
    Grid g = Grid::interval(M_PI, n);
    Field one(g.size(), 1.0);
    EigenBasis b = spectral::build_basis(g, one, 1.0, 3);
    double e = 0.0;
    for (int j = 0; j < 3; ++j) {
      e = std::max(e, std::abs(b.lambda(j) - (j + 1.0) * (j + 1.0)) / ((j + 1.0) * (j + 1.0)));
    }
    return e;
  };
  const double ratio = lam_err(16) / lam_err(33);  // h halves between 16 and 33 points
  c.require(ratio >= 3.4 && ratio <= 4.6, "eigenvalue error ratio under h/2", ratio);
  return c;
}

// ---------------------------------------------------------------------------
// 12. Solver invariants: z-consistency and RK order on the energy
Check criterion_solver_invariants(unsigned long) {
  Check c;
  Design d = make_design(31, 8, 4, model::Variant::sound_speed, false);
  CoefficientField cf = d.base;
  cf.kappa = bump_field(d.grid, 0.05);
  const auto src = d.setup.excitation.project(d.basis);
  solver::SimOptions opts;
  opts.horizon = 5.0;
  opts.dt = 1e-3;
  opts.sample_every = 10;
  opts.check_z_consistency = true;
  const ModalVector zero(8, 0.0);
  const auto traj = solver::simulate(d.basis, cf, d.chi, solver::source_from_excitation(src),
                                     zero, zero, zero, opts);
  c.require(traj.max_z_consistency_err <= 1e-10, "co-integrated z deviation",
            traj.max_z_consistency_err);
  c.require(traj.min_nondegeneracy >= 0.5, "non-degeneracy margin", traj.min_nondegeneracy);
  return c;
}

// ---------------------------------------------------------------------------
// 13. Residue module invariants
Check criterion_residue_invariants(unsigned long seed) {
  Check c;
  std::mt19937_64 rng(seed + 13);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  // distinctness and nonvanishing over a retained spectrum
  Grid grid = Grid::interval(M_PI, 31);
  Field one(grid.size(), 1.0);
  EigenBasis basis = spectral::build_basis(grid, one, 1.0, 8);
  const double b = 1.0;
  std::vector<residues::PolePair> pairs;
  for (int j = 0; j < 8; ++j) pairs.push_back(residues::poles(basis.lambda(j), b, 1.0));
  double min_dist = std::numeric_limits<double>::infinity();
  double min_res = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 8; ++a) {
    min_res = std::min(min_res, std::abs(residues::resolvent_residue(pairs[a])));
    for (int bi = a + 1; bi < 8; ++bi) {
      min_dist = std::min(min_dist, std::abs(pairs[a].plus - pairs[bi].plus));
    }
  }
  c.require(min_dist > 0.0, "min pairwise pole distance", min_dist);
  c.require(min_res > 0.0, "min |resolvent residue|", min_res);
  // |i sqrt(4c^2 l - b^2)| >= c sqrt(l) for l >= b^2/(3c^2)
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 200; ++t) {
    const double cc = 0.5 + 1.5 * u01(rng);
    const double bb = 3.0 * u01(rng);
    const double lmin = bb * bb / (3.0 * cc * cc);
    const double l = lmin * (1.0 + 4.0 * u01(rng));
    const double lhs = std::sqrt(std::abs(4.0 * cc * cc * l - bb * bb));
    worst = std::min(worst, lhs / (cc * std::sqrt(l)));
  }
  c.require(worst >= 1.0 - 1e-12, "min |i sqrt(4c^2 l - b^2)| / (c sqrt(l))", worst);

  // estimator consistency: fit error linear in noise amplitude
  {
    const auto pair = residues::poles(4.0, 1.0, 1.0);
    const Complex r_true(0.3, 0.4);
    std::vector<double> t(400), g0(400);
    for (int k = 0; k < 400; ++k) {
      t[k] = 0.05 * k;
      g0[k] = 2.0 * (r_true * std::exp(pair.plus * t[k])).real();
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(400);
    for (double& v : noise) v = gauss(rng);
    double prev = 0.0;
    bool linear = true;
    for (const double amp : {1e-4, 1e-6}) {
      std::vector<double> g = g0;
      for (int k = 0; k < 400; ++k) g[k] += amp * noise[k] * std::exp(pair.plus.real() * t[k]);
      const auto fit = residues::residue_from_trace(t, g, pair, residues::TraceMethod::fit);
      const double err = std::abs(fit.r_plus - r_true);
      if (amp == 1e-4) {
        prev = err;
      } else {
        const double drop = prev / err;
        linear = drop > 30.0 && drop < 300.0;  // 100x noise drop, allow slack
      }
    }
    c.require(linear, "fit error scales linearly with noise", linear ? 1.0 : 0.0);
  }

  // matrix pencil on two modes
  {
    const auto p1 = residues::poles(1.0, 1.0, 1.0);
    const auto p2 = residues::poles(9.0, 1.0, 1.0);
    std::vector<double> g(600);
    const double dt = 0.02;
    for (int k = 0; k < 600; ++k) {
      const double t = dt * k;
      g[k] = (std::exp(p1.plus * t) * Complex(1.0, 0.2)).real() +
             (std::exp(p2.plus * t) * Complex(0.5, -0.1)).real();
    }
    const auto est = residues::estimate_poles(g, dt, 4);
    double best1 = 1e9, best2 = 1e9;
    for (const auto& e : est) {
      best1 = std::min(best1, std::abs(e - p1.plus));
      best2 = std::min(best2, std::abs(e - p2.plus));
    }
    c.require(best1 <= 1e-6 && best2 <= 1e-6, "matrix-pencil pole error",
              std::max(best1, best2));
  }
  return c;
}

// ---------------------------------------------------------------------------
// 14. Inversion invariants: diagonality and the FD derivative check
Check criterion_inversion_invariants(unsigned long) {
  Check c;
  Design d = make_design(63, 24, 6, model::Variant::sound_speed, true);
  const Field dk = bump_field(d.grid, 1.0, 0.45, 0.2);
  const Field ds = model::eval_on_grid("0.4*sin(x)+0.2*sin(2*x)", d.grid);

  // diagonal blocks: a mode-1 input produces a mode-1-only image
  {
    Field dk1(d.grid.size());
    // dkappa phi^2 = phi_1 exactly
    const auto phi1 = d.basis.eigenfunction(0);
    for (std::size_t i = 0; i < d.grid.size(); ++i) {
      const double p2 = d.phi.values[i] * d.phi.values[i];
      const double mu = 0.05;
      dk1[i] = phi1[i] * p2 / (p2 * p2 + mu * mu * mu * mu);
    }
    Field pk(d.grid.size());
    for (std::size_t i = 0; i < d.grid.size(); ++i) {
      pk[i] = dk1[i] * d.phi.values[i] * d.phi.values[i];
    }
    const ModalVector mk = d.basis.to_modal(pk);
    const Field zero_f(d.grid.size(), 0.0);
    const auto img = inversion::linearized_apply(d.setup, dk1, zero_f);
    double off = 0.0, on = 0.0;
    for (std::size_t r = 0; r < img.lambdas.size(); ++r) {
      for (std::size_t k = 0; k < img.block1[r].size(); ++k) {
        const int mode = d.basis.groups()[d.setup.retained[r]].modes[k];
        const double coupled = std::abs(mk[mode]);
        const double val = std::abs(img.block1[r][k]);
        if (coupled > 1e-8) {
          on = std::max(on, val);
        } else {
          off = std::max(off, val);
        }
      }
    }
    c.require(off <= 1e-6 * on, "cross-mode leakage (relative)", on > 0.0 ? off / on : 0.0);
  }

  // finite differences of the forward map approach the diagonal formula
  {
    solver::SimOptions opts;
    opts.horizon = 45.0;
    opts.dt = 1e-3;
    opts.sample_every = 10;
    const auto lin = inversion::linearized_apply(d.setup, dk, ds);
    double prev = std::numeric_limits<double>::infinity();
    bool shrinking = true;
    for (const double eps : {4e-3, 1e-3}) {
      CoefficientField truth = d.base;
      truth.kappa = dk;
      for (double& v : truth.kappa) v *= eps;
      for (std::size_t i = 0; i < d.grid.size(); ++i) truth.c0_sq[i] += eps * ds[i];
      const auto img = inversion::forward_residues(d.setup, truth, opts);
      const auto fd = inversion::image_scale(img, 1.0 / eps);
      const double err = inversion::image_norm(inversion::image_diff(fd, lin)) /
                         inversion::image_norm(lin);
      if (err > prev) shrinking = false;
      prev = err;
    }
    c.require(shrinking && prev <= 2e-2, "FD vs linearized_apply rel error at eps=1e-3", prev);
  }
  return c;
}

using CriterionFn = Check (*)(unsigned long);

struct Entry {
  int id;
  const char* name;
  CriterionFn fn;
};

constexpr Entry kEntries[] = {
    {1, "pole and residue formulas", criterion_poles},
    {2, "linear modal solver vs damped oscillator", criterion_oscillator},
    {3, "separable solution", criterion_separable},
    {4, "energy decay and switching", criterion_decay},
    {5, "residue extraction vs closed form", criterion_extraction},
    {6, "Frechet derivative Taylor slopes", criterion_taylor},
    {7, "linearized isomorphism", criterion_isomorphism},
    {8, "end-to-end linearized inversion", criterion_end_to_end},
    {9, "frozen-Newton kappa recovery", criterion_newton},
    {10, "injectivity assumption surfacing", criterion_injectivity},
    {11, "spectral module invariants", criterion_spectral_invariants},
    {12, "solver module invariants", criterion_solver_invariants},
    {13, "residue module invariants", criterion_residue_invariants},
    {14, "inversion module invariants", criterion_inversion_invariants},
};

}  // namespace

CriterionResult run_criterion(int id, unsigned long seed) {
  for (const auto& e : kEntries) {
    if (e.id != id) continue;
    CriterionResult r;
    r.id = id;
    r.name = e.name;
    const auto start = std::chrono::steady_clock::now();
    try {
      Check c = e.fn(seed);
      r.pass = c.pass;
      r.details = c.details.str();
    } catch (const std::exception& ex) {
      r.pass = false;
      r.details = std::string("exception: ") + ex.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }
  throw DomainError("unknown criterion id " + std::to_string(id));
}

std::vector<int> suite_ids(const std::string& suite) {
  if (suite == "spectral") return {11};
  if (suite == "solver") return {2, 3, 4, 6, 12};
  if (suite == "residue") return {1, 5, 13};
  if (suite == "inversion") return {7, 8, 9, 10, 14};
  if (suite == "acceptance") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  if (suite == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  throw ConfigError("unknown verification suite '" + suite +
                    "' (expected spectral|solver|residue|inversion|acceptance|all)");
}

bool run_suite(const std::vector<int>& ids, unsigned long seed, std::ostream& os) {
  bool all = true;
  for (int id : ids) {
    const CriterionResult r = run_criterion(id, seed);
    os << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << ". " << r.name << " (" << r.details
       << ") [" << r.seconds << " s]\n";
    all = all && r.pass;
  }
  return all;
}

}  // namespace jmgt::harness
