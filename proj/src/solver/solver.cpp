#include "jmgt/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "jmgt/kernels.hpp"

namespace jmgt::solver {

namespace ker = jmgt::kernels;

SourceFn zero_source() {
  return [](double, double* out, int n) { std::fill(out, out + n, 0.0); };
}

SourceFn source_from_excitation(const Excitation::ModalSource& src) {
  return [&src](double t, double* out, int n) {
    if (static_cast<std::size_t>(n) != src.per_mode.size()) {
      throw DomainError("modal source: mode count mismatch");
    }
    src.eval(t, out);
  };
}

ModalVector Trajectory::z_modal(std::size_t k, double tau) const {
  ModalVector z = u[k];
  ker::axpy(tau, v[k].data(), z.data(), z.size());
  return z;
}

ModalVector Trajectory::zdot_modal(std::size_t k, double tau) const {
  ModalVector z = v[k];
  ker::axpy(tau, w[k].data(), z.data(), z.size());
  return z;
}

struct Stepper::Impl {
  const EigenBasis& basis;
  CoefficientField coeff;
  Cutoff chi;
  SourceFn source;
  double delta0;

  int nm;
  std::size_t ng;
  double cell, tau, c2, b_bar;
  bool const_b;
  std::vector<double> two_kappa;
  std::vector<double> lambda;

  bool tangent = false;
  Direction dir;
  bool has_dk = false, has_dc = false, has_db = false;

  bool track_z = false;  // co-integrated z block for the consistency diagnostic

  // grid workspace
  std::vector<double> gu, gv, gw, zg, ztg, nl, tmpg, tmpg2;
  std::vector<double> gp, gq, gs, dzg, dztg;
  // modal workspace
  std::vector<double> rbuf, nlm, bmod, tmod, lapm;
  // rk4 buffers
  std::vector<double> k1, k2, k3, k4, yt;

  double last_sigma = 0.0, last_sigma_dot = 0.0, last_zsq = 0.0;

  Impl(const EigenBasis& b, const CoefficientField& cf, const Cutoff& ch, SourceFn src,
       double d0)
      : basis(b), coeff(cf), chi(ch), source(std::move(src)), delta0(d0) {
    coeff.validate(b.grid());
    nm = b.n_modes();
    ng = b.grid().size();
    cell = b.grid().cell();
    tau = coeff.tau;
    c2 = coeff.c * coeff.c;
    b_bar = coeff.b_bar;
    const_b = coeff.constant_b0;
    lambda = b.lambdas();
    two_kappa.resize(ng);
    for (std::size_t i = 0; i < ng; ++i) two_kappa[i] = 2.0 * coeff.kappa[i];
    for (auto* g : {&gu, &gv, &gw, &zg, &ztg, &nl, &tmpg, &tmpg2}) g->resize(ng);
    for (auto* m : {&rbuf, &nlm, &bmod, &tmod, &lapm}) m->resize(nm);
  }

  int nvar() const { return nm * (3 + (tangent ? 3 : 0) + (track_z ? 1 : 0)); }

  void enable_tangent(const Direction& d) {
    tangent = true;
    dir = d;
    has_dk = !dir.dkappa.empty();
    has_dc = !dir.dc0_sq.empty();
    has_db = !dir.db0.empty();
    if (has_dk && dir.dkappa.size() != ng) throw DomainError("direction: dkappa size mismatch");
    if (has_dc && dir.dc0_sq.size() != ng) throw DomainError("direction: dc0_sq size mismatch");
    if (has_db && dir.db0.size() != ng) throw DomainError("direction: db0 size mismatch");
    for (auto* g : {&gp, &gq, &gs, &dzg, &dztg}) g->resize(ng);
  }

  void alloc_rk() {
    const int n = nvar();
    for (auto* b : {&k1, &k2, &k3, &k4, &yt}) b->resize(n);
  }

  void rhs(double t, const double* y, double* dy) {
    const double* u = y;
    const double* v = y + nm;
    const double* w = y + 2 * nm;
    double* du = dy;
    double* dv = dy + nm;
    double* dw = dy + 2 * nm;

    basis.synth_into(u, gu.data());
    basis.synth_into(v, gv.data());
    basis.synth_into(w, gw.data());

    std::memcpy(zg.data(), gu.data(), ng * sizeof(double));
    ker::axpy(tau, gv.data(), zg.data(), ng);
    std::memcpy(ztg.data(), gv.data(), ng * sizeof(double));
    ker::axpy(tau, gw.data(), ztg.data(), ng);

    const double zsq = cell * ker::dot(zg.data(), zg.data(), ng);
    const auto ce = chi.eval(zsq);
    const double sigma = ce.value;
    const double zsq_dot = 2.0 * cell * ker::dot(zg.data(), ztg.data(), ng);
    const double sigma_dot = ce.derivative * zsq_dot;
    last_sigma = sigma;
    last_sigma_dot = sigma_dot;
    last_zsq = zsq;

    // nl = 2 kappa (sigma u u_tt + (sigma_dot u + sigma u_t) u_t), on the grid
    ker::hadamard(gu.data(), gw.data(), nl.data(), ng);
    ker::scal(sigma, nl.data(), ng);
    std::memcpy(tmpg.data(), gu.data(), ng * sizeof(double));
    ker::axpby(sigma, gv.data(), sigma_dot, tmpg.data(), ng);
    ker::hadamard(tmpg.data(), gv.data(), tmpg.data(), ng);
    ker::axpy(1.0, tmpg.data(), nl.data(), ng);
    ker::hadamard(nl.data(), two_kappa.data(), nl.data(), ng);
    basis.analyze_into(nl.data(), nlm.data());

    source(t, rbuf.data(), nm);

    if (!const_b) {
      ker::hadamard(coeff.b0.data(), ztg.data(), tmpg.data(), ng);
      basis.analyze_into(tmpg.data(), bmod.data());
    }

    const double itau = 1.0 / tau;
    for (int j = 0; j < nm; ++j) {
      du[j] = v[j];
      dv[j] = w[j];
      const double bterm = const_b ? b_bar * (tau * w[j] + v[j]) : bmod[j];
      dw[j] = itau * (rbuf[j] - w[j] + nlm[j] - c2 * lambda[j] * (u[j] + tau * v[j]) - bterm);
    }

    int block = 3;
    if (tangent) {
      const double* p = y + 3 * nm;
      const double* q = y + 4 * nm;
      const double* s = y + 5 * nm;
      double* dp = dy + 3 * nm;
      double* dq = dy + 4 * nm;
      double* ds = dy + 5 * nm;

      basis.synth_into(p, gp.data());
      basis.synth_into(q, gq.data());
      basis.synth_into(s, gs.data());
      std::memcpy(dzg.data(), gp.data(), ng * sizeof(double));
      ker::axpy(tau, gq.data(), dzg.data(), ng);
      std::memcpy(dztg.data(), gq.data(), ng * sizeof(double));
      ker::axpy(tau, gs.data(), dztg.data(), ng);

      const double d_zsq = 2.0 * cell * ker::dot(zg.data(), dzg.data(), ng);
      const double d_sigma = ce.derivative * d_zsq;
      const double d_zsq_dot = 2.0 * cell * (ker::dot(dzg.data(), ztg.data(), ng) +
                                             ker::dot(zg.data(), dztg.data(), ng));
      const double d_sigma_dot = chi.second_derivative(zsq) * d_zsq * zsq_dot +
                                 ce.derivative * d_zsq_dot;

      // d[2 kappa (sigma gu gw + (sigma_dot gu + sigma gv) gv)]
      for (std::size_t i = 0; i < ng; ++i) {
        const double base_i = sigma * gu[i] * gw[i] +
                              (sigma_dot * gu[i] + sigma * gv[i]) * gv[i];
        double val = 0.0;
        if (has_dk) val += 2.0 * dir.dkappa[i] * base_i;
        const double dstate =
            d_sigma * gu[i] * gw[i] + sigma * (gp[i] * gw[i] + gu[i] * gs[i]) +
            (d_sigma_dot * gu[i] + sigma_dot * gp[i] + d_sigma * gv[i] + sigma * gq[i]) * gv[i] +
            (sigma_dot * gu[i] + sigma * gv[i]) * gq[i];
        val += two_kappa[i] * dstate;
        tmpg2[i] = val;
      }
      basis.analyze_into(tmpg2.data(), tmod.data());

      if (has_dc) {
        // + dc0_sq .* Lap z, with Lap z = -weight .* synth(lambda .* z_modal)
        for (int j = 0; j < nm; ++j) lapm[j] = lambda[j] * (u[j] + tau * v[j]);
        basis.synth_into(lapm.data(), tmpg.data());
        const auto& wgt = basis.weight();
        for (std::size_t i = 0; i < ng; ++i) tmpg[i] = -wgt[i] * tmpg[i] * dir.dc0_sq[i];
        basis.analyze_into(tmpg.data(), lapm.data());
      }

      if (has_db) {
        ker::hadamard(dir.db0.data(), ztg.data(), tmpg.data(), ng);
        basis.analyze_into(tmpg.data(), bmod.data());
      }

      std::vector<double>* btan = nullptr;
      if (!const_b) {
        // tangent of the field damping term: b0 .* (tau gs + gq)
        ker::hadamard(coeff.b0.data(), dztg.data(), tmpg.data(), ng);
        basis.analyze_into(tmpg.data(), rbuf.data());
        btan = &rbuf;
      }

      for (int j = 0; j < nm; ++j) {
        dp[j] = q[j];
        dq[j] = s[j];
        const double bterm = const_b ? b_bar * (tau * s[j] + q[j]) : (*btan)[j];
        double val = -s[j] + tmod[j] - c2 * lambda[j] * (p[j] + tau * q[j]) - bterm;
        if (has_dc) val += lapm[j];
        if (has_db) val -= bmod[j];
        ds[j] = itau * val;
      }
      block = 6;
    }

    if (track_z) {
      const double* v_ = y + nm;
      const double* w_ = y + 2 * nm;
      double* dzc = dy + block * nm;
      for (int j = 0; j < nm; ++j) dzc[j] = v_[j] + tau * w_[j];
    }
  }

  void rk4(double t, double* y, double dt) {
    const int n = nvar();
    rhs(t, y, k1.data());
    std::memcpy(yt.data(), y, n * sizeof(double));
    ker::axpy(0.5 * dt, k1.data(), yt.data(), n);
    rhs(t + 0.5 * dt, yt.data(), k2.data());
    std::memcpy(yt.data(), y, n * sizeof(double));
    ker::axpy(0.5 * dt, k2.data(), yt.data(), n);
    rhs(t + 0.5 * dt, yt.data(), k3.data());
    std::memcpy(yt.data(), y, n * sizeof(double));
    ker::axpy(dt, k3.data(), yt.data(), n);
    rhs(t + dt, yt.data(), k4.data());
    const double c6 = dt / 6.0;
    ker::axpy(c6, k1.data(), y, n);
    ker::axpy(2.0 * c6, k2.data(), y, n);
    ker::axpy(2.0 * c6, k3.data(), y, n);
    ker::axpy(c6, k4.data(), y, n);
  }

  // Diagnostics on an accepted state; throws on NaN or degeneracy.
  void check_state(double t, const double* y) {
    const double* u = y;
    const double* v = y + nm;
    basis.synth_into(u, gu.data());
    basis.synth_into(v, gv.data());
    std::memcpy(zg.data(), gu.data(), ng * sizeof(double));
    ker::axpy(tau, gv.data(), zg.data(), ng);
    last_zsq = cell * ker::dot(zg.data(), zg.data(), ng);
    if (!std::isfinite(last_zsq)) {
      std::ostringstream msg;
      msg << "solver: state became non-finite at t=" << t << "; reduce dt";
      throw InstabilityError(msg.str());
    }
    const auto ce = chi.eval(last_zsq);
    last_sigma = ce.value;
    double min_nd = std::numeric_limits<double>::infinity();
    std::size_t imin = 0;
    for (std::size_t i = 0; i < ng; ++i) {
      const double nd = 1.0 - two_kappa[i] * last_sigma * gu[i];
      if (nd < min_nd) {
        min_nd = nd;
        imin = i;
      }
    }
    if (min_nd < delta0) {
      std::ostringstream msg;
      msg << "solver: non-degeneracy 1-2*kappa*sigma*u = " << min_nd << " below margin "
          << delta0 << " at t=" << t << ", node " << imin;
      throw DegeneracyError(msg.str());
    }
    last_min_nd = min_nd;
  }

  double last_min_nd = std::numeric_limits<double>::infinity();
};

Stepper::Stepper(const EigenBasis& basis, const CoefficientField& coeff, const Cutoff& chi,
                 SourceFn source, double delta0)
    : impl_(std::make_unique<Impl>(basis, coeff, chi, std::move(source), delta0)) {
  impl_->alloc_rk();
}

Stepper::~Stepper() = default;
Stepper::Stepper(Stepper&&) noexcept = default;

const EigenBasis& Stepper::basis() const { return impl_->basis; }

void Stepper::step(State& s, double dt) {
  const int nm = impl_->nm;
  std::vector<double> y(3 * nm);
  std::memcpy(y.data(), s.u.data(), nm * sizeof(double));
  std::memcpy(y.data() + nm, s.v.data(), nm * sizeof(double));
  std::memcpy(y.data() + 2 * nm, s.w.data(), nm * sizeof(double));
  impl_->rk4(s.t, y.data(), dt);
  std::memcpy(s.u.data(), y.data(), nm * sizeof(double));
  std::memcpy(s.v.data(), y.data() + nm, nm * sizeof(double));
  std::memcpy(s.w.data(), y.data() + 2 * nm, nm * sizeof(double));
  s.t += dt;
  impl_->check_state(s.t, y.data());
  s.sigma = impl_->last_sigma;
  s.z_l2sq = impl_->last_zsq;
  s.min_nondegeneracy = impl_->last_min_nd;
  impl_->rhs(s.t, y.data(), impl_->k1.data());  // refresh sigma_dot at the new state
  s.sigma_dot = impl_->last_sigma_dot;
}

void Stepper::refresh_diagnostics(State& s) const {
  const int nm = impl_->nm;
  std::vector<double> y(3 * nm);
  std::memcpy(y.data(), s.u.data(), nm * sizeof(double));
  std::memcpy(y.data() + nm, s.v.data(), nm * sizeof(double));
  std::memcpy(y.data() + 2 * nm, s.w.data(), nm * sizeof(double));
  impl_->check_state(s.t, y.data());
  s.sigma = impl_->last_sigma;
  s.z_l2sq = impl_->last_zsq;
  s.min_nondegeneracy = impl_->last_min_nd;
  impl_->rhs(s.t, y.data(), impl_->k1.data());
  s.sigma_dot = impl_->last_sigma_dot;
}

State make_state(const EigenBasis& basis, const ModalVector& u0, const ModalVector& u1,
                 const ModalVector& u2) {
  const auto n = static_cast<std::size_t>(basis.n_modes());
  if (u0.size() != n || u1.size() != n || u2.size() != n) {
    throw DomainError("initial data: modal length mismatch");
  }
  State s;
  s.u = u0;
  s.v = u1;
  s.w = u2;
  return s;
}

double stability_dt_limit(const EigenBasis& basis, const CoefficientField& coeff) {
  const double lmax = basis.lambda(basis.n_modes() - 1);
  return 0.5 * coeff.tau / (1.0 + coeff.tau * coeff.c * std::sqrt(lmax));
}

namespace {

double fd_gradient_energy(const EigenBasis& basis, const std::vector<double>& z) {
  // int c0^2 |grad z|^2 by one-sided differences with zero boundary values.
  const auto& grid = basis.grid();
  const auto& c0sq = basis.c0_sq();
  double acc = 0.0;
  if (grid.dim() == 1) {
    const int nx = grid.npts(0);
    const double h = grid.h(0);
    for (int i = 0; i <= nx; ++i) {
      const double zl = i == 0 ? 0.0 : z[i - 1];
      const double zr = i == nx ? 0.0 : z[i];
      const double cl = i == 0 ? c0sq[0] : c0sq[i - 1];
      const double cr = i == nx ? c0sq[nx - 1] : c0sq[i];
      const double d = (zr - zl) / h;
      acc += 0.5 * (cl + cr) * d * d * h;
    }
  } else {
    const int nx = grid.npts(0), ny = grid.npts(1);
    const double hx = grid.h(0), hy = grid.h(1);
    auto at = [&](int ix, int iy) {
      return (ix < 0 || ix >= nx || iy < 0 || iy >= ny) ? 0.0 : z[grid.index(ix, iy)];
    };
    auto cw = [&](int ix, int iy) {
      ix = std::clamp(ix, 0, nx - 1);
      iy = std::clamp(iy, 0, ny - 1);
      return c0sq[grid.index(ix, iy)];
    };
    for (int ix = 0; ix <= nx; ++ix) {
      for (int iy = 0; iy < ny; ++iy) {
        const double d = (at(ix, iy) - at(ix - 1, iy)) / hx;
        acc += 0.5 * (cw(ix, iy) + cw(ix - 1, iy)) * d * d * hx * hy;
      }
    }
    for (int iy = 0; iy <= ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const double d = (at(ix, iy) - at(ix, iy - 1)) / hy;
        acc += 0.5 * (cw(ix, iy) + cw(ix, iy - 1)) * d * d * hx * hy;
      }
    }
  }
  return acc;
}

}  // namespace

Trajectory simulate(const EigenBasis& basis, const CoefficientField& coeff, const Cutoff& chi,
                    SourceFn source, const ModalVector& u0, const ModalVector& u1,
                    const ModalVector& u2, const SimOptions& opts) {
  if (!(opts.dt > 0.0)) throw DomainError("simulate: dt must be positive");
  const double dt_lim = stability_dt_limit(basis, coeff);
  if (opts.dt > dt_lim) {
    std::ostringstream msg;
    msg << "simulate: dt=" << opts.dt << " exceeds the stability pre-check limit " << dt_lim;
    throw DomainError(msg.str());
  }

  Stepper stepper(basis, coeff, chi, std::move(source), opts.delta0);
  auto& impl = *stepper.impl();
  if (opts.check_z_consistency) {
    impl.track_z = true;
    impl.alloc_rk();
  }

  Trajectory traj;
  traj.dt = opts.dt;
  traj.sample_every = std::max(1, opts.sample_every);

  const int nm = basis.n_modes();
  const std::size_t ng = basis.grid().size();
  std::vector<double> y(impl.nvar(), 0.0);
  {
    if (u0.size() != static_cast<std::size_t>(nm) || u1.size() != static_cast<std::size_t>(nm) ||
        u2.size() != static_cast<std::size_t>(nm)) {
      throw DomainError("simulate: initial data length mismatch");
    }
    std::memcpy(y.data(), u0.data(), nm * sizeof(double));
    std::memcpy(y.data() + nm, u1.data(), nm * sizeof(double));
    std::memcpy(y.data() + 2 * nm, u2.data(), nm * sizeof(double));
    if (impl.track_z) {
      for (int j = 0; j < nm; ++j) y[3 * nm + j] = u0[j] + coeff.tau * u1[j];
    }
  }
  impl.check_state(0.0, y.data());

  std::vector<double> zgrid(ng), ztgrid(ng), ugrid(ng), vtmp(nm);

  auto record = [&](double t) {
    traj.times.push_back(t);
    ModalVector mu(nm), mv(nm), mw(nm);
    std::memcpy(mu.data(), y.data(), nm * sizeof(double));
    std::memcpy(mv.data(), y.data() + nm, nm * sizeof(double));
    std::memcpy(mw.data(), y.data() + 2 * nm, nm * sizeof(double));
    traj.sigma.push_back(impl.last_sigma);
    traj.z_l2sq.push_back(impl.last_zsq);
    // energies
    for (int j = 0; j < nm; ++j) vtmp[j] = mu[j] + coeff.tau * mv[j];
    double grad_spec = 0.0;
    for (int j = 0; j < nm; ++j) grad_spec += basis.lambda(j) * vtmp[j] * vtmp[j];
    basis.synth_into(vtmp.data(), zgrid.data());
    if (impl.track_z) {
      double err = 0.0;
      for (int j = 0; j < nm; ++j) err = std::max(err, std::abs(y[3 * nm + j] - vtmp[j]));
      traj.max_z_consistency_err = std::max(traj.max_z_consistency_err, err);
    }
    for (int j = 0; j < nm; ++j) vtmp[j] = mv[j] + coeff.tau * mw[j];
    basis.synth_into(vtmp.data(), ztgrid.data());
    const double kin = basis.grid().cell() * ker::dot(ztgrid.data(), ztgrid.data(), ng);
    traj.energy.push_back(0.5 * (kin + coeff.c * coeff.c * grad_spec));
    traj.energy_grad_fd.push_back(0.5 * (kin + fd_gradient_energy(basis, zgrid)));
    if (opts.obs_rows) {
      basis.synth_into(mu.data(), ugrid.data());
      std::vector<double> cu, cv;
      cu.reserve(opts.obs_rows->size());
      cv.reserve(opts.obs_rows->size());
      for (const auto& row : *opts.obs_rows) {
        cu.push_back(ker::dot(row.data(), ugrid.data(), ng));
      }
      basis.synth_into(mv.data(), ugrid.data());
      for (const auto& row : *opts.obs_rows) {
        cv.push_back(ker::dot(row.data(), ugrid.data(), ng));
      }
      traj.obs_u.push_back(std::move(cu));
      traj.obs_ut.push_back(std::move(cv));
    }
    traj.u.push_back(std::move(mu));
    traj.v.push_back(std::move(mv));
    traj.w.push_back(std::move(mw));
    traj.min_nondegeneracy = std::min(traj.min_nondegeneracy, impl.last_min_nd);
  };

  record(0.0);

  const double m_lo = chi.lo();
  const double persistence =
      coeff.constant_b0 && coeff.b_bar > 0.0 ? 2.0 / coeff.b_bar : 0.1 * opts.horizon;
  const long steps_horizon = static_cast<long>(std::ceil(opts.horizon / opts.dt - 1e-9));
  const long steps_cap = opts.extend_to_switch_off
                             ? static_cast<long>(std::ceil(opts.extend_cap * opts.horizon / opts.dt))
                             : steps_horizon;

  double t_last_above = impl.last_zsq > m_lo ? 0.0 : -persistence;
  long i = 0;
  bool recorded_last = true;
  while (true) {
    const double t = i * opts.dt;
    if (i >= steps_horizon) {
      if (!opts.extend_to_switch_off) break;
      if (t >= t_last_above + persistence) break;
      if (i >= steps_cap) break;
    }
    impl.rk4(t, y.data(), opts.dt);
    ++i;
    const double tn = i * opts.dt;
    impl.check_state(tn, y.data());
    if (impl.last_zsq > m_lo) t_last_above = tn;
    recorded_last = (i % traj.sample_every == 0);
    if (recorded_last) record(tn);
  }
  if (!recorded_last) record(i * opts.dt);
  return traj;
}

double detect_t_star(const Trajectory& traj, const Cutoff& chi, double b_bar) {
  if (traj.times.empty()) throw DomainError("detect_t_star: empty trajectory");
  const double m_lo = chi.lo();
  // first sample index from which |z|^2 stays at or below m_lo
  std::size_t idx = traj.n_samples();
  for (std::size_t k = traj.n_samples(); k-- > 0;) {
    if (traj.z_l2sq[k] > m_lo) break;
    idx = k;
  }
  if (idx == traj.n_samples()) {
    throw NotSwitchedOffError(
        "detect_t_star: |z|^2 never settles below m_lo; increase b0 or the horizon");
  }
  if (idx > 0) {
    const double persistence = b_bar > 0.0 ? 2.0 / b_bar : 0.0;
    if (traj.times.back() - traj.times[idx] < persistence) {
      throw NotSwitchedOffError(
          "detect_t_star: switch-off not yet persistent; increase b0 or the horizon");
    }
  }
  return traj.times[idx];
}

double energy_of_sample(const Trajectory& traj, std::size_t k, const EigenBasis& basis,
                        double tau) {
  const int nm = basis.n_modes();
  ModalVector z(nm), zd(nm);
  for (int j = 0; j < nm; ++j) {
    z[j] = traj.u[k][j] + tau * traj.v[k][j];
    zd[j] = traj.v[k][j] + tau * traj.w[k][j];
  }
  std::vector<double> g(basis.grid().size());
  basis.synth_into(zd.data(), g.data());
  const double kin = basis.grid().cell() * ker::dot(g.data(), g.data(), g.size());
  double grad = 0.0;
  for (int j = 0; j < nm; ++j) grad += basis.lambda(j) * z[j] * z[j];
  return 0.5 * (kin + basis.c() * basis.c() * grad);
}

LinearTail::LinearTail(const EigenBasis& basis, const CoefficientField& coeff, double t_star,
                       ModalVector z0, ModalVector z1, const Excitation::ModalSource* source)
    : t_star_(t_star), z0_(std::move(z0)), z1_(std::move(z1)), source_(source) {
  if (!coeff.constant_b0) {
    throw UnsupportedConfigError("linear_tail: requires constant b0");
  }
  b_bar_ = coeff.b_bar;
  const int nm = basis.n_modes();
  pairs_.reserve(nm);
  a_plus_.resize(nm);
  a_minus_.resize(nm);
  for (int j = 0; j < nm; ++j) {
    pairs_.push_back(residues::poles(basis.lambda(j), b_bar_, coeff.c));
    const Complex diff = pairs_[j].plus - pairs_[j].minus;
    a_plus_[j] = (z1_[j] - pairs_[j].minus * z0_[j]) / diff;
    a_minus_[j] = (pairs_[j].plus * z0_[j] - z1_[j]) / diff;
  }
}

ModalVector LinearTail::eval_z(double t) const {
  const int nm = static_cast<int>(pairs_.size());
  ModalVector out(nm);
  const double dt = t - t_star_;
  for (int j = 0; j < nm; ++j) {
    Complex val = a_plus_[j] * std::exp(pairs_[j].plus * dt) +
                  a_minus_[j] * std::exp(pairs_[j].minus * dt);
    if (source_) {
      const Complex diff = pairs_[j].plus - pairs_[j].minus;
      const Complex ip = source_->per_mode[j].integral(pairs_[j].plus, t_star_, t);
      const Complex im = source_->per_mode[j].integral(pairs_[j].minus, t_star_, t);
      val += (std::exp(pairs_[j].plus * t) * ip - std::exp(pairs_[j].minus * t) * im) / diff;
    }
    out[j] = val.real();
  }
  return out;
}

ModalVector LinearTail::eval_zdot(double t) const {
  const int nm = static_cast<int>(pairs_.size());
  ModalVector out(nm);
  const double dt = t - t_star_;
  for (int j = 0; j < nm; ++j) {
    Complex val = pairs_[j].plus * a_plus_[j] * std::exp(pairs_[j].plus * dt) +
                  pairs_[j].minus * a_minus_[j] * std::exp(pairs_[j].minus * dt);
    if (source_) {
      const Complex diff = pairs_[j].plus - pairs_[j].minus;
      const Complex ip = source_->per_mode[j].integral(pairs_[j].plus, t_star_, t);
      const Complex im = source_->per_mode[j].integral(pairs_[j].minus, t_star_, t);
      val += (pairs_[j].plus * std::exp(pairs_[j].plus * t) * ip -
              pairs_[j].minus * std::exp(pairs_[j].minus * t) * im) /
             diff;
    }
    out[j] = val.real();
  }
  return out;
}

std::vector<residues::ModalResiduePair> LinearTail::residues() const {
  const int nm = static_cast<int>(pairs_.size());
  std::vector<residues::ModalResiduePair> out;
  out.reserve(nm);
  for (int j = 0; j < nm; ++j) {
    const Complex rp = source_ ? source_->laplace_tail(j, pairs_[j].plus, t_star_)
                               : Complex(0.0, 0.0);
    const Complex rm = source_ ? source_->laplace_tail(j, pairs_[j].minus, t_star_)
                               : Complex(0.0, 0.0);
    out.push_back(residues::modal_residue_closed_form(pairs_[j], b_bar_, t_star_, z0_[j],
                                                      z1_[j], rp, rm));
  }
  return out;
}

LinearTail linear_tail(const Trajectory& traj, const EigenBasis& basis,
                       const CoefficientField& coeff, double t_star,
                       const Excitation::ModalSource* source) {
  // locate the sample at t_star
  std::size_t k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.n_samples(); ++i) {
    const double d = std::abs(traj.times[i] - t_star);
    if (d < best) {
      best = d;
      k = i;
    }
  }
  if (best > 0.5 * traj.dt * traj.sample_every + 1e-12) {
    throw DomainError("linear_tail: t_star does not match a trajectory sample");
  }
  return LinearTail(basis, coeff, traj.times[k], traj.z_modal(k, coeff.tau),
                    traj.zdot_modal(k, coeff.tau), source);
}

Trajectory solve_linearized(const EigenBasis& basis, const CoefficientField& coeff,
                            const Cutoff& chi, SourceFn source, const ModalVector& u0,
                            const ModalVector& u1, const ModalVector& u2,
                            const Direction& dir, const SimOptions& opts) {
  if (!(opts.dt > 0.0)) throw DomainError("solve_linearized: dt must be positive");
  const double dt_lim = stability_dt_limit(basis, coeff);
  if (opts.dt > dt_lim) {
    throw DomainError("solve_linearized: dt exceeds the stability pre-check limit");
  }
  Stepper stepper(basis, coeff, chi, std::move(source), opts.delta0);
  auto& impl = *stepper.impl();
  impl.enable_tangent(dir);
  impl.alloc_rk();

  const int nm = basis.n_modes();
  std::vector<double> y(6 * nm, 0.0);
  std::memcpy(y.data(), u0.data(), nm * sizeof(double));
  std::memcpy(y.data() + nm, u1.data(), nm * sizeof(double));
  std::memcpy(y.data() + 2 * nm, u2.data(), nm * sizeof(double));
  // homogeneous tangent initial data

  Trajectory traj;
  traj.dt = opts.dt;
  traj.sample_every = std::max(1, opts.sample_every);

  const std::size_t ng = basis.grid().size();
  std::vector<double> g(ng);

  auto record = [&](double t) {
    traj.times.push_back(t);
    ModalVector p(nm), q(nm), s(nm);
    std::memcpy(p.data(), y.data() + 3 * nm, nm * sizeof(double));
    std::memcpy(q.data(), y.data() + 4 * nm, nm * sizeof(double));
    std::memcpy(s.data(), y.data() + 5 * nm, nm * sizeof(double));
    traj.u.push_back(std::move(p));
    traj.v.push_back(std::move(q));
    traj.w.push_back(std::move(s));
    traj.sigma.push_back(impl.last_sigma);
    traj.z_l2sq.push_back(impl.last_zsq);
    traj.energy.push_back(0.0);
    traj.energy_grad_fd.push_back(0.0);
    if (opts.obs_rows) {
      std::vector<double> cu, cv;
      basis.synth_into(y.data() + 3 * nm, g.data());
      for (const auto& row : *opts.obs_rows) cu.push_back(ker::dot(row.data(), g.data(), ng));
      basis.synth_into(y.data() + 4 * nm, g.data());
      for (const auto& row : *opts.obs_rows) cv.push_back(ker::dot(row.data(), g.data(), ng));
      traj.obs_u.push_back(std::move(cu));
      traj.obs_ut.push_back(std::move(cv));
    }
  };

  impl.rhs(0.0, y.data(), impl.k1.data());
  record(0.0);
  const long steps = static_cast<long>(std::ceil(opts.horizon / opts.dt - 1e-9));
  bool recorded_last = true;
  for (long i = 1; i <= steps; ++i) {
    impl.rk4((i - 1) * opts.dt, y.data(), opts.dt);
    for (int j = 0; j < 6 * nm; ++j) {
      if (!std::isfinite(y[j])) {
        throw InstabilityError("solve_linearized: non-finite state; reduce dt");
      }
    }
    recorded_last = (i % traj.sample_every == 0);
    if (recorded_last) {
      impl.rhs(i * opts.dt, y.data(), impl.k1.data());
      record(i * opts.dt);
    }
  }
  if (!recorded_last) record(steps * opts.dt);
  return traj;
}

double trajectory_energy_norm(const Trajectory& traj, const EigenBasis& basis, double tau) {
  double sup = 0.0;
  for (std::size_t k = 0; k < traj.n_samples(); ++k) {
    sup = std::max(sup, std::sqrt(energy_of_sample(traj, k, basis, tau)));
  }
  return sup;
}

TaylorResult taylor_remainder_check(const EigenBasis& basis, const CoefficientField& coeff,
                                    const Cutoff& chi, SourceFn source, const ModalVector& u0,
                                    const ModalVector& u1, const ModalVector& u2,
                                    const Direction& dir, const std::vector<double>& amplitudes,
                                    const SimOptions& opts) {
  if (amplitudes.empty()) throw DomainError("taylor check: no amplitudes given");
  const bool varies_c0 = !dir.dc0_sq.empty();
  if (varies_c0 && basis.n_modes() != static_cast<int>(basis.grid().size())) {
    throw DomainError("taylor check: c0_sq direction requires the full (untruncated) basis");
  }

  const Trajectory base = simulate(basis, coeff, chi, source, u0, u1, u2, opts);
  const Trajectory tang = solve_linearized(basis, coeff, chi, source, u0, u1, u2, dir, opts);

  const int nm = basis.n_modes();
  const std::size_t ng = basis.grid().size();
  const double tau = coeff.tau;

  TaylorResult result;
  for (double amp : amplitudes) {
    CoefficientField pert = coeff;
    if (!dir.dkappa.empty()) {
      for (std::size_t i = 0; i < ng; ++i) pert.kappa[i] += amp * dir.dkappa[i];
    }
    if (!dir.db0.empty()) {
      if (pert.constant_b0) {
        pert.b0.assign(ng, pert.b_bar);
        pert.constant_b0 = false;
      }
      for (std::size_t i = 0; i < ng; ++i) pert.b0[i] += amp * dir.db0[i];
    }
    std::optional<EigenBasis> pert_basis;
    const EigenBasis* pb = &basis;
    ModalVector pu0 = u0, pu1 = u1, pu2 = u2;
    if (varies_c0) {
      for (std::size_t i = 0; i < ng; ++i) pert.c0_sq[i] += amp * dir.dc0_sq[i];
      pert_basis.emplace(spectral::build_basis(basis.grid(), pert.c0_sq, coeff.c, nm));
      pb = &*pert_basis;
      // re-express the initial data in the perturbed basis (same grid function)
      std::vector<double> gtmp(ng);
      basis.synth_into(u0.data(), gtmp.data());
      pu0 = pb->to_modal(gtmp);
      basis.synth_into(u1.data(), gtmp.data());
      pu1 = pb->to_modal(gtmp);
      basis.synth_into(u2.data(), gtmp.data());
      pu2 = pb->to_modal(gtmp);
    }
    const Trajectory ptraj = simulate(*pb, pert, chi, source, pu0, pu1, pu2, opts);

    if (ptraj.n_samples() != base.n_samples() || tang.n_samples() != base.n_samples()) {
      throw NumericalError("taylor check: trajectory sampling misaligned");
    }

    // w = S(x + amp d) - S(x) - amp S'(x)d, energy norm of tau w_t + w
    double sup = 0.0;
    std::vector<double> zb(ng), zp(ng), zt(ng), zdb(ng), zdp(ng), zdt(ng);
    ModalVector mz(nm);
    for (std::size_t k = 0; k < base.n_samples(); ++k) {
      auto diff_grid = [&](const Trajectory& tr, const EigenBasis& bb, std::size_t kk,
                           std::vector<double>& zout, std::vector<double>& zdout) {
        ModalVector z = tr.z_modal(kk, tau);
        ModalVector zd = tr.zdot_modal(kk, tau);
        bb.synth_into(z.data(), zout.data());
        bb.synth_into(zd.data(), zdout.data());
      };
      diff_grid(base, basis, k, zb, zdb);
      diff_grid(ptraj, *pb, k, zp, zdp);
      diff_grid(tang, basis, k, zt, zdt);
      for (std::size_t i = 0; i < ng; ++i) {
        zp[i] -= zb[i] + amp * zt[i];
        zdp[i] -= zdb[i] + amp * zdt[i];
      }
      const double kin = basis.grid().cell() * ker::dot(zdp.data(), zdp.data(), ng);
      basis.analyze_into(zp.data(), mz.data());
      double grad = 0.0;
      for (int j = 0; j < nm; ++j) grad += basis.lambda(j) * mz[j] * mz[j];
      const double e = 0.5 * (kin + basis.c() * basis.c() * grad);
      sup = std::max(sup, std::sqrt(e));
    }
    result.samples.push_back(TaylorSample{amp, sup});
  }

  // log-log least-squares slope
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (const auto& s : result.samples) {
    if (!(s.remainder_norm > 0.0)) continue;
    const double x = std::log(s.amplitude);
    const double yv = std::log(s.remainder_norm);
    sx += x;
    sy += yv;
    sxx += x * x;
    sxy += x * yv;
    ++n;
  }
  if (n >= 2) result.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return result;
}

}  // namespace jmgt::solver
