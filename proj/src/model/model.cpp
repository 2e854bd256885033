#include "jmgt/model.hpp"

#include <algorithm>
#include <cmath>

#include "jmgt/kernels.hpp"

namespace jmgt::model {

Cutoff::Eval Cutoff::eval(double s) const {
  if (s < 0.0) throw DomainError("cutoff: argument must be nonnegative");
  if (s <= lo_) return {0.0, 0.0};
  if (s >= hi_) return {1.0, 0.0};
  const double w = hi_ - lo_;
  const double t = (s - lo_) / w;
  const double value = t * t * t * (t * (6.0 * t - 15.0) + 10.0);
  const double deriv = 30.0 * t * t * (t - 1.0) * (t - 1.0) / w;
  return {value, deriv};
}

double Cutoff::second_derivative(double s) const {
  if (s < 0.0) throw DomainError("cutoff: argument must be nonnegative");
  if (s <= lo_ || s >= hi_) return 0.0;
  const double w = hi_ - lo_;
  const double t = (s - lo_) / w;
  return (120.0 * t * t * t - 180.0 * t * t + 60.0 * t) / (w * w);
}

double sigma_of_state(const Cutoff& chi, const Field& z, const EigenBasis& basis) {
  return chi.eval(basis.l2_norm_sq(z)).value;
}

void CoefficientField::validate(const Grid& grid) const {
  const std::size_t n = grid.size();
  if (kappa.size() != n) throw DomainError("coefficients: kappa size mismatch");
  if (c0_sq.size() != n) throw DomainError("coefficients: c0_sq size mismatch");
  for (double v : c0_sq) {
    if (!(v > 0.0)) throw DomainError("coefficients: c0_sq must be strictly positive");
  }
  if (constant_b0) {
    if (b_bar < 0.0) throw DomainError("coefficients: b0 must be nonnegative");
  } else {
    if (b0.size() != n) throw DomainError("coefficients: b0 size mismatch");
    for (double v : b0) {
      if (v < 0.0) throw DomainError("coefficients: b0 must be nonnegative");
    }
  }
  if (!(tau > 0.0)) throw DomainError("coefficients: tau must be positive");
  if (!(c > 0.0)) throw DomainError("coefficients: c must be positive");
}

TimeProfile::TimeProfile(int q, double a, double amplitude)
    : q_(q), a_(a), amplitude_(amplitude) {
  if (q < 3) throw DomainError("time profile: q >= 3 required (three vanishing derivatives)");
  if (!(a > 0.0)) throw DomainError("time profile: decay rate must be positive");
  psi_ = PolyExp::monomial(amplitude, q, a);
  d1_ = psi_.derivative();
  d2_ = d1_.derivative();
  d3_ = d2_.derivative();
}

bool in_rec_domain(const Grid& grid, std::size_t idx, const std::array<double, 2>& frac) {
  const auto xy = grid.coords(idx);
  for (int d = 0; d < grid.dim(); ++d) {
    const double lo = frac[0] * grid.length(d);
    const double hi = frac[1] * grid.length(d);
    if (xy[d] < lo - 1e-12 || xy[d] > hi + 1e-12) return false;
  }
  return true;
}

SpatialProfile SpatialProfile::from_modal(const EigenBasis& basis, ModalVector coeffs,
                                          std::array<double, 2> rec_fraction) {
  SpatialProfile p;
  p.rec_fraction = rec_fraction;
  p.coeffs = std::move(coeffs);
  p.values = basis.to_grid(p.coeffs);
  const ModalVector a_coeffs = basis.apply_operator(p.coeffs);
  p.a_phi = basis.to_grid(a_coeffs);
  // Lap phi = -(c^2/c0^2) (A phi), exact for fields in the span.
  const auto& grid = basis.grid();
  p.laplacian.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    p.laplacian[i] = -basis.weight()[i] * p.a_phi[i];
  }
  p.l2_sq = basis.l2_norm_sq(p.values);
  p.min_abs_phi = std::numeric_limits<double>::infinity();
  p.min_abs_lap = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!in_rec_domain(grid, i, rec_fraction)) continue;
    any = true;
    p.min_abs_phi = std::min(p.min_abs_phi, std::abs(p.values[i]));
    p.min_abs_lap = std::min(p.min_abs_lap, std::abs(p.laplacian[i]));
  }
  if (!any) throw DomainError("spatial profile: reconstruction subdomain contains no nodes");
  if (!(p.min_abs_phi > 0.0) || !(p.min_abs_lap > 0.0)) {
    throw DomainError(
        "spatial profile: phi or Lap phi vanishes on the reconstruction subdomain");
  }
  return p;
}

SpatialProfile SpatialProfile::default_bump(const EigenBasis& basis, int n_fit,
                                            std::array<double, 2> rec_fraction) {
  const auto& grid = basis.grid();
  Field target(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto xy = grid.coords(i);
    double v = std::sin(M_PI * xy[0] / grid.length(0));
    if (grid.dim() == 2) v *= std::sin(M_PI * xy[1] / grid.length(1));
    target[i] = v;
  }
  ModalVector coeffs = basis.to_modal(target);
  n_fit = std::min<int>(n_fit, basis.n_modes());
  for (int j = n_fit; j < basis.n_modes(); ++j) coeffs[j] = 0.0;
  // unit sup norm
  Field vals = basis.to_grid(coeffs);
  double mx = 0.0;
  for (double v : vals) mx = std::max(mx, std::abs(v));
  if (!(mx > 0.0)) throw DomainError("spatial profile: degenerate default bump");
  for (double& cval : coeffs) cval /= mx;
  return from_modal(basis, std::move(coeffs), rec_fraction);
}

Excitation::Excitation(const EigenBasis& design_basis, const SpatialProfile& phi,
                       const TimeProfile& psi, const CoefficientField& coeff)
    : phi_(phi), psi_(psi) {
  if (!coeff.constant_b0) {
    throw UnsupportedConfigError("excitation: design requires constant b0");
  }
  (void)design_basis;
  b_bar_ = coeff.b_bar;
  tau_ = coeff.tau;
  c_ = coeff.c;
  g0_ = psi.psi_tau(tau_);
  g1_ = g0_.derivative();
  g2_ = g1_.derivative();
}

Excitation::ModalSource Excitation::project(const EigenBasis& basis) const {
  // r = phi g2 + c^2 (A0 phi) g0 + b phi g1; project the two spatial fields.
  const ModalVector phi_m = basis.to_modal(phi_.values);
  const ModalVector aphi_m = basis.to_modal(phi_.a_phi);
  ModalSource src;
  src.per_mode.reserve(basis.n_modes());
  for (int j = 0; j < basis.n_modes(); ++j) {
    PolyExp r = phi_m[j] * g2_ + (c_ * c_ * aphi_m[j]) * g0_ + (b_bar_ * phi_m[j]) * g1_;
    src.per_mode.push_back(std::move(r));
  }
  return src;
}

double Excitation::r_at(std::size_t node, double t, const EigenBasis& basis) const {
  (void)basis;
  return phi_.values[node] * g2_(t) + c_ * c_ * phi_.a_phi[node] * g0_(t) +
         b_bar_ * phi_.values[node] * g1_(t);
}

namespace {

// 20-point Gauss-Legendre nodes/weights on [-1,1] (positive half; symmetric).
constexpr int kGaussN = 10;
constexpr double kGaussX[kGaussN] = {
    0.0765265211334973, 0.2277858511416451, 0.3737060887154195, 0.5108670019508271,
    0.6360536807265150, 0.7463319064601508, 0.8391169718222188, 0.9122344282513259,
    0.9639719272779138, 0.9931285991850949};
constexpr double kGaussW[kGaussN] = {
    0.1527533871307258, 0.1491729864726037, 0.1420961093183820, 0.1316886384491766,
    0.1181945319615184, 0.1019301198172404, 0.0832767415767048, 0.0626720483341091,
    0.0406014298003869, 0.0176140071391521};

template <typename T, typename F>
T gauss_panel(const F& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  T acc{};
  for (int i = 0; i < kGaussN; ++i) {
    const double dx = half * kGaussX[i];
    acc += kGaussW[i] * (f(mid + dx) + f(mid - dx));
  }
  return acc * half;
}

template <typename T, typename F>
void adaptive(const F& f, double a, double b, double tol, T whole, T& acc, int depth) {
  const double mid = 0.5 * (a + b);
  const T left = gauss_panel<T>(f, a, mid);
  const T right = gauss_panel<T>(f, mid, b);
  const T sum = left + right;
  if (depth >= 24) throw NumericalError("quadrature: panel recursion limit reached");
  if (std::abs(sum - whole) <= tol || (b - a) < 1e-13) {
    acc += sum;
    return;
  }
  adaptive(f, a, mid, 0.5 * tol, left, acc, depth + 1);
  adaptive(f, mid, b, 0.5 * tol, right, acc, depth + 1);
}

template <typename T, typename F>
T integrate_impl(const F& f, double a, double b, double rel_tol) {
  if (!(b > a)) return T{};
  // dyadic panels plus adaptivity inside each
  std::vector<double> edges{a};
  double step = std::max(1.0, (b - a) / 64.0);
  double t = a + step;
  while (t < b) {
    edges.push_back(t);
    step *= 2.0;
    t += step;
  }
  edges.push_back(b);
  T coarse{};
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    coarse += gauss_panel<T>(f, edges[i], edges[i + 1]);
  }
  const double tol = rel_tol * std::max(1.0, std::abs(coarse));
  T acc{};
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    adaptive(f, edges[i], edges[i + 1], tol / static_cast<double>(edges.size()),
             gauss_panel<T>(f, edges[i], edges[i + 1]), acc, 0);
  }
  return acc;
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  return integrate_impl<double>(f, a, b, rel_tol);
}

Complex integrate(const std::function<Complex(double)>& f, double a, double b,
                  double rel_tol) {
  return integrate_impl<Complex>(f, a, b, rel_tol);
}

FWeights::FWeights(const TimeProfile& psi, const Cutoff& chi, double phi_l2_sq, double tau,
                   Variant variant)
    : chi_(chi), phi_l2_sq_(phi_l2_sq), variant_(variant) {
  psi_tau_ = psi.psi_tau(tau);
  if (variant == Variant::sound_speed) {
    f1_ = psi_tau_;
  } else {
    f1_ = tau * psi.d2() + psi.d1();
  }
  // (psi^2)'' = 2 (psi'^2 + psi psi''): polynomial at rate 2a.
  {
    const auto& p = psi.psi().coeffs();
    const auto& p1 = psi.d1().coeffs();
    const auto& p2 = psi.d2().coeffs();
    auto mul = [](const std::vector<double>& u, const std::vector<double>& v) {
      std::vector<double> out(u.size() + v.size() - 1, 0.0);
      for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) out[i + j] += u[i] * v[j];
      }
      return out;
    };
    std::vector<double> q = mul(p1, p1);
    const std::vector<double> q2 = mul(p, p2);
    if (q2.size() > q.size()) q.resize(q2.size(), 0.0);
    for (std::size_t i = 0; i < q2.size(); ++i) q[i] += q2[i];
    for (double& v : q) v *= 2.0;
    psi_sq_dd_ = PolyExp(std::move(q), 2.0 * psi.a());
  }

  // Quadrature horizon: |(psi^2)''| has decayed below 1e-16 of its scale.
  double scale = 0.0;
  for (double t = 0.0; t < 20.0 / psi.a(); t += 0.05 / psi.a()) {
    scale = std::max(scale, std::abs(psi_sq_dd_(t)));
  }
  double t_end = 20.0 / psi.a();
  while (std::abs(psi_sq_dd_(t_end)) > 1e-16 * scale && t_end < 1e4) t_end *= 1.25;
  t_quad_end_ = t_end;

  // Panel breakpoints at the cutoff crossing times of |phi|^2 psi_tau^2 so the
  // integrand is smooth inside each panel.
  auto arg = [this](double t) {
    const double v = psi_tau_(t);
    return phi_l2_sq_ * v * v;
  };
  auto add_crossings = [&](double level) {
    double prev_t = 0.0;
    double prev = arg(0.0) - level;
    const double dt = t_quad_end_ / 4096.0;
    for (double t = dt; t <= t_quad_end_ + dt; t += dt) {
      const double cur = arg(t) - level;
      if ((prev < 0.0) != (cur < 0.0)) {
        double a = prev_t, b = t;
        for (int it = 0; it < 80; ++it) {
          const double mid = 0.5 * (a + b);
          if ((arg(mid) - level < 0.0) == (prev < 0.0)) {
            a = mid;
          } else {
            b = mid;
          }
        }
        breakpoints_.push_back(0.5 * (a + b));
      }
      prev_t = t;
      prev = cur;
    }
  };
  add_crossings(chi_.lo());
  add_crossings(chi_.hi());
  std::sort(breakpoints_.begin(), breakpoints_.end());
}

double FWeights::f2(double t) const {
  const double v = psi_tau_(t);
  return chi_.eval(phi_l2_sq_ * v * v).value * psi_sq_dd_(t);
}

Complex FWeights::f2_hat(Complex z) const {
  Complex acc(0.0, 0.0);
  double left = 0.0;
  auto integrand = [this, z](double t) { return std::exp(-z * t) * f2(t); };
  for (double bp : breakpoints_) {
    if (bp <= left || bp >= t_quad_end_) continue;
    acc += integrate(std::function<Complex(double)>(integrand), left, bp, 1e-12);
    left = bp;
  }
  acc += integrate(std::function<Complex(double)>(integrand), left, t_quad_end_, 1e-12);
  return acc;
}

std::vector<NuFactor> nu_factors(const std::function<Complex(Complex)>& f1_hat,
                                 const std::function<Complex(Complex)>& f2_hat,
                                 const std::vector<std::array<Complex, 2>>& poles) {
  constexpr double kNuFloor = 1e-12;
  std::vector<NuFactor> out;
  out.reserve(poles.size());
  for (const auto& pp : poles) {
    const Complex plus = pp[0], minus = pp[1];
    const Complex nu = f1_hat(minus) * f2_hat(plus) - f1_hat(plus) * f2_hat(minus);
    out.push_back(NuFactor{nu, std::abs(nu) < kNuFloor});
  }
  return out;
}

}  // namespace jmgt::model
