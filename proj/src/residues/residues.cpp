#include "jmgt/residues.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace jmgt::residues {

Complex omega(double lambda, double b, double c, Complex z) {
  return z * z + b * z + c * c * lambda;
}

PolePair poles(double lambda, double b, double c) {
  if (!(lambda > 0.0)) throw DomainError("poles: lambda must be positive");
  if (b < 0.0) throw DomainError("poles: b must be nonnegative");
  PolePair p;
  p.lambda = lambda;
  p.discriminant = 4.0 * c * c * lambda - b * b;
  const double scale = std::max(4.0 * c * c * lambda, b * b);
  if (std::abs(p.discriminant) <= 1e-12 * scale) {
    std::ostringstream msg;
    msg << "poles: double pole at lambda=" << lambda << ", b=" << b << ", c=" << c;
    throw DoublePoleError(msg.str());
  }
  if (p.discriminant > 0.0) {
    p.regime = Regime::oscillatory;
    const double w = 0.5 * std::sqrt(p.discriminant);
    p.plus = Complex(-0.5 * b, w);
    p.minus = Complex(-0.5 * b, -w);
  } else {
    p.regime = Regime::overdamped;
    const double s = 0.5 * std::sqrt(-p.discriminant);
    p.plus = Complex(-0.5 * b + s, 0.0);
    p.minus = Complex(-0.5 * b - s, 0.0);
  }
  return p;
}

Complex resolvent_residue(const PolePair& pair) {
  if (pair.discriminant == 0.0) throw DoublePoleError("resolvent_residue: coincident poles");
  // closed form 1/(i sqrt(4 c^2 lambda - b^2)); equals 1/(p+ - p-) in both regimes
  if (pair.regime == Regime::oscillatory) {
    return 1.0 / Complex(0.0, std::sqrt(pair.discriminant));
  }
  return Complex(1.0 / std::sqrt(-pair.discriminant), 0.0);
}

Complex u_to_z_residue(Complex r_u, Complex pole, double tau) {
  return (tau * pole + 1.0) * r_u;
}

Complex z_to_u_residue(Complex r_z, Complex pole, double tau) {
  const Complex f = tau * pole + 1.0;
  if (std::abs(f) < 1e-9) {
    throw SingularConversionError("z_to_u_residue: pole within 1e-9 of -1/tau");
  }
  return r_z / f;
}

ModalResiduePair modal_residue_closed_form(const PolePair& pair, double b, double t_star,
                                           double z0, double z1, Complex r_tail_plus,
                                           Complex r_tail_minus) {
  const Complex diff = pair.plus - pair.minus;
  const Complex shift_p = std::exp(-pair.plus * t_star);
  const Complex shift_m = std::exp(-pair.minus * t_star);
  ModalResiduePair out;
  out.plus = (r_tail_plus + shift_p * (z1 + (pair.plus + b) * z0)) / diff;
  out.minus = (r_tail_minus + shift_m * (z1 + (pair.minus + b) * z0)) / (-diff);
  return out;
}

namespace {

struct LsColumns {
  // Real least-squares columns for the (possibly conjugate) pole pair,
  // anchored at t0; recover() maps coefficients back to residues.
  Eigen::MatrixXd a;
  bool conjugate;
};

void fill_pair_columns(Eigen::MatrixXd& a, int col0, std::span<const double> t, double t0,
                       const PolePair& pair) {
  const std::size_t n = t.size();
  if (pair.regime == Regime::oscillatory) {
    // g = 2 Re(beta e^{p+(t-t0)}): columns Re(e), -Im(e) for (2Re beta, 2Im beta)
    for (std::size_t i = 0; i < n; ++i) {
      const Complex e = std::exp(pair.plus * (t[i] - t0));
      a(i, col0) = e.real();
      a(i, col0 + 1) = -e.imag();
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      a(i, col0) = std::exp(pair.plus.real() * (t[i] - t0));
      a(i, col0 + 1) = std::exp(pair.minus.real() * (t[i] - t0));
    }
  }
}

ModalResiduePair coeffs_to_residues(const Eigen::VectorXd& x, int col0, double t0,
                                    const PolePair& pair) {
  ModalResiduePair r;
  if (pair.regime == Regime::oscillatory) {
    const Complex beta(0.5 * x(col0), 0.5 * x(col0 + 1));
    r.plus = beta * std::exp(-pair.plus * t0);
    r.minus = std::conj(r.plus);
  } else {
    r.plus = x(col0) * std::exp(-pair.plus.real() * t0);
    r.minus = x(col0 + 1) * std::exp(-pair.minus.real() * t0);
  }
  return r;
}

struct LsResult {
  Eigen::VectorXd x;
  double residual;
  double condition;
};

LsResult solve_ls(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0)) throw EstimationError("trace fit: rank-deficient design matrix");
  LsResult out;
  out.condition = smax / smin;
  out.x = svd.solve(rhs);
  const double gnorm = rhs.norm();
  out.residual = gnorm > 0.0 ? (a * out.x - rhs).norm() / gnorm : 0.0;
  return out;
}

}  // namespace

TraceFit residue_from_trace(std::span<const double> t, std::span<const double> g,
                            const PolePair& pair, TraceMethod method,
                            const ForcingCorrection* forcing, double mismatch_tol) {
  if (t.size() != g.size() || t.size() < 8) {
    throw DomainError("residue_from_trace: need matching sample arrays (>= 8 samples)");
  }
  std::vector<double> work(g.begin(), g.end());
  if (forcing) {
    if (forcing->particular.size() != g.size()) {
      throw DomainError("residue_from_trace: forcing samples misaligned");
    }
    for (std::size_t i = 0; i < work.size(); ++i) work[i] -= forcing->particular[i];
  }
  const double t0 = t.front();

  TraceFit fit;
  if (method == TraceMethod::fit) {
    Eigen::MatrixXd a(t.size(), 2);
    fill_pair_columns(a, 0, t, t0, pair);
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(work.data(), work.size());
    const LsResult ls = solve_ls(a, rhs);
    if (ls.condition > 1e8) {
      std::ostringstream msg;
      msg << "residue_from_trace: ill-conditioned fit (condition " << ls.condition << ")";
      throw EstimationError(msg.str());
    }
    const ModalResiduePair r = coeffs_to_residues(ls.x, 0, t0, pair);
    fit.r_plus = r.plus;
    fit.r_minus = r.minus;
    fit.residual = ls.residual;
    fit.condition = ls.condition;
    fit.model_mismatch = ls.residual > mismatch_tol;
  } else {
    // Average e^{-pt} g(t) over the last full period of e^{(p- - p+) t}
    // (the cross term has unit modulus and zero mean over one period).
    const double span = t.back() - t.front();
    double window;
    if (pair.regime == Regime::oscillatory) {
      const double w = pair.plus.imag();
      window = std::min(span, M_PI / w);
    } else {
      window = 0.25 * span;
    }
    const double tw = t.back() - window;
    Complex acc_p(0.0, 0.0), acc_m(0.0, 0.0);
    double wsum = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (t[i] < tw) continue;
      const double dt = t[i] - t[i - 1];
      acc_p += 0.5 * dt * (std::exp(-pair.plus * t[i]) * work[i] +
                           std::exp(-pair.plus * t[i - 1]) * work[i - 1]);
      acc_m += 0.5 * dt * (std::exp(-pair.minus * t[i]) * work[i] +
                           std::exp(-pair.minus * t[i - 1]) * work[i - 1]);
      wsum += dt;
    }
    if (wsum <= 0.0) throw EstimationError("residue_from_trace: empty averaging window");
    fit.r_plus = acc_p / wsum;
    fit.r_minus = acc_m / wsum;
    fit.residual = 0.0;
    fit.condition = 1.0;
  }
  if (forcing) {
    fit.r_plus += forcing->residue_plus;
    fit.r_minus += forcing->residue_minus;
  }
  return fit;
}

MultiTraceFit residues_from_trace_multi(std::span<const double> t, std::span<const double> g,
                                        std::span<const PolePair> pairs,
                                        const std::vector<double>* subtract) {
  if (t.size() != g.size()) throw DomainError("trace fit: sample arrays misaligned");
  const std::size_t cols = 2 * pairs.size();
  if (t.size() < 2 * cols) throw DomainError("trace fit: too few samples for the model order");
  std::vector<double> work(g.begin(), g.end());
  if (subtract) {
    if (subtract->size() != work.size()) throw DomainError("trace fit: subtrahend misaligned");
    for (std::size_t i = 0; i < work.size(); ++i) work[i] -= (*subtract)[i];
  }
  const double t0 = t.front();
  Eigen::MatrixXd a(t.size(), cols);
  for (std::size_t m = 0; m < pairs.size(); ++m) {
    fill_pair_columns(a, static_cast<int>(2 * m), t, t0, pairs[m]);
  }
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(work.data(), work.size());
  const LsResult ls = solve_ls(a, rhs);
  if (ls.condition > 1e8) {
    std::ostringstream msg;
    msg << "trace fit: ill-conditioned joint fit (condition " << ls.condition << ")";
    throw EstimationError(msg.str());
  }
  MultiTraceFit out;
  out.residual = ls.residual;
  out.condition = ls.condition;
  out.residues.reserve(pairs.size());
  for (std::size_t m = 0; m < pairs.size(); ++m) {
    out.residues.push_back(coeffs_to_residues(ls.x, static_cast<int>(2 * m), t0, pairs[m]));
  }
  return out;
}

std::vector<Complex> estimate_poles(std::span<const double> samples, double dt, int order) {
  if (order == 0) return {};
  const int n = static_cast<int>(samples.size());
  if (order < 0 || order > n / 4) {
    throw DomainError("estimate_poles: order must lie in [0, samples/4]");
  }
  if (!(dt > 0.0)) throw DomainError("estimate_poles: dt must be positive");
  // Matrix pencil: Hankel Y with pencil parameter L, SVD-truncated to the
  // model order, poles from the shifted pencil eigenvalues.
  const int pencil = std::clamp(n / 3, order + 1, n - order - 1);
  const int rows = n - pencil;
  Eigen::MatrixXd y(rows, pencil + 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c <= pencil; ++c) y(r, c) = samples[r + c];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(std::min<int>(order, sv.size() - 1)) / sv(0) < 1e-13) {
    throw EstimationError("estimate_poles: rank-deficient sample matrix for requested order");
  }
  Eigen::MatrixXd v = svd.matrixV().leftCols(order);
  Eigen::MatrixXd v1 = v.topRows(pencil);
  Eigen::MatrixXd v2 = v.bottomRows(pencil);
  // Eigenvalues of pinv(V1) V2 are the sample-domain poles z = e^{p dt}.
  Eigen::MatrixXd pencil_mat =
      (v1.transpose() * v1).ldlt().solve(v1.transpose() * v2);
  Eigen::EigenSolver<Eigen::MatrixXd> eig(pencil_mat);
  std::vector<Complex> out;
  for (int i = 0; i < order; ++i) {
    const Complex z = eig.eigenvalues()(i);
    if (std::abs(z) < 1e-14) continue;
    out.push_back(std::log(z) / dt);
  }
  std::sort(out.begin(), out.end(), [](Complex a, Complex b) {
    return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
  });
  return out;
}

}  // namespace jmgt::residues
