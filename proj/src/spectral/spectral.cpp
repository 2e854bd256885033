#include "jmgt/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "jmgt/kernels.hpp"

namespace jmgt::spectral {

namespace {
constexpr double kGroupGap = 1e-8;       // relative eigenvalue gap forming one group
constexpr double kResidualTol = 1e-8;    // accepted spectral residual
}  // namespace

std::vector<double> dense_laplacian(const Grid& grid) {
  const std::size_t n = grid.size();
  std::vector<double> a(n * n, 0.0);
  if (grid.dim() == 1) {
    const double ih2 = 1.0 / (grid.h(0) * grid.h(0));
    const int nx = grid.npts(0);
    for (int i = 0; i < nx; ++i) {
      a[i * n + i] = 2.0 * ih2;
      if (i > 0) a[i * n + (i - 1)] = -ih2;
      if (i + 1 < nx) a[i * n + (i + 1)] = -ih2;
    }
  } else {
    const double ihx2 = 1.0 / (grid.h(0) * grid.h(0));
    const double ihy2 = 1.0 / (grid.h(1) * grid.h(1));
    const int nx = grid.npts(0), ny = grid.npts(1);
    for (int ix = 0; ix < nx; ++ix) {
      for (int iy = 0; iy < ny; ++iy) {
        const std::size_t r = grid.index(ix, iy);
        a[r * n + r] = 2.0 * (ihx2 + ihy2);
        if (ix > 0) a[r * n + grid.index(ix - 1, iy)] = -ihx2;
        if (ix + 1 < nx) a[r * n + grid.index(ix + 1, iy)] = -ihx2;
        if (iy > 0) a[r * n + grid.index(ix, iy - 1)] = -ihy2;
        if (iy + 1 < ny) a[r * n + grid.index(ix, iy + 1)] = -ihy2;
      }
    }
  }
  return a;
}

EigenBasis build_basis(const Grid& grid, const Field& c0_sq, double c, int n_modes) {
  const std::size_t n = grid.size();
  if (c0_sq.size() != n) throw DomainError("build_basis: c0_sq size does not match grid");
  if (c <= 0.0) throw DomainError("build_basis: c must be positive");
  for (double v : c0_sq) {
    if (!(v > 0.0)) throw DomainError("build_basis: c0_sq must be strictly positive");
  }
  if (n_modes < 1 || static_cast<std::size_t>(n_modes) > n) {
    throw DomainError("build_basis: n_modes must be in [1, interior node count]");
  }

  EigenBasis basis(grid);
  basis.c_ = c;
  basis.c0_sq_ = c0_sq;
  basis.weight_.resize(n);
  for (std::size_t i = 0; i < n; ++i) basis.weight_[i] = c * c / c0_sq[i];

  // Symmetrize: B = W^{-1/2} (-Lap_h) W^{-1/2}, W = diag(weight).
  const std::vector<double> lap = dense_laplacian(grid);
  Eigen::MatrixXd b(n, n);
  std::vector<double> isqw(n);
  for (std::size_t i = 0; i < n; ++i) isqw[i] = 1.0 / std::sqrt(basis.weight_[i]);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t col = 0; col < n; ++col) {
      b(r, col) = isqw[r] * lap[r * n + col] * isqw[col];
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("build_basis: eigensolver did not converge");
  }

  basis.n_modes_ = n_modes;
  basis.lambda_.resize(n_modes);
  basis.synth_.resize(n * n_modes);
  basis.analysis_.resize(static_cast<std::size_t>(n_modes) * n);
  const double inv_sqrt_cell = 1.0 / std::sqrt(grid.cell());
  for (int j = 0; j < n_modes; ++j) {
    basis.lambda_[j] = solver.eigenvalues()(j);
    if (!(basis.lambda_[j] > 0.0)) {
      throw NumericalError("build_basis: nonpositive eigenvalue encountered");
    }
    Eigen::VectorXd y = solver.eigenvectors().col(j);
    // phi = W^{-1/2} y / sqrt(cell); fix sign so the largest entry is positive.
    int imax = 0;
    y.cwiseAbs().maxCoeff(&imax);
    const double sign = y(imax) >= 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double phi = sign * y(i) * isqw[i] * inv_sqrt_cell;
      basis.synth_[i * n_modes + j] = phi;
      basis.analysis_[static_cast<std::size_t>(j) * n + i] =
          grid.cell() * basis.weight_[i] * phi;
    }
  }

  // Group eigenvalues at relative gap 1e-8 (multiplicities split only by
  // rounding must stay one block).
  basis.groups_.clear();
  for (int j = 0; j < n_modes; ++j) {
    const double lam = basis.lambda_[j];
    if (!basis.groups_.empty()) {
      EigenGroup& g = basis.groups_.back();
      if (std::abs(lam - g.lambda) <= kGroupGap * std::max(std::abs(g.lambda), 1.0)) {
        g.modes.push_back(j);
        continue;
      }
    }
    basis.groups_.push_back(EigenGroup{lam, {j}});
  }

  for (int j = 0; j < n_modes; ++j) {
    const double res = basis.spectral_residual(j);
    if (!(res <= kResidualTol)) {
      std::ostringstream msg;
      msg << "build_basis: spectral residual " << res << " for mode " << j
          << " exceeds " << kResidualTol;
      throw NumericalError(msg.str());
    }
  }
  return basis;
}

std::vector<double> EigenBasis::eigenfunction(int j) const {
  const std::size_t n = grid_.size();
  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) phi[i] = synth_[i * n_modes_ + j];
  return phi;
}

ModalVector EigenBasis::to_modal(const Field& v) const {
  if (v.size() != grid_.size()) throw DomainError("to_modal: field size mismatch");
  ModalVector m(n_modes_);
  kernels::gemv(analysis_.data(), v.data(), m.data(), n_modes_, grid_.size());
  return m;
}

Field EigenBasis::to_grid(const ModalVector& m) const {
  if (m.size() != static_cast<std::size_t>(n_modes_)) {
    throw DomainError("to_grid: modal length mismatch");
  }
  Field v(grid_.size());
  kernels::gemv(synth_.data(), m.data(), v.data(), grid_.size(), n_modes_);
  return v;
}

ComplexModal EigenBasis::to_modal(const std::vector<Complex>& v) const {
  if (v.size() != grid_.size()) throw DomainError("to_modal: field size mismatch");
  const std::size_t n = grid_.size();
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = v[i].real();
    im[i] = v[i].imag();
  }
  std::vector<double> mre(n_modes_), mim(n_modes_);
  kernels::gemv(analysis_.data(), re.data(), mre.data(), n_modes_, n);
  kernels::gemv(analysis_.data(), im.data(), mim.data(), n_modes_, n);
  ComplexModal m(n_modes_);
  for (int j = 0; j < n_modes_; ++j) m[j] = Complex(mre[j], mim[j]);
  return m;
}

std::vector<Complex> EigenBasis::to_grid(const ComplexModal& m) const {
  if (m.size() != static_cast<std::size_t>(n_modes_)) {
    throw DomainError("to_grid: modal length mismatch");
  }
  const std::size_t n = grid_.size();
  std::vector<double> mre(n_modes_), mim(n_modes_);
  for (int j = 0; j < n_modes_; ++j) {
    mre[j] = m[j].real();
    mim[j] = m[j].imag();
  }
  std::vector<double> re(n), im(n);
  kernels::gemv(synth_.data(), mre.data(), re.data(), n, n_modes_);
  kernels::gemv(synth_.data(), mim.data(), im.data(), n, n_modes_);
  std::vector<Complex> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = Complex(re[i], im[i]);
  return v;
}

double EigenBasis::sobolev_norm(const ModalVector& m, double s) const {
  if (m.size() != static_cast<std::size_t>(n_modes_)) {
    throw DomainError("sobolev_norm: modal length mismatch");
  }
  if (s < -2.0 || s > 4.0) throw DomainError("sobolev_norm: s must lie in [-2, 4]");
  double acc = 0.0;
  for (int j = 0; j < n_modes_; ++j) acc += std::pow(lambda_[j], s) * m[j] * m[j];
  return std::sqrt(acc);
}

double EigenBasis::sobolev_norm(const ComplexModal& m, double s) const {
  if (m.size() != static_cast<std::size_t>(n_modes_)) {
    throw DomainError("sobolev_norm: modal length mismatch");
  }
  if (s < -2.0 || s > 4.0) throw DomainError("sobolev_norm: s must lie in [-2, 4]");
  double acc = 0.0;
  for (int j = 0; j < n_modes_; ++j) acc += std::pow(lambda_[j], s) * std::norm(m[j]);
  return std::sqrt(acc);
}

double EigenBasis::weighted_inner(const Field& u, const Field& v) const {
  if (u.size() != grid_.size() || v.size() != grid_.size()) {
    throw DomainError("weighted_inner: field size mismatch");
  }
  return grid_.cell() * kernels::dot3(u.data(), v.data(), weight_.data(), u.size());
}

double EigenBasis::l2_inner(const Field& u, const Field& v) const {
  if (u.size() != grid_.size() || v.size() != grid_.size()) {
    throw DomainError("l2_inner: field size mismatch");
  }
  return grid_.cell() * kernels::dot(u.data(), v.data(), u.size());
}

ModalVector EigenBasis::apply_operator(const ModalVector& m) const {
  ModalVector out(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) out[j] = lambda_[j] * m[j];
  return out;
}

void EigenBasis::synth_into(const double* m, double* grid) const {
  kernels::gemv(synth_.data(), m, grid, grid_.size(), n_modes_);
}

void EigenBasis::analyze_into(const double* grid, double* m) const {
  kernels::gemv(analysis_.data(), grid, m, n_modes_, grid_.size());
}

double EigenBasis::spectral_residual(int j) const {
  const std::size_t n = grid_.size();
  const std::vector<double> lap = dense_laplacian(grid_);
  std::vector<double> phi = eigenfunction(j);
  std::vector<double> lap_phi(n);
  kernels::gemv(lap.data(), phi.data(), lap_phi.data(), n, n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // A_h phi = W^{-1} (-Lap_h) phi
    const double r = lap_phi[i] / weight_[i] - lambda_[j] * phi[i];
    num += r * r;
    den += phi[i] * phi[i];
  }
  return std::sqrt(num) / (lambda_[j] * std::sqrt(den));
}

void EigenBasis::save(std::ostream& os) const {
  nlohmann::json j;
  j["dim"] = grid_.dim();
  j["length"] = grid_.dim() == 1 ? std::vector<double>{grid_.length(0)}
                                 : std::vector<double>{grid_.length(0), grid_.length(1)};
  j["points"] = grid_.dim() == 1 ? std::vector<int>{grid_.npts(0)}
                                 : std::vector<int>{grid_.npts(0), grid_.npts(1)};
  j["c"] = c_;
  j["n_modes"] = n_modes_;
  j["eigenvalues"] = lambda_;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : groups_) {
    groups.push_back({{"lambda", g.lambda}, {"modes", g.modes}});
  }
  j["groups"] = groups;
  j["c0_sq"] = c0_sq_;
  nlohmann::json phis = nlohmann::json::array();
  for (int m = 0; m < n_modes_; ++m) phis.push_back(eigenfunction(m));
  j["eigenfunctions"] = phis;
  os << j.dump(2) << "\n";
}

EigenBasis EigenBasis::load(std::istream& is) {
  nlohmann::json j;
  is >> j;
  const int dim = j.at("dim").get<int>();
  const auto length = j.at("length").get<std::vector<double>>();
  const auto points = j.at("points").get<std::vector<int>>();
  Grid grid = dim == 1 ? Grid::interval(length.at(0), points.at(0))
                       : Grid::rectangle(length.at(0), length.at(1), points.at(0), points.at(1));
  EigenBasis basis(grid);
  basis.c_ = j.at("c").get<double>();
  basis.n_modes_ = j.at("n_modes").get<int>();
  basis.lambda_ = j.at("eigenvalues").get<std::vector<double>>();
  basis.c0_sq_ = j.at("c0_sq").get<Field>();
  const std::size_t n = grid.size();
  if (basis.c0_sq_.size() != n) throw ConfigError("basis file: c0_sq size mismatch");
  basis.weight_.resize(n);
  for (std::size_t i = 0; i < n; ++i) basis.weight_[i] = basis.c_ * basis.c_ / basis.c0_sq_[i];
  for (const auto& g : j.at("groups")) {
    basis.groups_.push_back(
        EigenGroup{g.at("lambda").get<double>(), g.at("modes").get<std::vector<int>>()});
  }
  const auto phis = j.at("eigenfunctions");
  if (static_cast<int>(phis.size()) != basis.n_modes_) {
    throw ConfigError("basis file: eigenfunction count mismatch");
  }
  basis.synth_.resize(n * basis.n_modes_);
  basis.analysis_.resize(static_cast<std::size_t>(basis.n_modes_) * n);
  for (int m = 0; m < basis.n_modes_; ++m) {
    const auto phi = phis[m].get<std::vector<double>>();
    if (phi.size() != n) throw ConfigError("basis file: eigenfunction size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      basis.synth_[i * basis.n_modes_ + m] = phi[i];
      basis.analysis_[static_cast<std::size_t>(m) * n + i] =
          grid.cell() * basis.weight_[i] * phi[i];
    }
  }
  return basis;
}

void EigenBasis::save_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DomainError("basis save: cannot open " + path);
  save(os);
}

EigenBasis EigenBasis::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DomainError("basis load: cannot open " + path);
  return load(is);
}

}  // namespace jmgt::spectral
