#include "jmgt/polyexp.hpp"

#include <cmath>

#include "jmgt/errors.hpp"

namespace jmgt::model {

void PolyExp::trim() {
  while (coeffs_.size() > 1 && coeffs_.back() == 0.0) coeffs_.pop_back();
  if (coeffs_.empty()) coeffs_.push_back(0.0);
}

double PolyExp::operator()(double t) const {
  double p = 0.0;
  for (std::size_t k = coeffs_.size(); k-- > 0;) p = p * t + coeffs_[k];
  return p * std::exp(-rate_ * t);
}

PolyExp PolyExp::derivative() const {
  // (p e^{-at})' = (p' - a p) e^{-at}
  std::vector<double> c(coeffs_.size() + 1, 0.0);
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    if (k + 1 < coeffs_.size()) c[k] += (k + 1) * coeffs_[k + 1];
    c[k] -= rate_ * coeffs_[k];
  }
  // degree does not actually grow
  c.pop_back();
  if (c.empty()) c.push_back(0.0);
  return PolyExp(std::move(c), rate_);
}

Complex PolyExp::laplace(Complex z) const {
  const Complex mu = z + rate_;
  if (std::abs(mu) < 1e-14) {
    throw SingularConversionError("polyexp laplace: z at the profile rate pole");
  }
  Complex acc(0.0, 0.0);
  double fact = 1.0;
  Complex mu_pow = mu;  // mu^{k+1}
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    if (k > 0) {
      fact *= static_cast<double>(k);
      mu_pow *= mu;
    }
    acc += coeffs_[k] * fact / mu_pow;
  }
  return acc;
}

Complex PolyExp::laplace_tail(Complex z, double t0) const {
  // int_T^inf t^k e^{-mu t} dt = (k!/mu^{k+1}) e^{-mu T} sum_{i<=k} (mu T)^i / i!
  const Complex mu = z + rate_;
  if (std::abs(mu) < 1e-14) {
    throw SingularConversionError("polyexp laplace_tail: z at the profile rate pole");
  }
  const Complex emu = std::exp(-mu * t0);
  Complex acc(0.0, 0.0);
  double fact = 1.0;
  Complex mu_pow = mu;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    if (k > 0) {
      fact *= static_cast<double>(k);
      mu_pow *= mu;
    }
    Complex partial(0.0, 0.0);
    Complex term(1.0, 0.0);  // (mu T)^i / i!
    for (std::size_t i = 0; i <= k; ++i) {
      if (i > 0) term *= mu * t0 / static_cast<double>(i);
      partial += term;
    }
    acc += coeffs_[k] * fact / mu_pow * partial;
  }
  return acc * emu;
}

PolyExp& PolyExp::operator+=(const PolyExp& o) {
  if (rate_ != o.rate_ && !(coeffs_.size() == 1 && coeffs_[0] == 0.0)) {
    if (!(o.coeffs_.size() == 1 && o.coeffs_[0] == 0.0)) {
      throw DomainError("polyexp: cannot add profiles with different rates");
    }
    return *this;
  }
  if (coeffs_.size() == 1 && coeffs_[0] == 0.0) rate_ = o.rate_;
  if (o.coeffs_.size() > coeffs_.size()) coeffs_.resize(o.coeffs_.size(), 0.0);
  for (std::size_t k = 0; k < o.coeffs_.size(); ++k) coeffs_[k] += o.coeffs_[k];
  trim();
  return *this;
}

PolyExp& PolyExp::operator*=(double a) {
  for (double& c : coeffs_) c *= a;
  return *this;
}

}  // namespace jmgt::model
