#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace jmgt::model {

using Complex = std::complex<double>;

// p(t) * exp(-rate * t) with p a real polynomial. Closed under
// differentiation and linear combination (equal rates), with closed-form
// Laplace transforms of the whole and of tails [T, inf).
class PolyExp {
 public:
  PolyExp() : rate_(0.0) {}
  PolyExp(std::vector<double> coeffs, double rate) : coeffs_(std::move(coeffs)), rate_(rate) {
    trim();
  }

  static PolyExp monomial(double amplitude, int power, double rate) {
    std::vector<double> c(power + 1, 0.0);
    c[power] = amplitude;
    return PolyExp(std::move(c), rate);
  }

  double rate() const { return rate_; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  double operator()(double t) const;
  PolyExp derivative() const;

  // int_0^inf e^{-zt} p(t) e^{-rate t} dt = sum_k p_k k! / (z+rate)^{k+1}
  Complex laplace(Complex z) const;
  // int_T^inf e^{-zt} p(t) e^{-rate t} dt, closed form.
  Complex laplace_tail(Complex z, double t0) const;
  // int_{t0}^{t1} e^{-zt} p(t) e^{-rate t} dt
  Complex integral(Complex z, double t0, double t1) const {
    return laplace_tail(z, t0) - laplace_tail(z, t1);
  }

  PolyExp& operator+=(const PolyExp& o);
  PolyExp& operator*=(double a);
  friend PolyExp operator*(double a, PolyExp p) {
    p *= a;
    return p;
  }
  friend PolyExp operator+(PolyExp a, const PolyExp& b) {
    a += b;
    return a;
  }

 private:
  void trim();
  std::vector<double> coeffs_;
  double rate_;
};

}  // namespace jmgt::model
