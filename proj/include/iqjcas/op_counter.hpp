#pragma once

#include <cmath>
#include <complex>
#include <string>

namespace iqjcas {

// Real-valued operation tally. Doubles so that closed-form predictions with
// fractional values share the type.
struct OpCounter {
  double real_additions = 0;
  double real_multiplications = 0;
  double real_divisions = 0;

  OpCounter& operator+=(const OpCounter& o) {
    real_additions += o.real_additions;
    real_multiplications += o.real_multiplications;
    real_divisions += o.real_divisions;
    return *this;
  }
  friend OpCounter operator+(OpCounter a, const OpCounter& b) { return a += b; }
  friend OpCounter operator-(OpCounter a, const OpCounter& b) {
    a.real_additions -= b.real_additions;
    a.real_multiplications -= b.real_multiplications;
    a.real_divisions -= b.real_divisions;
    return a;
  }
  OpCounter scaled(double s) const {
    return {real_additions * s, real_multiplications * s, real_divisions * s};
  }
  bool operator==(const OpCounter&) const = default;
};

inline std::string to_string(const OpCounter& c) {
  auto f = [](double v) {
    if (v == std::floor(v)) return std::to_string(static_cast<long long>(v));
    return std::to_string(v);
  };
  return f(c.real_additions) + " add / " + f(c.real_multiplications) + " mul / " +
         f(c.real_divisions) + " div";
}

namespace counting {

inline thread_local OpCounter tally;

inline OpCounter snapshot() { return tally; }

// Counted real scalar: every binary +,-,*,/ is recorded in the thread's tally.
// Negation, comparison and construction are free.
class Real {
 public:
  Real() = default;
  Real(double v) : v_(v) {}  // NOLINT(implicit)
  double value() const { return v_; }

  friend Real operator+(Real a, Real b) { ++tally.real_additions; return a.v_ + b.v_; }
  friend Real operator-(Real a, Real b) { ++tally.real_additions; return a.v_ - b.v_; }
  friend Real operator*(Real a, Real b) { ++tally.real_multiplications; return a.v_ * b.v_; }
  friend Real operator/(Real a, Real b) { ++tally.real_divisions; return a.v_ / b.v_; }
  Real operator-() const { return -v_; }
  Real& operator+=(Real b) { return *this = *this + b; }
  Real& operator-=(Real b) { return *this = *this - b; }
  Real& operator*=(Real b) { return *this = *this * b; }

  friend bool operator<(Real a, Real b) { return a.v_ < b.v_; }
  friend bool operator>(Real a, Real b) { return a.v_ > b.v_; }
  friend bool operator==(Real a, Real b) { return a.v_ == b.v_; }

 private:
  double v_ = 0.0;
};

inline double value(double v) { return v; }
inline double value(Real v) { return v.value(); }

}  // namespace counting

// Complex number over an arbitrary real type; with counting::Real the cost of
// each operation follows from its real-valued expansion
// (multiply 4 mul + 2 add, add 2 add, divide 6 mul + 3 add + 2 div).
template <class R>
struct Cx {
  R re{}, im{};

  Cx() = default;
  Cx(R r, R i) : re(r), im(i) {}
  explicit Cx(std::complex<double> z) : re(z.real()), im(z.imag()) {}

  std::complex<double> value() const {
    return {counting::value(re), counting::value(im)};
  }

  friend Cx operator+(const Cx& a, const Cx& b) { return {a.re + b.re, a.im + b.im}; }
  friend Cx operator-(const Cx& a, const Cx& b) { return {a.re - b.re, a.im - b.im}; }
  friend Cx operator*(const Cx& a, const Cx& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
  }
  friend Cx operator*(const Cx& a, const R& s) { return {a.re * s, a.im * s}; }
  friend Cx operator*(const R& s, const Cx& a) { return {s * a.re, s * a.im}; }
  friend Cx operator/(const Cx& a, const Cx& b) {
    const R den = b.re * b.re + b.im * b.im;
    return {(a.re * b.re + a.im * b.im) / den, (a.im * b.re - a.re * b.im) / den};
  }
  friend Cx operator/(const Cx& a, const R& s) { return {a.re / s, a.im / s}; }
  Cx& operator+=(const Cx& b) { return *this = *this + b; }
  Cx& operator-=(const Cx& b) { return *this = *this - b; }
};

template <class R>
Cx<R> conj(const Cx<R>& a) {
  return {a.re, -a.im};
}

// Re{conj(a) b}
template <class R>
R re_conj_mul(const Cx<R>& a, const Cx<R>& b) {
  return a.re * b.re + a.im * b.im;
}

// Re{a b}
template <class R>
R re_mul(const Cx<R>& a, const Cx<R>& b) {
  return a.re * b.re - a.im * b.im;
}

template <class R>
R norm(const Cx<R>& a) {
  return a.re * a.re + a.im * a.im;
}

}  // namespace iqjcas
