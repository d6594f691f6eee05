#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace l0opt {

/// Extended real with an explicit three-state cell (finite / +inf / -inf).
///
/// Arithmetic follows the conventions used for extended-real convex
/// function values: 0 * (+-inf) = 0 and (+inf) + (-inf) = +inf, so both
/// operations are total. NaN is never representable.
class XReal {
 public:
  enum class Kind : unsigned char { Finite = 0, PosInf = 1, NegInf = 2 };

  constexpr XReal() : kind_(Kind::Finite), v_(0.0) {}

  static XReal finite(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("XReal::finite: value not finite");
    XReal r;
    r.v_ = v;
    return r;
  }
  static constexpr XReal pos_inf() {
    XReal r;
    r.kind_ = Kind::PosInf;
    return r;
  }
  static constexpr XReal neg_inf() {
    XReal r;
    r.kind_ = Kind::NegInf;
    return r;
  }
  /// Maps +-inf doubles to the infinite states; rejects NaN.
  static XReal from_double(double v) {
    if (std::isnan(v)) throw std::invalid_argument("XReal: NaN");
    if (v == std::numeric_limits<double>::infinity()) return pos_inf();
    if (v == -std::numeric_limits<double>::infinity()) return neg_inf();
    return finite(v);
  }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_finite() const { return kind_ == Kind::Finite; }
  constexpr bool is_pos_inf() const { return kind_ == Kind::PosInf; }
  constexpr bool is_neg_inf() const { return kind_ == Kind::NegInf; }

  double value() const {
    if (!is_finite()) throw std::domain_error("XReal::value: not finite");
    return v_;
  }
  /// Finite value, or +-HUGE_VAL for the infinite states.
  constexpr double as_double() const {
    switch (kind_) {
      case Kind::PosInf:
        return std::numeric_limits<double>::infinity();
      case Kind::NegInf:
        return -std::numeric_limits<double>::infinity();
      default:
        return v_;
    }
  }

  friend XReal operator-(const XReal& a) {
    if (a.is_pos_inf()) return neg_inf();
    if (a.is_neg_inf()) return pos_inf();
    return finite(-a.v_);
  }

  // (+inf) dominates (-inf) in sums, making + total, commutative and
  // associative on the extended line.
  friend XReal operator+(const XReal& a, const XReal& b) {
    if (a.is_pos_inf() || b.is_pos_inf()) return pos_inf();
    if (a.is_neg_inf() || b.is_neg_inf()) return neg_inf();
    return finite(a.v_ + b.v_);
  }
  friend XReal operator-(const XReal& a, const XReal& b) { return a + (-b); }

  /// Scalar multiple with 0 * (+-inf) = 0.
  friend XReal operator*(double c, const XReal& a) {
    if (std::isnan(c) || std::isinf(c)) throw std::invalid_argument("XReal: scalar must be finite");
    if (a.is_finite()) return finite(c * a.v_);
    if (c == 0.0) return finite(0.0);
    const bool pos = a.is_pos_inf() == (c > 0.0);
    return pos ? pos_inf() : neg_inf();
  }
  friend XReal operator*(const XReal& a, double c) { return c * a; }

  friend XReal operator*(const XReal& a, const XReal& b) {
    if (a.is_finite()) return a.v_ * b;
    if (b.is_finite()) return b.v_ * a;
    const bool pos = a.is_pos_inf() == b.is_pos_inf();
    return pos ? pos_inf() : neg_inf();
  }

  friend bool operator==(const XReal& a, const XReal& b) {
    if (a.kind_ != b.kind_) return false;
    return !a.is_finite() || a.v_ == b.v_;
  }
  friend bool operator!=(const XReal& a, const XReal& b) { return !(a == b); }
  friend bool operator<(const XReal& a, const XReal& b) { return a.as_double() < b.as_double(); }
  friend bool operator<=(const XReal& a, const XReal& b) { return a.as_double() <= b.as_double(); }
  friend bool operator>(const XReal& a, const XReal& b) { return b < a; }
  friend bool operator>=(const XReal& a, const XReal& b) { return b <= a; }

  friend XReal max(const XReal& a, const XReal& b) { return a < b ? b : a; }
  friend XReal min(const XReal& a, const XReal& b) { return b < a ? b : a; }

  /// Extended-metric distance: matching infinities are at distance 0,
  /// a finite value is infinitely far from an infinite one.
  friend XReal metric_abs_diff(const XReal& a, const XReal& b) {
    if (a.kind_ == b.kind_ && !a.is_finite()) return finite(0.0);
    if (!a.is_finite() || !b.is_finite()) return pos_inf();
    return finite(std::abs(a.v_ - b.v_));
  }

  std::string str() const {
    if (is_pos_inf()) return "inf";
    if (is_neg_inf()) return "-inf";
    return std::to_string(v_);
  }

 private:
  Kind kind_ = Kind::Finite;
  double v_ = 0.0;
};

}  // namespace l0opt
