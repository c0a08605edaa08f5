#pragma once

#include "permk/core.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace permk {

// A real sequence indexed from 1, either tabulated or given by a closed form.
class Sequence {
 public:
  enum class Kind {
    values,      // explicit table
    constant,    // c
    affine,      // a + b*j
    geometric,   // c * q^j
    power,       // c * j^q
    exp_affine,  // exp(a + b*j)
    root_gap,    // sqrt(1 - c * j^(-q)), clipped to [0, 1)
  };

  Sequence() = default;

  static Sequence from_values(std::vector<double> v) {
    Sequence s;
    s.kind_ = Kind::values;
    s.values_ = std::move(v);
    return s;
  }
  static Sequence constant(double c) { return make(Kind::constant, c, 0.0); }
  static Sequence affine(double a, double b) { return make(Kind::affine, a, b); }
  static Sequence geometric(double c, double q) { return make(Kind::geometric, c, q); }
  static Sequence power(double c, double q) { return make(Kind::power, c, q); }
  static Sequence exp_affine(double a, double b) { return make(Kind::exp_affine, a, b); }
  static Sequence root_gap(double c, double q) { return make(Kind::root_gap, c, q); }

  Kind kind() const { return kind_; }
  double param_a() const { return a_; }
  double param_b() const { return b_; }
  const std::vector<double>& values() const { return values_; }

  std::optional<std::size_t> length() const {
    if (kind_ == Kind::values) return values_.size();
    return std::nullopt;
  }

  bool covers(std::size_t j) const { return j >= 1 && (!length() || j <= *length()); }

  double operator()(std::size_t j) const {
    require(covers(j), FailureKind::domain, "sequence-range",
            "index " + std::to_string(j) + " outside stored range");
    const double x = static_cast<double>(j);
    switch (kind_) {
      case Kind::values: return values_[j - 1];
      case Kind::constant: return a_;
      case Kind::affine: return a_ + b_ * x;
      case Kind::geometric: return a_ * std::pow(b_, x);
      case Kind::power: return a_ * std::pow(x, b_);
      case Kind::exp_affine: return std::exp(a_ + b_ * x);
      case Kind::root_gap: {
        const double g = a_ * std::pow(x, -b_);
        return g >= 1.0 ? 0.0 : std::sqrt(1.0 - g);
      }
    }
    return 0.0;
  }

  // log of the j-th term; avoids overflow for exponential forms.
  double log_at(std::size_t j) const {
    const double x = static_cast<double>(j);
    switch (kind_) {
      case Kind::exp_affine: return a_ + b_ * x;
      case Kind::geometric:
        if (a_ > 0 && b_ > 0) return std::log(a_) + x * std::log(b_);
        break;
      default: break;
    }
    return std::log((*this)(j));
  }

  std::vector<double> take(std::size_t from, std::size_t to) const {
    std::vector<double> out;
    out.reserve(to >= from ? to - from + 1 : 0);
    for (std::size_t j = from; j <= to; ++j) out.push_back((*this)(j));
    return out;
  }

 private:
  static Sequence make(Kind k, double a, double b) {
    Sequence s;
    s.kind_ = k;
    s.a_ = a;
    s.b_ = b;
    return s;
  }

  Kind kind_ = Kind::constant;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> values_;
};

}  // namespace permk
