#pragma once

#include "permk/core.hpp"
#include "permk/sequence.hpp"

#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace permk {

struct MinKernel {
  Sequence s;
};

struct ScaledMinKernel {
  Sequence s;
  Sequence b;
};

// W_{j,k} = exp(-|v_j - v_k|).
struct ExpKernel {
  Sequence v;
};

struct AR1 {
  Sequence x;
};

// First innovation scaled by delta_tilde.
struct AR1Shifted {
  Sequence x;
  double delta_tilde = 1.0;
};

struct ARk {
  std::vector<double> p;
};

// First innovation has variance 1/a_sq.
struct ARkGen {
  std::vector<double> p;
  double a_sq = 1.0;
};

// (s_{j^k} + Delta) / (b_j b_k).
struct ShiftedScaled {
  Sequence s;
  Sequence b;
  double Delta = 0.0;
};

struct KernelSpec;

// Generator Q + b E(k,l) over a base chain; k, l are 1-based.
struct RankOneUpdate {
  std::shared_ptr<const KernelSpec> base;
  std::size_t k = 1;
  std::size_t l = 1;
  double b = 0.0;
};

// Random walk on Z with jump rates per signed offset, killed at rate beta,
// truncated to {-radius, ..., radius} with absorbing exterior.
struct KilledWalk {
  std::map<int, double> step_rates;
  double beta = 1.0;
  int radius = 1;
};

using SpecVariant = std::variant<MinKernel, ScaledMinKernel, ExpKernel, AR1, AR1Shifted, ARk,
                                 ARkGen, ShiftedScaled, RankOneUpdate, KilledWalk>;

struct KernelSpec {
  SpecVariant v;

  KernelSpec() = default;
  template <class T>
  KernelSpec(T family) : v(std::move(family)) {}  // NOLINT(google-explicit-constructor)

  template <class T>
  const T* as() const {
    return std::get_if<T>(&v);
  }
  template <class T>
  bool is() const {
    return std::holds_alternative<T>(v);
  }
};

inline std::string family_name(const KernelSpec& spec) {
  static const char* names[] = {"min",  "scaled_min", "exp",            "ar1",         "ar1_shifted",
                                "ark",  "ark_gen",    "shifted_scaled", "rank_one_update", "killed_walk"};
  return names[spec.v.index()];
}

inline double sum_p(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

inline bool p_non_increasing(const std::vector<double>& p) {
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[i - 1]) return false;
  return true;
}

inline void validate_p(const std::vector<double>& p) {
  require(!p.empty(), FailureKind::domain, "ark-coefficients", "p must be nonempty");
  for (double q : p)
    require(q > 0.0 && std::isfinite(q), FailureKind::domain, "ark-coefficients",
            "every p_l must be positive");
  require(sum_p(p) <= 1.0 + 1e-14, FailureKind::domain, "ark-coefficients", "sum of p exceeds 1");
}

inline RankOneUpdate make_rank_one(KernelSpec base, std::size_t k, std::size_t l, double b) {
  return RankOneUpdate{std::make_shared<const KernelSpec>(std::move(base)), k, l, b};
}

// Symmetric families admit Gaussian samplers and the symmetric-kernel invariants.
inline bool is_symmetric_family(const KernelSpec& spec) {
  return !spec.is<RankOneUpdate>() && !spec.is<KilledWalk>();
}

}  // namespace permk
