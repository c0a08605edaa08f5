#pragma once

// Koval normalizers and theorem-matched limsup predictions.

#include "permk/argen.hpp"
#include "permk/core.hpp"
#include "permk/kernels.hpp"
#include "permk/spec.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace permk {

// log(s_{i+1}/s_i) without forming s.
inline double log_ratio(const Sequence& s, std::size_t i) { return s.log_at(i + 1) - s.log_at(i); }

inline double koval(const Sequence& s, std::size_t j, double M = 1.0) {
  require(j >= 2, FailureKind::domain, "koval-domain", "the Koval function needs j >= 2");
  double sum = 0.0;
  for (std::size_t i = 1; i < j; ++i) {
    const double lr = log_ratio(s, i);
    require(lr > 0.0, FailureKind::domain, "min-s-increasing", "s must be strictly increasing");
    sum += std::min(M, lr);
  }
  return std::log(sum);
}

// K_s(j) for j = 1..N from log s_j; entry 0 (j = 1) is -infinity.
template <class LogS>
std::vector<double> koval_table_log(LogS&& log_s, std::size_t N, double M = 1.0) {
  std::vector<double> out(N, -std::numeric_limits<double>::infinity());
  double sum = 0.0, prev = N ? log_s(1) : 0.0;
  for (std::size_t j = 2; j <= N; ++j) {
    const double cur = log_s(j);
    sum += std::min(M, cur - prev);
    prev = cur;
    out[j - 1] = std::log(sum);
  }
  return out;
}

inline std::vector<double> koval_table(const Sequence& s, std::size_t N, double M = 1.0) {
  return koval_table_log([&s](std::size_t j) { return s.log_at(j); }, N, M);
}

// Exponential-kernel variant: log sum_{i<j} 1 ^ 2(v_{i+1} - v_i).
inline std::vector<double> koval_bar_table(const Sequence& v, std::size_t N) {
  std::vector<double> out(N, -std::numeric_limits<double>::infinity());
  double sum = 0.0;
  for (std::size_t j = 2; j <= N; ++j) {
    sum += std::min(1.0, 2.0 * (v(j) - v(j - 1)));
    out[j - 1] = std::log(sum);
  }
  return out;
}

// Ceiling log log s_j ^ log j; for s_1 < 1 the first term is read as log log(s_j/s_1).
inline double koval_ceiling(const Sequence& s, std::size_t j) {
  const double ls = s.log_at(j) - std::min(0.0, s.log_at(1));
  return std::min(std::log(ls), std::log(static_cast<double>(j)));
}

enum class Regime { log_j, log_log_s, indeterminate };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::log_j: return "log-j";
    case Regime::log_log_s: return "log-log-s";
    case Regime::indeterminate: return "indeterminate";
  }
  return "?";
}

struct RegimeReport {
  Regime regime = Regime::indeterminate;
  bool ceiling_holds = true;
  double worst_ceiling_gap = -std::numeric_limits<double>::infinity();  // max K - ceiling
  double late_min_log_ratio = 0.0;
  double early_min_log_ratio = 0.0;
  double late_max_log_ratio = 0.0;
  double loglog_over_log = 0.0;  // log log s_j / log j at the probe end
};

namespace regime_tol {
inline constexpr double saturated = 0.25;     // log-ratio floor that is unambiguously geometric
inline constexpr double floor = 0.05;         // smaller floors must also be flat across the probe
inline constexpr double flat = 0.98;          // late/early minimum ratio counted as flat
inline constexpr double separation = 0.5;     // log log s_j <= 0.5 log j separates the two normalizers
inline constexpr double ratio_cap = 5.0;      // log-ratio bound for "bounded ratios"
inline constexpr double slack = 1e-12;
}  // namespace regime_tol

// Heuristic probe over [lo, hi]; it reports, it never selects a theorem.
inline RegimeReport regime(const Sequence& s, std::size_t lo, std::size_t hi) {
  require(lo >= 2 && hi > lo, FailureKind::domain, "regime-probe", "probe needs 2 <= lo < hi");
  RegimeReport r;
  const auto K = koval_table(s, hi);
  for (std::size_t j = lo; j <= hi; ++j) {
    const double gap = K[j - 1] - koval_ceiling(s, j);
    r.worst_ceiling_gap = std::max(r.worst_ceiling_gap, gap);
  }
  r.ceiling_holds = r.worst_ceiling_gap <= regime_tol::slack;
  const std::size_t mid = lo + (hi - lo) / 2;
  r.early_min_log_ratio = r.late_min_log_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = lo; i < mid; ++i) r.early_min_log_ratio = std::min(r.early_min_log_ratio, log_ratio(s, i));
  for (std::size_t i = mid; i < hi; ++i) {
    const double lr = log_ratio(s, i);
    r.late_min_log_ratio = std::min(r.late_min_log_ratio, lr);
    r.late_max_log_ratio = std::max(r.late_max_log_ratio, lr);
  }
  const double lj = std::log(static_cast<double>(hi));
  r.loglog_over_log = std::log(s.log_at(hi) - std::min(0.0, s.log_at(1))) / lj;
  const bool geometric =
      r.late_min_log_ratio >= regime_tol::saturated ||
      (r.late_min_log_ratio >= regime_tol::floor && r.late_min_log_ratio >= regime_tol::flat * r.early_min_log_ratio);
  if (geometric) r.regime = Regime::log_j;
  else if (r.late_max_log_ratio <= regime_tol::ratio_cap && r.loglog_over_log <= regime_tol::separation)
    r.regime = Regime::log_log_s;
  return r;
}

enum class FClass { zero, potential_l1, c0 };

inline const char* to_string(FClass f) {
  switch (f) {
    case FClass::zero: return "zero";
    case FClass::potential_l1: return "potential-l1";
    case FClass::c0: return "c0";
  }
  return "?";
}

enum class AlphaValidity { all, half_and_above };

// Asymptotic hypotheses declared by the caller; nothing here is inferred from data.
struct Hypotheses {
  // Min families: limsup s_j/s_{j-1} < inf, liminf > 1, or liminf = 1 with unbounded ratios.
  enum class Growth { unspecified, bounded_ratios, geometric, oscillating };
  Growth growth = Growth::unspecified;
  bool increments_bounded_above = false;           // exp: limsup (v_j - v_{j-1}) < inf
  bool increments_bounded_below = false;           // exp: liminf (v_j - v_{j-1}) > 0
  std::optional<double> x_limit;                   // AR1: x_j -> delta < 1
  std::optional<double> critical_c;                // AR1: j (1 - x_j^2) -> c >= 0
  std::optional<double> power_beta;                // AR1: j^beta (1 - x_j^2) -> 1
  std::optional<double> regular_variation_index;   // AR1: U_{j,j} regularly varying with this index
  bool x_to_one = false;                           // AR1: x_j -> 1, nothing more
  bool f_little_o_sqrt = false;                    // f_j = o(j^{1/2})
};

struct Prediction {
  std::string normalizer_label;
  double constant = 1.0;
  std::string theorem;   // tag of the matched limit theorem
  std::string citation;  // stable key
  AlphaValidity alpha_validity = AlphaValidity::all;
  std::function<std::vector<double>(std::size_t)> table;  // normalizer phi_j, j = 1..N

  double operator()(std::size_t j) const { return table(j).back(); }
};

struct PredictionOutcome {
  std::optional<Prediction> prediction;
  std::string reason;  // set when no theorem applies
};

namespace detail {

inline std::vector<double> log_j_table(std::size_t N) {
  std::vector<double> t(N);
  for (std::size_t j = 1; j <= N; ++j) t[j - 1] = std::log(static_cast<double>(j));
  return t;
}

inline std::vector<double> j_loglog_j_table(std::size_t N) {
  std::vector<double> t(N);
  for (std::size_t j = 1; j <= N; ++j) {
    const double x = static_cast<double>(j);
    t[j - 1] = x * std::log(std::log(x));
  }
  return t;
}

inline PredictionOutcome none(std::string why) { return PredictionOutcome{std::nullopt, std::move(why)}; }

}  // namespace detail

inline PredictionOutcome predict(const KernelSpec& spec, FClass f, double alpha, const Hypotheses& hyp = {}) {
  require(alpha > 0.0, FailureKind::domain, "alpha-positive", "alpha must be positive");
  using G = Hypotheses::Growth;
  Prediction p;
  const bool potential = f == FClass::zero || f == FClass::potential_l1;

  // Min families: D_j times K_s(j) or its simplification; D_j = 1 or W_{j,j}.
  using Table = std::function<std::vector<double>(std::size_t)>;
  using LogS = std::function<double(std::size_t)>;
  const auto min_family = [&](LogS log_s, Table scale, const std::string& scale_label,
                              const char* key) -> PredictionOutcome {
    if (!potential) return detail::none("min-kernel theorems need f = Vh with h in l1");
    if (hyp.growth == G::oscillating)
      return detail::none("K_s(j) may oscillate between log j and log log s_j; no simplified normalizer");
    p.theorem = "min-kernel-koval";
    p.citation = key;
    p.constant = 1.0;
    if (hyp.growth == G::geometric) {
      p.normalizer_label = scale_label + " log j";
      p.table = [scale](std::size_t N) {
        auto t = scale(N);
        const auto lj = detail::log_j_table(N);
        for (std::size_t i = 0; i < N; ++i) t[i] *= lj[i];
        return t;
      };
    } else if (hyp.growth == G::bounded_ratios) {
      p.normalizer_label = scale_label + " log log s_j";
      p.table = [scale, log_s](std::size_t N) {
        auto t = scale(N);
        for (std::size_t j = 1; j <= N; ++j) t[j - 1] *= std::log(log_s(j));
        return t;
      };
    } else {
      p.normalizer_label = scale_label + " K_s(j)";
      p.table = [scale, log_s](std::size_t N) {
        auto t = scale(N);
        const auto K = koval_table_log(log_s, N);
        for (std::size_t i = 0; i < N; ++i) t[i] *= K[i];
        return t;
      };
    }
    return PredictionOutcome{p, {}};
  };

  if (auto* m = spec.as<MinKernel>()) {
    const Sequence s = m->s;
    return min_family([s](std::size_t j) { return s.log_at(j); }, [s](std::size_t N) { return s.take(1, N); },
                      "s_j", "min-kernel-koval-limsup");
  }
  if (spec.is<ScaledMinKernel>() || spec.is<ShiftedScaled>()) {
    const Sequence s = spec.is<ScaledMinKernel>() ? spec.as<ScaledMinKernel>()->s : spec.as<ShiftedScaled>()->s;
    const double D = spec.is<ShiftedScaled>() ? spec.as<ShiftedScaled>()->Delta : 0.0;
    const KernelSpec copy = spec;
    // The shifted family uses s' = s + Delta throughout.
    LogS log_s = D == 0.0 ? LogS([s](std::size_t j) { return s.log_at(j); })
                          : LogS([s, D](std::size_t j) { return std::log(s(j) + D); });
    return min_family(log_s, [copy](std::size_t N) { return diagonal_table(copy, N); }, "W_jj",
                      "scaled-min-koval-limsup");
  }
  if (auto* e = spec.as<ExpKernel>()) {
    p.constant = 1.0;
    if (hyp.increments_bounded_below && (potential || f == FClass::c0)) {
      p.normalizer_label = "log j";
      p.theorem = "exp-kernel-separated";
      p.citation = "exp-kernel-log-j-limsup";
      p.table = detail::log_j_table;
      return PredictionOutcome{p, {}};
    }
    if (!potential) return detail::none("exp-kernel theorems need f = Wh with h in l1 unless increments are bounded below");
    const Sequence v = e->v;
    if (hyp.increments_bounded_above) {
      p.normalizer_label = "log v_j";
      p.theorem = "exp-kernel-bounded-increments";
      p.citation = "exp-kernel-log-v-limsup";
      p.table = [v](std::size_t N) {
        std::vector<double> t(N);
        for (std::size_t j = 1; j <= N; ++j) t[j - 1] = std::log(v(j));
        return t;
      };
    } else {
      p.normalizer_label = "Kbar_v(j)";
      p.theorem = "exp-kernel-koval";
      p.citation = "exp-kernel-koval-limsup";
      p.table = [v](std::size_t N) { return koval_bar_table(v, N); };
    }
    return PredictionOutcome{p, {}};
  }
  if (spec.is<AR1>() || spec.is<AR1Shifted>()) {
    const KernelSpec copy = spec;
    const Sequence x = spec.is<AR1>() ? spec.as<AR1>()->x : spec.as<AR1Shifted>()->x;
    if (hyp.x_limit) {
      const double d = *hyp.x_limit;
      if (!(d > 0.0 && d < 1.0)) return detail::none("x_j -> delta requires 0 < delta < 1");
      p.normalizer_label = "log j";
      p.constant = 1.0 / (1.0 - d * d);
      p.theorem = "ar1-stationary-limit";
      p.citation = "ar1-log-j-limsup";
      p.table = detail::log_j_table;
      return PredictionOutcome{p, {}};
    }
    if (!potential) return detail::none("AR(1) with x_j -> 1 needs f = Uh with h in l1");
    if (hyp.critical_c) {
      p.normalizer_label = "j log log j";
      p.constant = 1.0 / (1.0 + *hyp.critical_c);
      p.theorem = "ar1-critical";
      p.citation = "ar1-j-loglog-limsup";
      p.table = detail::j_loglog_j_table;
      return PredictionOutcome{p, {}};
    }
    if (hyp.power_beta) {
      const double beta = *hyp.power_beta;
      if (!(beta > 0.0 && beta < 1.0)) return detail::none("power hypothesis needs 0 < beta < 1");
      p.normalizer_label = "j^beta log j";
      p.constant = 1.0 - beta;
      p.theorem = "ar1-power";
      p.citation = "ar1-power-limsup";
      p.table = [beta](std::size_t N) {
        std::vector<double> t(N);
        for (std::size_t j = 1; j <= N; ++j) t[j - 1] = std::pow(double(j), beta) * std::log(double(j));
        return t;
      };
      return PredictionOutcome{p, {}};
    }
    if (hyp.regular_variation_index) {
      const double beta = *hyp.regular_variation_index;
      if (!(beta > 0.0 && beta < 1.0)) return detail::none("regular variation index must lie in (0, 1)");
      p.normalizer_label = "U_jj log j";
      p.constant = 1.0 - beta;
      p.theorem = "ar1-regularly-varying";
      p.citation = "ar1-regular-variation-limsup";
      p.table = [copy](std::size_t N) {
        auto t = diagonal_table(copy, N);
        for (std::size_t j = 1; j <= N; ++j) t[j - 1] *= std::log(double(j));
        return t;
      };
      return PredictionOutcome{p, {}};
    }
    if (hyp.x_to_one) {
      // s_j = U_{j,j} b_j^2 with b_j = prod_{l<j} 1/x_l, kept in logs.
      p.normalizer_label = "U_jj log log(U_jj b_j^2)";
      p.constant = 1.0;
      p.theorem = "ar1-unit-limit";
      p.citation = "ar1-generic-limsup";
      p.table = [copy, x](std::size_t N) {
        auto t = diagonal_table(copy, N);
        double logb = 0.0;
        for (std::size_t j = 1; j <= N; ++j) {
          if (j > 1) logb -= std::log(x(j - 1));
          t[j - 1] *= std::log(std::log(t[j - 1]) + 2.0 * logb);
        }
        return t;
      };
      return PredictionOutcome{p, {}};
    }
    return detail::none("declare the limit of x_j (x_limit, critical_c, power_beta, regular_variation_index or x_to_one)");
  }
  if (spec.is<ARk>() || spec.is<ARkGen>()) {
    const auto& pv = spec.is<ARk>() ? spec.as<ARk>()->p : spec.as<ARkGen>()->p;
    validate_p(pv);
    if (!p_non_increasing(pv)) return detail::none("AR(k) limit theorems assume non-increasing p");
    const double S = sum_p(pv);
    if (S < 1.0 - 1e-14) {
      p.normalizer_label = "log j";
      p.constant = c_star(pv).value;
      p.theorem = "ark-stable";
      p.citation = "ark-cstar-limsup";
      p.table = detail::log_j_table;
      return PredictionOutcome{p, {}};
    }
    if (!potential) return detail::none("AR(k) with sum p = 1 needs f = Vh with h in l1");
    double m = 0.0;
    for (std::size_t l = 0; l < pv.size(); ++l) m += static_cast<double>(l + 1) * pv[l];
    p.normalizer_label = "j log log j";
    p.constant = 1.0 / (m * m);
    p.theorem = "ark-unit-root";
    p.citation = "ark-unit-root-limsup";
    p.alpha_validity =
        (f == FClass::zero || hyp.f_little_o_sqrt) ? AlphaValidity::all : AlphaValidity::half_and_above;
    p.table = detail::j_loglog_j_table;
    return PredictionOutcome{p, {}};
  }
  if (auto* r = spec.as<RankOneUpdate>()) {
    if (!potential) return detail::none("non-symmetric uniform kernels need f a left potential with h in l1");
    const KernelSpec& base = *r->base;
    bool uniform = false;
    if (base.is<ExpKernel>() && hyp.increments_bounded_below) uniform = true;
    if (base.is<AR1>() && hyp.x_limit && *hyp.x_limit < 1.0) uniform = true;
    if (auto* a = base.as<ARk>()) uniform = sum_p(a->p) < 1.0 - 1e-14 && p_non_increasing(a->p);
    if (!uniform)
      return detail::none("rank-one updates are covered over uniform bases with bounded row and column sums");
    const KernelSpec copy = spec;
    p.normalizer_label = "U_nn log n";
    p.constant = 1.0;
    p.theorem = "uniform-nonsymmetric";
    p.citation = "uniform-chain-limsup";
    p.table = [copy](std::size_t N) {
      auto t = diagonal_table(copy, N);
      for (std::size_t j = 1; j <= N; ++j) t[j - 1] *= std::log(double(j));
      return t;
    };
    return PredictionOutcome{p, {}};
  }
  if (auto* kw = spec.as<KilledWalk>()) {
    if (!potential && f != FClass::c0) return detail::none("killed-walk theorem needs f_{-k} -> 0");
    p.normalizer_label = "log n";
    p.constant = killed_walk_potential(*kw).U00;
    p.theorem = "killed-levy-walk";
    p.citation = "killed-walk-limsup";
    p.table = detail::log_j_table;
    return PredictionOutcome{p, {}};
  }
  return detail::none("no theorem covers this family");
}

}  // namespace permk
