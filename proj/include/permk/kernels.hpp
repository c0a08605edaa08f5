#pragma once

#include "permk/argen.hpp"
#include "permk/core.hpp"
#include "permk/spec.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace permk {

struct DenseKernelWindow {
  Window window;
  Mat K;
  KernelSpec spec;
};

// Q-convention band storage: band(i, m + (j - i)) = Q_{i,j}, 0-based rows.
// Rows carry their full band even where columns fall past the stored range,
// so row sums are those of the infinite matrix.
struct GeneratorMatrix {
  Index rows = 0;
  int m = 1;
  Mat band;
  long first_label = 1;

  GeneratorMatrix() = default;
  GeneratorMatrix(Index n, int half_width) : rows(n), m(half_width), band(Mat::Zero(n, 2 * half_width + 1)) {}

  double operator()(Index i, Index j) const {
    const Index d = j - i;
    if (i < 0 || i >= rows || d < -m || d > m) return 0.0;
    return band(i, m + d);
  }
  double& at(Index i, Index j) { return band(i, m + (j - i)); }

  Vec row_sums() const { return band.rowwise().sum(); }

  double diag_sup() const { return band.col(m).cwiseAbs().maxCoeff(); }

  Mat dense(Index n) const {
    n = std::min(n, rows);
    Mat D = Mat::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = std::max<Index>(0, i - m); j <= std::min<Index>(n - 1, i + m); ++j) D(i, j) = (*this)(i, j);
    return D;
  }
};

namespace detail {

inline void check_increasing_positive(const Sequence& s, std::size_t upto, const char* key) {
  double prev = 0.0;
  for (std::size_t j = 1; j <= upto; ++j) {
    const double v = s(j);
    require(std::isfinite(v) && v > prev, FailureKind::domain, key,
            "s must be positive and strictly increasing (fails at j = " + std::to_string(j) + ")");
    prev = v;
  }
  require(prev <= tol::max_entry, FailureKind::domain, "s-overflow", "s_{l+n} exceeds 1e300");
}

inline void check_positive(const Sequence& b, std::size_t upto, const char* key) {
  for (std::size_t j = 1; j <= upto; ++j)
    require(std::isfinite(b(j)) && b(j) > 0.0, FailureKind::domain, key, "b must be positive");
}

inline void check_ar1_x(const Sequence& x, std::size_t upto) {
  double prev = 0.0;
  for (std::size_t j = 1; j <= upto; ++j) {
    const double v = x(j);
    require(v > 0.0 && v <= 1.0, FailureKind::domain, "ar1-x-range", "x_j must lie in (0, 1]");
    require(v >= prev, FailureKind::domain, "ar1-x-monotone", "x_j must be non-decreasing");
    prev = v;
  }
}

// a_1 = 1/s_1, a_j = 1/(s_j - s_{j-1}); shift only touches a_1.
inline double min_a(const Sequence& s, std::size_t j, double Delta = 0.0) {
  return j == 1 ? 1.0 / (s(1) + Delta) : 1.0 / (s(j) - s(j - 1));
}

// Stable pieces of the exponential-kernel generator in terms of d = v_{j+1} - v_j.
inline double exp_up(double d) { return 1.0 / std::expm1(2.0 * d); }     // 1/(e^{2d} - 1)
inline double exp_down(double d) { return -1.0 / std::expm1(-2.0 * d); }  // 1/(1 - e^{-2d})
inline double exp_off(double d) { return 1.0 / (2.0 * std::sinh(d)); }

}  // namespace detail

inline double ark_shift_threshold(const std::vector<double>& p) {
  const double S = sum_p(p);
  double S2 = 0.0;
  for (double q : p) S2 += q * q;
  return 0.5 * (S * (2.0 - S) - S2);
}

struct Admissibility {
  bool admissible = true;
  std::string constraint;  // citation key of the active inequality
  double value = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  std::string detail;
};

// Evaluates kernel entries U_{j,k} (1-based) for indices up to a fixed bound.
class KernelEvaluator {
 public:
  KernelEvaluator(const KernelSpec& spec, std::size_t max_index);

  double operator()(std::size_t j, std::size_t k) const;
  std::size_t max_index() const { return N_; }
  const KernelSpec& spec() const { return spec_; }

  const std::vector<double>& ar1_diag() const { return diag_; }
  const PhiSequence& phi() const { return phi_; }

 private:
  KernelSpec spec_;
  std::size_t N_;
  std::vector<double> diag_;      // AR1 families: U_{j,j}
  std::vector<double> logprod_;   // AR1 families: sum_{i<j} log x_i
  PhiSequence phi_;               // ARk families
  std::unique_ptr<KernelEvaluator> base_;
  Mat walk_;
};

inline Admissibility shift_admissible(const KernelSpec& spec);
inline GeneratorMatrix build_generator(const KernelSpec& spec, std::size_t rows);
inline Mat killed_walk_matrix(const KilledWalk& kw);

inline DenseKernelWindow build_kernel(const KernelSpec& spec, Window w) {
  require(w.n >= 1, FailureKind::domain, "window-nonempty", "window size must be positive");
  if (!spec.is<ARk>() && !spec.is<KilledWalk>() && !spec.is<MinKernel>() && !spec.is<ScaledMinKernel>() &&
      !spec.is<ExpKernel>() && !spec.is<AR1>()) {
    const auto adm = shift_admissible(spec);
    require(adm.admissible, FailureKind::inadmissible, adm.constraint.c_str(), adm.detail);
  }
  KernelEvaluator ev(spec, w.last());
  DenseKernelWindow out{w, Mat(static_cast<Index>(w.n), static_cast<Index>(w.n)), spec};
  for (std::size_t a = 0; a < w.n; ++a)
    for (std::size_t b = 0; b < w.n; ++b)
      out.K(static_cast<Index>(a), static_cast<Index>(b)) = ev(w.l + a + 1, w.l + b + 1);
  return out;
}

inline KernelEvaluator::KernelEvaluator(const KernelSpec& spec, std::size_t max_index)
    : spec_(spec), N_(max_index) {
  require(N_ >= 1, FailureKind::domain, "window-nonempty", "max index must be positive");
  if (auto* m = spec.as<MinKernel>()) {
    detail::check_increasing_positive(m->s, N_, "min-s-increasing");
  } else if (auto* sm = spec.as<ScaledMinKernel>()) {
    detail::check_increasing_positive(sm->s, N_, "min-s-increasing");
    detail::check_positive(sm->b, N_, "scaled-b-positive");
  } else if (auto* ss = spec.as<ShiftedScaled>()) {
    detail::check_increasing_positive(ss->s, N_, "min-s-increasing");
    detail::check_positive(ss->b, N_, "scaled-b-positive");
  } else if (auto* e = spec.as<ExpKernel>()) {
    for (std::size_t j = 2; j <= N_; ++j)
      require(e->v(j) > e->v(j - 1), FailureKind::domain, "exp-v-increasing", "v must be strictly increasing");
  } else if (spec.is<AR1>() || spec.is<AR1Shifted>()) {
    const Sequence& x = spec.is<AR1>() ? spec.as<AR1>()->x : spec.as<AR1Shifted>()->x;
    detail::check_ar1_x(x, N_);
    const double first = spec.is<AR1>() ? 1.0 : std::pow(spec.as<AR1Shifted>()->delta_tilde, 2);
    diag_.resize(N_);
    logprod_.resize(N_);
    diag_[0] = first;
    logprod_[0] = 0.0;
    for (std::size_t j = 1; j < N_; ++j) {
      const double xj = x(j);
      diag_[j] = xj * xj * diag_[j - 1] + 1.0;
      logprod_[j] = logprod_[j - 1] + std::log(xj);
    }
  } else if (spec.is<ARk>() || spec.is<ARkGen>()) {
    const auto& p = spec.is<ARk>() ? spec.as<ARk>()->p : spec.as<ARkGen>()->p;
    validate_p(p);
    if (auto* g = spec.as<ARkGen>())
      require(g->a_sq > 0.0, FailureKind::domain, "ark-gen-a-positive", "a^2 must be positive");
    phi_ = phi_recursive(p, N_);
  } else if (auto* r = spec.as<RankOneUpdate>()) {
    require(r->base != nullptr, FailureKind::domain, "rank-one-base", "missing base kernel");
    require(r->k >= 1 && r->l >= 1, FailureKind::domain, "rank-one-index", "k and l are 1-based");
    base_ = std::make_unique<KernelEvaluator>(*r->base, std::max({N_, r->k, r->l}));
  } else if (auto* kw = spec.as<KilledWalk>()) {
    require(kw->beta > 0.0 && kw->radius >= 1, FailureKind::domain, "killed-walk-params",
            "beta must be positive and radius at least 1");
    require(N_ <= static_cast<std::size_t>(2 * kw->radius + 1), FailureKind::domain, "killed-walk-range",
            "window exceeds the truncated lattice");
    walk_ = killed_walk_matrix(*kw);
  }
}

inline double KernelEvaluator::operator()(std::size_t j, std::size_t k) const {
  require(j >= 1 && k >= 1 && j <= N_ && k <= N_, FailureKind::domain, "kernel-index",
          "entry outside evaluator range");
  const std::size_t lo = std::min(j, k), hi = std::max(j, k);
  if (auto* m = spec_.as<MinKernel>()) return m->s(lo);
  if (auto* sm = spec_.as<ScaledMinKernel>()) return sm->s(lo) / (sm->b(j) * sm->b(k));
  if (auto* ss = spec_.as<ShiftedScaled>()) return (ss->s(lo) + ss->Delta) / (ss->b(j) * ss->b(k));
  if (auto* e = spec_.as<ExpKernel>()) return std::exp(-(e->v(hi) - e->v(lo)));
  // The shifted first step only changes the diagonal recursion's seed.
  if (spec_.is<AR1>() || spec_.is<AR1Shifted>())
    return diag_[lo - 1] * std::exp(logprod_[hi - 1] - logprod_[lo - 1]);
  if (spec_.is<ARk>() || spec_.is<ARkGen>()) {
    long double acc = 0.0L;
    for (std::size_t t = 0; t < lo; ++t)
      acc += static_cast<long double>(phi_(lo - t)) * phi_(hi - t);
    if (auto* g = spec_.as<ARkGen>()) acc += static_cast<long double>((1.0 - g->a_sq) / g->a_sq) * phi_(lo) * phi_(hi);
    return static_cast<double>(acc);
  }
  if (auto* r = spec_.as<RankOneUpdate>()) {
    const KernelEvaluator& U = *base_;
    const double denom = 1.0 - r->b * U(r->l, r->k);
    return U(j, k) + r->b * U(j, r->k) * U(r->l, k) / denom;
  }
  if (spec_.is<KilledWalk>()) return walk_(static_cast<Index>(j - 1), static_cast<Index>(k - 1));
  throw Failure(FailureKind::unsupported, "kernel-family", "unknown family");
}

inline GeneratorMatrix build_generator(const KernelSpec& spec, std::size_t rows) {
  require(rows >= 1, FailureKind::domain, "generator-rows", "rows must be positive");
  const Index n = static_cast<Index>(rows);
  GeneratorMatrix G;

  const auto min_family = [&](const Sequence& s, const Sequence* b, double Delta) {
    detail::check_increasing_positive(s, rows + 1, "min-s-increasing");
    if (b) detail::check_positive(*b, rows + 1, "scaled-b-positive");
    G = GeneratorMatrix(n, 1);
    const auto bb = [&](std::size_t j) { return b ? (*b)(j) : 1.0; };
    for (Index i = 0; i < n; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + 1;
      const double aj = detail::min_a(s, j, Delta), an = detail::min_a(s, j + 1, Delta);
      G.at(i, i) = -bb(j) * bb(j) * (aj + an);
      G.at(i, i + 1) = bb(j) * bb(j + 1) * an;
      if (i > 0) G.at(i, i - 1) = bb(j) * bb(j - 1) * aj;
    }
  };

  if (auto* m = spec.as<MinKernel>()) {
    min_family(m->s, nullptr, 0.0);
  } else if (auto* sm = spec.as<ScaledMinKernel>()) {
    min_family(sm->s, &sm->b, 0.0);
  } else if (auto* ss = spec.as<ShiftedScaled>()) {
    min_family(ss->s, &ss->b, ss->Delta);
  } else if (auto* e = spec.as<ExpKernel>()) {
    G = GeneratorMatrix(n, 1);
    for (Index i = 0; i < n; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + 1;
      const double dn = e->v(j + 1) - e->v(j);
      require(dn > 0.0, FailureKind::domain, "exp-v-increasing", "v must be strictly increasing");
      double diag = detail::exp_up(dn);
      if (j == 1) {
        diag += 1.0;
      } else {
        const double dp = e->v(j) - e->v(j - 1);
        diag += detail::exp_down(dp);
        G.at(i, i - 1) = detail::exp_off(dp);
      }
      G.at(i, i) = -diag;
      G.at(i, i + 1) = detail::exp_off(dn);
    }
  } else if (spec.is<AR1>() || spec.is<AR1Shifted>()) {
    const Sequence& x = spec.is<AR1>() ? spec.as<AR1>()->x : spec.as<AR1Shifted>()->x;
    detail::check_ar1_x(x, rows + 1);
    G = GeneratorMatrix(n, 1);
    for (Index i = 0; i < n; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + 1;
      const double xj = x(j);
      G.at(i, i) = -(1.0 + xj * xj);
      G.at(i, i + 1) = xj;
      if (i > 0) G.at(i, i - 1) = x(j - 1);
    }
    if (auto* s = spec.as<AR1Shifted>()) {
      const auto adm = shift_admissible(spec);
      require(adm.admissible, FailureKind::inadmissible, adm.constraint.c_str(), adm.detail);
      G.at(0, 0) = -(1.0 / (s->delta_tilde * s->delta_tilde) + x(1) * x(1));
    }
  } else if (spec.is<ARk>() || spec.is<ARkGen>()) {
    const auto& p = spec.is<ARk>() ? spec.as<ARk>()->p : spec.as<ARkGen>()->p;
    validate_p(p);
    require(p_non_increasing(p), FailureKind::inadmissible, "ark-generator-monotone-p",
            "the AR(k) generator requires non-increasing p");
    const int k = static_cast<int>(p.size());
    std::vector<double> c(static_cast<std::size_t>(k) + 1);
    c[0] = 1.0;
    for (int l = 1; l <= k; ++l) c[static_cast<std::size_t>(l)] = -p[static_cast<std::size_t>(l - 1)];
    // A_{m,m+d} = sum_t c_t c_{t+d}; Q = -A.
    std::vector<double> A(static_cast<std::size_t>(k) + 1, 0.0);
    for (int d = 0; d <= k; ++d)
      for (int t = 0; t + d <= k; ++t) A[static_cast<std::size_t>(d)] += c[static_cast<std::size_t>(t)] * c[static_cast<std::size_t>(t + d)];
    G = GeneratorMatrix(n, k);
    for (Index i = 0; i < n; ++i)
      for (int d = -k; d <= k; ++d)
        if (i + d >= 0) G.at(i, i + d) = -A[static_cast<std::size_t>(std::abs(d))];
    if (auto* g = spec.as<ARkGen>()) {
      const auto adm = shift_admissible(spec);
      require(adm.admissible, FailureKind::inadmissible, adm.constraint.c_str(), adm.detail);
      G.at(0, 0) = -(g->a_sq + (A[0] - 1.0));
    }
    for (Index i = 0; i < n; ++i)
      for (int d = 1; d <= k; ++d)
        require(G(i, i + d) >= -tol::sign, FailureKind::structural, "q-matrix-sign",
                "positive off-diagonal in -A");
  } else if (auto* r = spec.as<RankOneUpdate>()) {
    require(r->base != nullptr, FailureKind::domain, "rank-one-base", "missing base kernel");
    const GeneratorMatrix base = build_generator(*r->base, rows);
    const int reach = static_cast<int>(std::max(r->k, r->l) - std::min(r->k, r->l));
    G = GeneratorMatrix(n, std::max(base.m, reach));
    for (Index i = 0; i < n; ++i)
      for (int d = -base.m; d <= base.m; ++d)
        if (i + d >= 0) G.at(i, i + d) = base(i, i + d);
    if (r->k <= rows) G.at(static_cast<Index>(r->k) - 1, static_cast<Index>(r->l) - 1) += r->b;
  } else if (auto* kw = spec.as<KilledWalk>()) {
    int reach = 0;
    double total = 0.0;
    for (const auto& [off, rate] : kw->step_rates) {
      require(rate >= 0.0 && off != 0, FailureKind::domain, "killed-walk-rates",
              "rates must be nonnegative on nonzero offsets");
      reach = std::max(reach, std::abs(off));
      total += rate;
    }
    G = GeneratorMatrix(n, std::max(reach, 1));
    G.first_label = -kw->radius;
    for (Index i = 0; i < n; ++i) {
      G.at(i, i) = -(total + kw->beta);
      for (const auto& [off, rate] : kw->step_rates)
        if (i + off >= 0) G.at(i, i + off) += rate;
    }
  } else {
    throw Failure(FailureKind::unsupported, "kernel-family", "no generator for this family");
  }
  return G;
}

struct QMatrixReport {
  bool diagonal_negative = true;
  bool offdiag_nonnegative = true;
  bool row_sums_nonpositive = true;
  bool passed = true;
  double norm = 0.0;               // sup_j |Q_{j,j}|
  bool row_sums_bounded_away = false;
  double min_deficit = 0.0;        // min_j (-row sum)
  std::vector<Index> violating_rows;
};

inline QMatrixReport check_q_matrix(const GeneratorMatrix& G, double away_threshold = 0.0) {
  QMatrixReport r;
  if (G.rows == 0) {
    r.passed = r.diagonal_negative = false;
    return r;
  }
  r.min_deficit = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < G.rows; ++i) {
    bool bad = false;
    const double scale = std::max(1.0, std::abs(G(i, i)));
    if (!(G(i, i) < 0.0)) r.diagonal_negative = false, bad = true;
    for (int d = -G.m; d <= G.m; ++d)
      if (d != 0 && G.band(i, G.m + d) < -tol::sign * scale) r.offdiag_nonnegative = false, bad = true;
    const double rs = G.band.row(i).sum();
    if (rs > tol::sign * scale) r.row_sums_nonpositive = false, bad = true;
    r.min_deficit = std::min(r.min_deficit, -rs);
    if (bad) r.violating_rows.push_back(i);
  }
  r.norm = G.diag_sup();
  r.passed = r.diagonal_negative && r.offdiag_nonnegative && r.row_sums_nonpositive;
  r.row_sums_bounded_away = r.min_deficit >= away_threshold && away_threshold > 0.0;
  return r;
}

struct InverseMReport {
  bool diag_nonnegative = true;
  bool offdiag_nonpositive = true;
  bool row_sums_nonnegative = true;
  bool passed = true;
  Mat inverse;
  double condition = 0.0;
  double worst_offdiag = 0.0;  // largest positive off-diagonal of the inverse
};

inline double condition_estimate(const Eigen::PartialPivLU<Mat>& lu) {
  const double rc = lu.rcond();
  return rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
}

inline InverseMReport check_inverse_m_matrix(const Mat& K) {
  require(K.rows() == K.cols() && K.rows() > 0, FailureKind::domain, "square-kernel", "kernel must be square");
  Eigen::PartialPivLU<Mat> lu(K);
  InverseMReport r;
  r.condition = condition_estimate(lu);
  require(r.condition <= tol::max_condition, FailureKind::numerical, "kernel-condition",
          "condition estimate " + std::to_string(r.condition) + " exceeds 1e12");
  r.inverse = lu.inverse();
  const double scale = r.inverse.cwiseAbs().maxCoeff();
  const double eps = 1e-9 * scale;
  for (Index i = 0; i < K.rows(); ++i) {
    if (r.inverse(i, i) < -eps) r.diag_nonnegative = false;
    for (Index j = 0; j < K.cols(); ++j)
      if (i != j && r.inverse(i, j) > eps) {
        r.offdiag_nonpositive = false;
        r.worst_offdiag = std::max(r.worst_offdiag, r.inverse(i, j));
      }
    if (r.inverse.row(i).sum() < -eps) r.row_sums_nonnegative = false;
  }
  r.passed = r.diag_nonnegative && r.offdiag_nonpositive && r.row_sums_nonnegative;
  return r;
}

inline InverseMReport check_inverse_m_matrix(const DenseKernelWindow& K) { return check_inverse_m_matrix(K.K); }

inline Admissibility shift_admissible(const KernelSpec& spec) {
  Admissibility a;
  if (auto* ss = spec.as<ShiftedScaled>()) {
    const double s1 = ss->s(1), s2 = ss->s(2), b1 = ss->b(1), b2 = ss->b(2);
    a.value = ss->Delta;
    a.lower = -s1;
    if (b2 > b1) a.upper = (b1 * s2 - b2 * s1) / (b2 - b1);
    a.constraint = "shift-upper-bound";
    if (!(a.value > a.lower)) {
      a.admissible = false;
      a.constraint = "shift-lower-bound";
      a.detail = "Delta must exceed -s_1";
    } else if (a.value > a.upper * (1.0 + 1e-14) + 1e-300) {
      a.admissible = false;
      a.detail = "Delta exceeds (b1 s2 - b2 s1)/(b2 - b1)";
    }
  } else if (auto* s = spec.as<AR1Shifted>()) {
    const double x1 = s->x(1);
    a.constraint = "ar1-shift-bound";
    a.value = s->delta_tilde * s->delta_tilde;
    a.lower = 0.0;
    a.upper = x1 < 1.0 ? 1.0 / (x1 * (1.0 - x1)) : std::numeric_limits<double>::infinity();
    if (s->delta_tilde == 0.0) {
      a.admissible = false;
      a.detail = "delta_tilde must be nonzero";
    } else if (a.value > a.upper * (1.0 + 1e-14)) {
      a.admissible = false;
      a.detail = "delta_tilde^2 exceeds 1/(x_1(1 - x_1))";
    }
  } else if (auto* g = spec.as<ARkGen>()) {
    a.constraint = "ark-gen-a-bound";
    a.value = g->a_sq;
    a.lower = ark_shift_threshold(g->p);
    if (!p_non_increasing(g->p)) {
      a.admissible = false;
      a.constraint = "ark-generator-monotone-p";
      a.detail = "generalized AR(k) kernel requires non-increasing p";
    } else if (a.value < a.lower * (1.0 - 1e-14) || a.value <= 0.0) {
      a.admissible = false;
      a.detail = "a^2 below (sum p (2 - sum p) - sum p^2)/2";
    }
  } else if (auto* r = spec.as<RankOneUpdate>()) {
    a.constraint = "rank-one-b-bound";
    a.value = r->b;
    const std::size_t reach = std::max(r->k, r->l) + 2;
    KernelEvaluator U(*r->base, reach);
    const double Ulk = U(r->l, r->k);
    a.upper = 1.0 / Ulk;
    if (!(r->b < a.upper)) {
      a.admissible = false;
      a.detail = "b must be below 1/U_{l,k}";
      return a;
    }
    // Q + b E(k,l) must keep the Q-matrix pattern on row k.
    const GeneratorMatrix G = build_generator(spec, reach);
    const auto rep = check_q_matrix(G);
    if (!rep.passed) {
      a.admissible = false;
      a.constraint = "rank-one-q-matrix";
      a.detail = "Q + b E(k,l) is not a Q-matrix on the checked rows";
    }
  } else {
    a.constraint = "unshifted";
  }
  return a;
}

// Window-level reading of 0 < U_{j,k} Q_{k,j} < U_{k,k} Q_{k,j} for some j != k.
inline bool rank_one_condition_on_window(const KernelSpec& base, std::size_t k, std::size_t upto) {
  KernelEvaluator U(base, upto);
  const GeneratorMatrix G = build_generator(base, upto);
  const Index kk = static_cast<Index>(k) - 1;
  for (Index j = std::max<Index>(0, kk - G.m); j <= std::min<Index>(G.rows - 1, kk + G.m); ++j) {
    if (j == kk) continue;
    const double q = G(kk, j);
    const double ujk = U(static_cast<std::size_t>(j) + 1, k), ukk = U(k, k);
    if (q > 0.0 && ujk * q > 0.0 && ujk * q < ukk * q) return true;
  }
  return false;
}

inline DenseKernelWindow rank_one_update(const DenseKernelWindow& U, std::size_t k, std::size_t l, double b) {
  const auto& w = U.window;
  require(k > w.l && k <= w.last() && l > w.l && l <= w.last(), FailureKind::domain, "rank-one-index",
          "k and l must lie in the window");
  const Index ki = static_cast<Index>(k - w.l - 1), li = static_cast<Index>(l - w.l - 1);
  const double Ulk = U.K(li, ki);
  require(b < 1.0 / Ulk, FailureKind::inadmissible, "rank-one-b-bound", "b must be below 1/U_{l,k}");
  DenseKernelWindow W = U;
  W.K += (b / (1.0 - b * Ulk)) * U.K.col(ki) * U.K.row(li);
  W.spec = make_rank_one(U.spec, k, l, b);
  return W;
}

struct WindowInverse {
  Mat inverse;
  bool closed_form = false;
  double condition = 0.0;
  double product_residual = 0.0;  // max |inverse * K - I|
};

namespace detail {

inline Mat tridiag(const std::vector<double>& diag, const std::vector<double>& off) {
  const Index n = static_cast<Index>(diag.size());
  Mat T = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    T(i, i) = diag[static_cast<std::size_t>(i)];
    if (i + 1 < n) T(i, i + 1) = T(i + 1, i) = off[static_cast<std::size_t>(i)];
  }
  return T;
}

// Closed-form tridiagonal window inverse of the (shifted) min kernel s' = s + Delta.
inline Mat min_window_inverse(const Sequence& s, Window w, double Delta) {
  std::vector<double> diag(w.n), off(w.n > 0 ? w.n - 1 : 0);
  const auto a = [&](std::size_t j) { return min_a(s, j, Delta); };
  for (std::size_t i = 1; i <= w.n; ++i) {
    const std::size_t j = w.l + i;
    const double left = i == 1 ? 1.0 / (s(j) + Delta) : a(j);
    const double right = i < w.n ? a(j + 1) : 0.0;
    diag[i - 1] = left + right;
    if (i < w.n) off[i - 1] = -a(j + 1);
  }
  return tridiag(diag, off);
}

inline long double product_residual(const Mat& inv, const Mat& K) {
  long double worst = 0.0L;
  const Index n = K.rows();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      long double acc = (i == j) ? -1.0L : 0.0L;
      for (Index t = 0; t < n; ++t)
        if (inv(i, t) != 0.0) acc += static_cast<long double>(inv(i, t)) * K(t, j);
      worst = std::max(worst, std::abs(acc));
    }
  return worst;
}

}  // namespace detail

inline WindowInverse window_inverse(const KernelSpec& spec, Window w) {
  require(w.n >= 1, FailureKind::domain, "window-nonempty", "window size must be positive");
  const DenseKernelWindow K = build_kernel(spec, w);
  WindowInverse out;
  out.closed_form = true;
  if (auto* m = spec.as<MinKernel>()) {
    out.inverse = detail::min_window_inverse(m->s, w, 0.0);
  } else if (spec.is<ScaledMinKernel>() || spec.is<ShiftedScaled>()) {
    const Sequence& s = spec.is<ScaledMinKernel>() ? spec.as<ScaledMinKernel>()->s : spec.as<ShiftedScaled>()->s;
    const Sequence& b = spec.is<ScaledMinKernel>() ? spec.as<ScaledMinKernel>()->b : spec.as<ShiftedScaled>()->b;
    const double Delta = spec.is<ShiftedScaled>() ? spec.as<ShiftedScaled>()->Delta : 0.0;
    const Mat T = detail::min_window_inverse(s, w, Delta);
    Vec bv(static_cast<Index>(w.n));
    for (std::size_t i = 0; i < w.n; ++i) bv(static_cast<Index>(i)) = b(w.l + i + 1);
    out.inverse = bv.asDiagonal() * T * bv.asDiagonal();
  } else if (auto* e = spec.as<ExpKernel>()) {
    std::vector<double> diag(w.n, 1.0), off(w.n > 0 ? w.n - 1 : 0);
    for (std::size_t i = 1; i <= w.n; ++i) {
      const std::size_t j = w.l + i;
      double dg = 0.0;
      if (i == 1) dg += 1.0;
      else dg += detail::exp_down(e->v(j) - e->v(j - 1));
      if (i < w.n) {
        const double dn = e->v(j + 1) - e->v(j);
        dg += detail::exp_up(dn);
        off[i - 1] = -detail::exp_off(dn);
      }
      diag[i - 1] = dg;
    }
    out.inverse = detail::tridiag(diag, off);
  } else if (spec.is<AR1>() || spec.is<AR1Shifted>()) {
    const Sequence& x = spec.is<AR1>() ? spec.as<AR1>()->x : spec.as<AR1Shifted>()->x;
    std::vector<double> diag(w.n), off(w.n > 0 ? w.n - 1 : 0);
    for (std::size_t i = 1; i <= w.n; ++i) {
      const std::size_t j = w.l + i;
      const double head = i == 1 ? 1.0 / K.K(0, 0) : 1.0;
      const double tail = i < w.n ? x(j) * x(j) : 0.0;
      diag[i - 1] = head + tail;
      if (i < w.n) off[i - 1] = -x(j);
    }
    out.inverse = detail::tridiag(diag, off);
  } else {
    out.closed_form = false;
    Eigen::PartialPivLU<Mat> lu(K.K);
    out.condition = condition_estimate(lu);
    require(out.condition <= tol::max_condition, FailureKind::numerical, "kernel-condition",
            "condition estimate " + std::to_string(out.condition) + " exceeds 1e12");
    out.inverse = lu.inverse();
  }
  out.product_residual = static_cast<double>(detail::product_residual(out.inverse, K.K));
  const double bound = out.closed_form ? 1e-12 : 1e-12 * std::max(1.0, out.condition);
  require(out.product_residual <= std::max(bound, 1e-12), FailureKind::numerical, "window-inverse-product",
          "inverse times kernel departs from identity by " + std::to_string(out.product_residual));
  return out;
}

struct DualityReport {
  double max_residual = 0.0;  // max |(Q U + I)_{i,j}| over interior rows
  Index worst_row = -1;
  std::size_t interior_rows = 0;
  std::size_t excluded_rows = 0;
  std::optional<double> ltl_residual;  // ARk: max |L^T L - A| on interior rows
  bool passed = true;
};

inline DualityReport verify_duality(const KernelSpec& spec, Window w, double tolerance) {
  const DenseKernelWindow U = build_kernel(spec, w);
  const GeneratorMatrix G = build_generator(spec, w.last() + 1);
  DualityReport r;
  const Index lo = static_cast<Index>(w.l), hi = static_cast<Index>(w.last()) - 1;  // 0-based labels
  for (Index i = lo; i <= hi; ++i) {
    bool inside = true;
    for (int d = -G.m; d <= G.m; ++d) {
      const Index c = i + d;
      if (G(i, c) != 0.0 && (c < lo || c > hi)) inside = false;
    }
    if (!inside) {
      ++r.excluded_rows;
      continue;
    }
    ++r.interior_rows;
    for (Index j = 0; j < static_cast<Index>(w.n); ++j) {
      long double acc = (i - lo == j) ? 1.0L : 0.0L;
      for (int d = -G.m; d <= G.m; ++d) {
        const Index c = i + d;
        if (c < lo || c > hi) continue;
        acc += static_cast<long double>(G(i, c)) * U.K(c - lo, j);
      }
      const double e = static_cast<double>(std::abs(acc));
      if (e > r.max_residual) r.max_residual = e, r.worst_row = i + 1;
    }
  }
  if (spec.is<ARk>() || spec.is<ARkGen>()) {
    const auto& p = spec.is<ARk>() ? spec.as<ARk>()->p : spec.as<ARkGen>()->p;
    const Index N = static_cast<Index>(w.last());
    const Index k = static_cast<Index>(p.size());
    Mat L = Mat::Identity(N, N);
    for (Index i = 0; i < N; ++i)
      for (Index l = 1; l <= k && i - l >= 0; ++l) L(i, i - l) = -p[static_cast<std::size_t>(l - 1)];
    if (auto* g = spec.as<ARkGen>()) L(0, 0) = std::sqrt(g->a_sq);
    const Mat A = L.transpose() * L;
    double worst = 0.0;
    for (Index i = 0; i + k < N; ++i)
      for (Index j = 0; j < N; ++j) worst = std::max(worst, std::abs(A(i, j) + G(i, j)));
    r.ltl_residual = worst;
  }
  r.passed = r.max_residual <= tolerance && (!r.ltl_residual || *r.ltl_residual <= tolerance);
  return r;
}

// Solves (beta I - G) U = I on {-R, ..., R} by banded LU without pivoting;
// the matrix is strictly diagonally dominant for beta > 0.
inline Mat killed_walk_matrix(const KilledWalk& kw) {
  const GeneratorMatrix G = build_generator(KernelSpec(kw), static_cast<std::size_t>(2 * kw.radius + 1));
  const Index n = G.rows;
  const int m = G.m;
  Mat M = -G.band;  // banded (beta I - G)
  // In-place banded LU: M(i, m + d) holds entry (i, i + d).
  for (Index k = 0; k < n; ++k) {
    const double piv = M(k, m);
    for (int r = 1; r <= m && k + r < n; ++r) {
      const double f = M(k + r, m - r) / piv;
      M(k + r, m - r) = f;
      for (int c = 1; c <= m; ++c)
        if (k + c < n) M(k + r, m - r + c) -= f * M(k, m + c);
    }
  }
  Mat U = Mat::Identity(n, n);
  for (Index col = 0; col < n; ++col) {
    auto x = U.col(col);
    for (Index i = 0; i < n; ++i)
      for (int r = 1; r <= m && i - r >= 0; ++r) x(i) -= M(i, m - r) * x(i - r);
    for (Index i = n - 1; i >= 0; --i) {
      for (int c = 1; c <= m && i + c < n; ++c) x(i) -= M(i, m + c) * x(i + c);
      x(i) /= M(i, m);
    }
  }
  return U;
}

struct KilledWalkReport {
  Mat U;
  int radius = 0;
  double beta = 1.0;
  double max_row_sum_deficiency = 0.0;  // max over |j| <= R/2 of 1/beta - sum_k U_{j,k}
  double max_row_sum_error = 0.0;       // same, from the direct row sums
  double max_diag_spread = 0.0;         // max over |j| <= R/2 of |U_{j,j} - U_{0,0}|
  double U00 = 0.0;
};

inline KilledWalkReport killed_walk_potential(const KilledWalk& kw) {
  KilledWalkReport r;
  r.U = killed_walk_matrix(kw);
  r.radius = kw.radius;
  r.beta = kw.beta;
  const Index R = kw.radius, n = 2 * R + 1;
  // Exit rate from each site; 1/beta - row sum = (U leak)_j / beta, a sum of positive terms.
  Vec leak = Vec::Zero(n);
  for (Index i = 0; i < n; ++i)
    for (const auto& [off, rate] : kw.step_rates)
      if (i + off < 0 || i + off >= n) leak(i) += rate;
  const Vec deficiency = r.U * leak / kw.beta;
  r.U00 = r.U(R, R);
  for (Index j = -R / 2; j <= R / 2; ++j) {
    const Index i = j + R;
    r.max_row_sum_deficiency = std::max(r.max_row_sum_deficiency, deficiency(i));
    r.max_row_sum_error = std::max(r.max_row_sum_error, std::abs(r.U.row(i).sum() - 1.0 / kw.beta));
    r.max_diag_spread = std::max(r.max_diag_spread, std::abs(r.U(i, i) - r.U00));
  }
  return r;
}

struct DecayEnvelope {
  double C = 0.0;
  double lambda = 0.0;
  bool monotone = true;  // envelope E_d = max_i U_{i,i+d} non-increasing in d
  bool holds = true;     // E_d <= C e^{-lambda d} for every d
};

// Least-squares log-linear envelope of max_i U_{i,i+d} over distances d.
inline DecayEnvelope decay_envelope(const Mat& U, Index max_distance = -1) {
  const Index n = U.rows();
  if (max_distance < 0) max_distance = n - 1;
  std::vector<double> E;
  for (Index d = 0; d <= max_distance; ++d) {
    double e = 0.0;
    for (Index i = 0; i + d < n; ++i) e = std::max({e, U(i, i + d), U(i + d, i)});
    if (e <= 1e-300) break;
    E.push_back(e);
  }
  DecayEnvelope out;
  const std::size_t m = E.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t d = 0; d < m; ++d) {
    const double y = std::log(E[d]);
    sx += d, sy += y, sxx += double(d) * d, sxy += d * y;
    if (d > 0 && E[d] > E[d - 1] * (1.0 + 1e-12)) out.monotone = false;
  }
  const double slope = m > 1 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : 0.0;
  out.lambda = -slope;
  double logC = -std::numeric_limits<double>::infinity();
  for (std::size_t d = 0; d < m; ++d) logC = std::max(logC, std::log(E[d]) + out.lambda * d);
  out.C = std::exp(logC);
  out.holds = out.lambda > 0.0;
  return out;
}

// U_{i,i} >= 1/|Q_{i,i}| on rows covered by both.
inline bool diagonal_dominates_inverse_rate(const Mat& U, const GeneratorMatrix& G, Index offset = 0) {
  for (Index i = 0; i < U.rows() && i + offset < G.rows; ++i)
    if (U(i, i) < (1.0 - 1e-12) / std::abs(G(i + offset, i + offset))) return false;
  return true;
}

}  // namespace permk

namespace permk {

// U_{j,j} for j = 1..N in O(N) (plus O(k) per entry for rank-one updates).
inline std::vector<double> diagonal_table(const KernelSpec& spec, std::size_t N) {
  std::vector<double> d(N);
  if (auto* m = spec.as<MinKernel>()) {
    for (std::size_t j = 1; j <= N; ++j) d[j - 1] = m->s(j);
  } else if (auto* sm = spec.as<ScaledMinKernel>()) {
    for (std::size_t j = 1; j <= N; ++j) d[j - 1] = sm->s(j) / (sm->b(j) * sm->b(j));
  } else if (auto* ss = spec.as<ShiftedScaled>()) {
    for (std::size_t j = 1; j <= N; ++j) d[j - 1] = (ss->s(j) + ss->Delta) / (ss->b(j) * ss->b(j));
  } else if (spec.is<ExpKernel>()) {
    std::fill(d.begin(), d.end(), 1.0);
  } else if (spec.is<AR1>() || spec.is<AR1Shifted>()) {
    const Sequence& x = spec.is<AR1>() ? spec.as<AR1>()->x : spec.as<AR1Shifted>()->x;
    d[0] = spec.is<AR1>() ? 1.0 : std::pow(spec.as<AR1Shifted>()->delta_tilde, 2);
    for (std::size_t j = 1; j < N; ++j) d[j] = x(j) * x(j) * d[j - 1] + 1.0;
  } else if (spec.is<ARk>() || spec.is<ARkGen>()) {
    const auto& p = spec.is<ARk>() ? spec.as<ARk>()->p : spec.as<ARkGen>()->p;
    const auto phi = phi_recursive(p, N);
    const double extra = spec.is<ARkGen>() ? (1.0 - spec.as<ARkGen>()->a_sq) / spec.as<ARkGen>()->a_sq : 0.0;
    long double acc = 0.0L;
    for (std::size_t n = 1; n <= N; ++n) {
      acc += static_cast<long double>(phi(n)) * phi(n);
      d[n - 1] = static_cast<double>(acc + extra * phi(n) * phi(n));
    }
  } else if (auto* r = spec.as<RankOneUpdate>()) {
    const auto base = diagonal_table(*r->base, N);
    KernelEvaluator U(*r->base, std::max({N, r->k, r->l}));
    const double s = r->b / (1.0 - r->b * U(r->l, r->k));
    for (std::size_t n = 1; n <= N; ++n) d[n - 1] = base[n - 1] + s * U(n, r->k) * U(r->l, n);
  } else if (auto* kw = spec.as<KilledWalk>()) {
    const Mat U = killed_walk_matrix(*kw);
    require(N <= static_cast<std::size_t>(U.rows()), FailureKind::domain, "killed-walk-range",
            "diagonal requested past the truncated lattice");
    for (std::size_t j = 0; j < N; ++j) d[j] = U(static_cast<Index>(j), static_cast<Index>(j));
  }
  return d;
}

}  // namespace permk
