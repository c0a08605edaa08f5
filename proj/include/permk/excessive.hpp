#pragma once

// Excessive functions and potentials of the birth-death chain with potential
// V = s_{j ^ k}: classification, Riesz decomposition, density recovery, rho.

#include "permk/core.hpp"
#include "permk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace permk {

// f[j-1] = f_j.
struct PotentialFunction {
  std::vector<double> f;
  double tail_bound = 0.0;  // bound on the contribution of h beyond its stored range
};

struct DensitySequence {
  std::vector<double> h;  // h[k-1] = h_k
  bool finite_support = true;
  std::optional<double> tail_cap;  // sum_{k > stored} h_k, required when support is infinite

  double l1() const {
    double s = 0.0;
    for (double v : h) s += v;
    return s + tail_cap.value_or(0.0);
  }
};

struct ExcessiveClassification {
  bool is_excessive = false;
  double delta = 0.0;
  bool is_potential = false;
  bool delta_reliable = true;
  std::vector<double> ratios;  // (f_n - f_{n-1}) / (s_n - s_{n-1})
};

namespace excessive_tol {
inline constexpr double monotone = 1e-10;  // relative slack on ratio increases
inline constexpr double flat_tail = 1e-6;  // spread allowed over the terminal 10%
inline constexpr double potential = 1e-8;  // terminal ratio below this (relative) means delta = 0
}  // namespace excessive_tol

inline PotentialFunction apply_potential(const KernelSpec& spec, const DensitySequence& h, Window w) {
  require(h.finite_support || h.tail_cap.has_value(), FailureKind::domain, "potential-tail-policy",
          "infinite support requires an explicit tail cap");
  for (double v : h.h)
    require(v >= 0.0 && std::isfinite(v), FailureKind::domain, "density-nonnegative", "h must be nonnegative");
  PotentialFunction out;
  out.f.assign(w.n, 0.0);
  const std::size_t K = h.h.size();

  if (auto* m = spec.as<MinKernel>()) {
    // f_n = sum_{k<=n} s_k h_k + s_n sum_{k>n} h_k.
    const std::size_t top = std::max(w.last(), K);
    detail::check_increasing_positive(m->s, top, "min-s-increasing");
    std::vector<long double> head(top + 1, 0.0L), tail(top + 2, 0.0L);
    for (std::size_t k = 1; k <= top; ++k)
      head[k] = head[k - 1] + (k <= K ? static_cast<long double>(m->s(k)) * h.h[k - 1] : 0.0L);
    for (std::size_t k = top; k >= 1; --k) tail[k] = tail[k + 1] + (k <= K ? h.h[k - 1] : 0.0L);
    for (std::size_t i = 0; i < w.n; ++i) {
      const std::size_t n = w.l + i + 1;
      out.f[i] = static_cast<double>(head[n] + static_cast<long double>(m->s(n)) * tail[n + 1]);
    }
    if (h.tail_cap) {
      out.tail_bound = m->s(w.last()) * *h.tail_cap;
      for (std::size_t i = 0; i < w.n; ++i) out.f[i] += m->s(w.l + i + 1) * *h.tail_cap;
    }
    return out;
  }

  const KernelEvaluator U(spec, std::max(w.last(), K));
  for (std::size_t i = 0; i < w.n; ++i) {
    long double acc = 0.0L;
    for (std::size_t k = 1; k <= K; ++k)
      if (h.h[k - 1] != 0.0) acc += static_cast<long double>(U(w.l + i + 1, k)) * h.h[k - 1];
    out.f[i] = static_cast<double>(acc);
  }
  if (h.tail_cap) {
    // Tail mass sits at indices where U_{j,k} <= U_{j,j}.
    for (std::size_t i = 0; i < w.n; ++i) {
      const std::size_t j = w.l + i + 1;
      out.tail_bound = std::max(out.tail_bound, U(j, j) * *h.tail_cap);
    }
  }
  return out;
}

inline ExcessiveClassification classify_excessive(const Sequence& s, const PotentialFunction& f) {
  const std::size_t N = f.f.size();
  require(N >= 1, FailureKind::domain, "excessive-range", "f must be nonempty");
  detail::check_increasing_positive(s, N, "min-s-increasing");
  ExcessiveClassification c;
  c.ratios.resize(N);
  double fprev = 0.0, sprev = 0.0;
  for (std::size_t n = 1; n <= N; ++n) {
    require(std::isfinite(f.f[n - 1]) && f.f[n - 1] >= 0.0, FailureKind::domain, "potential-nonnegative",
            "f must be finite and nonnegative");
    c.ratios[n - 1] = (f.f[n - 1] - fprev) / (s(n) - sprev);
    fprev = f.f[n - 1];
    sprev = s(n);
  }
  const double scale = std::max(1.0, std::abs(c.ratios[0]));
  c.is_excessive = true;
  for (std::size_t n = 1; n < N; ++n)
    if (c.ratios[n] > c.ratios[n - 1] + excessive_tol::monotone * scale) c.is_excessive = false;
  if (c.ratios.back() < -excessive_tol::monotone * scale) c.is_excessive = false;

  const std::size_t seg = std::max<std::size_t>(1, N / 10);
  double lo = c.ratios[N - seg], hi = lo;
  for (std::size_t n = N - seg; n < N; ++n) lo = std::min(lo, c.ratios[n]), hi = std::max(hi, c.ratios[n]);
  c.delta_reliable = hi - lo <= excessive_tol::flat_tail * scale;
  c.delta = std::max(0.0, c.ratios.back());
  c.is_potential = c.is_excessive && c.delta <= excessive_tol::potential * scale;
  if (c.is_potential) c.delta = 0.0;
  return c;
}

struct RieszDecomposition {
  PotentialFunction f_tilde;
  double delta = 0.0;
};

inline RieszDecomposition riesz_decompose(const Sequence& s, const PotentialFunction& f) {
  const auto c = classify_excessive(s, f);
  require(c.is_excessive, FailureKind::domain, "riesz-requires-excessive", "f is not excessive");
  RieszDecomposition r;
  r.delta = c.delta;
  r.f_tilde.f.resize(f.f.size());
  for (std::size_t n = 0; n < f.f.size(); ++n) r.f_tilde.f[n] = std::max(0.0, f.f[n] - r.delta * s(n + 1));
  return r;
}

// h_m = r_m - r_{m+1}; the last stored index absorbs the remaining mass r_N,
// so the round trip is exact on the stored range and ||h||_1 = f_1/s_1.
inline DensitySequence recover_density(const Sequence& s, const PotentialFunction& f) {
  const auto c = classify_excessive(s, f);
  require(c.is_potential, FailureKind::domain, "density-requires-potential", "f is not a potential");
  const std::size_t N = f.f.size();
  const double scale = std::max(1.0, std::abs(c.ratios[0]));
  DensitySequence d;
  d.h.resize(N);
  for (std::size_t m = 0; m < N; ++m) {
    const double v = m + 1 < N ? c.ratios[m] - c.ratios[m + 1] : c.ratios[m];
    require(v >= -excessive_tol::monotone * scale, FailureKind::structural, "density-nonnegative",
            "recovered h is negative; f was not a potential");
    d.h[m] = std::max(0.0, v);
  }
  return d;
}

struct RhoReport {
  double rho = 0.0;
  std::optional<double> closed_form;  // f_{l+1}/s_{l+1} for the min kernel
};

// rho_{l,n} = sum_{j,k} (U(l,n)^{-1})_{j,k} f_{l+k}; f_window[k-1] = f_{l+k}.
inline RhoReport rho(const KernelSpec& spec, const std::vector<double>& f_window, Window w) {
  require(f_window.size() == w.n, FailureKind::domain, "rho-dimensions", "f must cover the window");
  const WindowInverse inv = window_inverse(spec, w);
  RhoReport r;
  long double acc = 0.0L;
  for (Index j = 0; j < inv.inverse.rows(); ++j)
    for (Index k = 0; k < inv.inverse.cols(); ++k)
      acc += static_cast<long double>(inv.inverse(j, k)) * f_window[static_cast<std::size_t>(k)];
  r.rho = static_cast<double>(acc);
  const double scale = std::max(1.0, *std::max_element(f_window.begin(), f_window.end()));
  require(r.rho >= -1e-10 * scale * std::max(1.0, inv.inverse.cwiseAbs().maxCoeff()), FailureKind::structural,
          "rho-nonnegative", "rho is negative; f is not excessive for this kernel");
  if (auto* m = spec.as<MinKernel>()) {
    r.closed_form = f_window[0] / m->s(w.l + 1);
    require(std::abs(r.rho - *r.closed_form) <= 1e-10 * std::max(1.0, *r.closed_form), FailureKind::numerical,
            "rho-min-closed-form", "rho differs from f_{l+1}/s_{l+1}");
  }
  return r;
}

struct RowSumStructure {
  double head_error = 0.0;  // max |row sum_i of V(l,n)^{-1} - row sum_i of V(l,k)^{-1}|, i <= k
  double tail_max = 0.0;    // max |row sum_i|, i > k
};

// Row sums of AR(k) window inverses: the first k agree with the k x k window,
// the rest vanish when sum p = 1.
inline RowSumStructure ark_row_sum_structure(const std::vector<double>& p, Window w) {
  const std::size_t k = p.size();
  require(w.n > k, FailureKind::domain, "ark-row-sums", "window must exceed k");
  const Mat V = build_kernel(ARk{p}, w).K;
  const Mat Vk = build_kernel(ARk{p}, Window{w.l, k}).K;
  const Vec big = V.partialPivLu().solve(Vec::Ones(V.rows()));
  const Vec small = Vk.partialPivLu().solve(Vec::Ones(Vk.rows()));
  RowSumStructure r;
  for (std::size_t i = 0; i < w.n; ++i) {
    if (i < k) r.head_error = std::max(r.head_error, std::abs(big(static_cast<Index>(i)) - small(static_cast<Index>(i))));
    else r.tail_max = std::max(r.tail_max, std::abs(big(static_cast<Index>(i))));
  }
  return r;
}

}  // namespace permk
