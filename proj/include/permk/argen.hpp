#pragma once

// AR(k) generating-function analytics: phi by recursion and by partial
// fractions of x / P(x), P(x) = 1 - sum_l p_l x^l, and the limiting variance c*.

#include "permk/core.hpp"
#include "permk/spec.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace permk {

using cplx = std::complex<double>;

struct PhiSequence {
  std::vector<double> phi;  // phi[n-1] = phi_n
  std::vector<double> psi;  // phi_n - c1, filled when sum p = 1
  std::optional<double> c1;
  double imag_residue = 0.0;  // closed form only

  double operator()(std::size_t n) const { return n == 0 || n > phi.size() ? 0.0 : phi[n - 1]; }
};

struct RootSet {
  enum class Class { outside_unit_disk, unit_root_simple };
  std::vector<cplx> roots;
  std::vector<int> multiplicity;
  Class classification = Class::outside_unit_disk;
  double max_residual = 0.0;  // |P^{(i)}(q)| for i < d, relative to coefficient scale
};

struct PartialFractionTable {
  RootSet roots;
  std::vector<std::vector<cplx>> a;  // a[l][j-1]: coefficient of (x - q_l)^{-j} in x/P(x)
  std::vector<std::vector<cplx>> B;  // B_j(q_l) = a_{l,j} (-1)^j / q_l^j
  double polynomial_part = 0.0;      // constant term of x/P(x); nonzero only when k = 1
  double reconstruction_residual = 0.0;
};

struct CStarReport {
  double value = 0.0;          // series route
  double value_direct = 0.0;   // sum of phi_n^2
  double series_tail_bound = 0.0;
  double direct_tail_bound = 0.0;
  std::size_t direct_terms = 0;
  double norm1 = 0.0;          // sum phi_n, truncated
  double inv_P1 = 0.0;         // 1 / P(1)
  double lower = 0.0;          // 1 + p_1^2
  double upper = 0.0;          // 1 / (1 - (sum p)^2)
};

namespace poly {

// Coefficients ascending in x.
using CPoly = std::vector<cplx>;

inline CPoly char_poly(const std::vector<double>& p) {
  CPoly c(p.size() + 1);
  c[0] = 1.0;
  for (std::size_t l = 0; l < p.size(); ++l) c[l + 1] = -p[l];
  return c;
}

inline cplx eval(const CPoly& c, cplx x) {
  cplx r = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

inline CPoly derivative(const CPoly& c) {
  if (c.size() <= 1) return {cplx(0.0)};
  CPoly d(c.size() - 1);
  for (std::size_t i = 1; i < c.size(); ++i) d[i - 1] = c[i] * static_cast<double>(i);
  return d;
}

// Quotient of c by (x - q), remainder dropped.
inline CPoly deflate(const CPoly& c, cplx q) {
  const std::size_t deg = c.size() - 1;
  CPoly out(deg);
  cplx carry = c[deg];
  for (std::size_t i = deg; i-- > 0;) {
    out[i] = carry;
    carry = c[i] + carry * q;
  }
  return out;
}

// Coefficients of c(q + t) in t.
inline CPoly taylor_shift(CPoly c, cplx q) {
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = n - 1; j > i; --j) c[j - 1] += q * c[j];
  return c;
}

}  // namespace poly

inline PhiSequence phi_recursive(const std::vector<double>& p, std::size_t N) {
  validate_p(p);
  require(N >= 1, FailureKind::domain, "phi-recursion", "N must be at least 1");
  PhiSequence out;
  out.phi.assign(N, 0.0);
  out.phi[0] = 1.0;
  const std::size_t k = p.size();
  for (std::size_t n = 2; n <= N; ++n) {
    double acc = 0.0;
    for (std::size_t l = 1; l <= k && l < n; ++l) acc += p[l - 1] * out.phi[n - l - 1];
    out.phi[n - 1] = acc;
  }
  if (std::abs(sum_p(p) - 1.0) <= 1e-14) {
    double m = 0.0;
    for (std::size_t l = 0; l < k; ++l) m += static_cast<double>(l + 1) * p[l];
    out.c1 = 1.0 / m;
    out.psi.resize(N);
    for (std::size_t n = 0; n < N; ++n) out.psi[n] = out.phi[n] - *out.c1;
  }
  return out;
}

namespace detail {

inline double coef_scale(const poly::CPoly& c, cplx x) {
  double s = 0.0, xp = 1.0;
  for (const auto& ci : c) {
    s += std::abs(ci) * xp;
    xp *= std::abs(x);
  }
  return s;
}

inline cplx newton(const poly::CPoly& f, cplx x) {
  const auto df = poly::derivative(f);
  for (int it = 0; it < 50; ++it) {
    const cplx d = poly::eval(df, x);
    if (std::abs(d) == 0.0) break;
    const cplx step = poly::eval(f, x) / d;
    x -= step;
    if (std::abs(step) <= 1e-17 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

// max over i < d of |P^{(i)}(q)| / scale_i.
inline double vanishing_residual(const poly::CPoly& c, cplx q, int d) {
  double worst = 0.0;
  poly::CPoly der = c;
  for (int i = 0; i < d; ++i) {
    worst = std::max(worst, std::abs(poly::eval(der, q)) / coef_scale(der, q));
    der = poly::derivative(der);
  }
  return worst;
}

}  // namespace detail

inline constexpr double kRootClusterRadius = 1e-7;

inline RootSet char_roots(const std::vector<double>& p) {
  validate_p(p);
  const std::size_t k = p.size();
  const poly::CPoly P = poly::char_poly(p);

  std::vector<cplx> raw;
  if (k == 1) {
    raw.push_back(1.0 / p[0]);
  } else {
    // Companion matrix of the monic polynomial x^k + sum_{i<k} (c_i / c_k) x^i.
    Mat C = Mat::Zero(static_cast<Index>(k), static_cast<Index>(k));
    for (Index i = 1; i < static_cast<Index>(k); ++i) C(i, i - 1) = 1.0;
    for (Index i = 0; i < static_cast<Index>(k); ++i) C(i, k - 1) = -P[i].real() / P[k].real();
    Eigen::EigenSolver<Mat> es(C, false);
    for (Index i = 0; i < static_cast<Index>(k); ++i) raw.push_back(es.eigenvalues()[i]);
  }

  // Loose pre-grouping absorbs the eps^(1/d) spread of repeated eigenvalues;
  // each group is then verified as a genuine root of multiplicity d.
  constexpr double loose = 1e-4;
  std::vector<int> group(raw.size(), -1);
  int ngroups = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (group[i] >= 0) continue;
    group[i] = ngroups;
    for (bool grew = true; grew;) {
      grew = false;
      for (std::size_t j = 0; j < raw.size(); ++j) {
        if (group[j] >= 0) continue;
        for (std::size_t m = 0; m < raw.size(); ++m) {
          if (group[m] != ngroups) continue;
          if (std::abs(raw[j] - raw[m]) <= loose * std::max(std::abs(raw[j]), std::abs(raw[m]))) {
            group[j] = ngroups;
            grew = true;
            break;
          }
        }
      }
    }
    ++ngroups;
  }

  RootSet rs;
  for (int g = 0; g < ngroups; ++g) {
    std::vector<cplx> members;
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (group[i] == g) members.push_back(raw[i]);
    const int d = static_cast<int>(members.size());
    cplx center = std::accumulate(members.begin(), members.end(), cplx(0.0)) / static_cast<double>(d);
    poly::CPoly der = P;
    for (int i = 1; i < d; ++i) der = poly::derivative(der);
    center = detail::newton(der, center);
    if (d > 1 && detail::vanishing_residual(P, center, d) > 1e-9) {
      // Not a genuine multiple root: keep members as separate simple roots.
      for (const auto& m : members) {
        rs.roots.push_back(detail::newton(P, m));
        rs.multiplicity.push_back(1);
      }
      continue;
    }
    rs.roots.push_back(center);
    rs.multiplicity.push_back(d);
  }

  // Snap near-real roots of a real polynomial onto the real axis.
  for (auto& q : rs.roots)
    if (std::abs(q.imag()) <= 1e-12 * std::abs(q)) q = cplx(q.real(), 0.0);

  for (std::size_t i = 0; i < rs.roots.size(); ++i)
    for (std::size_t j = i + 1; j < rs.roots.size(); ++j) {
      const double sep = std::abs(rs.roots[i] - rs.roots[j]);
      const double scale = std::max(std::abs(rs.roots[i]), std::abs(rs.roots[j]));
      require(sep > 10.0 * kRootClusterRadius * scale, FailureKind::numerical, "root-cluster-ambiguity",
              "two distinct root clusters lie within ten clustering radii; tighten parameters");
    }

  for (std::size_t i = 0; i < rs.roots.size(); ++i)
    rs.max_residual = std::max(rs.max_residual, detail::vanishing_residual(P, rs.roots[i], rs.multiplicity[i]));
  require(rs.max_residual <= 1e-10, FailureKind::numerical, "char-root-residual",
          "polished roots do not annihilate P to 1e-10");

  const bool unit = std::abs(sum_p(p) - 1.0) <= 1e-14;
  int unit_roots = 0;
  for (std::size_t i = 0; i < rs.roots.size(); ++i) {
    const double mod = std::abs(rs.roots[i]);
    if (std::abs(rs.roots[i] - 1.0) <= 1e-9) {
      ++unit_roots;
      require(rs.multiplicity[i] == 1, FailureKind::structural, "unit-root-simple", "q = 1 is not simple");
    } else {
      require(mod > 1.0, FailureKind::structural, "roots-outside-unit-disk",
              "a characteristic root lies in the closed unit disk");
    }
  }
  require(unit ? unit_roots == 1 : unit_roots == 0, FailureKind::structural, "unit-root-iff-sum-one",
          "q = 1 is a root exactly when sum p = 1");
  rs.classification = unit ? RootSet::Class::unit_root_simple : RootSet::Class::outside_unit_disk;
  return rs;
}

inline PartialFractionTable partial_fractions(const std::vector<double>& p) {
  PartialFractionTable t;
  t.roots = char_roots(p);
  const poly::CPoly P = poly::char_poly(p);
  const std::size_t k = p.size();
  if (k == 1) t.polynomial_part = -1.0 / p[0];

  for (std::size_t l = 0; l < t.roots.roots.size(); ++l) {
    const cplx q = t.roots.roots[l];
    const int d = t.roots.multiplicity[l];
    poly::CPoly G = P;
    for (int i = 0; i < d; ++i) G = poly::deflate(G, q);
    const poly::CPoly g = poly::taylor_shift(G, q);
    // Power series of (q + t) / G(q + t) up to t^{d-1}.
    std::vector<cplx> c(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      cplx num = i == 0 ? q : (i == 1 ? cplx(1.0) : cplx(0.0));
      for (int m = 1; m <= i; ++m)
        if (static_cast<std::size_t>(m) < g.size()) num -= g[static_cast<std::size_t>(m)] * c[static_cast<std::size_t>(i - m)];
      c[static_cast<std::size_t>(i)] = num / g[0];
    }
    std::vector<cplx> al(static_cast<std::size_t>(d)), Bl(static_cast<std::size_t>(d));
    for (int j = 1; j <= d; ++j) {
      al[static_cast<std::size_t>(j - 1)] = c[static_cast<std::size_t>(d - j)];
      Bl[static_cast<std::size_t>(j - 1)] = al[static_cast<std::size_t>(j - 1)] * std::pow(-1.0 / q, j);
    }
    t.a.push_back(std::move(al));
    t.B.push_back(std::move(Bl));
  }

  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> rad(0.0, 0.95), ang(0.0, 2.0 * M_PI);
  for (int trial = 0; trial < 20; ++trial) {
    const cplx x = std::polar(rad(rng), ang(rng));
    const cplx lhs = x / poly::eval(P, x);
    cplx rhs = t.polynomial_part;
    for (std::size_t l = 0; l < t.a.size(); ++l)
      for (std::size_t j = 0; j < t.a[l].size(); ++j)
        rhs += t.a[l][j] / std::pow(x - t.roots.roots[l], static_cast<int>(j + 1));
    t.reconstruction_residual =
        std::max(t.reconstruction_residual, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  require(t.reconstruction_residual <= 1e-9, FailureKind::numerical, "partial-fraction-reconstruction",
          "x/P(x) is not reproduced by the partial fraction table");
  return t;
}

inline double binom(int top, int bottom) {
  if (bottom < 0 || bottom > top) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= bottom; ++i) r = r * (top - bottom + i) / i;
  return r;
}

inline PhiSequence phi_closed(const PartialFractionTable& t, std::size_t N) {
  PhiSequence out;
  out.phi.resize(N);
  for (std::size_t n = 1; n <= N; ++n) {
    cplx acc = 0.0;
    for (std::size_t l = 0; l < t.B.size(); ++l) {
      const cplx qn = std::pow(t.roots.roots[l], -static_cast<double>(n));
      for (std::size_t j = 1; j <= t.B[l].size(); ++j)
        acc += t.B[l][j - 1] * binom(static_cast<int>(j - 1 + n), static_cast<int>(j - 1)) * qn;
    }
    out.phi[n - 1] = acc.real();
    out.imag_residue = std::max(out.imag_residue, std::abs(acc.imag()));
  }
  require(out.imag_residue <= 1e-10, FailureKind::numerical, "phi-real",
          "conjugate root contributions failed to cancel");
  return out;
}

inline PhiSequence phi_closed(const std::vector<double>& p, std::size_t N) {
  const auto t = partial_fractions(p);
  auto out = phi_closed(t, N);
  const auto rec = phi_recursive(p, N);
  out.c1 = rec.c1;
  if (out.c1) {
    out.psi.resize(N);
    for (std::size_t n = 0; n < N; ++n) out.psi[n] = out.phi[n] - *out.c1;
  }
  double worst = 0.0;
  std::size_t worst_n = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const double e = std::abs(out.phi[n] - rec.phi[n]);
    if (e > worst) worst = e, worst_n = n + 1;
  }
  require(worst <= 1e-10, FailureKind::numerical, "phi-closed-form",
          "closed form departs from recursion at n = " + std::to_string(worst_n));
  return out;
}

namespace detail {

// sum_{n>=1} C(j-1+n, j-1) C(j'-1+n, j'-1) z^{-n} for |z| > 1, with a tail bound.
inline cplx F_series(int j, int jp, cplx z, double tol, double& tail) {
  const double az = std::abs(z);
  cplx sum = 0.0;
  cplx zn = 1.0 / z;
  for (int n = 1;; ++n) {
    const double c = binom(j - 1 + n, j - 1) * binom(jp - 1 + n, jp - 1);
    const cplx term = c * zn;
    sum += term;
    // Term-ratio moduli decrease in n, so the tail is dominated by a geometric series.
    const double ratio = (static_cast<double>(j + n) / (n + 1)) * (static_cast<double>(jp + n) / (n + 1)) / az;
    if (ratio < 1.0) {
      tail = std::abs(term) * ratio / (1.0 - ratio);
      if (tail < tol) return sum;
    }
    zn /= z;
    require(n < 10000000, FailureKind::numerical, "cstar-series", "series failed to converge");
  }
}

}  // namespace detail

inline CStarReport c_star(const std::vector<double>& p) {
  validate_p(p);
  const double S = sum_p(p);
  require(S < 1.0 - 1e-14, FailureKind::domain, "cstar-finite", "c* is infinite when sum p = 1");
  const auto t = partial_fractions(p);
  CStarReport r;

  cplx acc = 0.0;
  for (std::size_t l = 0; l < t.B.size(); ++l)
    for (std::size_t lp = 0; lp < t.B.size(); ++lp)
      for (std::size_t j = 1; j <= t.B[l].size(); ++j)
        for (std::size_t jp = 1; jp <= t.B[lp].size(); ++jp) {
          double tail = 0.0;
          const cplx z = t.roots.roots[l] * t.roots.roots[lp];
          const cplx F = detail::F_series(static_cast<int>(j), static_cast<int>(jp), z, 1e-16, tail);
          const cplx w = t.B[l][j - 1] * t.B[lp][jp - 1];
          acc += w * F;
          r.series_tail_bound += std::abs(w) * tail;
        }
  r.value = acc.real();

  // Direct route: phi by recursion, stopped when the closed-form envelope
  // sum_{n>N} b_n^2 with b_n = sum |B_j| C(j-1+n,j-1) |q|^{-n} is negligible.
  const auto envelope = [&](std::size_t n) {
    double b = 0.0;
    for (std::size_t l = 0; l < t.B.size(); ++l)
      for (std::size_t j = 1; j <= t.B[l].size(); ++j)
        b += std::abs(t.B[l][j - 1]) * binom(static_cast<int>(j - 1 + n), static_cast<int>(j - 1)) *
             std::pow(std::abs(t.roots.roots[l]), -static_cast<double>(n));
    return b;
  };
  const std::size_t k = p.size();
  std::vector<long double> phi{1.0L};
  long double sq = 1.0L, s1 = 1.0L;
  for (std::size_t n = 2;; ++n) {
    long double v = 0.0L;
    for (std::size_t l = 1; l <= k && l < n; ++l) v += static_cast<long double>(p[l - 1]) * phi[n - l - 1];
    phi.push_back(v);
    sq += v * v;
    s1 += v;
    if (n % 64 == 0) {
      const double b0 = envelope(n), b1 = envelope(n + 1);
      const double ratio = b0 > 0 ? b1 / b0 : 0.0;
      if (ratio < 1.0 && b1 * b1 / (1.0 - ratio * ratio) < 1e-16 && b1 / (1.0 - ratio) < 1e-14) {
        r.direct_tail_bound = b1 * b1 / (1.0 - ratio * ratio);
        r.direct_terms = n;
        break;
      }
    }
    require(n < 50000000, FailureKind::numerical, "cstar-direct", "phi tail failed to decay");
  }
  r.value_direct = static_cast<double>(sq);
  r.norm1 = static_cast<double>(s1);
  r.inv_P1 = 1.0 / (1.0 - S);
  r.lower = 1.0 + p[0] * p[0];
  r.upper = 1.0 / (1.0 - S * S);

  require(std::abs(r.value - r.value_direct) <= 1e-9, FailureKind::numerical, "cstar-two-routes",
          "series and direct c* disagree beyond 1e-9");
  require(std::abs(r.norm1 - r.inv_P1) <= 1e-9 * r.inv_P1, FailureKind::numerical, "phi-l1-norm",
          "sum of phi differs from 1/P(1)");
  require(r.value >= r.lower - 1e-12 && r.value <= r.upper + 1e-12, FailureKind::structural, "cstar-bounds",
          "c* outside [1 + p1^2, 1/(1 - (sum p)^2)]");
  return r;
}

// Everything argen knows about p.
struct ArkAnalysis {
  std::vector<double> p;
  bool non_increasing = true;
  PartialFractionTable table;
  std::optional<double> c1;
  std::optional<CStarReport> cstar;
};

inline ArkAnalysis analyze_ark(const std::vector<double>& p) {
  ArkAnalysis a;
  a.p = p;
  a.non_increasing = p_non_increasing(p);
  a.table = partial_fractions(p);
  const auto ph = phi_recursive(p, 1);
  a.c1 = ph.c1;
  if (!a.c1) a.cstar = c_star(p);
  return a;
}

}  // namespace permk
