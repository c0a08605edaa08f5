#pragma once

// Extended kernel K(l,n+1), its inverse, the geometric-mean symmetrization and
// the comparison quantities nu, rho and a.

#include "permk/core.hpp"
#include "permk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace permk {

struct SymmetrizationLedger {
  Mat K_ext;
  Mat A;
  double rho = 0.0;
  Mat A_sym;
  double nu = 1.0;      // closed form (1 + rho) - m U m^T
  double nu_det = 1.0;  // |A_sym| / |A|, evaluated in log space
  Vec a_vec;
  Mat K_isymi;
  Vec c, r, m;
  double condition = 0.0;      // condition estimate of K_ext
  double a_dense_error = 0.0;  // max |A - dense inverse of K_ext|
  double block_error = 0.0;    // max |K_isymi block - (U + a a^T)|
  double log_det_gap = 0.0;    // |log|K_ext| - log|U||
};

namespace detail {

inline double log_abs_det(const Eigen::PartialPivLU<Mat>& lu) {
  double s = 0.0;
  const Mat& LU = lu.matrixLU();
  for (Index i = 0; i < LU.rows(); ++i) s += std::log(std::abs(LU(i, i)));
  return s;
}

inline double max_abs(const Mat& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

}  // namespace detail

// Row/column 0 is the adjoined state; K_{j,0} = 1, K_{0,k} = f_k, K_{j,k} = U_{j,k} + f_k.
inline Mat extend(const Mat& U, const std::vector<double>& f, double* log_det_gap = nullptr) {
  const Index n = U.rows();
  require(U.cols() == n && static_cast<Index>(f.size()) == n, FailureKind::domain, "extend-dimensions",
          "U must be square and f must match its size");
  for (double v : f)
    require(v >= 0.0 && std::isfinite(v), FailureKind::domain, "potential-nonnegative", "f must be nonnegative");
  Mat K(n + 1, n + 1);
  K(0, 0) = 1.0;
  for (Index k = 0; k < n; ++k) K(0, k + 1) = f[static_cast<std::size_t>(k)];
  for (Index j = 0; j < n; ++j) {
    K(j + 1, 0) = 1.0;
    for (Index k = 0; k < n; ++k) K(j + 1, k + 1) = U(j, k) + f[static_cast<std::size_t>(k)];
  }
  // |K_ext| = |U| after subtracting the first row from the others.
  const Eigen::PartialPivLU<Mat> lk(K), lu(U);
  const double gap = std::abs(detail::log_abs_det(lk) - detail::log_abs_det(lu));
  require(gap <= 1e-10, FailureKind::numerical, "extended-determinant",
          "|K_ext| and |U| differ in log by " + std::to_string(gap));
  if (log_det_gap) *log_det_gap = gap;
  return K;
}

// U_inv is the inverse of U (closed form when the family has one).
inline SymmetrizationLedger analyze(const Mat& U, const Mat& U_inv, const std::vector<double>& f) {
  const Index n = U.rows();
  require(n >= 1 && U_inv.rows() == n, FailureKind::domain, "extend-dimensions", "U and its inverse must agree");
  const double uscale = detail::max_abs(U);
  require((U - U.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * uscale, FailureKind::domain, "kernel-symmetric",
          "U must be symmetric");
  require(U.llt().info() == Eigen::Success, FailureKind::domain, "kernel-positive-definite",
          "U must be positive definite");

  SymmetrizationLedger L;
  L.K_ext = extend(U, f, &L.log_det_gap);
  const Eigen::PartialPivLU<Mat> lk(L.K_ext);
  L.condition = condition_estimate(lk);
  require(L.condition <= tol::max_condition, FailureKind::numerical, "kernel-condition",
          "condition estimate " + std::to_string(L.condition) + " exceeds 1e12");

  Vec fv(n);
  for (Index k = 0; k < n; ++k) fv(k) = f[static_cast<std::size_t>(k)];
  L.c = U_inv.transpose() * fv;  // c_k = sum_j (U^{-1})_{j,k} f_j
  L.r = U_inv.rowwise().sum();   // r_k = sum_j (U^{-1})_{k,j}
  L.rho = L.c.sum();

  L.A.resize(n + 1, n + 1);
  L.A(0, 0) = 1.0 + L.rho;
  L.A.block(0, 1, 1, n) = -L.c.transpose();
  L.A.block(1, 0, n, 1) = -L.r;
  L.A.block(1, 1, n, n) = U_inv;

  const Mat A_dense = lk.inverse();
  const double ascale = std::max(1.0, detail::max_abs(L.A));
  L.a_dense_error = detail::max_abs(L.A - A_dense);
  require(L.a_dense_error <= 1e-9 * ascale, FailureKind::numerical, "extended-inverse",
          "closed-form A differs from dense inversion by " + std::to_string(L.a_dense_error));

  const Vec rows = L.A.rowwise().sum();
  for (Index i = 0; i <= n; ++i) {
    const double want = i == 0 ? 1.0 : 0.0;
    require(std::abs(rows(i) - want) <= 1e-9 * ascale, FailureKind::numerical, "extended-row-sums",
            "row " + std::to_string(i) + " of A sums to " + std::to_string(rows(i)));
  }

  const double slack = 1e-10 * ascale * std::max(1.0, fv.size() ? fv.maxCoeff() : 0.0);
  for (Index k = 0; k < n; ++k) {
    require(L.c(k) >= -slack, FailureKind::structural, "excessive-first-row",
            "c_" + std::to_string(k + 1) + " < 0: f is not excessive for this kernel");
    require(L.r(k) >= -1e-10 * ascale, FailureKind::structural, "kernel-row-sums",
            "U^{-1} has a negative row sum");
  }

  // A_sym: diagonal kept, off-diagonals -(A_ij A_ji)^{1/2}.
  L.A_sym = L.A;
  for (Index i = 0; i <= n; ++i)
    for (Index j = i + 1; j <= n; ++j) {
      double x = L.A(i, j), y = L.A(j, i);
      const double t = 1e-12 * ascale;
      require(!((x > t && y < -t) || (x < -t && y > t)), FailureKind::structural, "symmetrize-sign-pattern",
              "A has off-diagonals of opposite sign at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      x = std::min(x, 0.0);
      y = std::min(y, 0.0);
      const double g = (x == 0.0 || y == 0.0) ? 0.0 : -std::sqrt(x * y);
      L.A_sym(i, j) = L.A_sym(j, i) = g;
    }

  L.m.resize(n);
  for (Index k = 0; k < n; ++k) L.m(k) = std::sqrt(std::max(0.0, L.c(k)) * std::max(0.0, L.r(k)));
  const Vec mU = U.transpose() * L.m;
  L.nu = 1.0 + L.rho - L.m.dot(mU);

  const Eigen::PartialPivLU<Mat> ls(L.A_sym);
  // |A| = 1 / |K_ext|.
  L.nu_det = std::exp(detail::log_abs_det(ls) + detail::log_abs_det(lk));
  require(std::abs(L.nu_det - L.nu) <= 1e-8 * std::max(1.0, L.nu), FailureKind::numerical, "nu-two-routes",
          "determinant-ratio nu " + std::to_string(L.nu_det) + " vs closed form " + std::to_string(L.nu));
  require(L.nu >= 1.0 - 1e-10 && L.nu <= 1.0 + L.rho + 1e-10 * std::max(1.0, L.rho), FailureKind::numerical,
          "nu-bounds", "nu = " + std::to_string(L.nu) + " outside [1, 1 + rho]");

  L.a_vec = mU / std::sqrt(L.nu);
  for (Index j = 0; j < n; ++j)
    require(L.a_vec(j) >= -1e-12 && L.a_vec(j) <= std::sqrt(fv(j)) * (1.0 + 1e-9) + 1e-12, FailureKind::numerical,
            "a-vector-bound", "a_" + std::to_string(j + 1) + " exceeds f^{1/2}");

  L.K_isymi = ls.inverse();
  const Mat block = U + L.a_vec * L.a_vec.transpose();
  L.block_error = detail::max_abs(L.K_isymi.block(1, 1, n, n) - block);
  require(L.block_error <= 1e-8 * std::max(1.0, detail::max_abs(block)), FailureKind::numerical,
          "isymi-block", "K_isymi block differs from U + a a^T by " + std::to_string(L.block_error));
  return L;
}

inline SymmetrizationLedger analyze(const Mat& U, const std::vector<double>& f) {
  const Eigen::PartialPivLU<Mat> lu(U);
  require(condition_estimate(lu) <= tol::max_condition, FailureKind::numerical, "kernel-condition",
          "condition estimate exceeds 1e12");
  return analyze(U, lu.inverse(), f);
}

// f_window[k-1] = f_{l+k}.
inline SymmetrizationLedger analyze(const KernelSpec& spec, Window w, const std::vector<double>& f_window) {
  require(is_symmetric_family(spec), FailureKind::unsupported, "kernel-symmetric",
          "symmetrization ledger needs a symmetric base kernel");
  const DenseKernelWindow K = build_kernel(spec, w);
  return analyze(K.K, window_inverse(spec, w).inverse, f_window);
}

struct SandwichWeights {
  double lower = 1.0;         // (1/(1+rho))^alpha
  double slack = 0.0;         // 1 - lower
  double linear_bound = 0.0;  // 2 alpha rho
};

inline SandwichWeights sandwich_factor(double alpha, double rho) {
  require(alpha > 0.0 && rho >= 0.0, FailureKind::domain, "sandwich-domain", "need alpha > 0 and rho >= 0");
  SandwichWeights s;
  s.lower = std::pow(1.0 / (1.0 + rho), alpha);
  s.slack = -std::expm1(-alpha * std::log1p(rho));
  s.linear_bound = 2.0 * alpha * rho;
  return s;
}

}  // namespace permk
