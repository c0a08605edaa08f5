#pragma once

// Seeded Gaussian and half-integer permanental sampling, Gamma-marginal KS
// tests, streamed limsup trend experiments and sparse subsequences.

#include "permk/core.hpp"
#include "permk/kernels.hpp"
#include "permk/normalizers.hpp"
#include "permk/symmetrize.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <random>
#include <thread>
#include <vector>

namespace permk {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, trial); trials can run in any order.
inline Engine trial_engine(std::uint64_t seed, std::uint64_t trial) {
  return Engine(splitmix64(splitmix64(seed) ^ splitmix64(trial + 0x632be59bd9b4e019ULL)));
}

inline double standard_normal(Engine& g) {
  std::normal_distribution<double> z;
  return z(g);
}

// Exact Gaussian sequence eta_first, eta_{first+1}, ... with covariance U, O(1)
// work per step (O(k) for AR(k)); Markov families start directly at `first`.
class GaussianStream {
 public:
  static bool supports(const KernelSpec& spec) {
    return spec.is<MinKernel>() || spec.is<ScaledMinKernel>() || spec.is<ShiftedScaled>() ||
           spec.is<ExpKernel>() || spec.is<AR1>() || spec.is<AR1Shifted>() || spec.is<ARk>() ||
           spec.is<ARkGen>();
  }

  explicit GaussianStream(const KernelSpec& spec, std::size_t first = 1) : spec_(spec), next_(first) {
    require(first >= 1, FailureKind::domain, "kernel-index", "indices are 1-based");
    require(supports(spec), FailureKind::unsupported, "gaussian-stream",
            "no recursive sampler for family " + family_name(spec));
    if (spec.is<ARk>() || spec.is<ARkGen>()) {
      p_ = spec.is<ARk>() ? spec.as<ARk>()->p : spec.as<ARkGen>()->p;
      validate_p(p_);
      if (auto* g = spec.as<ARkGen>()) {
        require(g->a_sq > 0.0, FailureKind::domain, "ark-gen-a-positive", "a^2 must be positive");
        first_scale_ = 1.0 / std::sqrt(g->a_sq);
      }
      burn_ = first - 1;
      next_ = 1;
    }
    if (spec.is<AR1>() || spec.is<AR1Shifted>()) {
      const Sequence& x = ar1_x();
      detail::check_ar1_x(x, first);
      var_ = spec.is<AR1>() ? 1.0 : std::pow(spec.as<AR1Shifted>()->delta_tilde, 2);
      for (std::size_t j = 1; j < first; ++j) var_ = x(j) * x(j) * var_ + 1.0;
    }
  }

  // Draws eta at the next index.
  double next(Engine& g) {
    while (burn_ > 0) {
      --burn_;
      step(g);
    }
    return step(g);
  }

  std::size_t index() const { return next_ - 1; }
  double value() const { return eta_; }
  double standardized() const { return z_; }  // eta / sqrt(U_{j,j})

 private:
  const Sequence& ar1_x() const { return spec_.is<AR1>() ? spec_.as<AR1>()->x : spec_.as<AR1Shifted>()->x; }

  double step(Engine& g) {
    const std::size_t j = next_++;
    const bool start = !started_;
    started_ = true;
    const double Z = standard_normal(g);

    if (spec_.is<MinKernel>() || spec_.is<ScaledMinKernel>() || spec_.is<ShiftedScaled>()) {
      // z_j = eta_j / sqrt(s'_j) evolves as an AR(1) with coefficient sqrt(s'_{j-1}/s'_j).
      const Sequence* s = nullptr;
      const Sequence* b = nullptr;
      double D = 0.0;
      if (auto* m = spec_.as<MinKernel>()) s = &m->s;
      if (auto* sm = spec_.as<ScaledMinKernel>()) s = &sm->s, b = &sm->b;
      if (auto* ss = spec_.as<ShiftedScaled>()) s = &ss->s, b = &ss->b, D = ss->Delta;
      const auto log_sp = [&](std::size_t i) { return D == 0.0 ? s->log_at(i) : std::log((*s)(i) + D); };
      const double ls = log_sp(j);
      require(std::isfinite(ls), FailureKind::domain, "min-s-increasing", "s + Delta must be positive");
      if (start) {
        z_ = Z;
      } else {
        const double d = ls - log_prev_;
        require(d > 0.0, FailureKind::domain, "min-s-increasing", "s must be strictly increasing");
        z_ = std::exp(-0.5 * d) * z_ + std::sqrt(-std::expm1(-d)) * Z;
      }
      log_prev_ = ls;
      eta_ = z_ * std::exp(0.5 * ls);
      if (b) eta_ /= (*b)(j);
      return eta_;
    }
    if (auto* e = spec_.as<ExpKernel>()) {
      if (start) {
        z_ = Z;
      } else {
        const double d = e->v(j) - e->v(j - 1);
        require(d > 0.0, FailureKind::domain, "exp-v-increasing", "v must be strictly increasing");
        z_ = std::exp(-d) * z_ + std::sqrt(-std::expm1(-2.0 * d)) * Z;
      }
      eta_ = z_;
      return eta_;
    }
    if (spec_.is<AR1>() || spec_.is<AR1Shifted>()) {
      if (start) {
        eta_ = std::sqrt(var_) * Z;
      } else {
        const double x = ar1_x()(j - 1);
        require(x > 0.0 && x <= 1.0, FailureKind::domain, "ar1-x-range", "x must lie in (0, 1]");
        eta_ = x * eta_ + Z;
        var_ = x * x * var_ + 1.0;
      }
      z_ = eta_ / std::sqrt(var_);
      return eta_;
    }
    // AR(k): xi_n = sum_l p_l xi_{n-l} + g_n with xi_n = 0 for n <= 0.
    const std::size_t k = p_.size();
    double xi = (j == 1 ? first_scale_ : 1.0) * Z, ph = j == 1 ? 1.0 : 0.0;
    for (std::size_t l = 1; l <= k && l <= hist_.size(); ++l) {
      xi += p_[l - 1] * hist_[hist_.size() - l];
      ph += p_[l - 1] * phist_[phist_.size() - l];
    }
    hist_.push_back(xi);
    phist_.push_back(ph);
    if (hist_.size() > k) hist_.pop_front(), phist_.pop_front();
    phi_sq_ += ph * ph;
    const double var = phi_sq_ + (first_scale_ * first_scale_ - 1.0) * ph * ph;
    eta_ = xi;
    z_ = xi / std::sqrt(var);
    return eta_;
  }

  KernelSpec spec_;
  std::size_t next_;
  std::size_t burn_ = 0;
  bool started_ = false;
  double eta_ = 0.0, z_ = 0.0, log_prev_ = 0.0, var_ = 1.0;
  std::vector<double> p_;
  double first_scale_ = 1.0;
  std::deque<double> hist_, phist_;
  double phi_sq_ = 0.0;
};

// Lower Cholesky factor of a covariance, escalating a diagonal jitter on failure.
inline Mat gaussian_factor(const Mat& K) {
  require((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, K.cwiseAbs().maxCoeff()),
          FailureKind::unsupported, "gaussian-symmetric-kernel", "Gaussian sampling needs a symmetric kernel");
  const double scale = K.diagonal().cwiseAbs().maxCoeff();
  for (double jitter = 0.0; jitter <= 1e-8 * scale; jitter = jitter == 0.0 ? 1e-14 * scale : jitter * 10.0) {
    Eigen::LLT<Mat> llt(K + jitter * Mat::Identity(K.rows(), K.cols()));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw Failure(FailureKind::numerical, "gaussian-factorization", "Cholesky failed after jitter escalation");
}

// eta_1..eta_n with covariance U.
inline Vec sample_gaussian(const KernelSpec& spec, std::size_t n, std::uint64_t seed) {
  require(n >= 1, FailureKind::domain, "window-nonempty", "n must be positive");
  Engine g = trial_engine(seed, 0);
  Vec out(static_cast<Index>(n));
  if (GaussianStream::supports(spec)) {
    GaussianStream s(spec);
    for (Index j = 0; j < out.size(); ++j) out(j) = s.next(g);
    return out;
  }
  const Mat L = gaussian_factor(build_kernel(spec, Window{0, n}).K);
  Vec z(out.size());
  for (Index j = 0; j < z.size(); ++j) z(j) = standard_normal(g);
  return L * z;
}

// alpha = k_half / 2 permanental vector on a window with kernel U + a a^T, the
// symmetrized comparison kernel of U_{j,k} + f_k.
class PermanentalSampler {
 public:
  PermanentalSampler(const KernelSpec& spec, Window w, std::vector<double> f_window, int k_half)
      : spec_(spec), w_(w), k_half_(k_half) {
    require(k_half >= 1, FailureKind::unsupported, "alpha-half-integer",
            "only alpha = k/2 for positive integers k can be sampled exactly");
    require(w.n >= 1, FailureKind::domain, "window-nonempty", "window size must be positive");
    if (f_window.empty()) f_window.assign(w.n, 0.0);
    require(f_window.size() == w.n, FailureKind::domain, "rho-dimensions", "f must cover the window");
    f_ = f_window;
    const DenseKernelWindow K = build_kernel(spec, w);
    diag_ = K.K.diagonal();
    a_ = Vec::Zero(static_cast<Index>(w.n));
    if (std::any_of(f_.begin(), f_.end(), [](double v) { return v != 0.0; })) {
      const SymmetrizationLedger L = analyze(spec, w, f_);
      a_ = L.a_vec;
      rho_ = L.rho;
    }
    if (!GaussianStream::supports(spec)) factor_ = gaussian_factor(K.K);
  }

  double alpha() const { return 0.5 * k_half_; }
  const Vec& a() const { return a_; }
  double rho() const { return rho_; }
  SandwichWeights sandwich() const { return sandwich_factor(alpha(), rho_); }
  // Diagonal of the sampled kernel, U_{j,j} + a_j^2.
  Vec sampled_diagonal() const { return diag_ + a_.cwiseAbs2(); }
  // U_{j,j} + f_j.
  Vec tilde_diagonal() const {
    Vec d = diag_;
    for (Index j = 0; j < d.size(); ++j) d(j) += f_[static_cast<std::size_t>(j)];
    return d;
  }

  Vec draw(Engine& g) const {
    const Index n = static_cast<Index>(w_.n);
    Vec X = Vec::Zero(n), eta(n);
    for (int i = 0; i < k_half_; ++i) {
      if (factor_.size() == 0) {
        GaussianStream s(spec_, w_.l + 1);
        for (Index j = 0; j < n; ++j) eta(j) = s.next(g);
      } else {
        Vec z(n);
        for (Index j = 0; j < n; ++j) z(j) = standard_normal(g);
        eta = factor_ * z;
      }
      const double xi = standard_normal(g);
      X += 0.5 * (eta + a_ * xi).cwiseAbs2();
    }
    return X;
  }

 private:
  KernelSpec spec_;
  Window w_;
  int k_half_;
  std::vector<double> f_;
  Vec diag_, a_;
  double rho_ = 0.0;
  Mat factor_;
};

struct SampleBatch {
  Mat values;  // trials x n
  std::string family;
  std::uint64_t seed = 0;
  double alpha = 0.5;
  double rho = 0.0;
  SandwichWeights sandwich;
  Vec a_vec;
};

inline SampleBatch sample_permanental(const KernelSpec& spec, const std::vector<double>& f_window, int k_half,
                                      Window w, std::size_t trials, std::uint64_t seed) {
  const PermanentalSampler S(spec, w, f_window, k_half);
  SampleBatch b;
  b.values.resize(static_cast<Index>(trials), static_cast<Index>(w.n));
  for (std::size_t t = 0; t < trials; ++t) {
    Engine g = trial_engine(seed, t);
    b.values.row(static_cast<Index>(t)) = S.draw(g).transpose();
  }
  b.family = family_name(spec);
  b.seed = seed;
  b.alpha = S.alpha();
  b.rho = S.rho();
  b.sandwich = S.sandwich();
  b.a_vec = S.a();
  return b;
}

inline int half_integer_k(double alpha) {
  const double k = 2.0 * alpha;
  require(alpha > 0.0 && std::abs(k - std::round(k)) <= 1e-12, FailureKind::unsupported, "alpha-half-integer",
          "only alpha in {1/2, 1, 3/2, ...} can be sampled exactly");
  return static_cast<int>(std::lround(k));
}

// Asymptotic Kolmogorov tail with the Stephens finite-sample correction.
inline double kolmogorov_pvalue(double D, std::size_t m) {
  const double rm = std::sqrt(static_cast<double>(m));
  const double lambda = (rm + 0.12 + 0.11 / rm) * D;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Two-sided one-sample KS statistic; sorts x in place.
inline double ks_statistic(std::vector<double>& x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double m = static_cast<double>(x.size());
  double D = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    D = std::max({D, (i + 1) / m - F, F - i / m});
  }
  return D;
}

struct GammaKSEntry {
  std::size_t index = 0;  // absolute index l + j
  double statistic = 0.0;
  double p_value = 1.0;
  double mean = 0.0;  // sample mean of the normalized marginal
  bool passed = false;
};

struct GammaKSReport {
  double alpha = 0.5;
  std::size_t samples = 0;
  std::vector<GammaKSEntry> entries;
  bool passed = true;
};

// X_{alpha,j} / (U_{j,j} + f_j) against Gamma(alpha, 1) at the 5% level; with
// normalize_by_tilde = false the divisor is U_{j,j}.
inline GammaKSReport gamma_marginal_test(const KernelSpec& spec, const std::vector<double>& f_window, double alpha,
                                         Window w, const std::vector<std::size_t>& indices, std::size_t m,
                                         std::uint64_t seed, bool normalize_by_tilde = true) {
  const int k = half_integer_k(alpha);
  require(m >= 10, FailureKind::domain, "ks-sample-size", "need at least 10 samples");
  for (std::size_t j : indices)
    require(j >= 1 && j <= w.n, FailureKind::domain, "kernel-index", "KS index outside window");
  const PermanentalSampler S(spec, w, f_window, k);
  const Vec norm = normalize_by_tilde ? S.tilde_diagonal() : S.sampled_diagonal() - S.a().cwiseAbs2();
  std::vector<std::vector<double>> cols(indices.size(), std::vector<double>(m));
  for (std::size_t t = 0; t < m; ++t) {
    Engine g = trial_engine(seed, t);
    const Vec X = S.draw(g);
    for (std::size_t c = 0; c < indices.size(); ++c) {
      const Index j = static_cast<Index>(indices[c] - 1);
      cols[c][t] = X(j) / norm(j);
    }
  }
  GammaKSReport r;
  r.alpha = alpha;
  r.samples = m;
  const auto cdf = [alpha](double x) { return x <= 0.0 ? 0.0 : boost::math::gamma_p(alpha, x); };
  for (std::size_t c = 0; c < indices.size(); ++c) {
    GammaKSEntry e;
    e.index = w.l + indices[c];
    double sum = 0.0;
    for (double v : cols[c]) sum += v;
    e.mean = sum / static_cast<double>(m);
    e.statistic = ks_statistic(cols[c], cdf);
    e.p_value = kolmogorov_pvalue(e.statistic, m);
    e.passed = e.p_value > 0.05;
    r.passed = r.passed && e.passed;
    r.entries.push_back(e);
  }
  return r;
}

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  require(!v.empty(), FailureKind::domain, "quantile-empty", "no data");
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
}

inline Quartiles quartiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return Quartiles{quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75)};
}

// Two running statistics per checkpoint N:
//   running:  max_{j <= N} X_j / phi_N, the running maximum normalized at N;
//   trailing: max_{sqrt N < j <= N} X_j / phi_j, which tracks LIL-type limsups.
struct TrendReport {
  std::vector<std::size_t> checkpoints;
  double target = 1.0;
  std::string normalizer;
  std::vector<Quartiles> running, trailing;
  std::vector<double> raw_max_median;  // median of max_{j <= N} X_j before normalization
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  bool running_closer_at_end() const { return closer(running); }
  bool trailing_closer_at_end() const { return closer(trailing); }

 private:
  bool closer(const std::vector<Quartiles>& q) const {
    return q.size() >= 2 && std::abs(q.back().median - target) < std::abs(q.front().median - target);
  }
};

struct LimsupConfig {
  KernelSpec spec;
  double f_constant = 0.0;  // f_j = c; the sampled kernel is then exactly U + c
  double alpha = 0.5;
  std::vector<std::size_t> checkpoints;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

namespace detail {

// Runs body(t) for t in [0, trials) on `workers` threads; results are indexed by t.
inline void for_trials(std::size_t trials, unsigned workers, const std::function<void(std::size_t)>& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, trials))));
  if (workers == 1) {
    for (std::size_t t = 0; t < trials; ++t) body(t);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t t = w; t < trials; t += workers) body(t);
    });
  for (auto& th : pool) th.join();
}

// Streams one trial: fills running[c], trailing[c], raw[c] for each checkpoint.
template <class Draw>
void stream_trial(Draw&& draw, const std::vector<double>& phi, const std::vector<std::size_t>& cps,
                  double* running, double* trailing, double* raw) {
  const std::size_t N = cps.back();
  double M = -std::numeric_limits<double>::infinity();
  std::vector<double> trail(cps.size(), -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> lo(cps.size());
  for (std::size_t c = 0; c < cps.size(); ++c)
    lo[c] = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(cps[c]))));
  std::size_t next = 0;
  for (std::size_t j = 1; j <= N; ++j) {
    const double X = draw();
    M = std::max(M, X);
    if (phi[j - 1] > 0.0) {
      const double r = X / phi[j - 1];
      for (std::size_t c = next; c < cps.size(); ++c)
        if (j > lo[c]) trail[c] = std::max(trail[c], r);
    }
    while (next < cps.size() && cps[next] == j) {
      raw[next] = M;
      running[next] = M / phi[j - 1];
      trailing[next] = trail[next];
      ++next;
    }
  }
}

}  // namespace detail

inline void check_checkpoints(const std::vector<std::size_t>& cps) {
  require(!cps.empty(), FailureKind::domain, "limsup-checkpoints", "need at least one checkpoint");
  for (std::size_t i = 0; i < cps.size(); ++i)
    require(cps[i] >= 4 && (i == 0 || cps[i] > cps[i - 1]), FailureKind::domain, "limsup-checkpoints",
            "checkpoints must be increasing and at least 4");
}

inline TrendReport collect_trend(const std::vector<std::size_t>& cps, std::size_t trials,
                                 const std::vector<double>& run, const std::vector<double>& trail,
                                 const std::vector<double>& raw) {
  TrendReport R;
  R.checkpoints = cps;
  R.trials = trials;
  for (std::size_t c = 0; c < cps.size(); ++c) {
    std::vector<double> a(trials), b(trials), m(trials);
    for (std::size_t t = 0; t < trials; ++t) {
      a[t] = run[t * cps.size() + c];
      b[t] = trail[t * cps.size() + c];
      m[t] = raw[t * cps.size() + c];
    }
    R.running.push_back(quartiles(a));
    R.trailing.push_back(quartiles(b));
    R.raw_max_median.push_back(quartiles(m).median);
  }
  return R;
}

// The normalizer and target come from predict(); phi_j and the constant are
// used as supplied.
inline TrendReport limsup_experiment(const LimsupConfig& cfg, const Prediction& pred) {
  check_checkpoints(cfg.checkpoints);
  require(cfg.trials >= 1, FailureKind::domain, "limsup-trials", "need at least one trial");
  require(cfg.f_constant >= 0.0, FailureKind::domain, "potential-nonnegative", "f must be nonnegative");
  const int k = half_integer_k(cfg.alpha);
  require(GaussianStream::supports(cfg.spec), FailureKind::unsupported, "gaussian-stream",
          "streamed experiments need a recursive sampler");
  const std::size_t N = cfg.checkpoints.back();
  const std::vector<double> phi = pred.table(N);
  const std::size_t C = cfg.checkpoints.size();
  std::vector<double> run(cfg.trials * C), trail(cfg.trials * C), raw(cfg.trials * C);
  const double a = std::sqrt(cfg.f_constant);

  detail::for_trials(cfg.trials, cfg.workers, [&](std::size_t t) {
    Engine g = trial_engine(cfg.seed, t);
    std::vector<GaussianStream> streams(static_cast<std::size_t>(k), GaussianStream(cfg.spec));
    std::vector<double> xi(static_cast<std::size_t>(k));
    for (auto& v : xi) v = standard_normal(g);
    auto draw = [&] {
      double X = 0.0;
      for (int i = 0; i < k; ++i) {
        const double e = streams[static_cast<std::size_t>(i)].next(g) + a * xi[static_cast<std::size_t>(i)];
        X += 0.5 * e * e;
      }
      return X;
    };
    detail::stream_trial(draw, phi, cfg.checkpoints, &run[t * C], &trail[t * C], &raw[t * C]);
  });

  TrendReport R = collect_trend(cfg.checkpoints, cfg.trials, run, trail, raw);
  R.target = pred.constant;
  R.normalizer = pred.normalizer_label;
  R.seed = cfg.seed;
  return R;
}

// Gaussian LIL on a min kernel: statistics of eta_j / sqrt(2 s_j K_s(j)), with
// the running form max_{j <= N} eta_j/sqrt(s_j) / sqrt(2 K_s(N)).
inline TrendReport gaussian_lil(const Sequence& s, const std::vector<std::size_t>& cps, std::size_t trials,
                                std::uint64_t seed, unsigned workers = 1) {
  check_checkpoints(cps);
  const std::size_t N = cps.back();
  const std::vector<double> K = koval_table(s, N);
  std::vector<double> phi(N);
  for (std::size_t j = 0; j < N; ++j) phi[j] = K[j] > 0.0 ? std::sqrt(2.0 * K[j]) : 0.0;
  const std::size_t C = cps.size();
  std::vector<double> run(trials * C), trail(trials * C), raw(trials * C);
  const KernelSpec spec = MinKernel{s};
  detail::for_trials(trials, workers, [&](std::size_t t) {
    Engine g = trial_engine(seed, t);
    GaussianStream st(spec);
    auto draw = [&] {
      st.next(g);
      return st.standardized();
    };
    detail::stream_trial(draw, phi, cps, &run[t * C], &trail[t * C], &raw[t * C]);
  });
  TrendReport R = collect_trend(cps, trials, run, trail, raw);
  R.target = 1.0;
  R.normalizer = "sqrt(2 s_j K_s(j))";
  R.seed = seed;
  return R;
}

struct CalibrationBand {
  double lower = 0.0, upper = 0.0, center = 0.0;
  std::size_t replicates = 0;
};

// Band for the median over `trials` of scale * max_{j <= N} G_j / phi_N with G_j
// i.i.d. Gamma(alpha, 1): the central `level` mass of replicate medians.
inline CalibrationBand surrogate_band(double alpha, double scale, double phi_N, std::size_t N, std::size_t trials,
                                      std::size_t replicates, std::uint64_t seed, double level = 0.99) {
  require(alpha > 0.0 && phi_N > 0.0 && N >= 1 && trials >= 1 && replicates >= 10, FailureKind::domain,
          "surrogate-band", "invalid surrogate configuration");
  std::vector<double> meds(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    Engine g = trial_engine(seed, r);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> v(trials);
    for (auto& x : v) {
      // P(max <= x) = P(G <= x)^N, inverted through the upper tail.
      double u = U(g);
      while (u <= 0.0) u = U(g);
      const double tail = -std::expm1(std::log(u) / static_cast<double>(N));
      x = scale * boost::math::gamma_q_inv(alpha, tail) / phi_N;
    }
    meds[r] = quartiles(v).median;
  }
  std::sort(meds.begin(), meds.end());
  CalibrationBand b;
  b.lower = quantile_sorted(meds, 0.5 * (1.0 - level));
  b.upper = quantile_sorted(meds, 0.5 * (1.0 + level));
  b.center = quantile_sorted(meds, 0.5);
  b.replicates = replicates;
  return b;
}

struct Subsequence {
  std::vector<std::size_t> indices;
  bool complete = false;  // false when the accessible range ran out
  double row_norm = 0.0;  // sup_j sum_k |M_{j,k}| over the accessible range
  double col_norm = 0.0;
};

// Greedy choice of the smallest admissible next index; every output satisfies
// M_{i_a,i_b} <= eps (a != b) and i_n <= n (||M|| + ||M^T||) / eps.
inline Subsequence sparse_subsequence(const std::function<double(std::size_t, std::size_t)>& M, double eps,
                                      std::size_t count, std::size_t max_index) {
  require(eps > 0.0 && count >= 1 && max_index >= 1, FailureKind::domain, "subsequence-params",
          "need eps > 0, count >= 1 and a nonempty range");
  Subsequence out;
  std::vector<double> cols(max_index, 0.0);
  for (std::size_t j = 1; j <= max_index; ++j) {
    double row = 0.0;
    for (std::size_t k = 1; k <= max_index; ++k) {
      const double v = M(j, k);
      require(v >= 0.0 && std::isfinite(v), FailureKind::domain, "subsequence-positive", "M must be nonnegative");
      row += v;
      cols[k - 1] += v;
    }
    out.row_norm = std::max(out.row_norm, row);
  }
  out.col_norm = *std::max_element(cols.begin(), cols.end());

  for (std::size_t i = 1; i <= max_index && out.indices.size() < count; ++i) {
    bool ok = true;
    for (std::size_t c : out.indices)
      if (M(c, i) > eps || M(i, c) > eps) {
        ok = false;
        break;
      }
    if (ok) out.indices.push_back(i);
  }
  out.complete = out.indices.size() == count;

  const double factor = (out.row_norm + out.col_norm) / eps;
  for (std::size_t n = 1; n <= out.indices.size(); ++n)
    require(static_cast<double>(out.indices[n - 1]) <= static_cast<double>(n) * factor, FailureKind::numerical,
            "subsequence-growth", "index growth exceeds n(||M|| + ||M^T||)/eps");
  for (std::size_t a = 0; a < out.indices.size(); ++a)
    for (std::size_t b = 0; b < out.indices.size(); ++b)
      require(a == b || M(out.indices[a], out.indices[b]) <= eps, FailureKind::numerical, "subsequence-separation",
              "selected pair exceeds eps");
  return out;
}

}  // namespace permk
