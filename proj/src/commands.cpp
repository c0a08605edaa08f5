#include "commands.hpp"

#include "permk/argen.hpp"
#include "permk/excessive.hpp"
#include "permk/io.hpp"
#include "permk/kernels.hpp"
#include "permk/mcsim.hpp"
#include "permk/normalizers.hpp"
#include "permk/symmetrize.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace permk::cli {

using nlohmann::json;
using io::tagged;

namespace {

constexpr const char* kDerived = "derived";

Window window_from(const json& cfg) {
  require(cfg.contains("window"), FailureKind::usage, "config-schema", "config needs 'window'");
  const json& w = cfg.at("window");
  io::check_keys(w, {"l", "n"}, "window");
  Window out{io::count(w, "l", "window"), io::count(w, "n", "window")};
  require(out.n >= 1, FailureKind::usage, "config-schema", "window.n must be positive");
  return out;
}

KernelSpec spec_from(const json& cfg) {
  require(cfg.contains("spec"), FailureKind::usage, "config-schema", "config needs 'spec'");
  return io::spec_from_json(cfg.at("spec"));
}

std::vector<double> p_from(const json& cfg) {
  require(cfg.contains("p"), FailureKind::usage, "config-schema", "config needs 'p'");
  return io::numbers(cfg.at("p"), "p");
}

// f on the window: an explicit array, a sequence descriptor evaluated at l+1..l+n,
// or {"density": [h_1, ...]} giving f = U h.
std::vector<double> f_from(const json& cfg, const KernelSpec& spec, Window w) {
  if (!cfg.contains("f")) return std::vector<double>(w.n, 0.0);
  const json& f = cfg.at("f");
  if (f.is_object() && f.contains("density")) {
    io::check_keys(f, {"density"}, "f");
    DensitySequence h{io::numbers(f.at("density"), "f.density"), true, std::nullopt};
    return apply_potential(spec, h, w).f;
  }
  if (f.is_array()) {
    auto v = io::numbers(f, "f");
    require(v.size() == w.n, FailureKind::usage, "config-schema", "f must have one entry per window index");
    return v;
  }
  const Sequence s = io::sequence_from_json(f, "f");
  return s.take(w.first(), w.last());
}

double alpha_from(const json& cfg) { return io::number_or(cfg, "alpha", 0.5, "config"); }

std::uint64_t seed_from(const json& cfg, const RunOptions& opt) {
  if (opt.seed) return *opt.seed;
  if (!cfg.contains("seed")) return 0;
  return io::count(cfg, "seed", "config");
}

FClass fclass_from(const json& cfg, FClass fallback) {
  if (!cfg.contains("f_class")) return fallback;
  require(cfg.at("f_class").is_string(), FailureKind::usage, "config-schema", "f_class must be a string");
  const std::string s = cfg.at("f_class").get<std::string>();
  if (s == "zero") return FClass::zero;
  if (s == "potential_l1") return FClass::potential_l1;
  if (s == "c0") return FClass::c0;
  throw Failure(FailureKind::usage, "config-schema", "f_class must be zero, potential_l1 or c0");
}

Hypotheses hypotheses_from(const json& cfg) {
  Hypotheses h;
  if (!cfg.contains("hypotheses")) return h;
  const json& j = cfg.at("hypotheses");
  io::check_keys(j,
                 {"growth", "increments_bounded_above", "increments_bounded_below", "x_limit", "critical_c",
                  "power_beta", "regular_variation_index", "x_to_one", "f_little_o_sqrt"},
                 "hypotheses");
  const auto flag = [&](const char* key) {
    if (!j.contains(key)) return false;
    require(j.at(key).is_boolean(), FailureKind::usage, "config-schema", std::string("hypotheses.") + key + " must be boolean");
    return j.at(key).get<bool>();
  };
  const auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key)) return std::nullopt;
    return io::number(j, key, "hypotheses");
  };
  if (j.contains("growth")) {
    require(j.at("growth").is_string(), FailureKind::usage, "config-schema", "hypotheses.growth must be a string");
    const std::string g = j.at("growth").get<std::string>();
    using G = Hypotheses::Growth;
    if (g == "unspecified") h.growth = G::unspecified;
    else if (g == "bounded_ratios") h.growth = G::bounded_ratios;
    else if (g == "geometric") h.growth = G::geometric;
    else if (g == "oscillating") h.growth = G::oscillating;
    else throw Failure(FailureKind::usage, "config-schema", "unknown growth '" + g + "'");
  }
  h.increments_bounded_above = flag("increments_bounded_above");
  h.increments_bounded_below = flag("increments_bounded_below");
  h.x_limit = opt("x_limit");
  h.critical_c = opt("critical_c");
  h.power_beta = opt("power_beta");
  h.regular_variation_index = opt("regular_variation_index");
  h.x_to_one = flag("x_to_one");
  h.f_little_o_sqrt = flag("f_little_o_sqrt");
  return h;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

std::string vector_csv(const char* header, const std::vector<double>& v, std::size_t first_index) {
  std::ostringstream os;
  os << header << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) os << (first_index + i) << ',' << io::fmt(v[i]) << '\n';
  return os.str();
}

void cmd_validate(const json& cfg, RunResult& out) {
  io::check_keys(cfg, {"command", "spec", "window"}, "config");
  const KernelSpec spec = spec_from(cfg);
  Window w = cfg.contains("window") ? window_from(cfg) : Window{0, 50};
  if (const auto* kw = spec.as<KilledWalk>(); kw && !cfg.contains("window"))
    w.n = std::min<std::size_t>(w.n, static_cast<std::size_t>(2 * kw->radius + 1));
  json& r = out.report;
  r["family"] = family_name(spec);

  const Admissibility adm = shift_admissible(spec);
  r["admissibility"] = {{"admissible", adm.admissible}, {"constraint", adm.constraint}, {"detail", adm.detail},
                        {"value", tagged(adm.value, adm.constraint)}};
  require(adm.admissible, FailureKind::inadmissible, adm.constraint.c_str(), adm.detail);

  const GeneratorMatrix G = build_generator(spec, w.last() + 1);
  const QMatrixReport q = check_q_matrix(G);
  r["q_matrix"] = {{"passed", q.passed}, {"norm", tagged(q.norm, "q-matrix-sign-pattern")},
                   {"min_deficit", tagged(q.min_deficit, "q-matrix-sign-pattern")}};
  require(q.passed, FailureKind::structural, "q-matrix-sign-pattern", "generator fails the Q-matrix checks");

  const DenseKernelWindow K = build_kernel(spec, w);
  const InverseMReport m = check_inverse_m_matrix(K);
  r["inverse_m"] = {{"passed", m.passed}, {"condition", tagged(m.condition, kDerived)},
                    {"worst_offdiag", tagged(m.worst_offdiag, "inverse-m-matrix")}};
  require(m.passed, FailureKind::structural, "inverse-m-matrix", "window kernel is not an inverse M-matrix");

  if (!spec.is<KilledWalk>()) {
    const DualityReport d = verify_duality(spec, w, 1e-8);
    r["duality"] = {{"passed", d.passed}, {"max_residual", tagged(d.max_residual, "generator-duality")},
                    {"interior_rows", d.interior_rows}, {"excluded_rows", d.excluded_rows}};
    if (d.ltl_residual) r["duality"]["ltl_residual"] = tagged(*d.ltl_residual, "ark-ltl-factorization");
    require(d.passed, FailureKind::numerical, "generator-duality", "Q U + I exceeds 1e-8 on interior rows");
  } else {
    const KilledWalkReport kw = killed_walk_potential(*spec.as<KilledWalk>());
    r["killed_walk"] = {{"U00", tagged(kw.U00, "killed-walk-limsup")},
                        {"max_row_sum_deficiency", tagged(kw.max_row_sum_deficiency, "killed-walk-row-sums")}};
  }
}

void cmd_invert(const json& cfg, RunResult& out) {
  io::check_keys(cfg, {"command", "spec", "window"}, "config");
  const KernelSpec spec = spec_from(cfg);
  const Window w = window_from(cfg);
  const WindowInverse inv = window_inverse(spec, w);
  out.report["family"] = family_name(spec);
  out.report["closed_form"] = inv.closed_form;
  out.report["product_residual"] = tagged(inv.product_residual, "window-inverse-product");
  out.report["condition"] = tagged(inv.condition, kDerived);
  out.report["row_sums"] = vec_json(inv.inverse.rowwise().sum());
  out.report["row_sums_key"] = "kernel-row-sums";
  out.artifacts["inverse.csv"] = io::matrix_csv(inv.inverse, static_cast<long>(w.l), static_cast<long>(w.l));
}

void cmd_phi(const json& cfg, RunResult& out) {
  io::check_keys(cfg, {"command", "p", "terms"}, "config");
  const auto p = p_from(cfg);
  const std::size_t N = cfg.contains("terms") ? io::count(cfg, "terms", "config") : 50;
  require(N >= 1, FailureKind::usage, "config-schema", "terms must be positive");
  const PartialFractionTable t = partial_fractions(p);
  const PhiSequence closed = phi_closed(p, N);
  const PhiSequence rec = phi_recursive(p, N);
  double gap = 0.0;
  for (std::size_t n = 1; n <= N; ++n) gap = std::max(gap, std::abs(closed(n) - rec(n)));
  json roots = json::array();
  for (std::size_t i = 0; i < t.roots.roots.size(); ++i)
    roots.push_back({{"re", t.roots.roots[i].real()}, {"im", t.roots.roots[i].imag()},
                     {"multiplicity", t.roots.multiplicity[i]}});
  out.report["roots"] = roots;
  out.report["roots_key"] = t.roots.classification == RootSet::Class::unit_root_simple ? "unit-root-simple"
                                                                                         : "roots-outside-unit-disk";
  out.report["max_root_residual"] = tagged(t.roots.max_residual, "char-root-residual");
  out.report["reconstruction_residual"] = tagged(t.reconstruction_residual, "partial-fraction-reconstruction");
  out.report["closed_vs_recursive"] = tagged(gap, "phi-closed-form");
  out.report["imag_residue"] = tagged(closed.imag_residue, "phi-real");
  if (rec.c1) out.report["c1"] = tagged(*rec.c1, "unit-root-iff-sum-one");
  out.artifacts["phi.csv"] = vector_csv("n,phi", closed.phi, 1);
}

void cmd_cstar(const json& cfg, RunResult& out) {
  io::check_keys(cfg, {"command", "p"}, "config");
  const auto p = p_from(cfg);
  const CStarReport c = c_star(p);
  out.report["c_star"] = tagged(c.value, "cstar-finite");
  out.report["c_star_direct"] = tagged(c.value_direct, "cstar-two-routes");
  out.report["series_tail_bound"] = tagged(c.series_tail_bound, kDerived);
  out.report["direct_tail_bound"] = tagged(c.direct_tail_bound, kDerived);
  out.report["direct_terms"] = c.direct_terms;
  out.report["phi_l1"] = tagged(c.norm1, "phi-l1-norm");
  out.report["inv_P1"] = tagged(c.inv_P1, "phi-l1-norm");
  out.report["lower_bound"] = tagged(c.lower, "cstar-bounds");
  out.report["upper_bound"] = tagged(c.upper, "cstar-bounds");
}

json prediction_json(const Prediction& p) {
  return {{"normalizer", p.normalizer_label},
          {"constant", tagged(p.constant, p.citation)},
          {"theorem", p.theorem},
          {"alpha_validity", p.alpha_validity == AlphaValidity::all ? "all" : "half_and_above"}};
}

void cmd_predict(const json& cfg, RunResult& out) {
  io::check_keys(cfg, {"command", "spec", "f_class", "alpha", "hypotheses"}, "config");
  const KernelSpec spec = spec_from(cfg);
  const PredictionOutcome o = predict(spec, fclass_from(cfg, FClass::zero), alpha_from(cfg), hypotheses_from(cfg));
  out.report["family"] = family_name(spec);
  if (!o.prediction) {
    out.report["prediction"] = nullptr;
    out.report["reason"] = o.reason;
    throw Failure(FailureKind::inadmissible, "no-applicable-theorem", o.reason);
  }
  out.report["prediction"] = prediction_json(*o.prediction);
}

void cmd_simulate(const json& cfg, const RunOptions& opt, RunResult& out) {
  io::check_keys(cfg, {"command", "spec", "window", "f", "alpha", "trials", "seed", "ks_indices"}, "config");
  const KernelSpec spec = spec_from(cfg);
  const Window w = window_from(cfg);
  const auto f = f_from(cfg, spec, w);
  const double alpha = alpha_from(cfg);
  const std::size_t trials = cfg.contains("trials") ? io::count(cfg, "trials", "config") : 100;
  require(trials >= 1, FailureKind::usage, "config-schema", "trials must be positive");
  const std::uint64_t seed = seed_from(cfg, opt);
  const SampleBatch b = sample_permanental(spec, f, half_integer_k(alpha), w, trials, seed);
  out.report["family"] = b.family;
  out.report["alpha"] = alpha;
  out.report["seed"] = seed;
  out.report["rho"] = tagged(b.rho, "rho-definition");
  out.report["sandwich_lower"] = tagged(b.sandwich.lower, "sandwich-weights");
  out.report["sandwich_slack"] = tagged(b.sandwich.slack, "sandwich-weights");
  out.report["sandwich_linear_bound"] = tagged(b.sandwich.linear_bound, "sandwich-linear-bound");
  out.report["a_vec"] = {{"values", vec_json(b.a_vec)}, {"key", "a-vector-bound"}};
  std::ostringstream os;
  os << "trial,j,value\n";
  for (Index t = 0; t < b.values.rows(); ++t)
    for (Index j = 0; j < b.values.cols(); ++j) os << t << ',' << (w.l + j + 1) << ',' << io::fmt(b.values(t, j)) << '\n';
  out.artifacts["samples.csv"] = os.str();
  if (cfg.contains("ks_indices")) {
    std::vector<std::size_t> idx;
    for (double v : io::numbers(cfg.at("ks_indices"), "ks_indices")) {
      require(v >= 1 && v == std::floor(v), FailureKind::usage, "config-schema", "ks_indices are window positions");
      idx.push_back(static_cast<std::size_t>(v));
    }
    const GammaKSReport ks = gamma_marginal_test(spec, f, alpha, w, idx, trials, seed);
    json e = json::array();
    for (const auto& x : ks.entries)
      e.push_back({{"index", x.index}, {"statistic", tagged(x.statistic, "gamma-marginal")},
                   {"p_value", tagged(x.p_value, kDerived)}, {"passed", x.passed}});
    out.report["ks"] = {{"passed", ks.passed}, {"entries", e}};
    require(ks.passed, FailureKind::structural, "gamma-marginal", "normalized marginals fail the 5% KS test");
  }
}

void cmd_limsup(const json& cfg, const RunOptions& opt, RunResult& out) {
  io::check_keys(cfg,
                 {"command", "spec", "f_constant", "f_class", "alpha", "checkpoints", "trials", "seed", "hypotheses",
                  "workers", "band_replicates"},
                 "config");
  LimsupConfig lc;
  lc.spec = spec_from(cfg);
  lc.f_constant = io::number_or(cfg, "f_constant", 0.0, "config");
  lc.alpha = alpha_from(cfg);
  require(cfg.contains("checkpoints"), FailureKind::usage, "config-schema", "config needs 'checkpoints'");
  for (double v : io::numbers(cfg.at("checkpoints"), "checkpoints")) {
    require(v >= 1 && v == std::floor(v), FailureKind::usage, "config-schema", "checkpoints are positive integers");
    lc.checkpoints.push_back(static_cast<std::size_t>(v));
  }
  lc.trials = cfg.contains("trials") ? io::count(cfg, "trials", "config") : 20;
  lc.seed = seed_from(cfg, opt);
  lc.workers = cfg.contains("workers") ? static_cast<unsigned>(io::count(cfg, "workers", "config")) : 1;
  const std::size_t reps = cfg.contains("band_replicates") ? io::count(cfg, "band_replicates", "config") : 1000;

  const FClass fc = fclass_from(cfg, lc.f_constant == 0.0 ? FClass::zero : FClass::c0);
  const PredictionOutcome o = predict(lc.spec, fc, lc.alpha, hypotheses_from(cfg));
  if (!o.prediction) throw Failure(FailureKind::inadmissible, "no-applicable-theorem", o.reason);
  const TrendReport R = limsup_experiment(lc, *o.prediction);
  const std::vector<double> phi = o.prediction->table(lc.checkpoints.back());

  out.report["family"] = family_name(lc.spec);
  out.report["prediction"] = prediction_json(*o.prediction);
  out.report["trials"] = R.trials;
  out.report["seed"] = R.seed;
  json cps = json::array();
  std::ostringstream os;
  os << "N,statistic,q1,median,q3\n";
  for (std::size_t c = 0; c < R.checkpoints.size(); ++c) {
    const std::size_t N = R.checkpoints[c];
    json e{{"N", N},
           {"running_median", tagged(R.running[c].median, kDerived)},
           {"trailing_median", tagged(R.trailing[c].median, kDerived)},
           {"raw_max_median", tagged(R.raw_max_median[c], kDerived)}};
    if (reps >= 10 && phi[N - 1] > 0.0) {
      const CalibrationBand b =
          surrogate_band(lc.alpha, o.prediction->constant, phi[N - 1], N, R.trials, reps, lc.seed);
      e["band"] = {{"lower", tagged(b.lower, kDerived)}, {"upper", tagged(b.upper, kDerived)}};
    }
    cps.push_back(e);
    os << N << ",running," << io::fmt(R.running[c].q1) << ',' << io::fmt(R.running[c].median) << ','
       << io::fmt(R.running[c].q3) << '\n';
    os << N << ",trailing," << io::fmt(R.trailing[c].q1) << ',' << io::fmt(R.trailing[c].median) << ','
       << io::fmt(R.trailing[c].q3) << '\n';
  }
  out.report["checkpoints"] = cps;
  out.report["running_closer_at_end"] = R.running_closer_at_end();
  out.report["trailing_closer_at_end"] = R.trailing_closer_at_end();
  out.artifacts["trend.csv"] = os.str();
}

void cmd_symmetrize(const json& cfg, RunResult& out) {
  io::check_keys(cfg, {"command", "spec", "window", "f", "alpha"}, "config");
  const KernelSpec spec = spec_from(cfg);
  const Window w = window_from(cfg);
  const auto f = f_from(cfg, spec, w);
  const SymmetrizationLedger L = analyze(spec, w, f);
  const SandwichWeights s = sandwich_factor(alpha_from(cfg), L.rho);
  json& r = out.report;
  r["family"] = family_name(spec);
  r["rho"] = tagged(L.rho, spec.is<MinKernel>() ? "rho-min-closed-form" : "rho-definition");
  r["nu"] = tagged(L.nu, "nu-bounds");
  r["nu_determinant_ratio"] = tagged(L.nu_det, "nu-two-routes");
  r["log_det_gap"] = tagged(L.log_det_gap, "extended-determinant");
  r["a_dense_error"] = tagged(L.a_dense_error, "extended-inverse");
  r["block_error"] = tagged(L.block_error, "isymi-block");
  r["condition"] = tagged(L.condition, kDerived);
  r["a_vec"] = {{"values", vec_json(L.a_vec)}, {"key", "a-vector-bound"}};
  r["sandwich_lower"] = tagged(s.lower, "sandwich-weights");
  r["sandwich_slack"] = tagged(s.slack, "sandwich-weights");
  r["sandwich_linear_bound"] = tagged(s.linear_bound, "sandwich-linear-bound");
  // Index 0 is the adjoined state.
  out.artifacts["K_ext.csv"] = io::matrix_csv(L.K_ext, -1, -1);
  out.artifacts["A.csv"] = io::matrix_csv(L.A, -1, -1);
  out.artifacts["A_sym.csv"] = io::matrix_csv(L.A_sym, -1, -1);
  out.artifacts["K_isymi.csv"] = io::matrix_csv(L.K_isymi, -1, -1);
}

}  // namespace

RunResult run(const json& config, const RunOptions& options) {
  RunResult out;
  out.report = json::object();
  try {
    require(config.is_object() && !config.empty(), FailureKind::usage, "config-empty", "config is empty");
    require(config.contains("command") && config.at("command").is_string(), FailureKind::usage, "config-schema",
            "config needs a string 'command'");
    const std::string cmd = config.at("command").get<std::string>();
    out.report["command"] = cmd;
    if (cmd == "validate") cmd_validate(config, out);
    else if (cmd == "invert") cmd_invert(config, out);
    else if (cmd == "phi") cmd_phi(config, out);
    else if (cmd == "cstar") cmd_cstar(config, out);
    else if (cmd == "predict") cmd_predict(config, out);
    else if (cmd == "simulate") cmd_simulate(config, options, out);
    else if (cmd == "limsup") cmd_limsup(config, options, out);
    else if (cmd == "symmetrize") cmd_symmetrize(config, out);
    else throw Failure(FailureKind::usage, "config-schema", "unknown command '" + cmd + "'");
    out.report["status"] = "ok";
  } catch (const Failure& e) {
    out.exit_code = e.kind() == FailureKind::usage ? 2 : 1;
    out.report["status"] = "failed";
    out.report["error"] = {{"key", e.key()}, {"kind", to_string(e.kind())}, {"message", e.message()}};
  } catch (const json::exception& e) {
    out.exit_code = 2;
    out.report["status"] = "failed";
    out.report["error"] = {{"key", "config-schema"}, {"kind", "usage"}, {"message", e.what()}};
  }
  return out;
}

void write_artifacts(const RunResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string name = result.report.contains("command") && result.report.at("command").is_string()
                               ? result.report.at("command").get<std::string>()
                               : "report";
  std::ofstream(fs::path(dir) / (name + ".json")) << result.report.dump(2) << '\n';
  for (const auto& [file, body] : result.artifacts) std::ofstream(fs::path(dir) / file) << body;
}

}  // namespace permk::cli
