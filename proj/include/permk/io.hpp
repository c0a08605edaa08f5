#pragma once

// JSON documents for sequences and kernel specs, and CSV matrix export.
// Schema violations raise FailureKind::usage.

#include "permk/core.hpp"
#include "permk/sequence.hpp"
#include "permk/spec.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

namespace permk::io {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), FailureKind::usage, "config-schema", where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    require(ok.count(it.key()) > 0, FailureKind::usage, "config-unknown-field",
            "unknown field '" + it.key() + "' in " + where);
}

inline double number(const json& j, const char* key, const std::string& where) {
  require(j.contains(key), FailureKind::usage, "config-schema", where + " needs '" + key + "'");
  require(j.at(key).is_number(), FailureKind::usage, "config-schema", where + "." + key + " must be a number");
  return j.at(key).get<double>();
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

inline std::size_t count(const json& j, const char* key, const std::string& where) {
  require(j.contains(key), FailureKind::usage, "config-schema", where + " needs '" + key + "'");
  const json& v = j.at(key);
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0), FailureKind::usage,
          "config-schema", where + "." + key + " must be a nonnegative integer");
  return v.get<std::size_t>();
}

inline std::vector<double> numbers(const json& j, const std::string& where) {
  require(j.is_array(), FailureKind::usage, "config-schema", where + " must be an array of numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    require(x.is_number(), FailureKind::usage, "config-schema", where + " must be an array of numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

// A bare array is a tabulated sequence; otherwise {"kind": ..., parameters}.
inline Sequence sequence_from_json(const json& j, const std::string& where) {
  if (j.is_array()) return Sequence::from_values(numbers(j, where));
  require(j.is_object() && j.contains("kind") && j.at("kind").is_string(), FailureKind::usage, "config-schema",
          where + " must be an array or an object with a string 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "values") {
    check_keys(j, {"kind", "values"}, where);
    require(j.contains("values"), FailureKind::usage, "config-schema", where + " needs 'values'");
    return Sequence::from_values(numbers(j.at("values"), where + ".values"));
  }
  if (kind == "constant") {
    check_keys(j, {"kind", "c"}, where);
    return Sequence::constant(number(j, "c", where));
  }
  if (kind == "affine" || kind == "exp_affine") {
    check_keys(j, {"kind", "a", "b"}, where);
    const double a = number(j, "a", where), b = number(j, "b", where);
    return kind == "affine" ? Sequence::affine(a, b) : Sequence::exp_affine(a, b);
  }
  if (kind == "geometric" || kind == "power" || kind == "root_gap") {
    check_keys(j, {"kind", "c", "q"}, where);
    const double c = number(j, "c", where), q = number(j, "q", where);
    if (kind == "geometric") return Sequence::geometric(c, q);
    if (kind == "power") return Sequence::power(c, q);
    return Sequence::root_gap(c, q);
  }
  throw Failure(FailureKind::usage, "config-schema", where + ": unknown sequence kind '" + kind + "'");
}

inline json to_json(const Sequence& s) {
  using K = Sequence::Kind;
  switch (s.kind()) {
    case K::values: return json{{"kind", "values"}, {"values", s.values()}};
    case K::constant: return json{{"kind", "constant"}, {"c", s.param_a()}};
    case K::affine: return json{{"kind", "affine"}, {"a", s.param_a()}, {"b", s.param_b()}};
    case K::exp_affine: return json{{"kind", "exp_affine"}, {"a", s.param_a()}, {"b", s.param_b()}};
    case K::geometric: return json{{"kind", "geometric"}, {"c", s.param_a()}, {"q", s.param_b()}};
    case K::power: return json{{"kind", "power"}, {"c", s.param_a()}, {"q", s.param_b()}};
    case K::root_gap: return json{{"kind", "root_gap"}, {"c", s.param_a()}, {"q", s.param_b()}};
  }
  return json();
}

inline KernelSpec spec_from_json(const json& j, const std::string& where = "spec") {
  require(j.is_object() && j.contains("family") && j.at("family").is_string(), FailureKind::usage,
          "config-schema", where + " must be an object with a string 'family'");
  const std::string f = j.at("family").get<std::string>();
  const auto seq = [&](const char* key) {
    require(j.contains(key), FailureKind::usage, "config-schema", where + " needs '" + key + "'");
    return sequence_from_json(j.at(key), where + "." + key);
  };
  const auto pvec = [&] {
    require(j.contains("p"), FailureKind::usage, "config-schema", where + " needs 'p'");
    return numbers(j.at("p"), where + ".p");
  };
  if (f == "min") {
    check_keys(j, {"family", "s"}, where);
    return MinKernel{seq("s")};
  }
  if (f == "scaled_min") {
    check_keys(j, {"family", "s", "b"}, where);
    return ScaledMinKernel{seq("s"), seq("b")};
  }
  if (f == "exp") {
    check_keys(j, {"family", "v"}, where);
    return ExpKernel{seq("v")};
  }
  if (f == "ar1") {
    check_keys(j, {"family", "x"}, where);
    return AR1{seq("x")};
  }
  if (f == "ar1_shifted") {
    check_keys(j, {"family", "x", "delta_tilde"}, where);
    return AR1Shifted{seq("x"), number(j, "delta_tilde", where)};
  }
  if (f == "ark") {
    check_keys(j, {"family", "p"}, where);
    return ARk{pvec()};
  }
  if (f == "ark_gen") {
    check_keys(j, {"family", "p", "a_sq"}, where);
    return ARkGen{pvec(), number(j, "a_sq", where)};
  }
  if (f == "shifted_scaled") {
    check_keys(j, {"family", "s", "b", "Delta"}, where);
    return ShiftedScaled{seq("s"), seq("b"), number(j, "Delta", where)};
  }
  if (f == "rank_one_update") {
    check_keys(j, {"family", "base", "k", "l", "b"}, where);
    require(j.contains("base"), FailureKind::usage, "config-schema", where + " needs 'base'");
    return make_rank_one(spec_from_json(j.at("base"), where + ".base"), count(j, "k", where), count(j, "l", where),
                         number(j, "b", where));
  }
  if (f == "killed_walk") {
    check_keys(j, {"family", "step_rates", "beta", "radius"}, where);
    require(j.contains("step_rates") && j.at("step_rates").is_object(), FailureKind::usage, "config-schema",
            where + ".step_rates must map offsets to rates");
    KilledWalk kw;
    for (auto it = j.at("step_rates").begin(); it != j.at("step_rates").end(); ++it) {
      int off = 0;
      try {
        std::size_t used = 0;
        off = std::stoi(it.key(), &used);
        require(used == it.key().size(), FailureKind::usage, "config-schema", "bad offset");
      } catch (const std::logic_error&) {
        throw Failure(FailureKind::usage, "config-schema", where + ".step_rates key '" + it.key() + "' is not an integer");
      }
      require(it.value().is_number(), FailureKind::usage, "config-schema", where + ".step_rates values are numbers");
      kw.step_rates[off] = it.value().get<double>();
    }
    kw.beta = number(j, "beta", where);
    const double r = number(j, "radius", where);
    require(r >= 1 && r == std::floor(r) && r <= 1e6, FailureKind::usage, "config-schema",
            where + ".radius must be a positive integer");
    kw.radius = static_cast<int>(r);
    return kw;
  }
  throw Failure(FailureKind::usage, "config-schema", where + ": unknown family '" + f + "'");
}

inline json to_json(const KernelSpec& spec) {
  json j{{"family", family_name(spec)}};
  if (auto* m = spec.as<MinKernel>()) j["s"] = to_json(m->s);
  if (auto* m = spec.as<ScaledMinKernel>()) j["s"] = to_json(m->s), j["b"] = to_json(m->b);
  if (auto* m = spec.as<ExpKernel>()) j["v"] = to_json(m->v);
  if (auto* m = spec.as<AR1>()) j["x"] = to_json(m->x);
  if (auto* m = spec.as<AR1Shifted>()) j["x"] = to_json(m->x), j["delta_tilde"] = m->delta_tilde;
  if (auto* m = spec.as<ARk>()) j["p"] = m->p;
  if (auto* m = spec.as<ARkGen>()) j["p"] = m->p, j["a_sq"] = m->a_sq;
  if (auto* m = spec.as<ShiftedScaled>()) j["s"] = to_json(m->s), j["b"] = to_json(m->b), j["Delta"] = m->Delta;
  if (auto* m = spec.as<RankOneUpdate>()) {
    j["base"] = to_json(*m->base);
    j["k"] = m->k;
    j["l"] = m->l;
    j["b"] = m->b;
  }
  if (auto* m = spec.as<KilledWalk>()) {
    json rates = json::object();
    for (const auto& [off, rate] : m->step_rates) rates[std::to_string(off)] = rate;
    j["step_rates"] = rates;
    j["beta"] = m->beta;
    j["radius"] = m->radius;
  }
  return j;
}

// Round-trip decimal form.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// A reported number with the identity it instantiates, or "derived".
inline json tagged(double value, const std::string& key) { return json{{"value", value}, {"key", key}}; }

// Header "i,j,value"; indices are 1-based plus the given offsets.
inline std::string matrix_csv(const Mat& M, long row_offset = 0, long col_offset = 0) {
  std::ostringstream os;
  os << "i,j,value\n";
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j)
      os << (i + 1 + row_offset) << ',' << (j + 1 + col_offset) << ',' << fmt(M(i, j)) << '\n';
  return os.str();
}

}  // namespace permk::io
