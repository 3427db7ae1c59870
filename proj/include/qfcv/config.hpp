#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "qfcv/acidf.hpp"
#include "qfcv/core.hpp"
#include "qfcv/evalharness.hpp"
#include "qfcv/fcv.hpp"
#include "qfcv/qfcv.hpp"
#include "qfcv/sim.hpp"

namespace qfcv {

using Json = nlohmann::json;

/// Validation failure listing every violated field.
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : ValidationError(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& e : v) s += "\n  " + e;
    return s;
  }
  std::vector<std::string> violations_;
};

enum class FieldType { boolean, integer, number, string, number_list, string_list };

struct FieldSpec {
  FieldType type = FieldType::number;
  Json default_value;
  bool nullable = false;
  std::function<std::optional<std::string>(const Json&)> check;  // returns a message on violation
  std::string help;
};

namespace detail {

using Check = std::function<std::optional<std::string>(const Json&)>;

inline Check in_open_unit() {
  return [](const Json& v) -> std::optional<std::string> {
    const double x = v.get<double>();
    if (x > 0.0 && x < 1.0) return std::nullopt;
    return "must lie in (0, 1)";
  };
}

inline Check at_least(double lo) {
  return [lo](const Json& v) -> std::optional<std::string> {
    if (v.get<double>() >= lo) return std::nullopt;
    std::ostringstream s;
    s << "must be >= " << lo;
    return s.str();
  };
}

inline Check one_of(std::vector<std::string> options) {
  return [options](const Json& v) -> std::optional<std::string> {
    const auto s = v.get<std::string>();
    for (const auto& o : options) {
      if (s == o) return std::nullopt;
    }
    std::string msg = "must be one of";
    for (const auto& o : options) msg += " '" + o + "'";
    return msg;
  };
}

inline Check list_in(double lo, double hi) {
  return [lo, hi](const Json& v) -> std::optional<std::string> {
    for (const auto& x : v) {
      if (!(x.get<double>() >= lo && x.get<double>() <= hi)) {
        std::ostringstream s;
        s << "entries must lie in [" << lo << ", " << hi << "]";
        return s.str();
      }
    }
    return std::nullopt;
  };
}

inline bool type_matches(const Json& v, FieldType t) {
  switch (t) {
    case FieldType::boolean:
      return v.is_boolean();
    case FieldType::integer:
      return v.is_number_integer();
    case FieldType::number:
      return v.is_number();
    case FieldType::string:
      return v.is_string();
    case FieldType::number_list:
      if (!v.is_array()) return false;
      for (const auto& x : v) {
        if (!x.is_number()) return false;
      }
      return true;
    case FieldType::string_list:
      if (!v.is_array()) return false;
      for (const auto& x : v) {
        if (!x.is_string()) return false;
      }
      return true;
  }
  return false;
}

inline std::string type_name(FieldType t) {
  switch (t) {
    case FieldType::boolean:
      return "a boolean";
    case FieldType::integer:
      return "an integer";
    case FieldType::number:
      return "a number";
    case FieldType::string:
      return "a string";
    case FieldType::number_list:
      return "a list of numbers";
    case FieldType::string_list:
      return "a list of strings";
  }
  return "?";
}

/// {"a": {"b": 1}} -> {"a.b": 1}; arrays and scalars are leaves.
inline void flatten_into(const Json& v, const std::string& prefix, Json& out) {
  if (v.is_object()) {
    for (auto it = v.begin(); it != v.end(); ++it) {
      flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else {
    out[prefix] = v;
  }
}

}  // namespace detail

/// Every accepted key with its type, default and range.
inline const std::map<std::string, FieldSpec>& config_schema() {
  using detail::at_least;
  using detail::in_open_unit;
  using detail::one_of;
  using FT = FieldType;
  static const std::map<std::string, FieldSpec> schema = {
      {"seed", {FT::integer, 0, false, at_least(0), "base seed of all random streams"}},
      {"threads", {FT::integer, 1, false, at_least(1), "worker threads (never changes results)"}},
      {"alpha", {FT::number, 0.1, false, in_open_unit(), "target miscoverage"}},
      {"loss", {FT::string, "squared", false, one_of({"squared", "absolute"}), "loss function"}},

      {"layout.n", {FT::integer, 2000, false, at_least(1), "observed length n"}},
      {"layout.n_tr", {FT::integer, 40, false, at_least(1), "training window size"}},
      {"layout.n_val", {FT::integer, 5, false, at_least(1), "validation window size"}},
      {"layout.n_te", {FT::integer, 5, false, at_least(1), "test window size"}},
      {"layout.spacing", {FT::integer, 1, false, at_least(1), "fold shift"}},
      {"layout.scheme", {FT::string, "rolling", false, one_of({"rolling", "expanding"}), "window scheme"}},

      {"sim.p", {FT::integer, 20, false, at_least(0), "feature dimension"}},
      {"sim.beta_active", {FT::integer, 4, false, at_least(0), "leading unit coefficients of beta"}},
      {"sim.noise", {FT::string, "arma", false, one_of({"arma", "nonstationary"}), "noise process"}},
      {"sim.phi", {FT::number_list, Json::array({0.5}), false, nullptr, "AR coefficients"}},
      {"sim.theta", {FT::number_list, Json::array(), false, nullptr, "MA coefficients"}},
      {"sim.ma_wedge", {FT::boolean, false, false, nullptr, "use the 20-term wedge MA weights"}},
      {"sim.innovation_sd", {FT::number, 1.0, false, at_least(1e-300), "innovation sd"}},
      {"sim.burn_in", {FT::integer, 500, false, at_least(0), "discarded ARMA steps"}},
      {"sim.noise_scale", {FT::number, 1.0, false, nullptr, "multiplier on the noise"}},
      {"sim.arima_phi", {FT::number, 0.99, false, nullptr, "AR coefficient of the integrated path"}},
      {"sim.variance_exponent", {FT::number, 4.0, false, at_least(0), "additive noise variance t^e"}},

      {"forecaster.kind", {FT::string, "lasso", false, one_of({"lasso", "ridge", "garch"}), "forecaster"}},
      {"forecaster.lambda", {FT::number, nullptr, true, at_least(0), "lasso penalty (null: fraction of lambda_max)"}},
      {"forecaster.lambda_fraction", {FT::number, 0.1, false, at_least(0), "lasso penalty / lambda_max"}},
      {"forecaster.ridge_lambda", {FT::number, 1.0, false, at_least(0), "ridge penalty"}},
      {"forecaster.intercept", {FT::boolean, true, false, nullptr, "fit an intercept"}},

      {"qfcv.m", {FT::integer, 1, false, at_least(0), "auxiliary feature count"}},
      {"qfcv.memory_span", {FT::integer, 1, false, at_least(1), "stacked past windows"}},

      {"fcv.variant", {FT::string, "naive", false, one_of({"naive", "autocov", "scaling"}), "standard error"}},
      {"fcv.k_trun", {FT::integer, nullptr, true, at_least(0), "autocovariance truncation lag"}},

      {"aci.gamma", {FT::number, 0.01, false, at_least(0), "stepsize"}},
      {"aci.first_origin", {FT::integer, 0, false, at_least(0), "first time issuing an interval"}},
      {"aci.horizon", {FT::integer, nullptr, true, at_least(1), "last time index T (null: series length)"}},

      {"eval.replications", {FT::integer, 500, false, at_least(1), "replications"}},
      {"eval.oracle_draws", {FT::integer, 2000, false, at_least(100), "Monte-Carlo oracle draws"}},
      {"eval.methods", {FT::string_list, Json::array({"qfcv1", "fcv"}), false, nullptr,
                        "qfcvM[_spanS], fcv, fcv_c, fcv_p, oracle"}},
      {"eval.phi_grid", {FT::number_list, Json::array(), false, detail::list_in(-0.999, 0.999),
                         "AR(1) sweep values"}},
  };
  return schema;
}

/// A fully resolved flat configuration.
class RunConfig {
 public:
  explicit RunConfig(Json values) : values_(std::move(values)) {}

  const Json& values() const { return values_; }
  bool is_null(const std::string& key) const { return values_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key) const {
    return values_.at(key).get<T>();
  }

  /// Canonical text; parsing it again yields an identical config.
  std::string dump(int indent = -1) const { return values_.dump(indent); }

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.values_ == b.values_; }

 private:
  Json values_;
};

/// A `key=value` override; the value is parsed as JSON when possible and as a string otherwise.
inline std::pair<std::string, Json> parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError({"override '" + s + "' is not of the form key=value"});
  }
  const std::string key = s.substr(0, eq);
  const std::string text = s.substr(eq + 1);
  Json v = Json::parse(text, nullptr, false);
  if (v.is_discarded()) v = text;
  return {key, v};
}

/// Merges file values (nested or dotted keys) and overrides over the schema defaults, and checks
/// types, ranges and cross-field constraints. All violations are reported together.
inline RunConfig parse_config(const Json& file_values, const std::vector<std::string>& overrides = {}) {
  const auto& schema = config_schema();
  std::vector<std::string> errors;
  Json flat = Json::object();
  if (!file_values.is_null()) {
    if (!file_values.is_object()) {
      throw ConfigError({"configuration must be a JSON object"});
    }
    detail::flatten_into(file_values, "", flat);
  }
  for (const auto& o : overrides) {
    auto [k, v] = parse_override(o);
    flat[k] = v;
  }

  Json resolved = Json::object();
  for (const auto& [key, spec] : schema) resolved[key] = spec.default_value;
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    const auto s = schema.find(it.key());
    if (s == schema.end()) {
      errors.push_back(it.key() + ": unknown key");
      continue;
    }
    const FieldSpec& spec = s->second;
    const Json& v = it.value();
    if (v.is_null()) {
      if (!spec.nullable) errors.push_back(it.key() + ": may not be null");
      resolved[it.key()] = v;
      continue;
    }
    Json value = v;
    // accept integral numbers written with a fraction part, e.g. 40.0
    if (spec.type == FieldType::integer && v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) {
      value = static_cast<std::int64_t>(v.get<double>());
    }
    if (!detail::type_matches(value, spec.type)) {
      errors.push_back(it.key() + ": must be " + detail::type_name(spec.type) + ", got " + v.dump());
      continue;
    }
    if (spec.check) {
      if (auto msg = spec.check(value)) {
        errors.push_back(it.key() + ": " + *msg + ", got " + v.dump());
        continue;
      }
    }
    resolved[it.key()] = value;
  }

  if (errors.empty()) {
    const auto n = resolved["layout.n"].get<std::int64_t>();
    const auto n_tr = resolved["layout.n_tr"].get<std::int64_t>();
    const auto n_val = resolved["layout.n_val"].get<std::int64_t>();
    const auto n_te = resolved["layout.n_te"].get<std::int64_t>();
    if (n < n_tr + n_val + n_te) {
      errors.push_back("layout.n: must be >= n_tr + n_val + n_te = " + std::to_string(n_tr + n_val + n_te));
    }
    if (resolved["qfcv.m"].get<std::int64_t>() > n_val) {
      errors.push_back("qfcv.m: must be <= layout.n_val = " + std::to_string(n_val));
    }
    if (resolved["sim.beta_active"].get<std::int64_t>() > resolved["sim.p"].get<std::int64_t>()) {
      errors.push_back("sim.beta_active: must be <= sim.p");
    }
    for (const auto& m : resolved["eval.methods"]) {
      const auto name = m.get<std::string>();
      const bool known = name == "fcv" || name == "fcv_c" || name == "fcv_p" || name == "oracle" ||
                         name.rfind("qfcv", 0) == 0;
      if (!known) errors.push_back("eval.methods: unknown method '" + name + "'");
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return RunConfig(std::move(resolved));
}

inline RunConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {}) {
  Json v = text.empty() ? Json() : Json::parse(text, nullptr, false);
  if (v.is_discarded()) throw ConfigError({"configuration is not valid JSON"});
  return parse_config(v, overrides);
}

inline RunConfig load_config(const std::optional<std::string>& path,
                             const std::vector<std::string>& overrides = {}) {
  if (!path) return parse_config(Json(), overrides);
  std::ifstream in(*path);
  if (!in) throw ConfigError({"cannot open configuration file '" + *path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

// ---------------------------------------------------------------------------------------------
// Typed views

inline SimSpec sim_spec(const RunConfig& c, std::size_t n) {
  SimSpec s;
  s.n = n;
  s.p = c.get<std::size_t>("sim.p");
  s.beta = sparse_beta(s.p, c.get<std::size_t>("sim.beta_active"));
  s.noise_scale = c.get<double>("sim.noise_scale");
  s.seed = c.get<std::uint64_t>("seed");
  if (c.get<std::string>("sim.noise") == "arma") {
    ArmaSpec a;
    a.phi = c.get<std::vector<double>>("sim.phi");
    a.theta = c.get<bool>("sim.ma_wedge") ? wedge_ma_weights() : c.get<std::vector<double>>("sim.theta");
    a.innovation_sd = c.get<double>("sim.innovation_sd");
    a.burn_in = c.get<std::size_t>("sim.burn_in");
    s.noise = a;
  } else {
    NonstationarySpec ns;
    ns.arima_phi = c.get<double>("sim.arima_phi");
    ns.variance_growth_exponent = c.get<double>("sim.variance_exponent");
    s.noise = ns;
  }
  return s;
}

inline Loss loss_of(const RunConfig& c) {
  return c.get<std::string>("loss") == "absolute" ? Loss::absolute() : Loss::squared();
}

inline WindowScheme scheme_of(const RunConfig& c) {
  return c.get<std::string>("layout.scheme") == "expanding" ? WindowScheme::expanding
                                                             : WindowScheme::rolling;
}

inline QfcvConfig qfcv_config(const RunConfig& c) {
  QfcvConfig q;
  q.alpha = c.get<double>("alpha");
  q.aux.m = c.get<std::size_t>("qfcv.m");
  q.memory_span = c.get<std::size_t>("qfcv.memory_span");
  q.scheme = scheme_of(c);
  q.n_tr = c.get<std::size_t>("layout.n_tr");
  q.n_val = c.get<std::size_t>("layout.n_val");
  q.n_te = c.get<std::size_t>("layout.n_te");
  q.spacing = c.get<std::size_t>("layout.spacing");
  return q;
}

inline FcvConfig fcv_config(const RunConfig& c) {
  FcvConfig f;
  const auto v = c.get<std::string>("fcv.variant");
  f.variant = v == "autocov" ? FcvVariant::autocov : v == "scaling" ? FcvVariant::scaling : FcvVariant::naive;
  f.alpha = c.get<double>("alpha");
  if (!c.is_null("fcv.k_trun")) f.k_trun = c.get<std::size_t>("fcv.k_trun");
  return f;
}

inline ForecasterSpec forecaster_spec(const RunConfig& c) {
  ForecasterSpec f;
  const auto kind = c.get<std::string>("forecaster.kind");
  if (kind == "garch") throw ConfigError({"forecaster.kind: garch is not a linear forecaster"});
  f.kind = kind == "ridge" ? ForecasterSpec::Kind::ridge : ForecasterSpec::Kind::lasso;
  if (!c.is_null("forecaster.lambda")) f.lambda = c.get<double>("forecaster.lambda");
  f.lambda_fraction = c.get<double>("forecaster.lambda_fraction");
  f.ridge_lambda = c.get<double>("forecaster.ridge_lambda");
  f.include_intercept = c.get<bool>("forecaster.intercept");
  return f;
}

/// qfcvM or qfcvM_spanS, fcv, fcv_c, fcv_p, oracle.
inline MethodSpec method_from_name(const std::string& name, const FcvConfig& fcv) {
  if (name == "oracle") return MethodSpec::oracle();
  if (name == "fcv" || name == "fcv_c" || name == "fcv_p") {
    MethodSpec m = MethodSpec::fcv_variant(name == "fcv"     ? FcvVariant::naive
                                           : name == "fcv_c" ? FcvVariant::autocov
                                                             : FcvVariant::scaling);
    m.fcv.k_trun = fcv.k_trun;
    return m;
  }
  if (name.rfind("qfcv", 0) == 0) {
    std::size_t m = 0, span = 1;
    const std::string rest = name.substr(4);
    const auto us = rest.find("_span");
    try {
      std::size_t used = 0;
      m = std::stoul(rest.substr(0, us), &used);
      if (used != rest.substr(0, us).size()) throw std::invalid_argument("m");
      if (us != std::string::npos) span = std::stoul(rest.substr(us + 5));
    } catch (const std::exception&) {
      throw ConfigError({"eval.methods: cannot parse method '" + name + "'"});
    }
    return MethodSpec::qfcv_m(m, span);
  }
  throw ConfigError({"eval.methods: unknown method '" + name + "'"});
}

inline ExperimentSpec experiment_spec(const RunConfig& c) {
  ExperimentSpec e;
  e.sim = sim_spec(c, c.get<std::size_t>("layout.n"));
  e.n_tr = c.get<std::size_t>("layout.n_tr");
  e.n_val = c.get<std::size_t>("layout.n_val");
  e.n_te = c.get<std::size_t>("layout.n_te");
  e.spacing = c.get<std::size_t>("layout.spacing");
  e.scheme = scheme_of(c);
  e.alpha = c.get<double>("alpha");
  e.forecaster = forecaster_spec(c);
  const FcvConfig fcv = fcv_config(c);
  for (const auto& name : c.get<std::vector<std::string>>("eval.methods")) {
    e.methods.push_back(method_from_name(name, fcv));
  }
  e.replications = c.get<std::size_t>("eval.replications");
  e.seed = c.get<std::uint64_t>("seed");
  e.oracle_draws = c.get<std::size_t>("eval.oracle_draws");
  e.phi_grid = c.get<std::vector<double>>("eval.phi_grid");
  e.threads = c.get<std::size_t>("threads");
  return e;
}

inline AciConfig aci_config(const RunConfig& c, std::size_t series_length) {
  AciConfig a;
  a.alpha = c.get<double>("alpha");
  a.gamma = c.get<double>("aci.gamma");
  a.delta = c.get<std::size_t>("layout.spacing");
  a.n_te = c.get<std::size_t>("layout.n_te");
  a.first_origin = c.get<std::size_t>("aci.first_origin");
  a.horizon = c.is_null("aci.horizon") ? series_length : c.get<std::size_t>("aci.horizon");
  if (a.horizon > series_length) {
    throw ConfigError({"aci.horizon: " + std::to_string(a.horizon) + " exceeds the series length " +
                       std::to_string(series_length)});
  }
  return a;
}

}  // namespace qfcv
