#pragma once

// Analysis requests, run configuration, and the JSON forms of every report
// section.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "upho/attribution.hpp"
#include "upho/error.hpp"
#include "upho/explain.hpp"
#include "upho/graphstore.hpp"
#include "upho/regression.hpp"
#include "upho/stats.hpp"

namespace upho {

using Json = nlohmann::ordered_json;

enum class Aim { causal_pathway, descriptive };
enum class Level { patient, population };

inline std::string_view to_string(Aim a) { return a == Aim::causal_pathway ? "causal_pathway" : "descriptive"; }
inline std::string_view to_string(Level l) { return l == Level::patient ? "patient" : "population"; }
inline std::string_view to_string(R2Mode m) { return m == R2Mode::determination ? "determination" : "squared_correlation"; }
inline std::string_view to_string(ImportanceMode m) { return m == ImportanceMode::coef ? "coef" : "univariate_r2"; }

inline R2Mode parse_r2_mode(std::string_view s) {
  if (s == "determination") return R2Mode::determination;
  if (s == "squared_correlation") return R2Mode::squared_correlation;
  fail(ErrorCode::BadRequest, "unknown r2_mode '" + std::string(s) + "'");
}

inline ImportanceMode parse_importance_mode(std::string_view s) {
  if (s == "coef") return ImportanceMode::coef;
  if (s == "univariate_r2") return ImportanceMode::univariate_r2;
  fail(ErrorCode::BadRequest, "unknown importance_mode '" + std::string(s) + "'");
}

/// One S1-S5 selection plus run parameters.
struct AnalysisRequest {
  std::string outcome;  // metric term or column name (S1)
  Aim aim = Aim::causal_pathway;
  Level level = Level::patient;
  std::string location;  // tract code (patient) or city name (population)
  Granularity granularity = Granularity::census_tract;
  std::vector<std::string> sdoh_filters;  // highlight terms (S5)
  std::uint64_t seed = 42;
  std::optional<ImportanceMode> importance_mode;
  std::optional<R2Mode> r2_mode;
  Role role = Role::researcher;

  friend bool operator==(const AnalysisRequest&, const AnalysisRequest&) = default;
};

inline Json to_json(const AnalysisRequest& r) {
  Json j;
  j["outcome"] = r.outcome;
  j["aim"] = to_string(r.aim);
  j["level"] = to_string(r.level);
  j["location"] = r.location;
  j["granularity"] = to_string(r.granularity);
  j["sdoh_filters"] = r.sdoh_filters;
  j["seed"] = r.seed;
  if (r.importance_mode) j["importance_mode"] = to_string(*r.importance_mode);
  if (r.r2_mode) j["r2_mode"] = to_string(*r.r2_mode);
  j["role"] = to_string(r.role);
  return j;
}

/// Parses and validates a request document. Unknown fields are rejected.
inline AnalysisRequest parse_request(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::BadRequest, "request must be a JSON object");
  static const std::set<std::string> known{"outcome", "aim",  "level",           "location", "granularity",
                                           "sdoh_filters", "seed", "importance_mode", "r2_mode",  "role"};
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) fail(ErrorCode::BadRequest, "unknown request field '" + k + "'");
  }
  const auto str = [&](const char* key, bool required) -> std::optional<std::string> {
    if (!j.contains(key)) {
      if (required) fail(ErrorCode::BadRequest, std::string("request lacks '") + key + "'");
      return std::nullopt;
    }
    if (!j[key].is_string()) fail(ErrorCode::BadRequest, std::string("'") + key + "' must be a string");
    return j[key].get<std::string>();
  };
  AnalysisRequest r;
  r.outcome = *str("outcome", true);
  if (auto a = str("aim", false)) {
    if (*a == "causal_pathway") r.aim = Aim::causal_pathway;
    else if (*a == "descriptive") r.aim = Aim::descriptive;
    else fail(ErrorCode::BadRequest, "unknown aim '" + *a + "'");
  }
  const auto level = *str("level", true);
  if (level == "patient") r.level = Level::patient;
  else if (level == "population") r.level = Level::population;
  else fail(ErrorCode::BadRequest, "unknown level '" + level + "'");
  r.location = str("location", false).value_or("");
  if (auto g = str("granularity", false)) {
    if (*g == "zip") r.granularity = Granularity::zip;
    else if (*g == "census_tract") r.granularity = Granularity::census_tract;
    else fail(ErrorCode::BadRequest, "unknown granularity '" + *g + "'");
  }
  if (j.contains("sdoh_filters")) {
    if (!j["sdoh_filters"].is_array()) fail(ErrorCode::BadRequest, "'sdoh_filters' must be an array");
    for (const auto& t : j["sdoh_filters"]) {
      if (!t.is_string()) fail(ErrorCode::BadRequest, "'sdoh_filters' entries must be strings");
      r.sdoh_filters.push_back(t.get<std::string>());
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
      fail(ErrorCode::BadRequest, "'seed' must be a non-negative integer");
    }
    r.seed = j["seed"].get<std::uint64_t>();
  }
  if (auto m = str("importance_mode", false)) r.importance_mode = parse_importance_mode(*m);
  if (auto m = str("r2_mode", false)) r.r2_mode = parse_r2_mode(*m);
  if (auto role = str("role", false)) {
    if (*role == "physician") r.role = Role::physician;
    else if (*role == "researcher") r.role = Role::researcher;
    else if (*role == "public") r.role = Role::public_;
    else fail(ErrorCode::BadRequest, "unknown role '" + *role + "'");
  }
  if (r.level == Level::patient) {
    if (r.location.size() != 11 || r.location.find_first_not_of("0123456789") != std::string::npos) {
      fail(ErrorCode::BadRequest, "patient-level requests need an 11-digit tract code as location");
    }
  }
  return r;
}

inline AnalysisRequest parse_request(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::BadRequest, std::string("request is not valid JSON: ") + e.what());
  }
  return parse_request(j);
}

/// Tunables read from a key=value file; every key is optional.
struct RunConfig {
  std::vector<double> grid_C{0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  std::vector<double> grid_epsilon{0.01, 0.05, 0.1, 0.2};
  double vif_threshold = 10.0;
  double min_abs_rho = 0.2;
  double train_fraction = 0.85;
  std::size_t cv_k = 5;
  std::size_t max_pathway_len = 6;
  std::size_t max_iterations = 200000;
  ImportanceMode importance_mode = ImportanceMode::coef;
  R2Mode r2_mode = R2Mode::determination;
  std::map<std::string, std::string> templates;  // role -> template file path
  std::map<std::string, double> thresholds;      // node id or term key -> guard threshold

  std::vector<Hyperparams> grid() const {
    std::vector<Hyperparams> out;
    for (double c : grid_C) {
      for (double e : grid_epsilon) out.push_back(Hyperparams{c, e});
    }
    return out;
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t lineno = 0;
  const auto number = [&](std::string_view v) {
    auto d = detail::parse_number(detail::trim(v));
    if (!d) fail(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": not a number");
    return *d;
  };
  const auto count = [&](std::string_view v) {
    const double d = number(v);
    if (d < 1 || d != std::floor(d)) fail(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": not a positive integer");
    return static_cast<std::size_t>(d);
  };
  const auto list = [&](std::string_view v) {
    std::vector<double> out;
    for (const auto& part : detail::split_csv_record(v)) out.push_back(number(part));
    if (out.empty()) fail(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": empty list");
    return out;
  };
  for (auto raw : detail::split_lines(text)) {
    ++lineno;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "grid.C") cfg.grid_C = list(value);
      else if (key == "grid.epsilon") cfg.grid_epsilon = list(value);
      else if (key == "vif.threshold") cfg.vif_threshold = number(value);
      else if (key == "screen.min_abs_rho") cfg.min_abs_rho = number(value);
      else if (key == "split.train_fraction") cfg.train_fraction = number(value);
      else if (key == "cv.k") cfg.cv_k = count(value);
      else if (key == "pathways.max_len") cfg.max_pathway_len = count(value);
      else if (key == "solver.max_iterations") cfg.max_iterations = count(value);
      else if (key == "importance_mode") cfg.importance_mode = parse_importance_mode(value);
      else if (key == "r2_mode") cfg.r2_mode = parse_r2_mode(value);
      else if (key.rfind("templates.", 0) == 0) cfg.templates[key.substr(10)] = std::string(value);
      else if (key.rfind("threshold.", 0) == 0) cfg.thresholds[key.substr(10)] = number(value);
      else fail(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BadRequest) fail(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": " + e.detail());
      throw;
    }
  }
  for (double c : cfg.grid_C) Hyperparams{c, cfg.grid_epsilon.front()}.validate();
  for (double e : cfg.grid_epsilon) Hyperparams{cfg.grid_C.front(), e}.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON forms

/// Non-finite values become null (JSON has no infinity).
inline Json number_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const CorrelationReport& c, const std::vector<std::string>& screened) {
  Json rho = Json::object();
  for (const auto& [k, v] : c.rho) rho[k] = number_json(v);
  return Json{{"target", c.target}, {"rho", rho}, {"screened", screened}};
}

inline Json to_json(const VifReport& v) {
  const auto values = [](const std::map<std::string, double>& m) {
    Json out = Json::object();
    for (const auto& [k, x] : m) out[k] = number_json(x);
    return out;
  };
  Json trace = Json::array();
  for (const auto& r : v.trace) trace.push_back(Json{{"vif", values(r.vif)}, {"removed", r.removed}});
  return Json{{"threshold", v.threshold}, {"vif", values(v.vif)}, {"removed", v.removed},
              {"degenerate", v.degenerate}, {"trace", trace}};
}

inline Json to_json(const StandardizationParams& p) {
  return Json{{"columns", p.columns}, {"mu", p.mu}, {"sigma", p.sigma}};
}

inline Json to_json(const FitMetrics& m) { return Json{{"rmse", m.rmse}, {"r2", m.r2}}; }

inline Json to_json(const ModelReport& r) {
  Json cv = Json::array();
  for (const auto& e : r.cv_table) {
    cv.push_back(Json{{"C", e.hyper.C}, {"epsilon", e.hyper.epsilon}, {"mean_rmse", e.mean_rmse}, {"fold_rmse", e.fold_rmse}});
  }
  Json imp = Json::object();
  for (const auto& [k, v] : r.importance) imp[k] = v;
  return Json{{"target", r.target},
              {"features", r.model.features},
              {"w", r.model.w},
              {"b", r.model.b},
              {"hyperparams", Json{{"C", r.model.hyper.C}, {"epsilon", r.model.hyper.epsilon}}},
              {"objective", r.model.objective},
              {"iterations", r.model.iterations},
              {"converged", r.model.converged},
              {"standardization", to_json(r.model.standardization)},
              {"target_standardization", to_json(r.target_standardization)},
              {"train", to_json(r.train)},
              {"test", to_json(r.test)},
              {"r2_mode", to_string(r.r2_mode)},
              {"cv_table", cv},
              {"importance", imp},
              {"importance_mode", to_string(r.importance_mode)}};
}

/// Ordered contribution list (feature, phi, direction) for bar plots.
inline Json to_json(const ShapExplanation& s) {
  Json contributions = Json::array();
  for (const auto& [f, phi] : rank_contributions(s)) {
    contributions.push_back(
        Json{{"feature", f}, {"phi", phi}, {"direction", phi > 0 ? "increase" : phi < 0 ? "decrease" : "none"}});
  }
  return Json{{"subject", s.subject ? Json(s.subject->code()) : Json(nullptr)},
              {"baseline", s.baseline},
              {"prediction", s.prediction},
              {"contributions", contributions}};
}

inline Json to_json(const Pathway& p) {
  return Json{{"kind", p.kind}, {"score", p.score}, {"nodes", p.nodes}, {"edges", p.edges}};
}

inline Json to_json(const Explanation& e) {
  Json ev = Json::array();
  for (const auto& item : e.evidence) ev.push_back(Json{{"label", item.label}, {"value", item.value}});
  return Json{{"target", e.target}, {"text", e.text}, {"evidence", ev}, {"sources", e.sources}};
}

inline Json to_json(const RiskLevel& r) {
  return Json{{"tract", r.tract.code()}, {"predicted", r.predicted}, {"percentile", r.percentile},
              {"band", to_string(r.band)}};
}

inline Json to_json(const Recommendation& r) {
  return Json{{"edge", r.edge}, {"score", r.score}, {"explanation", to_json(r.explanation)}};
}

// ---------------------------------------------------------------------------
// Content hashing

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    fail(ErrorCode::Io, "SHA-256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

/// Hash of the report document with `id` and `timings` left out.
inline std::string report_id(const Json& report) {
  Json body = report;
  body.erase("id");
  body.erase("timings");
  return sha256_hex(body.dump());
}

}  // namespace upho
