#pragma once

// Workspace directories, report persistence, and the end-to-end analysis
// pipeline.
//
// <root>/workspace.json   {"city": ...}
// <root>/ontology.onto
// <root>/manifest.tsv, table.csv   linked feature table
// <root>/crosswalk.csv            optional zip/tract crosswalk
// <root>/templates/<role>.tsv     optional explanation templates
// <root>/reports/<id>.json
// <root>/index.json

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "upho/attribution.hpp"
#include "upho/error.hpp"
#include "upho/explain.hpp"
#include "upho/gateway/request.hpp"
#include "upho/graphstore.hpp"
#include "upho/ontology.hpp"
#include "upho/random.hpp"
#include "upho/regression.hpp"
#include "upho/stats.hpp"
#include "upho/tabledata.hpp"

namespace upho {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary sibling and a rename, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  const auto tag = std::hash<std::thread::id>{}(std::this_thread::get_id());
  const fs::path tmp = path.string() + ".tmp" + std::to_string(tag);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::Io, "cannot move " + tmp.string() + " into place");
  }
}

struct Workspace {
  fs::path root;
  std::shared_ptr<const Ontology> ontology;
  FeatureTable table;
  std::optional<ZipTractCrosswalk> crosswalk;
  std::string city = "city";
  std::map<std::string, TemplateSet> templates;  // role name -> templates
};

struct TableSource {
  std::string name;  // provenance label
  std::string csv;
  std::string manifest;
};

/// Links the sources into one table and writes a fresh workspace under `root`.
inline Workspace ingest_workspace(const fs::path& root, const std::vector<TableSource>& sources,
                                  std::string_view ontology_text, std::optional<std::string> crosswalk_csv = std::nullopt,
                                  std::string city = "city") {
  if (sources.empty()) fail(ErrorCode::InvalidArgument, "ingest needs at least one table");
  Workspace ws;
  ws.root = root;
  ws.ontology = std::make_shared<const Ontology>(parse_ontology(ontology_text));
  std::vector<FeatureTable> tables;
  for (const auto& s : sources) {
    const auto manifest = parse_manifest(s.manifest);
    for (const auto& b : manifest) {
      if (!ws.ontology->prefixes.count(b.term_namespace())) {
        fail(ErrorCode::UndeclaredPrefix, "column '" + b.column_name + "' is bound to undeclared namespace '" +
                                              b.term_namespace() + "'");
      }
    }
    tables.push_back(parse_feature_csv(s.csv, manifest, GeoLevel::census_tract, s.name));
  }
  ws.table = tables.size() == 1 ? tables.front() : link_tables(tables);
  if (crosswalk_csv) ws.crosswalk = parse_crosswalk_csv(*crosswalk_csv);
  ws.city = std::move(city);

  std::error_code ec;
  fs::create_directories(root / "reports", ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + (root / "reports").string());
  write_file_atomic(root / "ontology.onto", ontology_text);
  write_file_atomic(root / "manifest.tsv", serialize_manifest(ws.table.bindings()));
  write_file_atomic(root / "table.csv", serialize_feature_csv(ws.table));
  if (ws.crosswalk) write_file_atomic(root / "crosswalk.csv", serialize_crosswalk_csv(*ws.crosswalk));
  write_file_atomic(root / "workspace.json", Json{{"city", ws.city}}.dump(2) + "\n");
  if (!fs::exists(root / "index.json")) write_file_atomic(root / "index.json", "[]\n");
  return ws;
}

inline Workspace open_workspace(const fs::path& root) {
  for (const char* f : {"workspace.json", "ontology.onto", "manifest.tsv", "table.csv"}) {
    if (!fs::is_regular_file(root / f)) {
      throw Error(ErrorCode::WorkspaceMissing,
                  root.string() + " is not an ingested workspace (missing " + f + "); run `upho ingest` first",
                  "ingest");
    }
  }
  Workspace ws;
  ws.root = root;
  ws.ontology = std::make_shared<const Ontology>(parse_ontology(read_file(root / "ontology.onto")));
  ws.table = parse_feature_csv(read_file(root / "table.csv"), parse_manifest(read_file(root / "manifest.tsv")),
                               GeoLevel::census_tract, "table.csv");
  if (fs::is_regular_file(root / "crosswalk.csv")) ws.crosswalk = parse_crosswalk_csv(read_file(root / "crosswalk.csv"));
  const auto meta = nlohmann::json::parse(read_file(root / "workspace.json"), nullptr, false);
  if (meta.is_object() && meta.contains("city") && meta["city"].is_string()) ws.city = meta["city"];
  for (auto role : {Role::physician, Role::researcher, Role::public_}) {
    const auto path = root / "templates" / (std::string(to_string(role)) + ".tsv");
    if (fs::is_regular_file(path)) ws.templates[std::string(to_string(role))] = parse_templates(read_file(path));
  }
  return ws;
}

// ---------------------------------------------------------------------------
// Report store

inline std::mutex& index_mutex() {
  static std::mutex m;
  return m;
}

inline bool valid_report_id(std::string_view id) {
  return id.size() == 64 && id.find_first_not_of("0123456789abcdef") == std::string_view::npos;
}

/// Writes the report and then appends it to the index; both are atomic renames.
inline void persist_report(const fs::path& root, const Json& report) {
  const std::string id = report.at("id");
  std::lock_guard lock(index_mutex());
  write_file_atomic(root / "reports" / (id + ".json"), report.dump(2) + "\n");
  Json index = Json::array();
  if (fs::exists(root / "index.json")) index = Json::parse(read_file(root / "index.json"));
  for (const auto& entry : index) {
    if (entry.at("id") == id) return;
  }
  const auto& req = report.at("request");
  index.push_back(Json{{"id", id}, {"outcome", req.at("outcome")}, {"level", req.at("level")},
                       {"location", req.at("location")}});
  write_file_atomic(root / "index.json", index.dump(2) + "\n");
}

inline Json load_report(const fs::path& root, const std::string& id) {
  const auto path = root / "reports" / (id + ".json");
  if (!valid_report_id(id) || !fs::is_regular_file(path)) fail(ErrorCode::UnknownReport, "no report '" + id + "'");
  return Json::parse(read_file(path));
}

inline Json load_index(const fs::path& root) {
  if (!fs::exists(root / "index.json")) return Json::array();
  return Json::parse(read_file(root / "index.json"));
}

// ---------------------------------------------------------------------------
// Pipeline

/// Everything an analysis produces; `graph` backs the explanation endpoints.
struct AnalysisResult {
  Json report;
  KnowledgeGraph graph;
  std::string subject_node;
  CityStats stats;
  TemplateSet templates;
};

namespace detail {

class StageRunner {
 public:
  template <typename Fn>
  auto operator()(const std::string& name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    const auto record = [&] {
      timings_[name] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record();
      } else {
        auto out = fn();
        record();
        return out;
      }
    } catch (const Error& e) {
      if (e.stage().empty()) throw e.with_stage(name);
      throw;
    }
  }

  Json timings() const {
    Json j = Json::object();
    for (const auto& [k, v] : timings_) j[k] = v;
    return j;
  }

 private:
  std::map<std::string, double> timings_;
};

inline Eigen::MatrixXd matrix_of(const FeatureTable& t, const std::vector<std::string>& cols) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(t.row_count()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto col = t.column(t.require_column(cols[j]));
    for (std::size_t i = 0; i < col.size(); ++i) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  return X;
}

inline TemplateSet templates_for(const Workspace& ws, const RunConfig& cfg, Role role) {
  const std::string name(to_string(role));
  if (auto it = cfg.templates.find(name); it != cfg.templates.end()) return parse_templates(read_file(it->second));
  if (auto it = ws.templates.find(name); it != ws.templates.end()) return it->second;
  return default_templates(role);
}

}  // namespace detail

/// Runs the full pipeline without touching the workspace on disk.
inline AnalysisResult analyze(const Workspace& ws, const AnalysisRequest& req, const RunConfig& cfg = {}) {
  detail::StageRunner stage;
  const FeatureTable& table = ws.table;

  const auto [target, highlight] = stage("request", [&] {
    std::optional<std::size_t> j = table.column_for_term(req.outcome);
    if (!j) j = table.column_index(req.outcome);
    if (!j) fail(ErrorCode::BadRequest, "outcome '" + req.outcome + "' is not a column of the workspace table");
    if (req.level == Level::patient && !table.find_row(req.location)) {
      fail(ErrorCode::UnknownTract, "tract " + req.location + " is not in the workspace table");
    }
    std::set<Term> terms;
    for (const auto& f : req.sdoh_filters) {
      const Term t = Term::parse(f);
      if (!ws.ontology->has_concept(t)) fail(ErrorCode::BadRequest, "filter term " + t.key() + " is not a declared concept");
      terms.insert(t);
    }
    return std::pair{table.bindings()[*j].column_name, terms};
  });
  const Term outcome_term = Term::parse(table.bindings()[table.require_column(target)].term);

  std::vector<std::string> candidates;
  for (const auto& b : table.bindings()) {
    if (b.column_name != target) candidates.push_back(b.column_name);
  }
  const auto [correlation, screened] = stage("screen", [&] {
    auto report = correlation_report(table, target, candidates);
    std::vector<std::string> keep;
    for (const auto& c : candidates) {
      if (std::abs(report.rho.at(c)) >= cfg.min_abs_rho) keep.push_back(c);
    }
    if (keep.empty()) fail(ErrorCode::InvalidArgument, "no feature passes the Spearman screen");
    return std::pair{report, keep};
  });

  const auto [vif_report, features] = stage("vif", [&] {
    auto report = vif_filter(table, screened, cfg.vif_threshold);
    std::vector<std::string> keep;
    for (const auto& c : screened) {
      if (std::find(report.removed.begin(), report.removed.end(), c) == report.removed.end()) keep.push_back(c);
    }
    return std::pair{report, keep};
  });

  auto model_cols = features;
  model_cols.push_back(target);
  const auto [scaled, params] = stage("standardize", [&] { return standardize(table.select_columns(model_cols)); });

  const auto split_idx = stage("split", [&] {
    return split_indices(scaled.row_count(), SplitSpec{cfg.train_fraction, cfg.cv_k, req.seed});
  });
  const FeatureTable train = scaled.select_rows(split_idx.train);
  const FeatureTable test = scaled.select_rows(split_idx.test);
  const Eigen::MatrixXd X_train = detail::matrix_of(train, features);
  const Eigen::MatrixXd X_test = detail::matrix_of(test, features);
  const auto y_train = train.column(train.require_column(target));
  const auto y_test = test.column(test.require_column(target));

  SolverOptions solver;
  solver.max_iterations = cfg.max_iterations;
  const auto grid = stage("grid_search", [&] {
    return grid_search(X_train, y_train, cfg.grid(), cfg.cv_k, SplitMix64(req.seed).next(), solver);
  });

  ModelReport mr;
  mr.target = target;
  mr.cv_table = grid.cv_table;
  mr.r2_mode = req.r2_mode.value_or(cfg.r2_mode);
  mr.importance_mode = req.importance_mode.value_or(cfg.importance_mode);
  mr.model = stage("fit", [&] {
    auto m = train_svr(X_train, y_train, grid.best, solver, features);
    m.standardization = params;
    return m;
  });
  {
    const auto t = params.index_of(target);
    mr.target_standardization = StandardizationParams{{target}, {params.mu[t]}, {params.sigma[t]}};
  }
  stage("evaluate", [&] {
    mr.train = evaluate(mr.model, X_train, y_train, mr.r2_mode);
    mr.test = evaluate(mr.model, X_test, y_test, mr.r2_mode);
  });
  mr.importance = stage("importance", [&] { return importance(mr.model, train, target, mr.importance_mode); });

  std::optional<ShapExplanation> shap;
  if (req.level == Level::patient) {
    shap = stage("shap", [&] { return shap_explain_row(mr.model, table, table, req.location); });
  }

  AnalysisResult result;
  result.stats = city_stats(table);
  result.templates = detail::templates_for(ws, cfg, req.role);
  const std::string city = req.level == Level::population && !req.location.empty() ? req.location : ws.city;
  std::string scope;
  result.graph = stage("graph", [&] {
    Subject subject;
    subject.kind = req.level == Level::patient ? Subject::Kind::patient : Subject::Kind::population;
    subject.tract = req.location;
    subject.city = city;
    subject.granularity = req.granularity;
    SeedContext ctx;
    ctx.crosswalk = ws.crosswalk;
    ctx.known_tracts.emplace();
    for (const auto& row : table.rows()) ctx.known_tracts->insert(row.unit.code());
    auto g = seed_graph(ws.ontology, subject, ctx);
    if (req.level == Level::patient) {
      attach_evidence(g, table, req.location);
      scope = req.location;
    } else {
      attach_city_evidence(g, table, city);
      scope = graph_ids::city(city).substr(5);
    }
    for (const auto& [key, value] : cfg.thresholds) g.set_threshold(key, value);
    enrich_from_model(g, mr, scope, shap);
    return g;
  });
  result.subject_node = req.level == Level::patient ? graph_ids::patient : graph_ids::population;
  stage("infer", [&] { result.graph.infer(); });

  auto whitelist = default_whitelist();
  if (req.level == Level::population) whitelist.insert("locatedIn");
  std::vector<Pathway> pathways;
  if (req.aim == Aim::causal_pathway) {
    pathways = stage("pathways", [&] {
      std::string target_node = graph_ids::metric(scope, target);
      for (const auto& r : ws.ontology->rules) {
        if (r.is_ground_axiom() && r.head.relation == "isHealthIndicatorFor" &&
            std::get<Term>(r.head.subject) == outcome_term) {
          target_node = std::get<Term>(r.head.object).key();
          break;
        }
      }
      return trace_pathways(result.graph, result.subject_node, target_node, whitelist, cfg.max_pathway_len);
    });
  }
  const auto risks = stage("risk", [&] { return risk_levels(table, mr.model); });
  const auto recs = stage("recommend", [&] {
    return recommendations(result.graph, result.subject_node, result.stats, result.templates, whitelist);
  });

  Json report;
  report["id"] = "";
  report["request"] = to_json(req);
  report["correlation"] = to_json(correlation, screened);
  report["vif"] = to_json(vif_report);
  report["model"] = to_json(mr);
  if (shap) report["shap"] = to_json(*shap);
  report["graph"] = export_graph(result.graph, highlight);
  report["pathways"] = Json::array();
  for (const auto& p : pathways) report["pathways"].push_back(to_json(p));
  report["risk_levels"] = Json::array();
  for (const auto& r : risks) report["risk_levels"].push_back(to_json(r));
  report["recommendations"] = Json::array();
  for (const auto& r : recs) report["recommendations"].push_back(to_json(r));
  report["timings"] = stage.timings();
  report["id"] = report_id(report);
  result.report = std::move(report);
  return result;
}

/// analyze() followed by persistence. Nothing is written when any stage fails.
inline Json run_analysis(const Workspace& ws, const AnalysisRequest& req, const RunConfig& cfg = {}) {
  auto result = analyze(ws, req, cfg);
  try {
    persist_report(ws.root, result.report);
  } catch (const Error& e) {
    throw e.with_stage("persist");
  }
  return std::move(result.report);
}

}  // namespace upho
