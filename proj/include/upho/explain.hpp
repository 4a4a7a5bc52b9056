#pragma once

// Pathways over the inferred graph, template-rendered hover explanations,
// within-city risk bands, and recommendations.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "upho/error.hpp"
#include "upho/format.hpp"
#include "upho/graphstore.hpp"
#include "upho/regression.hpp"
#include "upho/stats.hpp"
#include "upho/tabledata.hpp"

namespace upho {

struct Pathway {
  std::vector<std::string> edges;
  std::vector<std::string> nodes;
  double score = 0.0;
  std::string kind;  // relation signature, e.g. livesIn>hasMetric>isPredictorOf

  friend bool operator==(const Pathway&, const Pathway&) = default;
};

inline std::set<std::string> default_whitelist() {
  return {"livesIn",       "representsA",          "hasMetric", "hasPhysicalCharacteristic", "isPredictorOf",
          "contributesTo", "isHealthIndicatorFor", "leadsTo",   "isRiskFactorOf",            "isExposedTo"};
}

/// Evidence mapped onto [0, 1]; edges without evidence are neutral (0.5).
inline double normalized_evidence(const std::optional<Evidence>& ev) {
  if (!ev) return 0.5;
  switch (ev->kind) {
    case EvidenceKind::importance:
    case EvidenceKind::prevalence: return std::clamp(ev->value / 100.0, 0.0, 1.0);
    case EvidenceKind::spearman: return std::clamp(std::abs(ev->value), 0.0, 1.0);
    case EvidenceKind::shap: return 1.0 / (1.0 + std::exp(-ev->value));
  }
  return 0.5;
}

inline double pathway_score(const KnowledgeGraph& g, const std::vector<std::string>& edge_ids) {
  if (edge_ids.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& id : edge_ids) sum += normalized_evidence(g.edge(id).evidence);
  return sum / static_cast<double>(edge_ids.size());
}

/// Edges exist, chain subject to object, relations are whitelisted, nodes are distinct.
inline bool validate_pathway(const KnowledgeGraph& g, const Pathway& p, const std::set<std::string>& whitelist) {
  if (p.edges.empty() || p.nodes.size() != p.edges.size() + 1) return false;
  for (std::size_t i = 0; i < p.edges.size(); ++i) {
    if (!g.has_edge(p.edges[i])) return false;
    const Edge& e = g.edge(p.edges[i]);
    if (!whitelist.count(e.relation) || e.subject != p.nodes[i] || e.object != p.nodes[i + 1]) return false;
  }
  return std::set<std::string>(p.nodes.begin(), p.nodes.end()).size() == p.nodes.size();
}

/// All simple directed paths source -> target over whitelisted relations with
/// at most `max_len` edges, best score first.
inline std::vector<Pathway> trace_pathways(const KnowledgeGraph& g, const std::string& source,
                                           const std::string& target,
                                           const std::set<std::string>& whitelist = default_whitelist(),
                                           std::size_t max_len = 6) {
  g.node(source);
  g.node(target);
  if (max_len < 1) fail(ErrorCode::InvalidArgument, "max_len must be at least 1");
  std::vector<Pathway> out;
  if (source == target) return out;

  std::map<std::string, std::vector<const Edge*>> adj;
  for (const auto& e : g.edges()) {
    if (whitelist.count(e.relation)) adj[e.subject].push_back(&e);
  }
  std::vector<std::string> nodes{source};
  std::vector<std::string> edges;
  std::set<std::string> on_path{source};
  const auto dfs = [&](auto& self, const std::string& at) -> void {
    if (edges.size() == max_len) return;
    auto it = adj.find(at);
    if (it == adj.end()) return;
    for (const Edge* e : it->second) {
      if (on_path.count(e->object)) continue;
      edges.push_back(e->id);
      nodes.push_back(e->object);
      if (e->object == target) {
        Pathway p{edges, nodes, pathway_score(g, edges), {}};
        for (const auto& id : edges) p.kind += (p.kind.empty() ? "" : ">") + g.edge(id).relation;
        out.push_back(std::move(p));
      } else {
        on_path.insert(e->object);
        self(self, e->object);
        on_path.erase(e->object);
      }
      edges.pop_back();
      nodes.pop_back();
    }
  };
  dfs(dfs, source);
  std::sort(out.begin(), out.end(), [](const Pathway& a, const Pathway& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.nodes != b.nodes) return a.nodes < b.nodes;
    return a.edges < b.edges;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Templates

enum class Role { physician, researcher, public_ };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::physician: return "physician";
    case Role::researcher: return "researcher";
    case Role::public_: return "public";
  }
  return "";
}

inline Role parse_role(std::string_view s) {
  if (s == "physician") return Role::physician;
  if (s == "researcher") return Role::researcher;
  if (s == "public") return Role::public_;
  fail(ErrorCode::InvalidArgument, "unknown role '" + std::string(s) + "'");
}

/// relation -> template. Keys starting with '@' are node templates
/// (@metric, @metric_nostats, @concept, @instance, @literal); `*` is the
/// fallback edge template.
using TemplateSet = std::map<std::string, std::string>;

inline TemplateSet parse_templates(std::string_view tsv) {
  TemplateSet out;
  std::size_t lineno = 0;
  for (auto line : detail::split_lines(tsv)) {
    ++lineno;
    if (detail::trim(line).empty() || detail::trim(line).front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      fail(ErrorCode::MalformedRow, "template line " + std::to_string(lineno) + " needs relation<TAB>template");
    }
    out[std::string(line.substr(0, tab))] = std::string(line.substr(tab + 1));
  }
  return out;
}

inline std::string serialize_templates(const TemplateSet& t) {
  std::string out;
  for (const auto& [k, v] : t) out += k + "\t" + v + "\n";
  return out;
}

inline const std::string& default_template_text(Role role) {
  static const std::string researcher =
      "*\t{subject} {relation} {object}\n"
      "@concept\t{label} is a concept defined in the {ns} ontology\n"
      "@instance\t{label} is an instance of {type}\n"
      "@literal\t{label} has the value {value}\n"
      "@metric\t{label} is {value} in this area, {direction} the city average of {city_mean}\n"
      "@metric_nostats\t{label} is {value} in this area\n"
      "contributesTo\t{subject} moves the predicted {object} by {value} relative to the city baseline\n"
      "hasMetric\tCensus tract {subject} has {object} of {value}, {direction} the city average of {city_mean}\n"
      "hasTract\tZip code {subject} contains census tract {object}\n"
      "isA\t{subject} is a subtype of {object} in the {ns} ontology\n"
      "isExposedTo\t{subject} is exposed to {object}\n"
      "isHealthIndicatorFor\t{subject} is a health indicator for {object}\n"
      "isPredictorOf\t{subject} is a predictor of {object} with model importance {value}\n"
      "isRiskFactorOf\t{subject} is a risk factor of {object}\n"
      "leadsTo\t{subject} leads to {object}\n"
      "livesIn\t{subject} lives in census tract {object}\n"
      "locatedIn\t{subject} is located in {object}\n"
      "representsA\tCensus tract {subject} represents {object}\n"
      "shouldBeScreenedFor\t{subject} should be screened for {object}\n"
      "shouldPrioritize\t{subject} should prioritize interventions on {object}\n";
  static const std::string physician =
      "*\t{subject} {relation} {object}\n"
      "@concept\t{label} ({ns})\n"
      "@instance\t{label} ({type})\n"
      "@literal\t{label}: {value}\n"
      "@metric\t{label}: {value} here vs city average {city_mean}\n"
      "@metric_nostats\t{label}: {value}\n"
      "contributesTo\t{subject} shifts predicted {object} by {value}\n"
      "hasMetric\t{object} in tract {subject}: {value} vs city average {city_mean}\n"
      "hasTract\tZip {subject} includes tract {object}\n"
      "isA\t{subject} is a {object} ({ns})\n"
      "isExposedTo\tPatient exposure: {object}\n"
      "isHealthIndicatorFor\t{subject} indicates {object}\n"
      "isPredictorOf\t{subject} predicts {object} (importance {value})\n"
      "isRiskFactorOf\t{subject} is a risk factor of {object}\n"
      "leadsTo\t{subject} leads to {object}\n"
      "livesIn\tLives in tract {object}\n"
      "locatedIn\t{subject} is in {object}\n"
      "representsA\tTract {subject} represents {object}\n"
      "shouldBeScreenedFor\tScreen for {object}\n"
      "shouldPrioritize\tPrioritize {object}\n";
  static const std::string public_ =
      "*\t{subject} {relation} {object}\n"
      "@concept\t{label} is a health concept\n"
      "@instance\t{label}\n"
      "@literal\t{label} is {value}\n"
      "@metric\t{label} is {value} here, {direction} the city average of {city_mean}\n"
      "@metric_nostats\t{label} is {value} here\n"
      "contributesTo\t{subject} is linked to {object} in this area\n"
      "hasMetric\tIn this area {object} is {value}, {direction} the city average of {city_mean}\n"
      "hasTract\tThis zip code includes another neighborhood\n"
      "isA\t{subject} is a kind of {object}\n"
      "isExposedTo\tPeople here are exposed to {object}\n"
      "isHealthIndicatorFor\t{subject} measures {object}\n"
      "isPredictorOf\t{subject} helps predict {object}\n"
      "isRiskFactorOf\t{subject} raises the risk of {object}\n"
      "leadsTo\t{subject} can lead to {object}\n"
      "livesIn\tThis person lives in this neighborhood\n"
      "locatedIn\t{subject} is in {object}\n"
      "representsA\tThis area is a neighborhood\n"
      "shouldBeScreenedFor\tScreening for {object} is recommended\n"
      "shouldPrioritize\tPrograms on {object} are recommended\n";
  switch (role) {
    case Role::physician: return physician;
    case Role::public_: return public_;
    case Role::researcher: break;
  }
  return researcher;
}

inline TemplateSet default_templates(Role role = Role::researcher) { return parse_templates(default_template_text(role)); }

// ---------------------------------------------------------------------------
// Explanations

struct EvidenceItem {
  std::string label;
  double value;

  friend bool operator==(const EvidenceItem&, const EvidenceItem&) = default;
};

struct Explanation {
  std::string target;
  std::string text;
  std::vector<EvidenceItem> evidence;
  std::vector<std::string> sources;

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

/// City means keyed by metric term key.
struct CityStats {
  std::map<std::string, double> mean;
};

inline CityStats city_stats(const FeatureTable& table) {
  CityStats s;
  for (std::size_t j = 0; j < table.column_count(); ++j) s.mean[table.bindings()[j].term] = table.column_mean(j);
  return s;
}

/// Numbers occurring in text as standalone tokens (not inside identifiers such as F12).
inline std::vector<double> numbers_in_text(std::string_view text) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const bool starts = std::isdigit(static_cast<unsigned char>(text[i])) &&
                        (i == 0 || !(std::isalnum(static_cast<unsigned char>(text[i - 1])) || text[i - 1] == '_' ||
                                     text[i - 1] == '.'));
    if (!starts) {
      if (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_') {
        while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) ++i;
      } else {
        ++i;
      }
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    if (j + 1 < text.size() && text[j] == '.' && std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
      ++j;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    }
    const bool negative = i > 0 && text[i - 1] == '-';
    double v = std::stod(std::string(text.substr(i, j - i)));
    out.push_back(negative ? -v : v);
    i = j;
  }
  return out;
}

/// Every number in the text matches an evidence value at one-decimal precision.
inline bool numbers_traceable(const Explanation& e) {
  for (double v : numbers_in_text(e.text)) {
    const bool found = std::any_of(e.evidence.begin(), e.evidence.end(), [&](const EvidenceItem& item) {
      return format_fixed(item.value) == format_fixed(v) || format_fixed(std::abs(item.value)) == format_fixed(v);
    });
    if (!found) return false;
  }
  return true;
}

namespace detail {

inline std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        auto it = vars.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

inline std::string with_units(double v, const std::optional<std::string>& units) {
  std::string s = format_fixed(v);
  if (!units) return s;
  if (*units == "percent") return s + "%";
  if (*units == "rate_per_1000") return s + " per thousand";
  return s;
}

inline std::string direction(double value, double mean) {
  if (format_fixed(value) == format_fixed(mean)) return "equal to";
  return value > mean ? "above" : "below";
}

/// Registers numbers embedded in a label (tract and zip codes) as evidence.
inline void label_evidence(const std::string& label, std::vector<EvidenceItem>& ev) {
  for (double v : numbers_in_text(label)) ev.push_back({"code", v});
}

inline const std::string& pick(const TemplateSet& t, const std::string& key, const std::string& fallback) {
  if (auto it = t.find(key); it != t.end()) return it->second;
  if (auto it = t.find(fallback); it != t.end()) return it->second;
  static const std::string plain = "{subject} {relation} {object}";
  return plain;
}

}  // namespace detail

inline Explanation explain_node(const KnowledgeGraph& g, const std::string& node_id, const CityStats& stats,
                                const TemplateSet& templates = default_templates()) {
  const Node& n = g.node(node_id);
  Explanation ex{node_id, {}, {}, {}};
  std::map<std::string, std::string> vars{{"label", n.label}, {"ns", n.term.ns}, {"type", n.term.key()}};
  std::string key;
  switch (n.kind) {
    case NodeKind::concept_:
      key = "@concept";
      ex.sources.push_back(n.term.ns);
      break;
    case NodeKind::instance:
      key = "@instance";
      detail::label_evidence(n.label, ex.evidence);
      break;
    case NodeKind::literal:
      key = "@literal";
      break;
    case NodeKind::metric: {
      auto it = stats.mean.find(n.term.key());
      key = it == stats.mean.end() ? "@metric_nostats" : "@metric";
      if (it != stats.mean.end()) {
        vars["city_mean"] = detail::with_units(it->second, n.units);
        vars["direction"] = detail::direction(*n.value, it->second);
        ex.evidence.push_back({"city_mean", it->second});
      }
      ex.sources.push_back(n.term.key());
      break;
    }
  }
  if (n.value) {
    vars["value"] = detail::with_units(*n.value, n.units);
    ex.evidence.insert(ex.evidence.begin(), EvidenceItem{"value", *n.value});
  }
  ex.text = detail::render(detail::pick(templates, key, "@instance"), vars);
  return ex;
}

inline Explanation explain_edge(const KnowledgeGraph& g, const std::string& edge_id, const CityStats& stats,
                                const TemplateSet& templates = default_templates()) {
  const Edge& e = g.edge(edge_id);
  const Node& s = g.node(e.subject);
  const Node& o = g.node(e.object);
  Explanation ex{edge_id, {}, {}, {}};
  std::map<std::string, std::string> vars{
      {"subject", s.label}, {"object", o.label}, {"relation", e.relation}, {"ns", o.term.ns}};
  detail::label_evidence(s.label, ex.evidence);
  detail::label_evidence(o.label, ex.evidence);

  // Metric-valued endpoint supplies {value}/{city_mean} for hasMetric-like edges.
  const Node* metric = o.kind == NodeKind::metric ? &o : s.kind == NodeKind::metric ? &s : nullptr;
  if (e.evidence && e.evidence->kind != EvidenceKind::prevalence) {
    vars["value"] = format_fixed(e.evidence->value);
    ex.evidence.push_back({std::string(to_string(e.evidence->kind)), e.evidence->value});
  } else if (metric && metric->value) {
    vars["value"] = detail::with_units(*metric->value, metric->units);
    ex.evidence.push_back({"value", *metric->value});
  }
  if (metric) {
    if (auto it = stats.mean.find(metric->term.key()); it != stats.mean.end()) {
      vars["city_mean"] = detail::with_units(it->second, metric->units);
      if (metric->value) vars["direction"] = detail::direction(*metric->value, it->second);
      ex.evidence.push_back({"city_mean", it->second});
    }
  }

  std::string text = detail::render(detail::pick(templates, e.relation, "*"), vars);
  switch (e.origin) {
    case Origin::ml_derived:
      text += " (linear SVR model)";
      ex.sources.push_back("model");
      break;
    case Origin::inferred: {
      const auto prov = e.provenance();
      std::string list;
      for (const auto& id : prov) list += (list.empty() ? "" : ", ") + id;
      text += " [using " + list + "]";
      ex.sources = prov;
      break;
    }
    case Origin::asserted:
      if (e.relation == "isA") ex.sources.push_back(o.term.ns);
      break;
    case Origin::data_evidence:
      if (metric) ex.sources.push_back(metric->term.key());
      break;
  }
  ex.text = std::move(text);
  return ex;
}

// ---------------------------------------------------------------------------
// Risk levels and recommendations

enum class RiskBand { low, medium, high };

inline std::string_view to_string(RiskBand b) {
  switch (b) {
    case RiskBand::low: return "low";
    case RiskBand::medium: return "medium";
    case RiskBand::high: return "high";
  }
  return "";
}

inline RiskBand band_of(double percentile) {
  if (percentile < 33.33) return RiskBand::low;
  if (percentile >= 66.67) return RiskBand::high;
  return RiskBand::medium;
}

struct RiskLevel {
  GeoUnit tract;
  double predicted;
  double percentile;
  RiskBand band;
};

/// Model prediction per row, turned into within-city percentiles (average ranks on ties).
inline std::vector<RiskLevel> risk_levels(const FeatureTable& table, const LinearSvrModel& model) {
  if (!model.trained) fail(ErrorCode::UntrainedModel, "model has not been trained");
  std::vector<std::size_t> cols;
  for (const auto& f : model.features) cols.push_back(table.require_column(f));
  std::vector<double> pred;
  for (const auto& row : table.rows()) {
    std::vector<double> x;
    for (auto j : cols) x.push_back(row.values[j]);
    pred.push_back(model.predict_raw(x));
  }
  const std::size_t n = pred.size();
  const auto ranks = average_ranks(pred);
  std::vector<RiskLevel> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double pct = n < 2 ? 0.0 : (ranks[i] - 1.0) / static_cast<double>(n - 1) * 100.0;
    out.push_back(RiskLevel{table.rows()[i].unit, pred[i], pct, band_of(pct)});
  }
  return out;
}

struct Recommendation {
  std::string edge;
  double score;  // best supporting pathway score; -1 when no pathway supports it
  Explanation explanation;
};

/// One entry per inferred `should*` edge leaving `subject`, strongest supporting pathway first.
inline std::vector<Recommendation> recommendations(const KnowledgeGraph& g, const std::string& subject,
                                                   const CityStats& stats = {},
                                                   const TemplateSet& templates = default_templates(),
                                                   const std::set<std::string>& whitelist = default_whitelist()) {
  g.node(subject);
  std::vector<Recommendation> out;
  for (const auto& e : g.edges()) {
    if (e.origin != Origin::inferred || e.subject != subject || e.relation.rfind("should", 0) != 0) continue;
    const auto paths = trace_pathways(g, subject, e.object, whitelist);
    Recommendation r{e.id, paths.empty() ? -1.0 : paths.front().score, explain_edge(g, e.id, stats, templates)};
    r.explanation.sources = provenance_tree(g, e.id).closure();
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const Recommendation& a, const Recommendation& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.edge < b.edge;
  });
  return out;
}

}  // namespace upho
