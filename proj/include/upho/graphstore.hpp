#pragma once

// Typed knowledge graph with forward-chaining inference and per-edge
// provenance. Asserted, data and model edges are minted F<n>; inferred edges
// are minted D<n>.

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "upho/attribution.hpp"
#include "upho/error.hpp"
#include "upho/ontology.hpp"
#include "upho/regression.hpp"
#include "upho/tabledata.hpp"

namespace upho {

enum class NodeKind { concept_, instance, metric, literal };
enum class Origin { asserted, data_evidence, ml_derived, inferred };
enum class EvidenceKind { importance, shap, spearman, prevalence };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::concept_: return "concept";
    case NodeKind::instance: return "instance";
    case NodeKind::metric: return "metric";
    case NodeKind::literal: return "literal";
  }
  return "";
}

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::asserted: return "asserted";
    case Origin::data_evidence: return "data_evidence";
    case Origin::ml_derived: return "ml_derived";
    case Origin::inferred: return "inferred";
  }
  return "";
}

inline std::string_view to_string(EvidenceKind k) {
  switch (k) {
    case EvidenceKind::importance: return "importance";
    case EvidenceKind::shap: return "shap";
    case EvidenceKind::spearman: return "spearman";
    case EvidenceKind::prevalence: return "prevalence";
  }
  return "";
}

inline NodeKind parse_node_kind(std::string_view s) {
  for (auto k : {NodeKind::concept_, NodeKind::instance, NodeKind::metric, NodeKind::literal}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown node kind '" + std::string(s) + "'");
}

inline Origin parse_origin(std::string_view s) {
  for (auto o : {Origin::asserted, Origin::data_evidence, Origin::ml_derived, Origin::inferred}) {
    if (to_string(o) == s) return o;
  }
  fail(ErrorCode::InvalidArgument, "unknown origin '" + std::string(s) + "'");
}

inline EvidenceKind parse_evidence_kind(std::string_view s) {
  for (auto k : {EvidenceKind::importance, EvidenceKind::shap, EvidenceKind::spearman, EvidenceKind::prevalence}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown evidence kind '" + std::string(s) + "'");
}

struct Node {
  std::string id;
  std::string label;
  Term term;
  NodeKind kind = NodeKind::concept_;
  std::optional<double> value;
  std::optional<std::string> units;

  friend bool operator==(const Node&, const Node&) = default;
};

struct Evidence {
  EvidenceKind kind;
  double value;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

/// One rule instantiation. Premises are edge ids in body order; atoms matched
/// by a schema link have no premise.
struct Derivation {
  std::string rule;
  std::vector<std::string> premises;
  std::map<std::string, std::string> bindings;  // variable -> node id

  friend bool operator==(const Derivation&, const Derivation&) = default;
};

struct Edge {
  std::string id;
  std::string subject;
  std::string relation;
  std::string object;
  Origin origin = Origin::asserted;
  std::optional<Evidence> evidence;
  std::vector<Derivation> derivations;  // inferred only; first is primary

  /// Rule and fact ids of every derivation, first occurrence order.
  std::vector<std::string> provenance() const {
    std::vector<std::string> out;
    const auto add = [&](const std::string& id) {
      if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    };
    for (const auto& d : derivations) {
      add(d.rule);
      for (const auto& p : d.premises) add(p);
    }
    return out;
  }

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct InferenceResult {
  std::vector<Edge> new_facts;
  std::size_t iterations = 0;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() : ont_(std::make_shared<const Ontology>()) {}
  explicit KnowledgeGraph(std::shared_ptr<const Ontology> ont) : ont_(std::move(ont)) {
    if (!ont_) ont_ = std::make_shared<const Ontology>();
  }

  const Ontology& ontology() const noexcept { return *ont_; }
  std::shared_ptr<const Ontology> ontology_ptr() const noexcept { return ont_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::map<std::string, double>& thresholds() const noexcept { return thresholds_; }
  bool at_fixpoint() const noexcept { return fixpoint_; }

  bool has_node(std::string_view id) const { return node_index_.count(std::string(id)) > 0; }
  bool has_edge(std::string_view id) const { return edge_index_.count(std::string(id)) > 0; }

  const Node& node(std::string_view id) const {
    auto it = node_index_.find(std::string(id));
    if (it == node_index_.end()) fail(ErrorCode::UnknownNode, "no node '" + std::string(id) + "'");
    return nodes_[it->second];
  }

  const Edge& edge(std::string_view id) const {
    auto it = edge_index_.find(std::string(id));
    if (it == edge_index_.end()) fail(ErrorCode::UnknownEdge, "no edge '" + std::string(id) + "'");
    return edges_[it->second];
  }

  const Edge* find_edge(std::string_view s, std::string_view rel, std::string_view o) const {
    auto it = triple_index_.find({std::string(s), std::string(rel), std::string(o)});
    return it == triple_index_.end() ? nullptr : &edges_[it->second];
  }

  /// Adds a node; re-adding an identical node is a no-op.
  const Node& add_node(Node n) {
    if (n.id.empty()) fail(ErrorCode::InvalidArgument, "node id is empty");
    if ((n.kind == NodeKind::metric || n.kind == NodeKind::literal) && !n.value) {
      fail(ErrorCode::InvalidArgument, "metric/literal node '" + n.id + "' needs a value");
    }
    if (auto it = node_index_.find(n.id); it != node_index_.end()) {
      if (!(nodes_[it->second] == n)) fail(ErrorCode::InvalidArgument, "node '" + n.id + "' redefined differently");
      return nodes_[it->second];
    }
    if (n.label.empty()) n.label = n.kind == NodeKind::concept_ ? n.term.name : n.id;
    node_index_.emplace(n.id, nodes_.size());
    nodes_.push_back(std::move(n));
    fixpoint_ = false;
    return nodes_.back();
  }

  /// Concept node whose id is the term key.
  const Node& ensure_concept(const Term& t) {
    if (auto it = node_index_.find(t.key()); it != node_index_.end()) return nodes_[it->second];
    return add_node(Node{t.key(), t.name, t, NodeKind::concept_, std::nullopt, std::nullopt});
  }

  /// Asserts (subject, relation, object). Returns the id of the new edge, or of
  /// the existing edge when the triple is already present.
  std::string assert_fact(const std::string& subject, const std::string& relation, const std::string& object,
                          Origin origin = Origin::asserted, std::optional<Evidence> evidence = std::nullopt,
                          std::optional<std::string> id = std::nullopt) {
    if (origin == Origin::inferred) fail(ErrorCode::InvalidArgument, "inferred edges come from infer()");
    if (!ont_->has_relation(relation)) fail(ErrorCode::UnknownRelation, "relation '" + relation + "' is not declared");
    node(subject);
    node(object);
    if (const Edge* e = find_edge(subject, relation, object)) return e->id;
    std::string eid = id ? *id : mint('F');
    if (has_edge(eid)) fail(ErrorCode::InvalidArgument, "edge id '" + eid + "' already in use");
    note_id(eid);
    push_edge(Edge{eid, subject, relation, object, origin, evidence, {}});
    return eid;
  }

  void set_threshold(const std::string& key, double value) {
    thresholds_[key] = value;
    fixpoint_ = false;
  }

  std::optional<double> threshold(const std::string& key) const {
    auto it = thresholds_.find(key);
    return it == thresholds_.end() ? std::nullopt : std::optional<double>(it->second);
  }

  /// Forward chaining to fixpoint. Each round evaluates every rule against the
  /// edges present at the start of the round.
  InferenceResult infer();

 private:
  friend class RuleMatcher;

  std::string mint(char prefix) {
    auto& counter = prefix == 'F' ? next_fact_ : next_derived_;
    std::string id;
    do {
      id = std::string(1, prefix) + std::to_string(counter++);
    } while (has_edge(id));
    return id;
  }

  void note_id(const std::string& id) {
    if (id.size() < 2 || (id[0] != 'F' && id[0] != 'D')) return;
    std::size_t n = 0;
    for (std::size_t i = 1; i < id.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(id[i]))) return;
      n = n * 10 + static_cast<std::size_t>(id[i] - '0');
    }
    auto& counter = id[0] == 'F' ? next_fact_ : next_derived_;
    counter = std::max(counter, n + 1);
  }

  void push_edge(Edge e) {
    edge_index_.emplace(e.id, edges_.size());
    triple_index_.emplace(std::tuple{e.subject, e.relation, e.object}, edges_.size());
    edges_.push_back(std::move(e));
    fixpoint_ = false;
  }

  std::shared_ptr<const Ontology> ont_;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::map<std::string, std::size_t> node_index_;
  std::map<std::string, std::size_t> edge_index_;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> triple_index_;
  std::map<std::string, double> thresholds_;
  std::size_t next_fact_ = 1;
  std::size_t next_derived_ = 1;
  bool fixpoint_ = false;
};

/// Backtracking join of one rule's body against a fixed prefix of the edges.
class RuleMatcher {
 public:
  RuleMatcher(const KnowledgeGraph& g, std::size_t edge_limit) : g_(g), limit_(edge_limit) {}

  /// Every satisfying instantiation, in join order.
  std::vector<Derivation> run(const RuleAxiom& rule) {
    rule_ = &rule;
    out_.clear();
    Derivation d;
    d.rule = rule.id;
    step(0, d);
    return out_;
  }

  /// Node id an operand resolves to under `bindings` (constants map to their concept node id).
  static std::string resolve(const Operand& op, const std::map<std::string, std::string>& bindings) {
    if (auto v = std::get_if<Variable>(&op)) return bindings.at(v->name);
    return std::get<Term>(op).key();
  }

  /// Whether node `n` can fill operand `op` given current bindings.
  static bool fits(const Ontology& ont, const Operand& op, const Node& n,
                   const std::map<std::string, std::string>& bindings) {
    if (auto v = std::get_if<Variable>(&op)) {
      auto it = bindings.find(v->name);
      return it == bindings.end() || it->second == n.id;
    }
    return ont.is_subsumed(n.term, std::get<Term>(op));
  }

 private:
  static void bind(const Operand& op, const std::string& node_id, std::map<std::string, std::string>& bindings) {
    if (auto v = std::get_if<Variable>(&op)) bindings.emplace(v->name, node_id);
  }

  bool guards_hold(const std::map<std::string, std::string>& bindings) const {
    for (const auto& g : rule_->guards) {
      const Node& n = g_.node(bindings.at(g.var));
      if (!n.value) return false;
      double rhs = 0.0;
      if (auto v = std::get_if<Variable>(&g.rhs)) {
        auto t = g_.threshold(bindings.at(v->name));
        if (!t) return false;
        rhs = *t;
      } else {
        rhs = std::get<double>(g.rhs);
      }
      if (!compare(*n.value, g.op, rhs)) return false;
    }
    return true;
  }

  void step(std::size_t i, Derivation& d) {
    if (i == rule_->body.size()) {
      if (guards_hold(d.bindings)) out_.push_back(d);
      return;
    }
    const Atom& atom = rule_->body[i];
    const Ontology& ont = g_.ontology();
    for (std::size_t e = 0; e < limit_; ++e) {
      const Edge& edge = g_.edges()[e];
      if (edge.relation != atom.relation) continue;
      const Node& s = g_.node(edge.subject);
      const Node& o = g_.node(edge.object);
      if (!fits(ont, atom.subject, s, d.bindings)) continue;
      auto saved = d.bindings;
      bind(atom.subject, s.id, d.bindings);
      if (fits(ont, atom.object, o, d.bindings)) {
        bind(atom.object, o.id, d.bindings);
        d.premises.push_back(edge.id);
        step(i + 1, d);
        d.premises.pop_back();
      }
      d.bindings = std::move(saved);
    }
    // Schema links lift to every node typed by the link subject.
    for (const auto& link : ont.links) {
      if (link.relation != atom.relation || !g_.has_node(link.object.key())) continue;
      const Node& o = g_.node(link.object.key());
      for (const Node& s : g_.nodes()) {
        if (!ont.is_subsumed(s.term, link.subject) || !fits(ont, atom.subject, s, d.bindings)) continue;
        auto saved = d.bindings;
        bind(atom.subject, s.id, d.bindings);
        if (fits(ont, atom.object, o, d.bindings)) {
          bind(atom.object, o.id, d.bindings);
          step(i + 1, d);
        }
        d.bindings = std::move(saved);
      }
    }
  }

  const KnowledgeGraph& g_;
  std::size_t limit_;
  const RuleAxiom* rule_ = nullptr;
  std::vector<Derivation> out_;
};

inline InferenceResult KnowledgeGraph::infer() {
  InferenceResult result;
  std::set<std::string> relation_names = core_relations();
  for (const auto& [name, _] : ont_->relations) relation_names.insert(name);
  for (const auto& r : ont_->rules) relation_names.insert(r.head.relation);

  std::size_t productive_rounds = 0;
  while (true) {
    ++result.iterations;
    const std::size_t n = nodes_.size();
    const std::size_t cap = std::max<std::size_t>(1, n * n * relation_names.size());
    const std::size_t snapshot = edges_.size();
    bool changed = false;
    for (const auto& rule : ont_->rules) {
      auto found = RuleMatcher(*this, snapshot).run(rule);
      for (auto& d : found) {
        const Operand& hs = rule.head.subject;
        const Operand& ho = rule.head.object;
        if (auto t = std::get_if<Term>(&hs)) ensure_concept(*t);
        if (auto t = std::get_if<Term>(&ho)) ensure_concept(*t);
        const std::string s = RuleMatcher::resolve(hs, d.bindings);
        const std::string o = RuleMatcher::resolve(ho, d.bindings);
        auto it = triple_index_.find({s, rule.head.relation, o});
        if (it == triple_index_.end()) {
          const std::string id = mint('D');
          push_edge(Edge{id, s, rule.head.relation, o, Origin::inferred, std::nullopt, {std::move(d)}});
          result.new_facts.push_back(edges_.back());
          changed = true;
        } else {
          Edge& existing = edges_[it->second];
          if (existing.origin != Origin::inferred) continue;
          if (std::find(existing.derivations.begin(), existing.derivations.end(), d) != existing.derivations.end()) {
            continue;
          }
          existing.derivations.push_back(std::move(d));
          changed = true;
        }
      }
    }
    if (!changed) break;
    if (++productive_rounds > cap) {
      fail(ErrorCode::InferenceOverflow, "inference exceeded " + std::to_string(cap) + " rounds");
    }
  }
  // Report the final derivation lists of edges minted in this call.
  for (auto& e : result.new_facts) e = edge(e.id);
  fixpoint_ = true;
  return result;
}

struct ProvenanceTree {
  std::string fact;
  std::string rule;  // empty for leaves
  std::vector<ProvenanceTree> children;

  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& c : children) d = std::max(d, c.depth());
    return rule.empty() ? 0 : d + 1;
  }

  /// Rule and fact ids in the tree, preorder, without duplicates.
  std::vector<std::string> closure() const {
    std::vector<std::string> out;
    collect(out);
    return out;
  }

 private:
  void collect(std::vector<std::string>& out) const {
    const auto add = [&](const std::string& id) {
      if (!id.empty() && std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    };
    add(fact);
    add(rule);
    for (const auto& c : children) c.collect(out);
  }
};

/// Expands the primary derivation of each inferred fact down to base facts.
inline ProvenanceTree provenance_tree(const KnowledgeGraph& g, const std::string& fact_id) {
  if (!g.has_edge(fact_id)) fail(ErrorCode::UnknownFact, "no fact '" + fact_id + "'");
  const Edge& e = g.edge(fact_id);
  ProvenanceTree t{fact_id, {}, {}};
  if (e.origin != Origin::inferred || e.derivations.empty()) return t;
  const Derivation& d = e.derivations.front();
  t.rule = d.rule;
  for (const auto& p : d.premises) t.children.push_back(provenance_tree(g, p));
  return t;
}

enum class Granularity { zip, census_tract };

inline std::string_view to_string(Granularity g) { return g == Granularity::zip ? "zip" : "census_tract"; }

inline Granularity parse_granularity(std::string_view s) {
  if (s == "zip") return Granularity::zip;
  if (s == "census_tract") return Granularity::census_tract;
  fail(ErrorCode::InvalidArgument, "unknown granularity '" + std::string(s) + "'");
}

struct Subject {
  enum class Kind { patient, population } kind = Kind::patient;
  std::string tract;  // patient level
  std::string city = "city";
  Granularity granularity = Granularity::census_tract;
};

struct SeedContext {
  std::optional<ZipTractCrosswalk> crosswalk;
  std::optional<std::set<std::string>> known_tracts;
};

namespace graph_ids {
inline std::string tract(const std::string& code) { return "tract:" + code; }
inline std::string zip(const std::string& code) { return "zip:" + code; }
inline std::string neighborhood(const std::string& code) { return "neighborhood:" + code; }
inline std::string city(const std::string& name) {
  std::string slug;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) slug.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else if (!slug.empty() && slug.back() != '-') slug.push_back('-');
  }
  while (!slug.empty() && slug.back() == '-') slug.pop_back();
  return "city:" + (slug.empty() ? std::string("city") : slug);
}
inline std::string metric(const std::string& scope, const std::string& column) {
  return "metric:" + scope + ":" + column;
}
inline const std::string patient = "patient";
inline const std::string population = "population";
}  // namespace graph_ids

namespace detail {

inline const Term kTractType{"GISO", "CensusTract"};
inline const Term kZipType{"GISO", "ZipCode"};
inline const Term kNeighborhoodType{"ACESO", "Neighborhood"};

/// Declared concept `t`, or `fallback` in the local namespace when undeclared.
inline Term typed(const Ontology& ont, const Term& t, const std::string& fallback) {
  return ont.has_concept(t) ? t : Term{"local", fallback};
}

inline void add_tract(KnowledgeGraph& g, const std::string& code) {
  const Ontology& ont = g.ontology();
  const auto id = graph_ids::tract(code);
  g.add_node(Node{id, code, typed(ont, kTractType, "CensusTract"), NodeKind::instance, std::nullopt, std::nullopt});
  if (ont.has_concept(kTractType)) g.assert_fact(id, "isA", g.ensure_concept(kTractType).id);
  if (ont.has_concept(kNeighborhoodType)) {
    const auto nid = graph_ids::neighborhood(code);
    g.add_node(Node{nid, "neighborhood " + code, kNeighborhoodType, NodeKind::instance, std::nullopt, std::nullopt});
    g.assert_fact(id, "representsA", nid);
  }
}

}  // namespace detail

/// Concept nodes for every term used by axioms and schema links, their isA
/// ancestors, and the isA edges among them.
inline void add_ontology_concepts(KnowledgeGraph& g) {
  const Ontology& ont = g.ontology();
  std::set<Term> terms;
  for (const auto& r : ont.rules) {
    if (!r.is_ground_axiom()) continue;
    terms.insert(std::get<Term>(r.head.subject));
    terms.insert(std::get<Term>(r.head.object));
  }
  for (const auto& l : ont.links) {
    terms.insert(l.subject);
    terms.insert(l.object);
  }
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& [c, p] : ont.isa) {
      if (terms.count(c) && terms.insert(p).second) grew = true;
    }
  }
  for (const auto& t : terms) g.ensure_concept(t);
  for (const auto& [c, p] : ont.isa) {
    if (terms.count(c)) g.assert_fact(c.key(), "isA", p.key());
  }
}

/// Subject node, its geography, and the ontology's concept skeleton.
inline KnowledgeGraph seed_graph(std::shared_ptr<const Ontology> ont, const Subject& subject,
                                 const SeedContext& ctx = {}) {
  KnowledgeGraph g(std::move(ont));
  const Ontology& o = g.ontology();
  if (subject.kind == Subject::Kind::patient) {
    const GeoUnit tract(subject.tract, GeoLevel::census_tract);
    if (ctx.known_tracts && !ctx.known_tracts->count(tract.code())) {
      fail(ErrorCode::UnknownTract, "tract " + tract.code() + " is not in the workspace");
    }
    g.add_node(Node{graph_ids::patient, "patient", detail::typed(o, Term{"local", "Patient"}, "Patient"),
                    NodeKind::instance, std::nullopt, std::nullopt});
    g.add_node(Node{graph_ids::tract(tract.code()), tract.code(),
                    detail::typed(o, detail::kTractType, "CensusTract"), NodeKind::instance, std::nullopt,
                    std::nullopt});
    g.assert_fact(graph_ids::patient, "livesIn", graph_ids::tract(tract.code()));
    detail::add_tract(g, tract.code());
    if (ctx.crosswalk) {
      for (const auto& zip : ctx.crosswalk->zips_of(tract)) {
        const auto zid = graph_ids::zip(zip.code());
        g.add_node(Node{zid, zip.code(), detail::typed(o, detail::kZipType, "ZipCode"), NodeKind::instance,
                        std::nullopt, std::nullopt});
        if (o.has_concept(detail::kZipType)) g.assert_fact(zid, "isA", g.ensure_concept(detail::kZipType).id);
        g.assert_fact(graph_ids::tract(tract.code()), "locatedIn", zid);
        if (subject.granularity == Granularity::zip) {
          for (const auto& sibling : tracts_in_zip(*ctx.crosswalk, zip)) {
            detail::add_tract(g, sibling.code());
            g.assert_fact(zid, "hasTract", graph_ids::tract(sibling.code()));
          }
        }
      }
    }
  } else {
    g.add_node(Node{graph_ids::population, "population", detail::typed(o, Term{"local", "Population"}, "Population"),
                    NodeKind::instance, std::nullopt, std::nullopt});
    const auto cid = graph_ids::city(subject.city);
    g.add_node(Node{cid, subject.city, detail::typed(o, Term{"local", "City"}, "City"), NodeKind::instance,
                    std::nullopt, std::nullopt});
    g.assert_fact(graph_ids::population, "locatedIn", cid);
  }
  add_ontology_concepts(g);
  return g;
}

/// Instance edges for the named axioms whose subject is the node's own term,
/// e.g. an obesity-prevalence metric node isHealthIndicatorFor DO:Obesity.
inline std::vector<std::string> lift_term_axioms(KnowledgeGraph& g, const std::string& node_id) {
  std::vector<std::string> ids;
  const Term term = g.node(node_id).term;
  for (const auto& r : g.ontology().rules) {
    if (!r.is_ground_axiom() || std::get<Term>(r.head.subject) != term) continue;
    const Term& object = std::get<Term>(r.head.object);
    ids.push_back(g.assert_fact(node_id, r.head.relation, g.ensure_concept(object).id, Origin::data_evidence));
  }
  return ids;
}

namespace detail {

/// Metric node + hasMetric edge + axiom-derived indicator edges for one column.
inline std::vector<std::string> attach_metric(KnowledgeGraph& g, const std::string& owner, const std::string& scope,
                                              const ColumnBinding& b, double value, double city_mean) {
  std::vector<std::string> ids;
  const Ontology& ont = g.ontology();
  const Term term = Term::parse(b.term);
  const auto mid = graph_ids::metric(scope, b.column_name);
  g.add_node(Node{mid, term.name, term, NodeKind::metric, value, std::string(to_string(b.units))});
  ids.push_back(g.assert_fact(owner, "hasMetric", mid, Origin::data_evidence,
                              Evidence{EvidenceKind::prevalence, value}));
  g.set_threshold(mid, city_mean);
  g.set_threshold(term.key(), city_mean);
  for (auto& id : lift_term_axioms(g, mid)) {
    g.set_threshold(g.edge(id).object, city_mean);
    ids.push_back(std::move(id));
  }
  for (const auto& l : ont.links) {
    if (ont.is_subsumed(term, l.subject)) g.set_threshold(l.object.key(), city_mean);
  }
  return ids;
}

}  // namespace detail

/// Metric evidence for `tract` from the linked city table. Thresholds default
/// to the city mean of each metric. Idempotent.
inline std::vector<std::string> attach_evidence(KnowledgeGraph& g, const FeatureTable& table,
                                                const std::string& tract) {
  auto r = table.find_row(tract);
  if (!r) fail(ErrorCode::TractNotInTable, "tract " + tract + " is not in the table");
  const auto tid = graph_ids::tract(tract);
  if (!g.has_node(tid)) detail::add_tract(g, tract);
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < table.column_count(); ++j) {
    auto more = detail::attach_metric(g, tid, tract, table.bindings()[j], table.rows()[*r].values[j],
                                      table.column_mean(j));
    ids.insert(ids.end(), more.begin(), more.end());
  }
  return ids;
}

/// City-level metrics (value = city mean) attached to the city node.
inline std::vector<std::string> attach_city_evidence(KnowledgeGraph& g, const FeatureTable& table,
                                                     const std::string& city) {
  const auto cid = graph_ids::city(city);
  if (!g.has_node(cid)) {
    g.add_node(Node{cid, city, Term{"local", "City"}, NodeKind::instance, std::nullopt, std::nullopt});
  }
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < table.column_count(); ++j) {
    const double mean = table.column_mean(j);
    auto more = detail::attach_metric(g, cid, cid.substr(5), table.bindings()[j], mean, mean);
    ids.insert(ids.end(), more.begin(), more.end());
  }
  return ids;
}

/// isPredictorOf edges (importance evidence) from each model feature's metric
/// node to the outcome metric node; contributesTo edges (signed SHAP) when an
/// explanation is given. `scope` is the tract code or the city slug used when
/// the metrics were attached.
inline std::vector<std::string> enrich_from_model(KnowledgeGraph& g, const ModelReport& report,
                                                  const std::string& scope,
                                                  const std::optional<ShapExplanation>& expl = std::nullopt) {
  std::vector<std::string> ids;
  if (report.importance.empty() && report.model.features.empty()) return ids;
  const auto metric_id = [&](const std::string& column) {
    const auto id = graph_ids::metric(scope, column);
    if (!g.has_node(id)) fail(ErrorCode::UnmappedFeature, "feature '" + column + "' has no metric node");
    return id;
  };
  const auto outcome = metric_id(report.target);
  for (const auto& f : report.model.features) {
    auto it = report.importance.find(f);
    if (it == report.importance.end()) continue;
    ids.push_back(g.assert_fact(metric_id(f), "isPredictorOf", outcome, Origin::ml_derived,
                                Evidence{EvidenceKind::importance, it->second}));
  }
  if (expl) {
    for (const auto& f : expl->features) {
      ids.push_back(g.assert_fact(metric_id(f), "contributesTo", outcome, Origin::ml_derived,
                                  Evidence{EvidenceKind::shap, expl->phi.at(f)}));
    }
  }
  return ids;
}

/// Whether node `n` falls under one of the highlight terms, directly or through
/// a schema link.
inline bool is_highlighted(const Ontology& ont, const Node& n, const std::set<Term>& highlight) {
  for (const auto& h : highlight) {
    if (ont.is_subsumed(n.term, h)) return true;
    for (const auto& l : ont.links) {
      if (ont.is_subsumed(n.term, l.subject) && ont.is_subsumed(l.object, h)) return true;
    }
  }
  return false;
}

/// Graph document: {nodes: [...], edges: [...]}.
inline nlohmann::ordered_json export_graph(const KnowledgeGraph& g, const std::set<Term>& highlight = {}) {
  nlohmann::ordered_json doc;
  doc["nodes"] = nlohmann::ordered_json::array();
  doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& n : g.nodes()) {
    nlohmann::ordered_json j;
    j["id"] = n.id;
    j["label"] = n.label;
    j["ns"] = n.term.ns;
    j["kind"] = to_string(n.kind);
    if (n.value) j["value"] = *n.value;
    if (n.units) j["units"] = *n.units;
    j["highlighted"] = is_highlighted(g.ontology(), n, highlight);
    doc["nodes"].push_back(std::move(j));
  }
  for (const auto& e : g.edges()) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["src"] = e.subject;
    j["rel"] = e.relation;
    j["dst"] = e.object;
    j["origin"] = to_string(e.origin);
    if (e.evidence) j["evidence"] = {{"kind", to_string(e.evidence->kind)}, {"value", e.evidence->value}};
    if (e.origin == Origin::inferred) j["provenance"] = e.provenance();
    doc["edges"].push_back(std::move(j));
  }
  return doc;
}

/// Loads a fact file into a graph over `ont`:
///
///   node patient instance Patient "patient" .
///   node lpa metric HIO:%PopWLackOfPhysicalActivity 49 percent "%PopWLackOfPhysicalActivity" .
///   fact F1: patient livesIn tract10300 .
///   fact F6: lpa isPredictorOf obesity origin ml_derived evidence importance 100 .
///   threshold COPE:lackOfPhysicalActivity 36.2 .
///
/// Ids may be quoted. Edge endpoints naming a declared concept create its node.
/// The ontology's concept skeleton and the metric nodes' lifted axioms are
/// added after all statements.
inline KnowledgeGraph load_facts(std::shared_ptr<const Ontology> ont, std::string_view text) {
  using dsl::Tok;
  KnowledgeGraph g(std::move(ont));
  dsl::Cursor cur(dsl::tokenize(text));
  const auto id_token = [&](const std::string& what) {
    if (cur.at(Tok::String)) return cur.next().text;
    return cur.expect(Tok::Ident, what).text;
  };
  const auto node_ref = [&]() {
    const auto tok = cur.peek();
    std::string id = id_token("a node id");
    if (!g.has_node(id)) {
      const Term t = Term::parse(id);
      if (!g.ontology().has_concept(t)) {
        throw OntologySyntaxError(tok.line, tok.column, "a declared node", "'" + id + "'");
      }
      g.ensure_concept(t);
    }
    return id;
  };
  while (!cur.at(Tok::End)) {
    if (cur.at_word("node")) {
      cur.next();
      Node n;
      n.id = id_token("a node id");
      n.kind = parse_node_kind(cur.expect(Tok::Ident, "a node kind").text);
      const auto term_tok = cur.expect(Tok::Ident, "a term");
      n.term = Term::parse(term_tok.text);
      if (!g.ontology().prefixes.count(n.term.ns)) {
        fail(ErrorCode::UndeclaredPrefix, "line " + std::to_string(term_tok.line) + ": prefix '" + n.term.ns +
                                              "' is not declared");
      }
      if (cur.at(Tok::Number)) {
        n.value = cur.number();
        if (cur.at(Tok::Ident)) n.units = cur.next().text;
      }
      if (cur.at(Tok::String)) n.label = cur.next().text;
      cur.expect(Tok::Dot, "'.'");
      g.add_node(std::move(n));
    } else if (cur.at_word("fact")) {
      cur.next();
      const std::string id = cur.expect(Tok::Ident, "a fact id").text;
      cur.expect(Tok::Colon, "':'");
      const std::string s = node_ref();
      const std::string rel = cur.expect(Tok::Ident, "a relation").text;
      const std::string o = node_ref();
      Origin origin = Origin::asserted;
      std::optional<Evidence> evidence;
      while (cur.at_word("origin") || cur.at_word("evidence")) {
        if (cur.next().text == "origin") {
          origin = parse_origin(cur.expect(Tok::Ident, "an origin").text);
        } else {
          const auto kind = parse_evidence_kind(cur.expect(Tok::Ident, "an evidence kind").text);
          evidence = Evidence{kind, cur.number()};
        }
      }
      cur.expect(Tok::Dot, "'.'");
      g.assert_fact(s, rel, o, origin, evidence, id);
    } else if (cur.at_word("threshold")) {
      cur.next();
      const std::string key = id_token("a node id or term");
      g.set_threshold(key, cur.number());
      cur.expect(Tok::Dot, "'.'");
    } else {
      cur.expected("'node', 'fact' or 'threshold'");
    }
  }
  add_ontology_concepts(g);
  std::vector<std::string> metrics;
  for (const auto& n : g.nodes()) {
    if (n.kind == NodeKind::metric) metrics.push_back(n.id);
  }
  for (const auto& id : metrics) lift_term_axioms(g, id);
  return g;
}

}  // namespace upho
