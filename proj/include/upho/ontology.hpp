#pragma once

// A small ontology language: namespaced concepts, an isA taxonomy, relation
// signatures, ground axioms, type-level schema links, and Horn rules with
// numeric guards.
//
//   prefix DO .
//   concept DO:Obesity .
//   DO:Obesity isA DO:Disease .
//   relation leadsTo domain ACESO:RiskFactor range DO:Disease .
//   HIO:%UnderPovertyLine indicatorOfRisk COPE:poverty .        # schema link
//   axiom R1: COPE:lackOfPhysicalActivity leadsTo DO:Obesity .
//   rule SCREEN: ?p shouldBeScreenedFor ?d2 :- ?p isExposedTo ?r, ?r leadsTo ?d1,
//                ?d1 isRiskFactorOf ?d2 .
//
// Bare names belong to the implicit `local` namespace. `#` starts a comment.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "upho/error.hpp"
#include "upho/format.hpp"

namespace upho {

struct Term {
  std::string ns = "local";
  std::string name;

  std::string key() const { return ns + ":" + name; }

  /// "NS:Name" or a bare "Name" (local namespace).
  static Term parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) return Term{"local", std::string(text)};
    return Term{std::string(text.substr(0, colon)), std::string(text.substr(colon + 1))};
  }

  friend bool operator==(const Term&, const Term&) = default;
  friend auto operator<=>(const Term&, const Term&) = default;
};

struct RelationDecl {
  std::string name;
  Term domain;
  Term range;

  friend bool operator==(const RelationDecl&, const RelationDecl&) = default;
};

struct Variable {
  std::string name;  // without the leading '?'

  friend bool operator==(const Variable&, const Variable&) = default;
  friend auto operator<=>(const Variable&, const Variable&) = default;
};

using Operand = std::variant<Variable, Term>;

struct Atom {
  Operand subject;
  std::string relation;
  Operand object;

  friend bool operator==(const Atom&, const Atom&) = default;
};

enum class CmpOp { ge, gt, le, lt };

inline std::string_view to_string(CmpOp op) {
  switch (op) {
    case CmpOp::ge: return ">=";
    case CmpOp::gt: return ">";
    case CmpOp::le: return "<=";
    case CmpOp::lt: return "<";
  }
  return "";
}

inline bool compare(double lhs, CmpOp op, double rhs) {
  switch (op) {
    case CmpOp::ge: return lhs >= rhs;
    case CmpOp::gt: return lhs > rhs;
    case CmpOp::le: return lhs <= rhs;
    case CmpOp::lt: return lhs < rhs;
  }
  return false;
}

/// value(?var) <op> number | threshold(?other)
struct Guard {
  std::string var;
  CmpOp op = CmpOp::ge;
  std::variant<double, Variable> rhs;

  friend bool operator==(const Guard&, const Guard&) = default;
};

/// A Horn rule. Ground axioms are rules with an empty body and no variables.
struct RuleAxiom {
  std::string id;
  Atom head;
  std::vector<Atom> body;
  std::vector<Guard> guards;

  bool is_ground_axiom() const { return body.empty() && guards.empty(); }

  friend bool operator==(const RuleAxiom&, const RuleAxiom&) = default;
};

/// Type-level statement `A rel B`: every node typed by (a subtype of) A is
/// related to concept B. Used like isA during matching and never cited as a
/// premise.
struct SchemaLink {
  Term subject;
  std::string relation;
  Term object;

  friend bool operator==(const SchemaLink&, const SchemaLink&) = default;
  friend auto operator<=>(const SchemaLink&, const SchemaLink&) = default;
};

/// Relations every graph may use without declaring them.
inline const std::set<std::string>& core_relations() {
  static const std::set<std::string> core{"isA", "livesIn", "locatedIn", "representsA", "hasMetric", "hasTract"};
  return core;
}

class Ontology {
 public:
  std::set<std::string> prefixes{"local"};
  std::set<Term> concepts;
  std::set<std::pair<Term, Term>> isa;  // (child, parent)
  std::map<std::string, RelationDecl> relations;
  std::set<SchemaLink> links;
  std::vector<RuleAxiom> rules;  // file order; axioms and rules share the id space

  bool has_concept(const Term& t) const { return concepts.count(t) > 0; }

  bool has_relation(std::string_view name) const {
    return relations.count(std::string(name)) > 0 || core_relations().count(std::string(name)) > 0;
  }

  const RuleAxiom* find_rule(std::string_view id) const {
    for (const auto& r : rules) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }

  std::vector<Term> parents(const Term& t) const {
    std::vector<Term> out;
    for (const auto& [child, parent] : isa) {
      if (child == t) out.push_back(parent);
    }
    return out;
  }

  /// Non-throwing subsumption: true when `term` equals `ancestor` or reaches it
  /// through isA. Undeclared terms only match themselves.
  bool is_subsumed(const Term& term, const Term& ancestor) const {
    if (term == ancestor) return true;
    std::set<Term> seen{term};
    std::vector<Term> stack{term};
    while (!stack.empty()) {
      const Term cur = stack.back();
      stack.pop_back();
      for (const auto& [child, parent] : isa) {
        if (child != cur) continue;
        if (parent == ancestor) return true;
        if (seen.insert(parent).second) stack.push_back(parent);
      }
    }
    return false;
  }

  friend bool operator==(const Ontology&, const Ontology&) = default;
};

/// Syntax error with source position and the tokens the parser expected.
class OntologySyntaxError : public Error {
 public:
  OntologySyntaxError(std::size_t line, std::size_t column, std::string expected, std::string found)
      : Error(ErrorCode::SyntaxError, "line " + std::to_string(line) + ", column " + std::to_string(column) +
                                          ": expected " + expected + ", found " + found),
        line_(line),
        column_(column),
        expected_(std::move(expected)) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  std::size_t line_, column_;
  std::string expected_;
};

namespace dsl {

enum class Tok { Ident, Var, Number, String, Dot, Comma, Colon, Turnstile, LParen, RParen, Cmp, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t line;
  std::size_t column;
};

inline std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::End: return "end of input";
    case Tok::String: return "string \"" + t.text + "\"";
    default: return "'" + t.text + "'";
  }
}

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '%'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '%'; }

/// Tokenizer shared by the ontology and fact-file grammars.
inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;
  const auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    const std::size_t tl = line, tc = col;
    const auto push = [&](Tok k, std::string text, std::size_t len) {
      out.push_back(Token{k, std::move(text), tl, tc});
      advance(len);
    };
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      if (j + 1 < src.size() && src[j] == ':' && ident_start(src[j + 1])) {
        ++j;
        while (j < src.size() && ident_char(src[j])) ++j;
      }
      push(Tok::Ident, std::string(src.substr(i, j - i)), j - i);
    } else if (c == '?') {
      std::size_t j = i + 1;
      while (j < src.size() && ident_char(src[j])) ++j;
      if (j == i + 1) throw OntologySyntaxError(tl, tc, "variable name after '?'", "'?'");
      push(Tok::Var, std::string(src.substr(i + 1, j - i - 1)), j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               ((c == '-' || c == '+') && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i + 1;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j + 1 < src.size() && src[j] == '.' && std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
        ++j;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '-' || src[k] == '+')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      push(Tok::Number, std::string(src.substr(i, j - i)), j - i);
    } else if (c == '"') {
      std::size_t j = i + 1;
      std::string text;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') text.push_back(src[j++]);
      if (j >= src.size() || src[j] != '"') throw OntologySyntaxError(tl, tc, "closing '\"'", "end of line");
      push(Tok::String, std::move(text), j - i + 1);
    } else if (c == ':' && i + 1 < src.size() && src[i + 1] == '-') {
      push(Tok::Turnstile, ":-", 2);
    } else if (c == ':') {
      push(Tok::Colon, ":", 1);
    } else if (c == '.') {
      push(Tok::Dot, ".", 1);
    } else if (c == ',') {
      push(Tok::Comma, ",", 1);
    } else if (c == '(') {
      push(Tok::LParen, "(", 1);
    } else if (c == ')') {
      push(Tok::RParen, ")", 1);
    } else if (c == '>' || c == '<') {
      const bool eq = i + 1 < src.size() && src[i + 1] == '=';
      push(Tok::Cmp, eq ? std::string{c, '='} : std::string{c}, eq ? 2 : 1);
    } else {
      throw OntologySyntaxError(tl, tc, "a token", "'" + std::string(1, c) + "'");
    }
  }
  out.push_back(Token{Tok::End, "", line, col});
  return out;
}

/// Cursor over a token stream with error reporting helpers.
class Cursor {
 public:
  explicit Cursor(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  bool at(Tok k) const { return peek().kind == k; }
  bool at_word(std::string_view w) const { return peek().kind == Tok::Ident && peek().text == w; }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void expected(const std::string& what) const {
    throw OntologySyntaxError(peek().line, peek().column, what, describe(peek()));
  }

  Token expect(Tok k, const std::string& what) {
    if (!at(k)) expected(what);
    return next();
  }

  void expect_word(std::string_view w) {
    if (!at_word(w)) expected("'" + std::string(w) + "'");
    next();
  }

  double number() {
    const auto tok = expect(Tok::Number, "a number");
    std::string_view text = tok.text;
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), v);
    return v;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : cur_(tokenize(text)) {}

  Ontology run() {
    while (!cur_.at(Tok::End)) statement();
    check_acyclic();
    return std::move(ont_);
  }

 private:
  Term term(const Token& tok) {
    Term t = Term::parse(tok.text);
    if (t.name.empty()) throw OntologySyntaxError(tok.line, tok.column, "a concept name", describe(tok));
    if (!ont_.prefixes.count(t.ns)) {
      throw Error(ErrorCode::UndeclaredPrefix, "line " + std::to_string(tok.line) + ", column " +
                                                   std::to_string(tok.column) + ": prefix '" + t.ns +
                                                   "' is not declared");
    }
    return t;
  }

  Term term() { return term(cur_.expect(Tok::Ident, "a term")); }

  Term concept_ref() {
    Term t = term();
    ont_.concepts.insert(t);
    return t;
  }

  std::string relation_name() {
    const auto tok = cur_.expect(Tok::Ident, "a relation name");
    if (tok.text.find(':') != std::string::npos) {
      throw OntologySyntaxError(tok.line, tok.column, "an unprefixed relation name", describe(tok));
    }
    return tok.text;
  }

  Operand operand() {
    if (cur_.at(Tok::Var)) return Variable{cur_.next().text};
    return concept_ref();
  }

  Atom atom() {
    Atom a;
    a.subject = operand();
    a.relation = relation_name();
    a.object = operand();
    return a;
  }

  void statement() {
    if (cur_.at_word("prefix") && cur_.peek(1).kind == Tok::Ident && cur_.peek(2).kind == Tok::Dot) {
      cur_.next();
      const auto ns = cur_.next();
      if (ns.text.find(':') != std::string::npos) {
        throw OntologySyntaxError(ns.line, ns.column, "a namespace name", describe(ns));
      }
      ont_.prefixes.insert(ns.text);
      cur_.expect(Tok::Dot, "'.'");
    } else if (cur_.at_word("concept") && cur_.peek(1).kind == Tok::Ident && cur_.peek(2).kind == Tok::Dot) {
      cur_.next();
      concept_ref();
      cur_.expect(Tok::Dot, "'.'");
    } else if (cur_.at_word("relation") && cur_.peek(1).kind == Tok::Ident && cur_.peek(2).kind == Tok::Ident &&
               cur_.peek(2).text == "domain") {
      cur_.next();
      const auto name_tok = cur_.peek();
      RelationDecl decl;
      decl.name = relation_name();
      cur_.expect_word("domain");
      decl.domain = concept_ref();
      cur_.expect_word("range");
      decl.range = concept_ref();
      cur_.expect(Tok::Dot, "'.'");
      auto [it, inserted] = ont_.relations.emplace(decl.name, decl);
      if (!inserted && !(it->second == decl)) {
        throw OntologySyntaxError(name_tok.line, name_tok.column, "a declaration consistent with the earlier one",
                                  "conflicting relation '" + decl.name + "'");
      }
    } else if ((cur_.at_word("axiom") || cur_.at_word("rule")) && cur_.peek(1).kind == Tok::Ident &&
               cur_.peek(2).kind == Tok::Colon) {
      const bool is_axiom = cur_.next().text == "axiom";
      const auto id_tok = cur_.next();
      cur_.expect(Tok::Colon, "':'");
      RuleAxiom rule;
      rule.id = id_tok.text;
      if (is_axiom) {
        rule.head.subject = concept_ref();
        rule.head.relation = relation_name();
        rule.head.object = concept_ref();
      } else {
        rule_body(rule);
      }
      cur_.expect(Tok::Dot, "'.'");
      add_rule(std::move(rule), id_tok);
    } else {
      // <Term> <rel> <Term> .
      const Term subject = concept_ref();
      const std::string rel = relation_name();
      const Term object = concept_ref();
      cur_.expect(Tok::Dot, "'.'");
      if (rel == "isA") {
        ont_.isa.emplace(subject, object);
      } else {
        ont_.links.insert(SchemaLink{subject, rel, object});
      }
    }
  }

  void rule_body(RuleAxiom& rule) {
    rule.head = atom();
    cur_.expect(Tok::Turnstile, "':-'");
    do {
      if (cur_.at_word("value") && cur_.peek(1).kind == Tok::LParen) {
        cur_.next();
        cur_.next();
        Guard g;
        g.var = cur_.expect(Tok::Var, "a variable").text;
        cur_.expect(Tok::RParen, "')'");
        const auto op = cur_.expect(Tok::Cmp, "a comparison (>=, >, <=, <)").text;
        g.op = op == ">=" ? CmpOp::ge : op == ">" ? CmpOp::gt : op == "<=" ? CmpOp::le : CmpOp::lt;
        if (cur_.at_word("threshold")) {
          cur_.next();
          cur_.expect(Tok::LParen, "'('");
          g.rhs = Variable{cur_.expect(Tok::Var, "a variable").text};
          cur_.expect(Tok::RParen, "')'");
        } else if (cur_.at(Tok::Number)) {
          g.rhs = cur_.number();
        } else {
          cur_.expected("a number or threshold(?var)");
        }
        rule.guards.push_back(std::move(g));
      } else {
        if (!rule.guards.empty()) cur_.expected("a guard (guards follow all body atoms)");
        rule.body.push_back(atom());
      }
    } while (cur_.at(Tok::Comma) && (cur_.next(), true));
  }

  void add_rule(RuleAxiom rule, const Token& id_tok) {
    std::set<std::string> bound;
    for (const auto& a : rule.body) {
      for (const auto* op : {&a.subject, &a.object}) {
        if (auto v = std::get_if<Variable>(op)) bound.insert(v->name);
      }
    }
    for (const auto* op : {&rule.head.subject, &rule.head.object}) {
      if (auto v = std::get_if<Variable>(op); v && !bound.count(v->name)) {
        throw Error(ErrorCode::UnboundHeadVariable,
                    "rule " + rule.id + ": head variable ?" + v->name + " does not occur in the body");
      }
    }
    for (const auto& g : rule.guards) {
      const auto* rhs = std::get_if<Variable>(&g.rhs);
      if (!bound.count(g.var) || (rhs && !bound.count(rhs->name))) {
        throw OntologySyntaxError(id_tok.line, id_tok.column, "guard variables bound by body atoms",
                                  "unbound guard in rule " + rule.id);
      }
    }
    if (const auto* existing = ont_.find_rule(rule.id)) {
      if (!(*existing == rule)) {
        throw OntologySyntaxError(id_tok.line, id_tok.column, "a unique rule id", "conflicting redefinition of " + rule.id);
      }
      return;
    }
    ont_.rules.push_back(std::move(rule));
  }

  void check_acyclic() const {
    // Colour-marking DFS over child -> parent edges.
    std::map<Term, int> state;
    std::vector<std::pair<Term, std::size_t>> stack;
    std::map<Term, std::vector<Term>> up;
    for (const auto& [c, p] : ont_.isa) up[c].push_back(p);
    for (const auto& [start, _] : up) {
      if (state[start] != 0) continue;
      stack.emplace_back(start, 0);
      state[start] = 1;
      while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        const auto& next = up[node];
        if (idx < next.size()) {
          const Term p = next[idx++];
          if (state[p] == 1) fail(ErrorCode::CyclicIsA, "isA cycle through " + p.key());
          if (state[p] == 0) {
            state[p] = 1;
            stack.emplace_back(p, 0);
          }
        } else {
          state[node] = 2;
          stack.pop_back();
        }
      }
    }
  }

  Cursor cur_;
  Ontology ont_;
};

}  // namespace dsl

inline Ontology parse_ontology(std::string_view text) { return dsl::Parser(text).run(); }

inline std::string to_text(const Operand& op) {
  if (auto v = std::get_if<Variable>(&op)) return "?" + v->name;
  return std::get<Term>(op).key();
}

inline std::string to_text(const Atom& a) { return to_text(a.subject) + " " + a.relation + " " + to_text(a.object); }

inline std::string to_text(const RuleAxiom& r) {
  if (r.is_ground_axiom()) return "axiom " + r.id + ": " + to_text(r.head) + " .";
  std::string out = "rule " + r.id + ": " + to_text(r.head) + " :- ";
  bool first = true;
  for (const auto& a : r.body) {
    out += (first ? "" : ", ") + to_text(a);
    first = false;
  }
  for (const auto& g : r.guards) {
    out += ", value(?" + g.var + ") " + std::string(to_string(g.op)) + " ";
    if (auto v = std::get_if<Variable>(&g.rhs)) out += "threshold(?" + v->name + ")";
    else out += format_double(std::get<double>(g.rhs));
  }
  return out + " .";
}

/// Canonical text; parse_ontology(print_ontology(o)) == o.
inline std::string print_ontology(const Ontology& ont) {
  std::string out;
  for (const auto& p : ont.prefixes) {
    if (p != "local") out += "prefix " + p + " .\n";
  }
  for (const auto& c : ont.concepts) out += "concept " + c.key() + " .\n";
  for (const auto& [c, p] : ont.isa) out += c.key() + " isA " + p.key() + " .\n";
  for (const auto& [name, r] : ont.relations) {
    out += "relation " + name + " domain " + r.domain.key() + " range " + r.range.key() + " .\n";
  }
  for (const auto& l : ont.links) out += l.subject.key() + " " + l.relation + " " + l.object.key() + " .\n";
  for (const auto& r : ont.rules) out += to_text(r) + "\n";
  return out;
}

/// Reflexive-transitive isA test. Both terms must be declared concepts.
inline bool subsumes(const Ontology& ont, const Term& ancestor, const Term& descendant) {
  for (const auto* t : {&ancestor, &descendant}) {
    if (!ont.has_concept(*t)) fail(ErrorCode::UnknownTerm, t->key() + " is not a declared concept");
  }
  return ont.is_subsumed(descendant, ancestor);
}

enum class DiagnosticKind { UnknownRelation, UnknownTerm, TypeMismatch, UnboundHeadVariable, UnboundGuardVariable };

inline std::string_view to_string(DiagnosticKind k) {
  switch (k) {
    case DiagnosticKind::UnknownRelation: return "UnknownRelation";
    case DiagnosticKind::UnknownTerm: return "UnknownTerm";
    case DiagnosticKind::TypeMismatch: return "TypeMismatch";
    case DiagnosticKind::UnboundHeadVariable: return "UnboundHeadVariable";
    case DiagnosticKind::UnboundGuardVariable: return "UnboundGuardVariable";
  }
  return "";
}

struct Diagnostic {
  DiagnosticKind kind;
  std::string message;
};

/// Static checks before inference. Never throws; an empty list means ok.
inline std::vector<Diagnostic> validate_rule(const Ontology& ont, const RuleAxiom& rule) {
  std::vector<Diagnostic> out;
  const auto check_atom = [&](const Atom& a, std::string_view where) {
    const auto decl = ont.relations.find(a.relation);
    if (decl == ont.relations.end()) {
      if (!core_relations().count(a.relation)) {
        out.push_back({DiagnosticKind::UnknownRelation,
                       rule.id + ": relation '" + a.relation + "' in " + std::string(where) + " is not declared"});
      }
    }
    const auto check_side = [&](const Operand& op, const Term* expected, std::string_view side) {
      const auto* t = std::get_if<Term>(&op);
      if (!t) return;
      if (!ont.has_concept(*t)) {
        out.push_back({DiagnosticKind::UnknownTerm, rule.id + ": " + t->key() + " is not a declared concept"});
        return;
      }
      if (expected && !ont.is_subsumed(*t, *expected)) {
        out.push_back({DiagnosticKind::TypeMismatch, rule.id + ": " + t->key() + " is outside the " +
                                                         std::string(side) + " " + expected->key() + " of " +
                                                         a.relation});
      }
    };
    const Term* domain = decl == ont.relations.end() ? nullptr : &decl->second.domain;
    const Term* range = decl == ont.relations.end() ? nullptr : &decl->second.range;
    check_side(a.subject, domain, "domain");
    check_side(a.object, range, "range");
  };

  check_atom(rule.head, "the head");
  std::set<std::string> bound;
  for (const auto& a : rule.body) {
    check_atom(a, "the body");
    for (const auto* op : {&a.subject, &a.object}) {
      if (auto v = std::get_if<Variable>(op)) bound.insert(v->name);
    }
  }
  for (const auto* op : {&rule.head.subject, &rule.head.object}) {
    if (auto v = std::get_if<Variable>(op); v && !bound.count(v->name)) {
      out.push_back({DiagnosticKind::UnboundHeadVariable,
                     rule.id + ": head variable ?" + v->name + " does not occur in the body"});
    }
  }
  for (const auto& g : rule.guards) {
    if (!bound.count(g.var)) {
      out.push_back({DiagnosticKind::UnboundGuardVariable, rule.id + ": guard variable ?" + g.var + " is unbound"});
    }
    if (auto v = std::get_if<Variable>(&g.rhs); v && !bound.count(v->name)) {
      out.push_back({DiagnosticKind::UnboundGuardVariable, rule.id + ": threshold variable ?" + v->name + " is unbound"});
    }
  }
  return out;
}

/// All diagnostics for every rule and axiom in the ontology.
inline std::vector<Diagnostic> validate_ontology(const Ontology& ont) {
  std::vector<Diagnostic> out;
  for (const auto& r : ont.rules) {
    auto d = validate_rule(ont, r);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace upho
