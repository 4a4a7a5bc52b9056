#include <gtest/gtest.h>

#include "support.hpp"
#include "upho/ontology.hpp"

using namespace upho;

namespace {

Ontology bundled() { return parse_ontology(test::slurp(test::data_dir() / "upho.onto")); }

bool has_kind(const std::vector<Diagnostic>& ds, DiagnosticKind k) {
  return std::any_of(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.kind == k; });
}

/// Random well-formed ontology text over a layered taxonomy (parents always
/// come from an earlier layer, so isA stays acyclic).
std::string random_ontology(SplitMix64& rng) {
  std::string out = "prefix A .\nprefix B .\n";
  const std::size_t n = 2 + rng.below(10);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back((rng.below(2) ? "A:" : "B:") + std::string("c") + std::to_string(i));
    out += "concept " + names.back() + " .\n";
    if (i > 0 && rng.below(3) > 0) out += names[i] + " isA " + names[rng.below(i)] + " .\n";
  }
  const std::size_t rels = 1 + rng.below(3);
  for (std::size_t r = 0; r < rels; ++r) {
    out += "relation r" + std::to_string(r) + " domain " + names[rng.below(n)] + " range " + names[rng.below(n)] + " .\n";
  }
  for (std::size_t k = 0; k < rng.below(4); ++k) {
    out += "axiom X" + std::to_string(k) + ": " + names[rng.below(n)] + " r" + std::to_string(rng.below(rels)) + " " +
           names[rng.below(n)] + " .\n";
  }
  for (std::size_t k = 0; k < rng.below(3); ++k) {
    out += "rule Q" + std::to_string(k) + ": ?a r0 ?c :- ?a r" + std::to_string(rng.below(rels)) + " ?b, ?b r" +
           std::to_string(rng.below(rels)) + " ?c";
    if (rng.below(2)) {
      out += ", value(?b) >= threshold(?c)";
    }
    if (rng.below(2)) {
      out += ", value(?a) < 12.5";
    }
    out += " .\n";
  }
  return out;
}

}  // namespace

TEST(Parse, GroundAxiomHasEmptyBody) {
  const auto ont = parse_ontology(
      "prefix COPE .\nprefix DO .\nrelation leadsTo domain COPE:RiskFactor range DO:Disease .\n"
      "axiom R1: COPE:lackOfPhysicalActivity leadsTo DO:Obesity .\n");
  ASSERT_EQ(ont.rules.size(), 1u);
  EXPECT_TRUE(ont.rules[0].body.empty());
  EXPECT_TRUE(ont.rules[0].is_ground_axiom());
  EXPECT_EQ(ont.rules[0].id, "R1");
  EXPECT_TRUE(ont.has_concept(Term{"DO", "Obesity"}));
}

TEST(Parse, EmptyInput) {
  const auto ont = parse_ontology("");
  EXPECT_TRUE(ont.concepts.empty());
  EXPECT_TRUE(ont.rules.empty());
  EXPECT_TRUE(parse_ontology("# only a comment\n\n").rules.empty());
}

TEST(Parse, UndeclaredPrefix) {
  EXPECT_EQ(test::error_of([] { parse_ontology("XX:Foo isA RiskFactor ."); }), "UndeclaredPrefix");
}

TEST(Parse, SyntaxErrorCarriesPosition) {
  try {
    parse_ontology("prefix DO .\nDO:Obesity isA DO:Disease\n");
    FAIL() << "no error";
  } catch (const OntologySyntaxError& e) {
    EXPECT_EQ(e.code(), ErrorCode::SyntaxError);
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(e.expected().find("'.'"), std::string::npos) << e.expected();
  }
  try {
    parse_ontology("rule R: ?p x ?q :- ?p y ?q, value(?p) => 3 .");
    FAIL() << "no error";
  } catch (const OntologySyntaxError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_GT(e.column(), 30u);
  }
}

TEST(Parse, StructuralErrors) {
  EXPECT_EQ(test::error_of([] { parse_ontology("relation r domain A range B .\nrule R: ?p r ?z :- ?p r ?q ."); }),
            "UnboundHeadVariable");
  EXPECT_EQ(test::error_of([] { parse_ontology("A isA B .\nB isA C .\nC isA A ."); }), "CyclicIsA");
  EXPECT_EQ(test::error_of([] { parse_ontology("axiom R: A isA B .\naxiom R: B isA C ."); }), "SyntaxError");
}

TEST(Parse, BundledOntologyIsValid) {
  const auto ont = bundled();
  EXPECT_TRUE(validate_ontology(ont).empty());
  for (const char* id : {"R1", "R2", "R3", "EXPOSE", "SCREEN"}) EXPECT_NE(ont.find_rule(id), nullptr) << id;
  const auto* expose = ont.find_rule("EXPOSE");
  EXPECT_EQ(expose->body.size(), 3u);
  EXPECT_EQ(expose->guards.size(), 1u);
}

TEST(RoundTrip, PrintThenParseIsIdentity) {
  const auto ont = bundled();
  EXPECT_EQ(parse_ontology(print_ontology(ont)), ont);
  SplitMix64 rng(31);
  for (int t = 0; t < 300; ++t) {
    const auto text = random_ontology(rng);
    const auto a = parse_ontology(text);
    const auto printed = print_ontology(a);
    const auto b = parse_ontology(printed);
    ASSERT_EQ(a, b) << text;
    ASSERT_EQ(print_ontology(b), printed);
  }
}

TEST(Subsumption, Examples) {
  const auto ont = bundled();
  const Term sdoh{"ACESO", "SDoH"}, rf{"ACESO", "RiskFactor"};
  EXPECT_TRUE(subsumes(ont, sdoh, sdoh));
  EXPECT_TRUE(subsumes(ont, rf, Term{"COPE", "lackOfTransportation"}));
  EXPECT_FALSE(subsumes(ont, Term{"COPE", "poverty"}, Term{"COPE", "crime"}));
  EXPECT_FALSE(subsumes(ont, Term{"COPE", "lackOfTransportation"}, rf));
  EXPECT_EQ(test::error_of([&] { subsumes(ont, rf, Term{"COPE", "nothing"}); }), "UnknownTerm");
}

TEST(Subsumption, MatchesReachabilityOracle) {
  SplitMix64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto ont = parse_ontology(random_ontology(rng));
    const std::vector<Term> terms(ont.concepts.begin(), ont.concepts.end());
    const std::size_t n = terms.size();
    // Warshall closure over the isA pairs.
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) reach[i][i] = true;
    for (const auto& [c, p] : ont.isa) {
      const auto ci = std::find(terms.begin(), terms.end(), c) - terms.begin();
      const auto pi = std::find(terms.begin(), terms.end(), p) - terms.begin();
      reach[static_cast<std::size_t>(ci)][static_cast<std::size_t>(pi)] = true;
    }
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (reach[i][k] && reach[k][j]) reach[i][j] = true;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) ASSERT_EQ(subsumes(ont, terms[j], terms[i]), reach[i][j]);
    }
    // Antisymmetry follows from acyclicity.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) {
          ASSERT_FALSE(reach[i][j] && reach[j][i]);
        }
      }
    }
  }
}

TEST(Validate, WellTypedAxiom) {
  const auto ont = bundled();
  EXPECT_TRUE(validate_rule(ont, *ont.find_rule("R3")).empty());
}

TEST(Validate, UnboundHeadAndTypeMismatch) {
  const auto ont = bundled();
  RuleAxiom bad{"BAD", {Variable{"p"}, "shouldBeScreenedFor", Variable{"d"}}, {{Variable{"p"}, "livesIn", Variable{"t"}}}, {}};
  EXPECT_TRUE(has_kind(validate_rule(ont, bad), DiagnosticKind::UnboundHeadVariable));

  // leadsTo expects a risk factor as subject; a disease is outside its domain.
  const auto typed = parse_ontology(test::slurp(test::data_dir() / "upho.onto") +
                                    "axiom ILL: DO:Diabetes leadsTo DO:Obesity .\n");
  const auto ds = validate_rule(typed, *typed.find_rule("ILL"));
  ASSERT_TRUE(has_kind(ds, DiagnosticKind::TypeMismatch));
  EXPECT_EQ(ds.size(), 1u);

  RuleAxiom unknown{"U", {Variable{"p"}, "nope", Term{"DO", "Obesity"}}, {{Variable{"p"}, "livesIn", Term{"DO", "Missing"}}}, {}};
  const auto du = validate_rule(ont, unknown);
  EXPECT_TRUE(has_kind(du, DiagnosticKind::UnknownRelation));
  EXPECT_TRUE(has_kind(du, DiagnosticKind::UnknownTerm));

  RuleAxiom guard{"G", {Variable{"p"}, "livesIn", Variable{"t"}}, {{Variable{"p"}, "livesIn", Variable{"t"}}},
                  {{"m", CmpOp::ge, 3.0}}};
  EXPECT_TRUE(has_kind(validate_rule(ont, guard), DiagnosticKind::UnboundGuardVariable));
}
