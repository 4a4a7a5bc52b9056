#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "upho/explain.hpp"

using namespace upho;

namespace {

std::shared_ptr<const Ontology> bundled() {
  return std::make_shared<const Ontology>(parse_ontology(test::slurp(test::data_dir() / "upho.onto")));
}

KnowledgeGraph worked_example(bool inferred = true) {
  auto g = load_facts(bundled(), test::slurp(test::data_dir() / "screening_example.facts"));
  if (inferred) g.infer();
  return g;
}

const CityStats kExampleStats{{{"HIO:%UnderPovertyLine", 28.7},
                               {"HIO:%PopWLackOfPhysicalActivity", 36.2},
                               {"HIO:%PopNoHighSchoolDiploma", 10.4}}};

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

/// Single-feature model whose prediction is the raw feature value.
LinearSvrModel identity_model(const FeatureTable& t) {
  LinearSvrModel m;
  m.features = {t.bindings()[0].column_name};
  m.standardization = fit_standardization(t);
  m.w = {m.standardization.sigma[0]};
  m.b = m.standardization.mu[0];
  m.trained = true;
  return m;
}

}  // namespace

TEST(Pathways, WorkedExamplePatientToObesity) {
  const auto g = worked_example();
  const auto paths = trace_pathways(g, "patient", "DO:Obesity");
  ASSERT_FALSE(paths.empty());
  for (const auto& p : paths) {
    EXPECT_TRUE(validate_pathway(g, p, default_whitelist()));
    EXPECT_EQ(p.nodes.front(), "patient");
    EXPECT_EQ(p.nodes.back(), "DO:Obesity");
  }
  for (std::size_t i = 1; i < paths.size(); ++i) EXPECT_GE(paths[i - 1].score, paths[i].score);
  EXPECT_TRUE(trace_pathways(g, "patient", "patient").empty());
  EXPECT_EQ(test::error_of([&] { trace_pathways(g, "patient", "DO:Obesity", default_whitelist(), 0); }),
            "InvalidArgument");
  EXPECT_EQ(test::error_of([&] { trace_pathways(g, "patient", "nowhere"); }), "UnknownNode");
}

TEST(Pathways, MatchEnumerationOracleOnRandomGraphs) {
  SplitMix64 rng(808);
  const std::vector<std::string> rels{"livesIn", "hasMetric", "leadsTo", "isA", "other"};
  const std::set<std::string> whitelist{"livesIn", "hasMetric", "leadsTo"};
  for (int t = 0; t < 200; ++t) {
    KnowledgeGraph g;
    const std::size_t n = 2 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      g.add_node(Node{"n" + std::to_string(i), "", Term{"local", "X"}, NodeKind::instance, std::nullopt, std::nullopt});
    }
    auto ont = std::make_shared<Ontology>();
    ont->relations["leadsTo"] = RelationDecl{"leadsTo", Term{"local", "X"}, Term{"local", "X"}};
    ont->relations["other"] = RelationDecl{"other", Term{"local", "X"}, Term{"local", "X"}};
    KnowledgeGraph h(ont);
    for (const auto& node : g.nodes()) h.add_node(node);
    for (std::size_t k = rng.below(14); k > 0; --k) {
      std::optional<Evidence> ev;
      if (rng.below(2)) ev = Evidence{EvidenceKind::importance, 100 * rng.uniform()};
      h.assert_fact("n" + std::to_string(rng.below(n)), rels[rng.below(rels.size())], "n" + std::to_string(rng.below(n)),
                    Origin::asserted, ev);
    }
    const std::size_t max_len = 1 + rng.below(4);
    const auto paths = trace_pathways(h, "n0", "n1", whitelist, max_len);
    std::set<std::vector<std::string>> got;
    for (const auto& p : paths) {
      ASSERT_TRUE(validate_pathway(h, p, whitelist));
      ASSERT_LE(p.edges.size(), max_len);
      double sum = 0;
      for (const auto& id : p.edges) {
        const auto& ev = h.edge(id).evidence;
        sum += ev ? ev->value / 100.0 : 0.5;
      }
      ASSERT_NEAR(p.score, sum / static_cast<double>(p.edges.size()), 1e-12);
      got.insert(p.edges);
    }
    ASSERT_EQ(got.size(), paths.size());
    ASSERT_EQ(got, oracle::pathways(h, "n0", "n1", whitelist, max_len)) << "trial " << t;
  }
}

TEST(Explain, PredictorEdgeCitesModel) {
  const auto g = worked_example();
  const auto ex = explain_edge(g, "F6", kExampleStats);
  EXPECT_NE(ex.text.find("importance 100.0"), std::string::npos) << ex.text;
  EXPECT_TRUE(ends_with(ex.text, " (linear SVR model)")) << ex.text;
  EXPECT_EQ(ex.sources, std::vector<std::string>{"model"});
  EXPECT_TRUE(numbers_traceable(ex));
}

TEST(Explain, InferredEdgeListsProvenance) {
  const auto g = worked_example();
  const Edge* e = g.find_edge("patient", "isExposedTo", "COPE:lackOfPhysicalActivity");
  ASSERT_NE(e, nullptr);
  const auto ex = explain_edge(g, e->id, kExampleStats);
  EXPECT_TRUE(ends_with(ex.text, " [using EXPOSE, F1, F2]")) << ex.text;
  EXPECT_EQ(ex.sources, (std::vector<std::string>{"EXPOSE", "F1", "F2"}));
}

TEST(Explain, IsAEdgeCitesOntology) {
  const auto g = worked_example();
  const Edge* e = g.find_edge("DO:Obesity", "isA", "DO:Disease");
  ASSERT_NE(e, nullptr);
  const auto ex = explain_edge(g, e->id, kExampleStats);
  EXPECT_EQ(ex.sources, std::vector<std::string>{"DO"});
  EXPECT_NE(ex.text.find("DO ontology"), std::string::npos) << ex.text;
}

TEST(Explain, MetricNodeComparesWithCityMean) {
  const auto g = worked_example();
  const auto ex = explain_node(g, "poverty", kExampleStats);
  EXPECT_NE(ex.text.find("60.0%"), std::string::npos) << ex.text;
  EXPECT_NE(ex.text.find("above"), std::string::npos);
  EXPECT_NE(ex.text.find("28.7%"), std::string::npos);
  EXPECT_TRUE(numbers_traceable(ex));

  const auto bare = explain_node(g, "poverty", CityStats{});
  EXPECT_EQ(bare.text.find("city average"), std::string::npos) << bare.text;
  EXPECT_TRUE(numbers_traceable(bare));

  const auto concept_ = explain_node(g, "DO:Obesity", kExampleStats);
  EXPECT_EQ(concept_.sources, std::vector<std::string>{"DO"});
  EXPECT_TRUE(concept_.evidence.empty());
}

TEST(Explain, EveryNumberIsTraceable) {
  const auto g = worked_example();
  for (auto role : {Role::physician, Role::researcher, Role::public_}) {
    const auto t = default_templates(role);
    for (const auto& e : g.edges()) {
      const auto ex = explain_edge(g, e.id, kExampleStats, t);
      EXPECT_TRUE(numbers_traceable(ex)) << ex.text;
      EXPECT_FALSE(ex.text.empty());
    }
    for (const auto& n : g.nodes()) {
      const auto ex = explain_node(g, n.id, kExampleStats, t);
      EXPECT_TRUE(numbers_traceable(ex)) << ex.text;
    }
  }
  const Explanation fake{"x", "value is 12.5", {{"value", 3.0}}, {}};
  EXPECT_FALSE(numbers_traceable(fake));
  EXPECT_EQ(numbers_in_text("F12 and 3.25 then -4"), (std::vector<double>{3.25, -4}));
}

TEST(Risk, SmallCases) {
  const auto one = test::make_table({"x"}, {{5, 7}});
  const auto m = identity_model(one);
  const auto single = risk_levels(FeatureTable(GeoLevel::census_tract, {one.rows()[0]}, one.bindings(), {"t"}), m);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].percentile, 0.0);
  EXPECT_EQ(single[0].band, RiskBand::low);

  const auto three = test::make_table({"x"}, {{30, 10, 20}});
  const auto r = risk_levels(three, identity_model(three));
  EXPECT_DOUBLE_EQ(r[0].percentile, 100.0);
  EXPECT_DOUBLE_EQ(r[1].percentile, 0.0);
  EXPECT_DOUBLE_EQ(r[2].percentile, 50.0);
  EXPECT_EQ(r[0].band, RiskBand::high);
  EXPECT_EQ(r[2].band, RiskBand::medium);
  EXPECT_NEAR(r[0].predicted, 30.0, 1e-9);

  EXPECT_EQ(test::error_of([&] { risk_levels(three, LinearSvrModel{}); }), "UntrainedModel");
}

TEST(Risk, TercilesOn178TractsAndMonotone) {
  SplitMix64 rng(178);
  std::vector<double> x(178);
  for (auto& v : x) v = 100 * rng.uniform();
  const auto t = test::make_table({"x"}, {x});
  const auto r = risk_levels(t, identity_model(t));
  std::map<RiskBand, int> count;
  for (const auto& l : r) ++count[l.band];
  EXPECT_NEAR(count[RiskBand::low], 59, 1);
  EXPECT_NEAR(count[RiskBand::medium], 60, 1);
  EXPECT_NEAR(count[RiskBand::high], 59, 1);
  for (const auto& a : r) {
    for (const auto& b : r) {
      if (a.predicted < b.predicted) {
        ASSERT_LT(a.percentile, b.percentile);
        ASSERT_LE(static_cast<int>(a.band), static_cast<int>(b.band));
      }
    }
  }
}

TEST(Recommend, WorkedExampleRecommendsDiabetesScreening) {
  EXPECT_TRUE(recommendations(worked_example(false), "patient").empty());

  const auto g = worked_example();
  const auto recs = recommendations(g, "patient", kExampleStats, default_templates(Role::physician));
  ASSERT_FALSE(recs.empty());
  const auto it = std::find_if(recs.begin(), recs.end(), [&](const Recommendation& r) {
    return g.edge(r.edge).relation == "shouldBeScreenedFor" && g.edge(r.edge).object == "DO:Diabetes";
  });
  ASSERT_NE(it, recs.end());
  EXPECT_EQ(it->explanation.text.rfind("Screen for Diabetes", 0), 0u) << it->explanation.text;
  for (const char* id : {"R1", "R3", "F1"}) {
    EXPECT_NE(std::find(it->explanation.sources.begin(), it->explanation.sources.end(), id),
              it->explanation.sources.end())
        << id;
  }
  for (std::size_t i = 1; i < recs.size(); ++i) EXPECT_GE(recs[i - 1].score, recs[i].score);
}

TEST(Templates, FilesMatchEmbeddedDefaults) {
  const std::vector<std::pair<Role, const char*>> roles{
      {Role::physician, "physician.tsv"}, {Role::researcher, "researcher.tsv"}, {Role::public_, "public.tsv"}};
  for (const auto& [role, file] : roles) {
    const auto text = test::slurp(test::data_dir() / "templates" / file);
    EXPECT_EQ(parse_templates(text), default_templates(role)) << file;
    EXPECT_EQ(parse_templates(serialize_templates(default_templates(role))), default_templates(role));
    EXPECT_EQ(parse_role(to_string(role)), role);
  }
  EXPECT_EQ(test::error_of([] { parse_templates("no tab here\n"); }), "MalformedRow");
  EXPECT_EQ(test::error_of([] { parse_role("admin"); }), "InvalidArgument");
  EXPECT_EQ(detail::render("{a} and {b}", {{"a", "x"}}), "x and {b}");
}
