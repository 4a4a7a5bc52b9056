#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "city_fixture.hpp"
#include "support.hpp"
#include "upho/gateway/server.hpp"

using namespace upho;

namespace {

class Gateway : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { ws_ = new Workspace(test::ingest_city(test::scratch_dir("gateway"))); }
  static void TearDownTestSuite() {
    delete ws_;
    ws_ = nullptr;
  }
  static const Workspace& ws() { return *ws_; }

 private:
  static Workspace* ws_;
};

Workspace* Gateway::ws_ = nullptr;

std::string parse_error(std::string_view text) {
  return test::error_of([&] { parse_request(text); });
}

/// Walks each pathway in a report over the exported graph document.
bool pathways_valid(const Json& report) {
  std::map<std::string, Json> edges;
  for (const auto& e : report["graph"]["edges"]) edges[e["id"]] = e;
  for (const auto& p : report["pathways"]) {
    const auto& nodes = p["nodes"];
    const auto& ids = p["edges"];
    if (ids.empty() || nodes.size() != ids.size() + 1) return false;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto it = edges.find(ids[i]);
      if (it == edges.end() || it->second["src"] != nodes[i] || it->second["dst"] != nodes[i + 1]) return false;
    }
    for (const auto& n : nodes) seen.insert(n.get<std::string>());
    if (seen.size() != nodes.size()) return false;
  }
  return true;
}

}  // namespace

TEST(Request, Validation) {
  EXPECT_EQ(parse_error(R"({"level":"population"})"), "BadRequest");
  EXPECT_EQ(parse_error(R"({"outcome":"x","level":"population","colour":"red"})"), "BadRequest");
  EXPECT_EQ(parse_error(R"({"outcome":"x","level":"city"})"), "BadRequest");
  EXPECT_EQ(parse_error(R"({"outcome":"x","level":"patient","location":"38127"})"), "BadRequest");
  EXPECT_EQ(parse_error(R"({"outcome":"x","level":"population","seed":-1})"), "BadRequest");
  EXPECT_EQ(parse_error(R"({"outcome":"x","level":"population","role":"admin"})"), "BadRequest");
  EXPECT_EQ(parse_error(R"({"outcome":"x","level":"population","sdoh_filters":"COPE:poverty"})"), "BadRequest");
  EXPECT_EQ(parse_error("{not json"), "BadRequest");
  EXPECT_EQ(parse_error("[]"), "BadRequest");

  const auto r = test::scenario(1);
  EXPECT_EQ(r.level, Level::patient);
  EXPECT_EQ(r.seed, 42u);
  EXPECT_EQ(r.role, Role::physician);
  EXPECT_EQ(to_json(parse_request(std::string_view(to_json(r).dump()))), to_json(r));
}

TEST(Config, ParseAndReject) {
  EXPECT_EQ(parse_config(""), RunConfig{});
  const auto cfg = parse_config(std::string(test::kQuickConfigText) + "# comment\nthreshold.COPE:poverty = 30\n");
  EXPECT_EQ(cfg.grid_C, (std::vector<double>{1.0, 4.0}));
  EXPECT_EQ(cfg.cv_k, 3u);
  EXPECT_EQ(cfg.thresholds.at("COPE:poverty"), 30.0);
  EXPECT_EQ(cfg.grid().size(), 2u);
  EXPECT_EQ(test::error_of([] { parse_config("colour = red\n"); }), "InvalidArgument");
  EXPECT_EQ(test::error_of([] { parse_config("cv.k = 0\n"); }), "InvalidArgument");
  EXPECT_EQ(test::error_of([] { parse_config("grid.C = 0\n"); }), "InvalidArgument");
  EXPECT_EQ(test::error_of([] { parse_config("grid.epsilon = -1\n"); }), "InvalidArgument");
  EXPECT_EQ(test::error_of([] { parse_config("no equals sign\n"); }), "InvalidArgument");
}

TEST(Bind, Addresses) {
  EXPECT_EQ(parse_bind("0.0.0.0:9000"), (std::pair<std::string, int>{"0.0.0.0", 9000}));
  EXPECT_EQ(parse_bind(":81"), (std::pair<std::string, int>{"127.0.0.1", 81}));
  EXPECT_EQ(parse_bind("8080").second, 8080);
  EXPECT_EQ(test::error_of([] { parse_bind("host:99999"); }), "BindFailure");
  EXPECT_EQ(test::error_of([] { parse_bind("host:http"); }), "BindFailure");
}

TEST_F(Gateway, WorkspaceRoundTrip) {
  const auto again = open_workspace(ws().root);
  // Column provenance becomes the stored file name; the data is unchanged.
  EXPECT_EQ(again.table.rows(), ws().table.rows());
  EXPECT_EQ(again.table.bindings(), ws().table.bindings());
  EXPECT_EQ(again.city, "Memphis");
  EXPECT_EQ(*again.ontology, *ws().ontology);
  ASSERT_TRUE(again.crosswalk);
  try {
    open_workspace(test::scratch_dir("gateway_empty"));
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WorkspaceMissing);
    EXPECT_EQ(e.stage(), "ingest");
  }
  EXPECT_EQ(test::error_of([] {
              ingest_workspace(test::scratch_dir("gateway_prefix"),
                               {{"t", "geo_code,x\n47157000100,1\n", "x\tZZ:x\tpercent\tx\n"}}, "prefix DO .\n");
            }),
            "UndeclaredPrefix");
}

TEST_F(Gateway, PatientScenarioReport) {
  const auto result = analyze(ws(), test::scenario(1), test::quick_config());
  const Json& r = result.report;
  for (const char* key : {"id", "request", "correlation", "vif", "model", "shap", "graph", "pathways", "risk_levels",
                          "recommendations", "timings"}) {
    EXPECT_TRUE(r.contains(key)) << key;
  }
  EXPECT_EQ(r["id"], report_id(r));
  EXPECT_EQ(r["model"]["cv_table"].size(), 2u);
  double top = 0;
  for (const auto& [f, v] : r["model"]["importance"].items()) {
    EXPECT_GE(v.get<double>(), 0.0) << f;
    EXPECT_LE(v.get<double>(), 100.0) << f;
    top = std::max(top, v.get<double>());
  }
  EXPECT_EQ(top, 100.0);

  // Local accuracy of the SHAP block.
  double sum = r["shap"]["baseline"];
  for (const auto& c : r["shap"]["contributions"]) sum += c["phi"].get<double>();
  EXPECT_NEAR(sum, r["shap"]["prediction"].get<double>(), 1e-9);
  EXPECT_EQ(r["shap"]["subject"], "47157010300");

  ASSERT_FALSE(r["pathways"].empty());
  EXPECT_TRUE(pathways_valid(r));
  EXPECT_EQ(r["pathways"][0]["nodes"][0], "patient");
  EXPECT_EQ(r["risk_levels"].size(), 178u);

  bool screening = false;
  for (const auto& rec : r["recommendations"]) {
    const Edge& e = result.graph.edge(rec["edge"].get<std::string>());
    screening = screening || (e.relation == "shouldBeScreenedFor" && e.object == "DO:Diabetes");
  }
  EXPECT_TRUE(screening);

  std::size_t lit = 0;
  for (const auto& n : r["graph"]["nodes"]) lit += n["highlighted"].get<bool>();
  EXPECT_GT(lit, 0u);
}

TEST_F(Gateway, PopulationScenarioReport) {
  const auto result = analyze(ws(), test::scenario(2), test::quick_config());
  const Json& r = result.report;
  EXPECT_FALSE(r.contains("shap"));
  EXPECT_EQ(result.subject_node, "population");
  EXPECT_TRUE(result.graph.has_node("city:memphis"));
  EXPECT_TRUE(pathways_valid(r));
  for (const auto& n : r["graph"]["nodes"]) EXPECT_FALSE(n["highlighted"].get<bool>());
}

TEST_F(Gateway, UnknownTractFailsWithoutWriting) {
  const auto before = load_index(ws().root);
  auto req = test::scenario(1);
  req.location = "47157999999";
  try {
    run_analysis(ws(), req, test::quick_config());
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownTract);
    EXPECT_EQ(e.stage(), "request");
  }
  EXPECT_EQ(load_index(ws().root), before);
}

TEST_F(Gateway, DeterministicReports) {
  const auto a = analyze(ws(), test::scenario(1), test::quick_config()).report;
  const auto b = analyze(ws(), test::scenario(1), test::quick_config()).report;
  EXPECT_EQ(a["id"], b["id"]);
  EXPECT_EQ(test::timeless(a).dump(), test::timeless(b).dump());

  auto other = test::scenario(1);
  other.seed = 7;
  EXPECT_NE(analyze(ws(), other, test::quick_config()).report["id"], a["id"]);
}

TEST_F(Gateway, PersistenceIsAtomicAndIdempotent) {
  const auto root = test::scratch_dir("gateway_persist");
  auto local = ws();
  local.root = root;
  std::filesystem::create_directories(root / "reports");
  const auto report = run_analysis(local, test::scenario(2), test::quick_config());
  const std::string id = report["id"];
  // A crash between writes can only leave a temporary sibling behind.
  test::slurp(root / "reports" / (id + ".json"));
  std::ofstream(root / "reports" / (id + ".json.tmp123")) << "{ partial";
  persist_report(root, report);
  const auto index = load_index(root);
  ASSERT_EQ(index.size(), 1u);
  EXPECT_EQ(index[0]["id"], id);
  EXPECT_EQ(load_report(root, id), report);
  EXPECT_EQ(test::error_of([&] { load_report(root, std::string(64, 'a')); }), "UnknownReport");
  EXPECT_EQ(test::error_of([&] { load_report(root, "../index"); }), "UnknownReport");

  // An unwritable report directory fails the persist stage and leaves the index alone.
  const auto blocked = test::scratch_dir("gateway_blocked");
  std::ofstream(blocked / "reports") << "not a directory";
  std::ofstream(blocked / "index.json") << "[]\n";
  local.root = blocked;
  try {
    run_analysis(local, test::scenario(2), test::quick_config());
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
    EXPECT_EQ(e.stage(), "persist");
  }
  EXPECT_EQ(test::slurp(blocked / "index.json"), "[]\n");
}

TEST_F(Gateway, CliMatchesLibrary) {
  const auto dir = test::scratch_dir("gateway_cli");
  const auto wsdir = dir / "ws";
  const auto city = test::data_dir() / "synth_city";
  std::ofstream(dir / "quick.cfg") << test::kQuickConfigText;
  const std::string cli = UPHO_CLI_PATH;
  const std::string ingest = cli + " --workspace " + wsdir.string() + " ingest --table " + (city / "health.csv").string() +
                             ":" + (city / "health.tsv").string() + " --table " + (city / "sdoh.csv").string() + ":" +
                             (city / "sdoh.tsv").string() + " --ontology " + (test::data_dir() / "upho.onto").string() +
                             " --crosswalk " + (city / "crosswalk.csv").string() + " --city Memphis > " +
                             (dir / "ingest.txt").string();
  ASSERT_EQ(std::system(ingest.c_str()), 0);
  const std::string analyze_cmd = cli + " --workspace " + wsdir.string() + " --config " + (dir / "quick.cfg").string() +
                                  " analyze --request " + (test::data_dir() / "requests" / "scenario1.json").string() +
                                  " > " + (dir / "id.txt").string();
  ASSERT_EQ(std::system(analyze_cmd.c_str()), 0);
  std::string cli_id = test::slurp(dir / "id.txt");
  while (!cli_id.empty() && cli_id.back() == '\n') cli_id.pop_back();

  const auto lib = analyze(ws(), test::scenario(1), parse_config(test::kQuickConfigText)).report;
  EXPECT_EQ(cli_id, lib["id"].get<std::string>());
  EXPECT_EQ(test::timeless(load_report(wsdir, cli_id)).dump(), test::timeless(lib).dump());

  const std::string missing = cli + " --workspace " + (dir / "nope").string() + " analyze --request " +
                              (test::data_dir() / "requests" / "scenario1.json").string() + " 2> " +
                              (dir / "err.txt").string();
  EXPECT_NE(std::system(missing.c_str()), 0);
  EXPECT_NE(test::slurp(dir / "err.txt").find("[ingest] WorkspaceMissing"), std::string::npos);
}

TEST_F(Gateway, HttpEndToEnd) {
  auto local = ws();
  local.root = test::scratch_dir("gateway_http");
  std::filesystem::create_directories(local.root / "reports");
  Service service(local, test::quick_config());
  httplib::Server srv;
  service.register_routes(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread loop([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(300, 0);

  auto res = cli.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(Json::parse(res->body)["status"], "ok");

  const auto body = test::slurp(test::data_dir() / "requests" / "scenario1.json");
  res = cli.Post("/analyses", body, "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201) << res->body;
  const std::string id = Json::parse(res->body)["id"];
  EXPECT_EQ(id, analyze(ws(), test::scenario(1), test::quick_config()).report["id"]);

  res = cli.Get("/analyses/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(Json::parse(res->body)["id"], id);

  res = cli.Get("/analyses/" + id + "/graph");
  ASSERT_TRUE(res);
  const auto graph = Json::parse(res->body);
  EXPECT_TRUE(graph.contains("nodes") && graph.contains("edges"));

  res = cli.Get("/analyses/" + id + "/pathways");
  ASSERT_TRUE(res);
  EXPECT_FALSE(Json::parse(res->body).empty());

  std::string inferred;
  for (const auto& e : graph["edges"]) {
    if (e["origin"] == "inferred" && e["rel"] == "isExposedTo") inferred = e["id"];
  }
  ASSERT_FALSE(inferred.empty());
  res = cli.Get("/analyses/" + id + "/explain/edge/" + inferred);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto ex = Json::parse(res->body);
  EXPECT_NE(ex["text"].get<std::string>().find("[using EXPOSE"), std::string::npos) << ex["text"];

  res = cli.Get("/analyses/" + id + "/explain/node/DO%3AObesity");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200) << res->body;
  res = cli.Get("/analyses/" + id + "/explain/node/nothing");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  res = cli.Get("/analyses/" + id + "?role=public");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 403);
  auto pub = Json::parse(body);
  pub["role"] = "public";
  res = cli.Post("/analyses", pub.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 403);

  res = cli.Post("/analyses", R"({"outcome":"HIO:%ObesityPrevalence","level":"patient","location":"47157999999"})",
                 "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(Json::parse(res->body)["stage"], "request");

  res = cli.Get("/analyses/" + std::string(64, '0'));
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  res = cli.Get("/metrics/47157010300");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto metrics = Json::parse(res->body);
  const auto& table = ws().table;
  const auto row = *table.find_row("47157010300");
  ASSERT_EQ(metrics["metrics"].size(), table.column_count());
  for (std::size_t j = 0; j < table.column_count(); ++j) {
    EXPECT_EQ(metrics["metrics"][j]["value"].get<double>(), table.rows()[row].values[j]);
    EXPECT_NEAR(metrics["metrics"][j]["city_mean"].get<double>(), table.column_mean(j), 1e-12);
  }
  res = cli.Get("/metrics/47157999999");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  srv.stop();
  loop.join();

  // A fresh service rebuilds the analysis from the stored request.
  Service cold(local, test::quick_config());
  const auto rebuilt = cold.result_for(id, load_report(local.root, id));
  EXPECT_EQ(rebuilt->report["id"], id);
}
