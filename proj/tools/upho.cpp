// upho: command-line front end to the observatory engine.
//
//   upho ingest --table a.csv:a.tsv [--table ...] --ontology o.onto [--crosswalk c.csv] [--city NAME]
//   upho ontology check FILE
//   upho analyze --request r.json [--out report.json]
//   upho reason --facts f.facts --ontology o.onto
//   upho trace --facts f.facts --ontology o.onto --from NODE --to NODE
//   upho serve [--bind host:port]
//
// Global flags: --workspace (default $UPHO_WORKSPACE, else ./workspace),
// --seed, --config. Usage errors exit 2, stage errors exit 1.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "upho/explain.hpp"
#include "upho/graphstore.hpp"
#include "upho/ontology.hpp"
#include "upho/gateway/request.hpp"
#include "upho/gateway/workspace.hpp"
#include "upho/gateway/server.hpp"

namespace {

using namespace upho;

std::string join_and(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += i + 1 == ids.size() ? " and " : ", ";
    out += ids[i];
  }
  return out;
}

std::string node_name(const KnowledgeGraph& g, const std::string& id) {
  const auto& n = g.node(id);
  return n.kind == NodeKind::concept_ ? n.term.key() : n.id;
}

KnowledgeGraph load_graph(const std::string& facts, const std::string& ontology) {
  auto ont = std::make_shared<const Ontology>(parse_ontology(read_file(ontology)));
  return load_facts(std::move(ont), read_file(facts));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable urban population-health observatory"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string workspace = std::getenv("UPHO_WORKSPACE") ? std::getenv("UPHO_WORKSPACE") : "workspace";
  std::optional<std::uint64_t> seed;
  std::string config_path;
  app.add_option("--workspace", workspace, "Workspace root (default: $UPHO_WORKSPACE)");
  app.add_option("--seed", seed, "Override the request seed");
  app.add_option("--config", config_path, "key=value overrides for grid, thresholds, templates and modes")
      ->check(CLI::ExistingFile);

  auto* ingest = app.add_subcommand("ingest", "Link CSV tables into a fresh workspace");
  std::vector<std::string> tables;
  std::string ingest_ontology, crosswalk, city = "city";
  ingest->add_option("--table", tables, "CSV and manifest pair, csv:manifest")->required();
  ingest->add_option("--ontology", ingest_ontology, "Ontology file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--crosswalk", crosswalk, "ZIP/tract crosswalk CSV")->check(CLI::ExistingFile);
  ingest->add_option("--city", city, "City name for population analyses");

  auto* ontology = app.add_subcommand("ontology", "Ontology tools");
  ontology->require_subcommand(1);
  auto* check = ontology->add_subcommand("check", "Parse and validate an ontology file");
  std::string check_file;
  check->add_option("file", check_file, "Ontology file")->required()->check(CLI::ExistingFile);
  bool print = false;
  check->add_flag("--print", print, "Print the canonical form");

  auto* analyze_cmd = app.add_subcommand("analyze", "Run an analysis request and persist the report");
  std::string request_path, out_path;
  analyze_cmd->add_option("--request", request_path, "Request JSON file")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", out_path, "Also write the report here");

  auto* reason = app.add_subcommand("reason", "Infer over a fact file and print derived facts");
  std::string facts, onto_file;
  reason->add_option("--facts", facts, "Fact file")->required()->check(CLI::ExistingFile);
  reason->add_option("--ontology", onto_file, "Ontology file")->required()->check(CLI::ExistingFile);

  auto* trace = app.add_subcommand("trace", "Trace explanatory pathways between two nodes");
  std::string from, to;
  std::size_t max_len = 6;
  trace->add_option("--facts", facts, "Fact file")->required()->check(CLI::ExistingFile);
  trace->add_option("--ontology", onto_file, "Ontology file")->required()->check(CLI::ExistingFile);
  trace->add_option("--from", from, "Source node id")->required();
  trace->add_option("--to", to, "Target node id")->required();
  trace->add_option("--max-len", max_len, "Longest pathway in edges");

  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API over a workspace");
  std::string bind = "127.0.0.1:8080";
  serve_cmd->add_option("--bind", bind, "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto load_config = [&] { return config_path.empty() ? RunConfig{} : parse_config(read_file(config_path)); };

    if (*ingest) {
      std::vector<TableSource> sources;
      for (const auto& spec : tables) {
        const auto colon = spec.rfind(':');
        if (colon == std::string::npos) {
          std::cerr << "--table expects csv:manifest, got '" << spec << "'\n";
          return 2;
        }
        const std::string csv = spec.substr(0, colon);
        sources.push_back({csv, read_file(csv), read_file(spec.substr(colon + 1))});
      }
      std::optional<std::string> cw;
      if (!crosswalk.empty()) cw = read_file(crosswalk);
      try {
        const auto ws = ingest_workspace(workspace, sources, read_file(ingest_ontology), cw, city);
        std::cout << "workspace " << ws.root.string() << ": " << ws.table.row_count() << " tracts, "
                  << ws.table.column_count() << " columns\n";
      } catch (const Error& e) {
        throw e.with_stage("ingest");
      }
    } else if (*check) {
      const auto ont = parse_ontology(read_file(check_file));
      const auto diags = validate_ontology(ont);
      for (const auto& d : diags) std::cerr << to_string(d.kind) << ": " << d.message << "\n";
      if (print) std::cout << print_ontology(ont);
      if (!diags.empty()) return 1;
      std::cout << "ok: " << ont.concepts.size() << " concepts, " << ont.relations.size() << " relations, "
                << ont.rules.size() << " rules\n";
    } else if (*analyze_cmd) {
      const auto ws = open_workspace(workspace);
      AnalysisRequest req;
      try {
        req = parse_request(std::string_view(read_file(request_path)));
      } catch (const Error& e) {
        throw e.with_stage("request");
      }
      if (seed) req.seed = *seed;
      const auto report = run_analysis(ws, req, load_config());
      if (!out_path.empty()) write_file_atomic(out_path, report.dump(2) + "\n");
      std::cout << report.at("id").get<std::string>() << "\n";
    } else if (*reason) {
      auto g = load_graph(facts, onto_file);
      const auto result = g.infer();
      for (const auto& e : result.new_facts) {
        std::cout << e.id << ": " << node_name(g, e.subject) << " " << e.relation << " " << node_name(g, e.object)
                  << " [using " << join_and(e.provenance()) << "]\n";
      }
      std::cout << result.new_facts.size() << " derived facts in " << result.iterations << " rounds\n";
    } else if (*trace) {
      auto g = load_graph(facts, onto_file);
      g.infer();
      const auto paths = trace_pathways(g, from, to, default_whitelist(), max_len);
      for (const auto& p : paths) {
        std::cout << format_fixed(p.score, 3) << "  ";
        for (std::size_t i = 0; i < p.nodes.size(); ++i) {
          if (i > 0) std::cout << " -[" << g.edge(p.edges[i - 1]).relation << "]-> ";
          std::cout << node_name(g, p.nodes[i]);
        }
        std::cout << "\n";
      }
      if (paths.empty()) std::cout << "no pathway from " << from << " to " << to << "\n";
    } else if (*serve_cmd) {
      Service service(open_workspace(workspace), load_config());
      std::cout << "serving " << workspace << " on " << bind << std::endl;
      serve(service, bind);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
