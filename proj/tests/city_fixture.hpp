#pragma once

// Workspace over the bundled synthetic city, shared by the gateway tests and
// the acceptance binary.

#include "support.hpp"
#include "upho/gateway/workspace.hpp"

namespace upho::test {

inline Workspace ingest_city(const std::filesystem::path& root) {
  const auto dir = data_dir() / "synth_city";
  return ingest_workspace(root,
                          {{"health.csv", slurp(dir / "health.csv"), slurp(dir / "health.tsv")},
                           {"sdoh.csv", slurp(dir / "sdoh.csv"), slurp(dir / "sdoh.tsv")}},
                          slurp(data_dir() / "upho.onto"), slurp(dir / "crosswalk.csv"), "Memphis");
}

inline AnalysisRequest scenario(int n) {
  return parse_request(std::string_view(slurp(data_dir() / "requests" / ("scenario" + std::to_string(n) + ".json"))));
}

/// Small grid for tests that exercise plumbing rather than model selection.
inline RunConfig quick_config() {
  RunConfig cfg;
  cfg.grid_C = {1.0, 4.0};
  cfg.grid_epsilon = {0.1};
  cfg.cv_k = 3;
  return cfg;
}

inline const char* kQuickConfigText = "grid.C = 1, 4\ngrid.epsilon = 0.1\ncv.k = 3\n";

/// Report without the wall-clock timings.
inline Json timeless(Json report) {
  report.erase("timings");
  return report;
}

}  // namespace upho::test
