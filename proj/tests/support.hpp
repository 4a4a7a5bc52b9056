#pragma once

// Fixture builders shared by the test binaries. Oracles live in the test
// files that use them.

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <filesystem>
#include <string>
#include <vector>

#include "upho/error.hpp"
#include "upho/random.hpp"
#include "upho/tabledata.hpp"

namespace upho::test {

inline std::string tract(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "47157%06zu", i);
  return buf;
}

/// Census-tract table with the given columns (all percent, term HIO:<name>).
inline FeatureTable make_table(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
  std::vector<ColumnBinding> bindings;
  for (const auto& n : names) bindings.push_back({n, "HIO:" + n, n, Units::percent});
  const std::size_t rows = cols.empty() ? 0 : cols.front().size();
  std::vector<FeatureRow> out;
  for (std::size_t i = 0; i < rows; ++i) {
    FeatureRow r{GeoUnit(tract(i + 1), GeoLevel::census_tract), {}};
    for (const auto& c : cols) r.values.push_back(c[i]);
    out.push_back(std::move(r));
  }
  return FeatureTable(GeoLevel::census_tract, std::move(out), std::move(bindings),
                      std::vector<std::string>(names.size(), "test"));
}

inline double gaussian(SplitMix64& rng) {
  double s = 0.0;
  for (int i = 0; i < 12; ++i) s += rng.uniform();
  return s - 6.0;
}

/// Name of the upho::Error code `fn` raises, or "none".
inline std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return std::string(to_string(e.code()));
  }
  return "none";
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path data_dir() { return UPHO_DATA_DIR; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("upho_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace upho::test
