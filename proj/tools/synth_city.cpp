// Generates the bundled synthetic city: 178 census tracts whose health and
// social-determinant columns follow a single latent factor, so the rank
// correlations with obesity prevalence have fixed signs and a fixed ordering.
//
//   synth_city --out data/synth_city [--seed N]
//
// Writes health.csv/health.tsv, sdoh.csv/sdoh.tsv and crosswalk.csv. Seeds
// are tried in sequence from --seed until the generated table satisfies the
// ordering and collinearity checks; the accepted seed is printed.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "upho/format.hpp"
#include "upho/random.hpp"
#include "upho/stats.hpp"
#include "upho/tabledata.hpp"

namespace {

using upho::SplitMix64;

double normal(SplitMix64& rng) {
  // Box-Muller; u1 is kept away from zero.
  const double u1 = (static_cast<double>(rng.next() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Column {
  std::string name;
  std::string term;
  std::string units;
  std::string description;
  bool health;    // health.csv vs sdoh.csv
  double target;  // Spearman rho with obesity
};

const std::vector<Column>& columns() {
  static const std::vector<Column> cols{
      {"obesity", "HIO:%ObesityPrevalence", "percent", "Crude prevalence of obesity among adults", true, 1.0},
      {"lack_physical_activity", "HIO:%PopWLackOfPhysicalActivity", "percent",
       "Crude prevalence of no leisure-time physical activity among adults", true, 0.92},
      {"lack_insurance", "HIO:%LackOfInsurance", "percent", "Crude prevalence of lack of health insurance", true, 0.0},
      {"low_supermarket_access", "HIO:CountLowAccessToSupermarket", "count",
       "Low-income residents more than half a mile from a supermarket", false, 0.37},
      {"black", "HIO:%BlackPopulation", "percent", "Share of residents who are Black or African American", false, 0.77},
      {"poverty", "HIO:%UnderPovertyLine", "percent", "Share of residents below the federal poverty line", false, 0.83},
      {"unemployment", "HIO:%Unemployed", "percent", "Share of the labor force that is unemployed", false, 0.73},
      {"no_hs_diploma", "HIO:%PopNoHighSchoolDiploma", "percent",
       "Share of residents aged 25 or older without a high school diploma", false, 0.81},
      {"crime", "HIO:CrimeRatePer1000", "rate_per_1000", "Reported crimes per thousand residents", false, 0.37},
  };
  return cols;
}

constexpr std::size_t kTracts = 178;
constexpr std::size_t kPatientRow = 102;  // tract 47157010300

std::string tract_code(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "47157%04zu00", i + 1);
  return buf;
}

/// Latent scores -> table values on each column's natural scale.
std::map<std::string, std::vector<double>> generate(std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> z(kTracts);
  for (auto& v : z) v = normal(rng);
  std::map<std::string, std::vector<double>> latent;
  for (const auto& c : columns()) {
    if (c.name == "lack_insurance") continue;
    // Gaussian Spearman rho -> Pearson r.
    const double r = c.target >= 1.0 ? 1.0 : 2.0 * std::sin(M_PI * c.target / 6.0);
    auto& col = latent[c.name];
    for (std::size_t i = 0; i < kTracts; ++i) col.push_back(r * z[i] + std::sqrt(1.0 - r * r) * normal(rng));
  }
  // The patient's tract sits well above the city on the obesity factor and
  // below it on supermarket access.
  latent["obesity"][kPatientRow] = 1.08;
  latent["lack_physical_activity"][kPatientRow] = 1.31;
  latent["no_hs_diploma"][kPatientRow] = 1.39;
  latent["poverty"][kPatientRow] = 1.73;
  latent["black"][kPatientRow] = 1.2;
  latent["unemployment"][kPatientRow] = 0.9;
  latent["low_supermarket_access"][kPatientRow] = -0.6;
  latent["crime"][kPatientRow] = 0.5;
  // Lack of insurance is almost a linear blend of other determinants.
  auto& ins = latent["lack_insurance"];
  for (std::size_t i = 0; i < kTracts; ++i) {
    ins.push_back(0.5 * latent["poverty"][i] + 0.4 * latent["unemployment"][i] + 0.3 * latent["no_hs_diploma"][i] +
                  0.06 * normal(rng));
  }

  std::map<std::string, std::vector<double>> out;
  const auto map = [&](const std::string& name, auto fn) {
    for (double v : latent[name]) out[name].push_back(fn(v));
  };
  const auto pct = [](double v) { return std::round(std::clamp(v, 0.1, 99.9) * 10.0) / 10.0; };
  map("obesity", [&](double v) { return pct(37.5 + 7.84 * v); });
  map("lack_physical_activity", [&](double v) { return pct(36.16 + 9.8 * v); });
  map("lack_insurance", [&](double v) { return pct(20.21 + 6.78 * v); });
  map("low_supermarket_access", [&](double v) { return std::round(1382.2 * std::exp(0.6 * v - 0.18)); });
  map("black", [&](double v) { return pct(100.0 * logistic(0.75 + 1.9 * v)); });
  map("poverty", [&](double v) { return pct(28.65 + 16.28 * v + 2.0 * v * v - 2.0); });
  map("unemployment", [&](double v) { return pct(15.73 + 9.31 * v); });
  map("no_hs_diploma", [&](double v) { return pct(10.38 + 6.59 * v + 1.0); });
  map("crime", [&](double v) { return std::round((350.2 + 126.26 * v) * 10.0) / 10.0; });
  // Pin the published tract-10300 values exactly.
  out["obesity"][kPatientRow] = 46.0;
  out["lack_physical_activity"][kPatientRow] = 49.0;
  out["no_hs_diploma"][kPatientRow] = 21.0;
  out["poverty"][kPatientRow] = 60.8;
  return out;
}

upho::FeatureTable to_table(const std::map<std::string, std::vector<double>>& data) {
  std::vector<upho::ColumnBinding> bindings;
  std::vector<std::string> prov;
  for (const auto& c : columns()) {
    bindings.push_back({c.name, c.term, c.description, upho::parse_units(c.units)});
    prov.push_back("synthetic");
  }
  std::vector<upho::FeatureRow> rows;
  for (std::size_t i = 0; i < kTracts; ++i) {
    upho::FeatureRow r{upho::GeoUnit(tract_code(i), upho::GeoLevel::census_tract), {}};
    for (const auto& c : columns()) r.values.push_back(data.at(c.name)[i]);
    rows.push_back(std::move(r));
  }
  return upho::FeatureTable(upho::GeoLevel::census_tract, std::move(rows), std::move(bindings), std::move(prov));
}

/// Ordering of Spearman coefficients, VIF screen, and tract-10300 shape.
bool acceptable(const upho::FeatureTable& t, std::string& why) {
  std::vector<std::string> feats;
  for (const auto& c : columns()) {
    if (c.name != "obesity") feats.push_back(c.name);
  }
  const auto rho = upho::correlation_report(t, "obesity", feats).rho;
  const auto order = {"lack_physical_activity", "poverty", "no_hs_diploma", "black", "unemployment"};
  double prev = 2.0;
  for (const auto* name : order) {
    if (!(rho.at(name) < prev)) {
      why = std::string("ordering broken at ") + name;
      return false;
    }
    prev = rho.at(name);
  }
  for (const auto* name : {"low_supermarket_access", "crime"}) {
    if (!(rho.at(name) > 0.25 && rho.at(name) < 0.5 && rho.at(name) < prev)) {
      why = std::string("weak feature out of band: ") + name;
      return false;
    }
  }
  for (const auto& c : columns()) {
    if (c.target > 0.0 && c.target < 1.0 && std::abs(rho.at(c.name) - c.target) > 0.03) {
      why = "rho for " + c.name + " is " + upho::format_fixed(rho.at(c.name), 3);
      return false;
    }
  }
  const auto vif = upho::vif_filter(t, feats, 10.0);
  if (vif.removed != std::vector<std::string>{"lack_insurance"}) {
    why = "VIF filter did not remove exactly lack_insurance";
    return false;
  }
  const auto j = t.require_column("low_supermarket_access");
  if (!(t.rows()[kPatientRow].values[j] < t.column_mean(j))) {
    why = "tract 10300 supermarket access not below the mean";
    return false;
  }
  return true;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string csv(const upho::FeatureTable& t, bool health) {
  std::string out = "geo_code";
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < t.column_count(); ++j) {
    if (columns()[j].health != health) continue;
    out += "," + t.bindings()[j].column_name;
    idx.push_back(j);
  }
  out += "\n";
  for (const auto& r : t.rows()) {
    out += r.unit.code();
    for (auto j : idx) out += "," + upho::format_double(r.values[j]);
    out += "\n";
  }
  return out;
}

std::string manifest(bool health) {
  std::string out = "column_name\tterm\tunits\tdescription\n";
  for (const auto& c : columns()) {
    if (c.health == health) out += c.name + "\t" + c.term + "\t" + c.units + "\t" + c.description + "\n";
  }
  return out;
}

std::string crosswalk() {
  // Eight tracts per zip code in tract order; 38127 holds tract 10300.
  static const char* zips[] = {"38103", "38104", "38105", "38106", "38107", "38108", "38109", "38111",
                               "38112", "38114", "38115", "38116", "38127", "38117", "38118", "38119",
                               "38120", "38122", "38125", "38126", "38128", "38131", "38132"};
  std::string out = "zip,tract_fips\n";
  for (std::size_t i = 0; i < kTracts; ++i) out += std::string(zips[i / 8]) + "," + tract_code(i) + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the bundled synthetic city"};
  std::string out_dir = "data/synth_city";
  std::uint64_t seed = 1;
  std::size_t attempts = 10000;
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "First seed to try");
  app.add_option("--attempts", attempts, "Seeds to try before giving up");
  CLI11_PARSE(app, argc, argv);

  std::string why;
  for (std::size_t k = 0; k < attempts; ++k, ++seed) {
    const auto table = to_table(generate(seed));
    if (!acceptable(table, why)) continue;
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write(dir / "health.csv", csv(table, true));
    write(dir / "health.tsv", manifest(true));
    write(dir / "sdoh.csv", csv(table, false));
    write(dir / "sdoh.tsv", manifest(false));
    write(dir / "crosswalk.csv", crosswalk());
    std::cout << "seed " << seed << "\n";
    return 0;
  }
  std::cerr << "no acceptable seed found (last: " << why << ")\n";
  return 1;
}
