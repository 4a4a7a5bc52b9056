#pragma once

// Tract-level feature tables: CSV/manifest ingestion, validation, and
// inner-join linkage of health and SDoH sources on geographic code.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "upho/error.hpp"
#include "upho/format.hpp"

namespace upho {

enum class GeoLevel { zip, census_tract, census_block_group, census_block };

constexpr std::size_t code_length(GeoLevel level) {
  switch (level) {
    case GeoLevel::zip: return 5;
    case GeoLevel::census_tract: return 11;
    case GeoLevel::census_block_group: return 12;
    case GeoLevel::census_block: return 15;
  }
  return 0;
}

inline std::string_view to_string(GeoLevel level) {
  switch (level) {
    case GeoLevel::zip: return "zip";
    case GeoLevel::census_tract: return "census_tract";
    case GeoLevel::census_block_group: return "census_block_group";
    case GeoLevel::census_block: return "census_block";
  }
  return "";
}

inline GeoLevel parse_geo_level(std::string_view text) {
  for (auto level : {GeoLevel::zip, GeoLevel::census_tract, GeoLevel::census_block_group,
                     GeoLevel::census_block}) {
    if (text == to_string(level)) return level;
  }
  fail(ErrorCode::InvalidArgument, "unknown geographic level '" + std::string(text) + "'");
}

/// A validated geographic identifier: all digits, length fixed by level.
class GeoUnit {
 public:
  GeoUnit(std::string code, GeoLevel level) : code_(std::move(code)), level_(level) {
    const bool digits = !code_.empty() && std::all_of(code_.begin(), code_.end(),
                                                      [](char c) { return c >= '0' && c <= '9'; });
    if (!digits || code_.size() != code_length(level_)) {
      fail(ErrorCode::BadGeoCode, "'" + code_ + "' is not a valid " + std::string(to_string(level_)) +
                                      " code (" + std::to_string(code_length(level_)) + " digits)");
    }
  }

  const std::string& code() const noexcept { return code_; }
  GeoLevel level() const noexcept { return level_; }

  friend bool operator==(const GeoUnit&, const GeoUnit&) = default;
  friend auto operator<=>(const GeoUnit& a, const GeoUnit& b) {
    if (auto c = a.code_ <=> b.code_; c != 0) return c;
    return a.level_ <=> b.level_;
  }

 private:
  std::string code_;
  GeoLevel level_;
};

enum class Units { percent, count, rate_per_1000 };

inline std::string_view to_string(Units units) {
  switch (units) {
    case Units::percent: return "percent";
    case Units::count: return "count";
    case Units::rate_per_1000: return "rate_per_1000";
  }
  return "";
}

inline Units parse_units(std::string_view text) {
  for (auto u : {Units::percent, Units::count, Units::rate_per_1000}) {
    if (text == to_string(u)) return u;
  }
  fail(ErrorCode::InvalidArgument, "unknown units '" + std::string(text) + "'");
}

struct ColumnBinding {
  std::string column_name;
  std::string term;  // namespaced concept id, e.g. HIO:%ObesityPrevalence
  std::string description;
  Units units = Units::percent;

  /// Namespace part of `term` (text before the first ':'), or "local".
  std::string term_namespace() const {
    const auto colon = term.find(':');
    return colon == std::string::npos ? std::string("local") : term.substr(0, colon);
  }

  friend bool operator==(const ColumnBinding&, const ColumnBinding&) = default;
};

struct FeatureRow {
  GeoUnit unit;
  std::vector<double> values;

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

/// Rectangular geo-unit by feature table. Immutable once constructed; the
/// constructor enforces every shape invariant.
class FeatureTable {
 public:
  /// Empty census-tract table.
  FeatureTable() : FeatureTable(GeoLevel::census_tract, {}, {}, {}) {}

  FeatureTable(GeoLevel level, std::vector<FeatureRow> rows, std::vector<ColumnBinding> bindings,
               std::vector<std::string> provenance)
      : level_(level),
        rows_(std::move(rows)),
        bindings_(std::move(bindings)),
        provenance_(std::move(provenance)) {
    if (provenance_.size() != bindings_.size()) {
      fail(ErrorCode::InvalidArgument, "one provenance entry is required per column");
    }
    std::set<std::string> names;
    for (const auto& b : bindings_) {
      if (!names.insert(b.column_name).second) {
        fail(ErrorCode::ColumnNameCollision, "column '" + b.column_name + "' appears twice");
      }
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const auto& row = rows_[r];
      if (row.unit.level() != level_) {
        fail(ErrorCode::LevelMismatch, "row '" + row.unit.code() + "' has the wrong geographic level");
      }
      if (row.values.size() != bindings_.size()) {
        fail(ErrorCode::MalformedRow, "row '" + row.unit.code() + "' has " +
                                          std::to_string(row.values.size()) + " values, expected " +
                                          std::to_string(bindings_.size()));
      }
      for (double v : row.values) {
        if (!std::isfinite(v)) fail(ErrorCode::NonNumericCell, "non-finite value in row '" + row.unit.code() + "'");
      }
      if (!index_.emplace(row.unit.code(), r).second) {
        fail(ErrorCode::DuplicateGeoCode, "geographic code '" + row.unit.code() + "' appears twice");
      }
    }
  }

  GeoLevel level() const noexcept { return level_; }
  const std::vector<FeatureRow>& rows() const noexcept { return rows_; }
  const std::vector<ColumnBinding>& bindings() const noexcept { return bindings_; }
  const std::vector<std::string>& provenance() const noexcept { return provenance_; }
  std::size_t row_count() const noexcept { return rows_.size(); }
  std::size_t column_count() const noexcept { return bindings_.size(); }

  std::optional<std::size_t> find_row(std::string_view code) const {
    auto it = index_.find(std::string(code));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t j = 0; j < bindings_.size(); ++j) {
      if (bindings_[j].column_name == name) return j;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> column_for_term(std::string_view term) const {
    for (std::size_t j = 0; j < bindings_.size(); ++j) {
      if (bindings_[j].term == term) return j;
    }
    return std::nullopt;
  }

  std::size_t require_column(std::string_view name) const {
    if (auto j = column_index(name)) return *j;
    fail(ErrorCode::FeatureMismatch, "no column named '" + std::string(name) + "'");
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_) out.push_back(row.values.at(j));
    return out;
  }

  double column_mean(std::size_t j) const {
    if (rows_.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& row : rows_) sum += row.values.at(j);
    return sum / static_cast<double>(rows_.size());
  }

  /// Rows at the given positions, in the given order.
  FeatureTable select_rows(const std::vector<std::size_t>& positions) const {
    std::vector<FeatureRow> out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(rows_.at(p));
    return FeatureTable(level_, std::move(out), bindings_, provenance_);
  }

  /// Subset of columns, by name, in the given order.
  FeatureTable select_columns(const std::vector<std::string>& names) const {
    std::vector<std::size_t> idx;
    std::vector<ColumnBinding> bindings;
    std::vector<std::string> prov;
    for (const auto& n : names) {
      const auto j = require_column(n);
      idx.push_back(j);
      bindings.push_back(bindings_[j]);
      prov.push_back(provenance_[j]);
    }
    std::vector<FeatureRow> out;
    out.reserve(rows_.size());
    for (const auto& row : rows_) {
      FeatureRow r{row.unit, {}};
      for (auto j : idx) r.values.push_back(row.values[j]);
      out.push_back(std::move(r));
    }
    return FeatureTable(level_, std::move(out), std::move(bindings), std::move(prov));
  }

  friend bool operator==(const FeatureTable& a, const FeatureTable& b) {
    return a.level_ == b.level_ && a.rows_ == b.rows_ && a.bindings_ == b.bindings_ &&
           a.provenance_ == b.provenance_;
  }

 private:
  GeoLevel level_;
  std::vector<FeatureRow> rows_;
  std::vector<ColumnBinding> bindings_;
  std::vector<std::string> provenance_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline std::vector<std::string_view> split_lines(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::string csv_quote(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace detail

/// Manifest text: one tab-separated record per column,
/// `column_name<TAB>term<TAB>units<TAB>description`. Blank lines and lines
/// starting with '#' are ignored; a leading `column_name` header is optional.
inline std::vector<ColumnBinding> parse_manifest(std::string_view text) {
  std::vector<ColumnBinding> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (auto line : detail::split_lines(text)) {
    ++line_no;
    if (detail::trim(line).empty() || detail::trim(line).front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      fields.emplace_back(detail::trim(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start)));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() == 4 && fields[0] == "column_name" && fields[1] == "term") continue;
    if (fields.size() != 4) {
      fail(ErrorCode::MalformedRow, "manifest line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    if (!seen.insert(fields[0]).second) {
      fail(ErrorCode::ColumnNameCollision, "manifest binds '" + fields[0] + "' twice");
    }
    out.push_back(ColumnBinding{fields[0], fields[1], fields[3], parse_units(fields[2])});
  }
  return out;
}

inline std::string serialize_manifest(const std::vector<ColumnBinding>& bindings) {
  std::string out = "column_name\tterm\tunits\tdescription\n";
  for (const auto& b : bindings) {
    out += b.column_name + "\t" + b.term + "\t" + std::string(to_string(b.units)) + "\t" + b.description + "\n";
  }
  return out;
}

/// Parses a wide-format feature CSV (`geo_code` first, numeric columns after).
/// Columns absent from the manifest are dropped; missing cells are rejected.
inline FeatureTable parse_feature_csv(std::string_view bytes, const std::vector<ColumnBinding>& manifest,
                                      GeoLevel level = GeoLevel::census_tract,
                                      const std::string& source = "inline") {
  const auto lines = detail::split_lines(bytes);
  if (lines.empty()) fail(ErrorCode::MalformedRow, source + ": missing header row");
  const auto header = detail::split_csv_record(lines.front());
  if (detail::trim(header.front()) != "geo_code") {
    fail(ErrorCode::MalformedRow, source + ": first header column must be 'geo_code'");
  }

  std::vector<std::pair<std::size_t, ColumnBinding>> kept;  // (csv position, binding)
  std::set<std::string> header_names;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string name(detail::trim(header[c]));
    if (!header_names.insert(name).second) {
      fail(ErrorCode::ColumnNameCollision, source + ": header repeats column '" + name + "'");
    }
    auto it = std::find_if(manifest.begin(), manifest.end(),
                           [&](const ColumnBinding& b) { return b.column_name == name; });
    if (it != manifest.end()) kept.emplace_back(c, *it);
  }

  std::vector<FeatureRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_csv_record(lines[i]);
    const auto where = source + " line " + std::to_string(i + 1);
    if (fields.size() != header.size()) {
      fail(ErrorCode::MalformedRow, where + ": " + std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    GeoUnit unit(std::string(detail::trim(fields[0])), level);
    FeatureRow row{std::move(unit), {}};
    row.values.reserve(kept.size());
    for (const auto& [pos, binding] : kept) {
      auto v = detail::parse_number(fields[pos]);
      if (!v) {
        fail(ErrorCode::NonNumericCell, where + ": column '" + binding.column_name + "' holds '" + fields[pos] + "'");
      }
      row.values.push_back(*v);
    }
    rows.push_back(std::move(row));
  }

  std::vector<ColumnBinding> bindings;
  for (auto& [pos, binding] : kept) bindings.push_back(binding);
  std::vector<std::string> provenance(bindings.size(), source);
  return FeatureTable(level, std::move(rows), std::move(bindings), std::move(provenance));
}

/// Inverse of parse_feature_csv for the retained columns (shortest round-trip
/// number formatting).
inline std::string serialize_feature_csv(const FeatureTable& table) {
  std::string out = "geo_code";
  for (const auto& b : table.bindings()) out += "," + detail::csv_quote(b.column_name);
  out += "\n";
  for (const auto& row : table.rows()) {
    out += row.unit.code();
    for (double v : row.values) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

/// Inner join on geographic code. Row order follows the first table.
inline FeatureTable link_tables(const std::vector<FeatureTable>& tables) {
  if (tables.empty()) fail(ErrorCode::InvalidArgument, "link_tables needs at least one table");
  const auto level = tables.front().level();
  std::set<std::string> names;
  std::vector<ColumnBinding> bindings;
  std::vector<std::string> provenance;
  for (const auto& t : tables) {
    if (t.level() != level) fail(ErrorCode::LevelMismatch, "tables are at different geographic levels");
    for (std::size_t j = 0; j < t.column_count(); ++j) {
      if (!names.insert(t.bindings()[j].column_name).second) {
        fail(ErrorCode::ColumnNameCollision, "column '" + t.bindings()[j].column_name + "' appears in two tables");
      }
      bindings.push_back(t.bindings()[j]);
      provenance.push_back(t.provenance()[j]);
    }
  }

  std::vector<FeatureRow> rows;
  for (const auto& first_row : tables.front().rows()) {
    FeatureRow joined{first_row.unit, first_row.values};
    bool present = true;
    for (std::size_t t = 1; t < tables.size() && present; ++t) {
      auto r = tables[t].find_row(first_row.unit.code());
      if (!r) {
        present = false;
        break;
      }
      const auto& vals = tables[t].rows()[*r].values;
      joined.values.insert(joined.values.end(), vals.begin(), vals.end());
    }
    if (present) rows.push_back(std::move(joined));
  }
  if (rows.empty() && std::any_of(tables.begin(), tables.end(), [](const auto& t) { return t.row_count() > 0; })) {
    fail(ErrorCode::EmptyJoin, "the tables share no geographic codes");
  }
  return FeatureTable(level, std::move(rows), std::move(bindings), std::move(provenance));
}

class ZipTractCrosswalk {
 public:
  using Entry = std::pair<GeoUnit, GeoUnit>;

  ZipTractCrosswalk() = default;
  explicit ZipTractCrosswalk(std::vector<Entry> entries) : entries_(std::move(entries)) {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& [zip, tract] : entries_) {
      if (zip.level() != GeoLevel::zip || tract.level() != GeoLevel::census_tract) {
        fail(ErrorCode::LevelMismatch, "crosswalk entries must map zip codes to census tracts");
      }
      if (!seen.emplace(zip.code(), tract.code()).second) {
        fail(ErrorCode::MalformedRow, "duplicate crosswalk entry " + zip.code() + "," + tract.code());
      }
    }
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

  /// Zip codes containing the tract, ascending.
  std::vector<GeoUnit> zips_of(const GeoUnit& tract) const {
    std::set<GeoUnit> out;
    for (const auto& [zip, t] : entries_) {
      if (t == tract) out.insert(zip);
    }
    return {out.begin(), out.end()};
  }

 private:
  std::vector<Entry> entries_;
};

/// Crosswalk CSV with header `zip,tract_fips`.
inline ZipTractCrosswalk parse_crosswalk_csv(std::string_view bytes) {
  const auto lines = detail::split_lines(bytes);
  if (lines.empty()) fail(ErrorCode::MalformedRow, "crosswalk: missing header row");
  const auto header = detail::split_csv_record(lines.front());
  if (header.size() != 2 || detail::trim(header[0]) != "zip" || detail::trim(header[1]) != "tract_fips") {
    fail(ErrorCode::MalformedRow, "crosswalk header must be 'zip,tract_fips'");
  }
  std::vector<ZipTractCrosswalk::Entry> entries;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_csv_record(lines[i]);
    if (fields.size() != 2) fail(ErrorCode::MalformedRow, "crosswalk line " + std::to_string(i + 1));
    entries.emplace_back(GeoUnit(std::string(detail::trim(fields[0])), GeoLevel::zip),
                         GeoUnit(std::string(detail::trim(fields[1])), GeoLevel::census_tract));
  }
  return ZipTractCrosswalk(std::move(entries));
}

inline std::string serialize_crosswalk_csv(const ZipTractCrosswalk& crosswalk) {
  std::string out = "zip,tract_fips\n";
  for (const auto& [zip, tract] : crosswalk.entries()) out += zip.code() + "," + tract.code() + "\n";
  return out;
}

/// Distinct tracts mapped to `zip`, ascending by code.
inline std::vector<GeoUnit> tracts_in_zip(const ZipTractCrosswalk& crosswalk, const GeoUnit& zip) {
  if (zip.level() != GeoLevel::zip) fail(ErrorCode::LevelMismatch, "tracts_in_zip expects a 5-digit zip code");
  std::set<GeoUnit> out;
  for (const auto& [z, tract] : crosswalk.entries()) {
    if (z == zip) out.insert(tract);
  }
  if (out.empty()) fail(ErrorCode::UnknownZip, "zip " + zip.code() + " is not in the crosswalk");
  return {out.begin(), out.end()};
}

}  // namespace upho
