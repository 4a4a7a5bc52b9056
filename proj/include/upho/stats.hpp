#pragma once

// Feature screening and preprocessing: Spearman rank correlation, VIF
// multicollinearity filtering, standardization, and seeded splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "upho/error.hpp"
#include "upho/random.hpp"
#include "upho/tabledata.hpp"

namespace upho {

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::LengthMismatch, "pearson: vectors differ in length");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorCode::ConstantInput, "pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::LengthMismatch, "spearman: vectors differ in length");
  if (x.size() < 3) fail(ErrorCode::LengthMismatch, "spearman: at least 3 observations are required");
  const auto is_constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (is_constant(x) || is_constant(y)) fail(ErrorCode::ConstantInput, "spearman: constant input");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

struct CorrelationReport {
  std::string target;
  std::map<std::string, double> rho;
};

inline CorrelationReport correlation_report(const FeatureTable& table, const std::string& target,
                                            const std::vector<std::string>& candidates) {
  CorrelationReport report{target, {}};
  const auto y = table.column(table.require_column(target));
  for (const auto& name : candidates) {
    if (name == target) continue;
    report.rho[name] = spearman(table.column(table.require_column(name)), y);
  }
  return report;
}

struct VifRound {
  std::map<std::string, double> vif;  // +inf marks a degenerate (perfectly collinear) column
  std::string removed;                // empty when nothing exceeded the threshold
};

struct VifReport {
  std::map<std::string, double> vif;
  double threshold = 10.0;
  std::vector<std::string> removed;
  std::vector<std::string> degenerate;
  std::vector<VifRound> trace;
};

namespace detail {

constexpr double kSingularR2 = 1.0 - 1e-12;

/// R^2 of the OLS fit (with intercept) of column `target` on `others`,
/// solved through the normal equations on centered data. Returns nullopt for
/// a singular design.
inline std::optional<double> ols_r2(const Eigen::MatrixXd& centered, Eigen::Index target,
                                    const std::vector<Eigen::Index>& others) {
  const Eigen::Index n = centered.rows();
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(others.size()));
  for (std::size_t k = 0; k < others.size(); ++k) design.col(static_cast<Eigen::Index>(k)) = centered.col(others[k]);
  const Eigen::VectorXd y = centered.col(target);
  const double sst = y.squaredNorm();
  if (sst <= 0.0) return std::nullopt;
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  const Eigen::VectorXd beta = ldlt.solve(design.transpose() * y);
  if (!beta.allFinite()) return std::nullopt;
  const double sse = (y - design * beta).squaredNorm();
  const double r2 = 1.0 - sse / sst;
  if (!std::isfinite(r2) || r2 >= kSingularR2) return std::nullopt;
  return r2;
}

inline Eigen::MatrixXd centered_columns(const FeatureTable& table, const std::vector<std::string>& names) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(table.row_count()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto col = table.column(table.require_column(names[k]));
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = col[i] - mean;
    }
  }
  return m;
}

inline std::map<std::string, double> vif_pass(const FeatureTable& table, const std::vector<std::string>& names) {
  if (names.size() < 2) fail(ErrorCode::InvalidArgument, "vif needs at least 2 candidate columns");
  if (table.row_count() <= names.size()) {
    fail(ErrorCode::InsufficientRows, "vif needs more rows than candidate columns");
  }
  const auto centered = centered_columns(table, names);
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<Eigen::Index> others;
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (k != j) others.push_back(static_cast<Eigen::Index>(k));
    }
    const auto r2 = ols_r2(centered, static_cast<Eigen::Index>(j), others);
    out[names[j]] = r2 ? 1.0 / (1.0 - *r2) : std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace detail

/// Single-pass VIF for each candidate against the others. Flags (without
/// removing iteratively) every column above the threshold.
inline VifReport vif(const FeatureTable& table, const std::vector<std::string>& candidates,
                     double threshold = 10.0) {
  VifReport report;
  report.threshold = threshold;
  report.vif = detail::vif_pass(table, candidates);
  for (const auto& [name, value] : report.vif) {
    if (std::isinf(value)) fail(ErrorCode::SingularDesign, "column '" + name + "' is perfectly collinear with the others");
  }
  for (const auto& [name, value] : report.vif) {
    if (value > threshold) report.removed.push_back(name);
  }
  report.trace.push_back(VifRound{report.vif, {}});
  return report;
}

/// Stepwise VIF filter: drop the single worst column above the threshold,
/// recompute, repeat. Perfectly collinear columns count as infinite VIF and are
/// listed in `degenerate` as well as `removed`.
inline VifReport vif_filter(const FeatureTable& table, std::vector<std::string> candidates,
                            double threshold = 10.0) {
  VifReport report;
  report.threshold = threshold;
  while (candidates.size() >= 2) {
    auto values = detail::vif_pass(table, candidates);
    auto worst = values.end();
    for (auto it = values.begin(); it != values.end(); ++it) {
      if (it->second > threshold && (worst == values.end() || it->second > worst->second)) worst = it;
    }
    if (worst == values.end()) {
      report.trace.push_back(VifRound{values, {}});
      report.vif = std::move(values);
      return report;
    }
    const std::string name = worst->first;
    if (std::isinf(worst->second)) report.degenerate.push_back(name);
    report.removed.push_back(name);
    report.trace.push_back(VifRound{std::move(values), name});
    candidates.erase(std::find(candidates.begin(), candidates.end(), name));
  }
  report.vif.clear();
  for (const auto& c : candidates) report.vif[c] = 1.0;
  return report;
}

struct StandardizationParams {
  std::vector<std::string> columns;
  std::vector<double> mu;
  std::vector<double> sigma;  // sample standard deviation (n - 1)

  double forward(std::size_t j, double raw) const { return (raw - mu.at(j)) / sigma.at(j); }
  double inverse(std::size_t j, double scaled) const { return scaled * sigma.at(j) + mu.at(j); }

  std::size_t index_of(const std::string& column) const {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j] == column) return j;
    }
    fail(ErrorCode::FeatureMismatch, "column '" + column + "' was not standardized");
  }

  friend bool operator==(const StandardizationParams&, const StandardizationParams&) = default;
};

inline StandardizationParams fit_standardization(const FeatureTable& table) {
  if (table.row_count() < 2) fail(ErrorCode::InsufficientRows, "standardization needs at least 2 rows");
  StandardizationParams params;
  const double n = static_cast<double>(table.row_count());
  for (std::size_t j = 0; j < table.column_count(); ++j) {
    const auto col = table.column(j);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      fail(ErrorCode::ConstantColumn, "column '" + table.bindings()[j].column_name + "' is constant");
    }
    params.columns.push_back(table.bindings()[j].column_name);
    params.mu.push_back(mean);
    params.sigma.push_back(sd);
  }
  return params;
}

namespace detail {

template <typename Fn>
FeatureTable map_columns(const FeatureTable& table, const StandardizationParams& params, Fn fn) {
  std::vector<std::size_t> param_index;
  for (const auto& b : table.bindings()) param_index.push_back(params.index_of(b.column_name));
  std::vector<FeatureRow> rows;
  rows.reserve(table.row_count());
  for (const auto& row : table.rows()) {
    FeatureRow out{row.unit, row.values};
    for (std::size_t j = 0; j < out.values.size(); ++j) out.values[j] = fn(param_index[j], out.values[j]);
    rows.push_back(std::move(out));
  }
  return FeatureTable(table.level(), std::move(rows), table.bindings(), table.provenance());
}

}  // namespace detail

inline FeatureTable apply_standardization(const FeatureTable& table, const StandardizationParams& params) {
  return detail::map_columns(table, params, [&](std::size_t j, double v) { return params.forward(j, v); });
}

inline FeatureTable invert_standardization(const FeatureTable& table, const StandardizationParams& params) {
  return detail::map_columns(table, params, [&](std::size_t j, double v) { return params.inverse(j, v); });
}

inline std::pair<FeatureTable, StandardizationParams> standardize(const FeatureTable& table) {
  auto params = fit_standardization(table);
  return {apply_standardization(table, params), std::move(params)};
}

struct SplitSpec {
  double train_fraction = 0.85;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded partition of 0..n-1; |train| = round(train_fraction * n). Each side
/// keeps ascending row order.
inline SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "train_fraction must lie strictly between 0 and 1");
  }
  if (spec.k < 2) fail(ErrorCode::InvalidArgument, "k must be at least 2");
  if (n < 10) fail(ErrorCode::TooFewRows, "splitting needs at least 10 rows");
  auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  const auto perm = seeded_permutation(n, spec.seed);
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline std::pair<FeatureTable, FeatureTable> split(const FeatureTable& table, const SplitSpec& spec) {
  const auto idx = split_indices(table.row_count(), spec);
  return {table.select_rows(idx.train), table.select_rows(idx.test)};
}

struct Fold {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> validation;
};

/// k seeded folds over 0..rows-1; validation sets partition the rows and
/// differ in size by at most one.
inline std::vector<Fold> kfold(std::size_t rows, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::InvalidArgument, "k must be at least 2");
  if (k > rows) fail(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(rows) + " rows");
  const auto perm = seeded_permutation(rows, seed);
  std::vector<Fold> folds(k);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = rows / k + (f < rows % k ? 1 : 0);
    auto& fold = folds[f];
    fold.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                           perm.begin() + static_cast<std::ptrdiff_t>(start + size));
    std::sort(fold.validation.begin(), fold.validation.end());
    start += size;
  }
  for (auto& fold : folds) {
    std::vector<bool> held(rows, false);
    for (auto v : fold.validation) held[v] = true;
    for (std::size_t i = 0; i < rows; ++i) {
      if (!held[i]) fold.fit.push_back(i);
    }
  }
  return folds;
}

inline std::vector<Fold> kfold(const FeatureTable& train, std::size_t k, std::uint64_t seed) {
  return kfold(train.row_count(), k, seed);
}

}  // namespace upho
