#pragma once

// Exact SHAP values for the linear SVR. With independent features the
// attribution of feature j is w_j / sigma_j * (x_j - mu_j), where mu is the
// background mean on the raw scale; baseline + sum(phi) equals the prediction.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "upho/error.hpp"
#include "upho/regression.hpp"
#include "upho/tabledata.hpp"

namespace upho {

struct ShapExplanation {
  std::optional<GeoUnit> subject;
  std::vector<std::string> features;  // model feature order
  std::map<std::string, double> phi;
  double baseline = 0.0;
  double prediction = 0.0;
};

/// Background means of the model features, raw scale.
inline std::vector<double> background_means(const LinearSvrModel& model, const FeatureTable& background) {
  if (background.row_count() == 0) fail(ErrorCode::EmptyBackground, "background table has no rows");
  std::vector<double> mu;
  for (const auto& f : model.features) {
    auto j = background.column_index(f);
    if (!j) fail(ErrorCode::FeatureMismatch, "background lacks feature '" + f + "'");
    mu.push_back(background.column_mean(*j));
  }
  return mu;
}

/// `x` holds raw feature values in model feature order.
inline ShapExplanation shap_explain(const LinearSvrModel& model, std::span<const double> x,
                                    const FeatureTable& background, std::optional<GeoUnit> subject = std::nullopt) {
  if (!model.trained) fail(ErrorCode::UntrainedModel, "model has not been trained");
  if (x.size() != model.features.size()) {
    fail(ErrorCode::FeatureMismatch, "x has " + std::to_string(x.size()) + " values for " +
                                         std::to_string(model.features.size()) + " model features");
  }
  const auto mu = background_means(model, background);
  ShapExplanation out;
  out.subject = std::move(subject);
  out.features = model.features;
  out.baseline = model.predict_raw(mu);
  out.prediction = model.predict_raw(x);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto& sp = model.standardization;
    const double raw_weight = model.w[j] / sp.sigma.at(sp.index_of(model.features[j]));
    out.phi[model.features[j]] = raw_weight * (x[j] - mu[j]);
  }
  return out;
}

/// Explanation for one row of `table` (which also serves as the background).
inline ShapExplanation shap_explain_row(const LinearSvrModel& model, const FeatureTable& table,
                                        const FeatureTable& background, const std::string& code) {
  auto r = table.find_row(code);
  if (!r) fail(ErrorCode::TractNotInTable, "tract " + code + " is not in the table");
  std::vector<double> x;
  for (const auto& f : model.features) {
    auto j = table.column_index(f);
    if (!j) fail(ErrorCode::FeatureMismatch, "table lacks feature '" + f + "'");
    x.push_back(table.rows()[*r].values[*j]);
  }
  return shap_explain(model, x, background, table.rows()[*r].unit);
}

/// Features by |phi| descending; ties by name ascending.
inline std::vector<std::pair<std::string, double>> rank_contributions(const ShapExplanation& expl) {
  std::vector<std::pair<std::string, double>> out(expl.phi.begin(), expl.phi.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    const double ma = std::abs(a.second), mb = std::abs(b.second);
    if (ma != mb) return ma > mb;
    return a.first < b.first;
  });
  return out;
}

}  // namespace upho
