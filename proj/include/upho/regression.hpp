#pragma once

// Linear-kernel epsilon-insensitive support vector regression.
//
// The primal  F(w,b) = 1/2 |w|^2 + C * sum_i max(0, |y_i - w.x_i - b| - eps)
// is solved through its dual with SMO (second-order working-set selection,
// as in libsvm). After each epoch the primal is evaluated at the current
// weights with the intercept re-optimized exactly; the best point seen is the
// incumbent, so the recorded trace never increases.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "upho/error.hpp"
#include "upho/stats.hpp"
#include "upho/tabledata.hpp"

namespace upho {

struct Hyperparams {
  double C = 1.0;
  double epsilon = 0.1;

  void validate() const {
    if (!(C > 0.0) || !std::isfinite(C)) fail(ErrorCode::InvalidArgument, "C must be positive");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail(ErrorCode::InvalidArgument, "epsilon must be non-negative");
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

inline std::vector<Hyperparams> default_grid() {
  std::vector<Hyperparams> grid;
  for (double c : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    for (double e : {0.01, 0.05, 0.1, 0.2}) grid.push_back({c, e});
  }
  return grid;
}

struct SolverOptions {
  std::size_t max_iterations = 200000;
  double relative_tolerance = 1e-8;  // stop when an epoch improves the dual by less than this
  std::ostream* log = nullptr;       // when set, one "iteration objective" line per epoch
};

struct LinearSvrModel {
  std::vector<std::string> features;
  std::vector<double> w;  // weights in standardized feature space
  double b = 0.0;
  Hyperparams hyper;
  double objective = 0.0;  // primal F at (w, b)
  StandardizationParams standardization;
  std::size_t iterations = 0;
  bool converged = true;  // false: iteration cap hit while still improving by > 1e-4
  bool trained = false;
  std::vector<double> trace;  // incumbent primal objective per epoch

  double predict(std::span<const double> standardized) const {
    if (!trained) fail(ErrorCode::UntrainedModel, "model has not been trained");
    if (standardized.size() != w.size()) fail(ErrorCode::DimensionMismatch, "feature vector has the wrong length");
    double out = b;
    for (std::size_t j = 0; j < w.size(); ++j) out += w[j] * standardized[j];
    return out;
  }

  /// Prediction from raw feature values mapped through the stored parameters.
  double predict_raw(std::span<const double> raw) const {
    if (!trained) fail(ErrorCode::UntrainedModel, "model has not been trained");
    if (raw.size() != w.size()) fail(ErrorCode::DimensionMismatch, "feature vector has the wrong length");
    double out = b;
    for (std::size_t j = 0; j < w.size(); ++j) {
      out += w[j] * standardization.forward(standardization.index_of(features[j]), raw[j]);
    }
    return out;
  }
};

inline double primal_objective(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w,
                               double b, const Hyperparams& hyper) {
  double reg = 0.0;
  for (double v : w) reg += v * v;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double pred = b;
    for (Eigen::Index j = 0; j < X.cols(); ++j) pred += w[static_cast<std::size_t>(j)] * X(i, j);
    loss += std::max(0.0, std::abs(y[static_cast<std::size_t>(i)] - pred) - hyper.epsilon);
  }
  return 0.5 * reg + hyper.C * loss;
}

/// Minimizes sum_i max(0, |r_i - b| - eps) over b. The minimizers form an
/// interval; the returned point is the one closest to mean(r).
inline double optimal_intercept(std::span<const double> residuals, double eps) {
  const std::size_t n = residuals.size();
  if (n == 0) return 0.0;
  std::vector<double> lower(n), upper(n);
  for (std::size_t i = 0; i < n; ++i) {
    lower[i] = residuals[i] - eps;
    upper[i] = residuals[i] + eps;
  }
  std::sort(lower.begin(), lower.end());
  std::sort(upper.begin(), upper.end());
  std::vector<double> lower_suffix(n + 1, 0.0), upper_prefix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) lower_suffix[i] = lower_suffix[i + 1] + lower[i];
  for (std::size_t i = 0; i < n; ++i) upper_prefix[i + 1] = upper_prefix[i] + upper[i];

  // g(b) = sum_{L > b} (L - b) + sum_{U < b} (b - U)
  const auto g = [&](double b) {
    const auto above = static_cast<std::size_t>(std::upper_bound(lower.begin(), lower.end(), b) - lower.begin());
    const auto below = static_cast<std::size_t>(std::lower_bound(upper.begin(), upper.end(), b) - upper.begin());
    return (lower_suffix[above] - static_cast<double>(n - above) * b) +
           (static_cast<double>(below) * b - upper_prefix[below]);
  };

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> candidates;  // (b, g(b))
  candidates.reserve(2 * n);
  for (double b : lower) candidates.emplace_back(b, g(b));
  for (double b : upper) candidates.emplace_back(b, g(b));
  double scale = 1.0;
  for (const auto& [b, val] : candidates) {
    best = std::min(best, val);
    scale += std::abs(b);
  }
  const double tol = 1e-12 * scale;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [b, val] : candidates) {
    if (val <= best + tol) {
      lo = std::min(lo, b);
      hi = std::max(hi, b);
    }
  }
  const double mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) / static_cast<double>(n);
  return std::clamp(mean, lo, hi);
}

namespace detail {

inline std::vector<double> residuals_of(const Eigen::MatrixXd& X, std::span<const double> y, const Eigen::VectorXd& w) {
  const Eigen::VectorXd fitted = X * w;
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - fitted(static_cast<Eigen::Index>(i));
  return r;
}

}  // namespace detail

/// Trains on standardized inputs. `features` names the columns of X.
inline LinearSvrModel train_svr(const Eigen::MatrixXd& X, std::span<const double> y, const Hyperparams& hyper,
                                const SolverOptions& options = {}, std::vector<std::string> features = {}) {
  hyper.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  if (n != y.size()) fail(ErrorCode::DimensionMismatch, "X has " + std::to_string(n) + " rows but y has " + std::to_string(y.size()));
  if (n < 2) fail(ErrorCode::DimensionMismatch, "training needs at least 2 rows");
  if (features.empty()) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) features.push_back("x" + std::to_string(j));
  }
  if (features.size() != static_cast<std::size_t>(X.cols())) fail(ErrorCode::DimensionMismatch, "feature names do not match X");

  const double C = hyper.C;
  const double eps = hyper.epsilon;
  const Eigen::MatrixXd K = X * X.transpose();
  const std::size_t l = 2 * n;
  const auto row = [n](std::size_t t) { return static_cast<Eigen::Index>(t < n ? t : t - n); };
  const auto sign = [n](std::size_t t) { return t < n ? 1.0 : -1.0; };

  std::vector<double> alpha(l, 0.0), grad(l), p(l);
  for (std::size_t t = 0; t < n; ++t) {
    p[t] = eps - y[t];
    p[t + n] = eps + y[t];
  }
  grad = p;

  const auto dual_value = [&] {
    double f = 0.0;
    for (std::size_t t = 0; t < l; ++t) f += alpha[t] * (grad[t] + p[t]);
    return 0.5 * f;
  };
  const auto weights = [&] {
    Eigen::VectorXd coef(static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < n; ++t) coef(static_cast<Eigen::Index>(t)) = alpha[t] - alpha[t + n];
    return Eigen::VectorXd(X.transpose() * coef);
  };

  LinearSvrModel model;
  model.features = std::move(features);
  model.hyper = hyper;

  Eigen::VectorXd best_w = Eigen::VectorXd::Zero(X.cols());
  double best_b = 0.0;
  double best_f = std::numeric_limits<double>::infinity();
  const auto consider = [&](const Eigen::VectorXd& w) {
    const auto r = detail::residuals_of(X, y, w);
    const double b = optimal_intercept(r, eps);
    const std::vector<double> wv(w.data(), w.data() + w.size());
    const double f = primal_objective(X, y, wv, b, hyper);
    if (f < best_f) {
      best_f = f;
      best_w = w;
      best_b = b;
    }
    model.trace.push_back(best_f);
  };
  consider(best_w);

  double max_p = 1.0;
  for (double v : p) max_p = std::max(max_p, std::abs(v));
  const double kkt_tol = 1e-10 * max_p;
  constexpr double tau = 1e-12;
  const std::size_t epoch = std::max<std::size_t>(n, 10);

  double last_dual = 0.0;
  double last_rel = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  bool optimal = false;
  const auto upper_bound = [&](std::size_t t) { return alpha[t] >= C; };
  const auto lower_bound = [&](std::size_t t) { return alpha[t] <= 0.0; };

  while (iter < options.max_iterations) {
    // Working-set selection (maximal violating pair, second-order j).
    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i_sel = -1;
    for (std::size_t t = 0; t < l; ++t) {
      if (sign(t) > 0) {
        if (!upper_bound(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          i_sel = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower_bound(t) && grad[t] >= gmax) {
        gmax = grad[t];
        i_sel = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (i_sel < 0) {
      optimal = true;
      break;
    }
    const auto i = static_cast<std::size_t>(i_sel);
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best_obj_diff = std::numeric_limits<double>::infinity();
    std::ptrdiff_t j_sel = -1;
    for (std::size_t t = 0; t < l; ++t) {
      const double kit = K(row(i), row(t));
      const double quad = K(row(i), row(i)) + K(row(t), row(t)) - 2.0 * kit;
      if (sign(t) > 0) {
        if (!lower_bound(t)) {
          const double diff = gmax + grad[t];
          gmax2 = std::max(gmax2, grad[t]);
          if (diff > 0.0) {
            const double obj = -(diff * diff) / (quad > 0.0 ? quad : tau);
            if (obj <= best_obj_diff) {
              best_obj_diff = obj;
              j_sel = static_cast<std::ptrdiff_t>(t);
            }
          }
        }
      } else if (!upper_bound(t)) {
        const double diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (diff > 0.0) {
          const double obj = -(diff * diff) / (quad > 0.0 ? quad : tau);
          if (obj <= best_obj_diff) {
            best_obj_diff = obj;
            j_sel = static_cast<std::ptrdiff_t>(t);
          }
        }
      }
    }
    if (gmax + gmax2 < kkt_tol || j_sel < 0) {
      optimal = true;
      break;
    }
    const auto j = static_cast<std::size_t>(j_sel);

    const double qij = sign(i) * sign(j) * K(row(i), row(j));
    const double qii = K(row(i), row(i));
    const double qjj = K(row(j), row(j));
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (sign(i) != sign(j)) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0; alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else if (alpha[j] > C) {
        alpha[j] = C; alpha[i] = C + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0; alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0; alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < l; ++t) {
      grad[t] += sign(i) * sign(t) * K(row(i), row(t)) * dai + sign(j) * sign(t) * K(row(j), row(t)) * daj;
    }
    ++iter;

    if (iter % epoch == 0) {
      consider(weights());
      const double dual = dual_value();
      last_rel = (last_dual - dual) / std::max(std::abs(dual), 1e-300);
      last_dual = dual;
      if (options.log) *options.log << iter << ' ' << model.trace.back() << '\n';
      if (last_rel < options.relative_tolerance) {
        optimal = true;
        break;
      }
    }
  }

  consider(weights());
  if (options.log) *options.log << iter << ' ' << model.trace.back() << '\n';

  model.w.assign(best_w.data(), best_w.data() + best_w.size());
  model.b = best_b;
  model.objective = best_f;
  model.iterations = iter;
  model.converged = optimal || last_rel <= 1e-4;
  model.trained = true;
  return model;
}

inline LinearSvrModel train_svr(const Eigen::MatrixXd& X, const std::vector<double>& y, const Hyperparams& hyper,
                                const SolverOptions& options = {}, std::vector<std::string> features = {}) {
  return train_svr(X, std::span<const double>(y), hyper, options, std::move(features));
}

enum class R2Mode { determination, squared_correlation };

struct FitMetrics {
  double rmse = 0.0;
  double r2 = 0.0;

  friend bool operator==(const FitMetrics&, const FitMetrics&) = default;
};

inline FitMetrics fit_metrics(std::span<const double> predicted, std::span<const double> observed,
                              R2Mode mode = R2Mode::determination) {
  if (predicted.size() != observed.size() || observed.empty()) {
    fail(ErrorCode::DimensionMismatch, "predictions and observations differ in length");
  }
  const double n = static_cast<double>(observed.size());
  const double mean = std::accumulate(observed.begin(), observed.end(), 0.0) / n;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    sse += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
    sst += (observed[i] - mean) * (observed[i] - mean);
  }
  if (sst == 0.0) fail(ErrorCode::ZeroVariance, "observed values are constant");
  FitMetrics m;
  m.rmse = std::sqrt(sse / n);
  if (mode == R2Mode::determination) {
    m.r2 = 1.0 - sse / sst;
  } else {
    const bool flat = std::all_of(predicted.begin(), predicted.end(), [&](double v) { return v == predicted.front(); });
    m.r2 = flat ? 0.0 : std::pow(pearson(predicted, observed), 2);
  }
  return m;
}

inline FitMetrics evaluate(const LinearSvrModel& model, const Eigen::MatrixXd& X, std::span<const double> y,
                           R2Mode mode = R2Mode::determination) {
  if (!model.trained) fail(ErrorCode::UntrainedModel, "model has not been trained");
  if (static_cast<std::size_t>(X.rows()) != y.size() || static_cast<std::size_t>(X.cols()) != model.w.size()) {
    fail(ErrorCode::DimensionMismatch, "evaluation data does not match the model");
  }
  std::vector<double> pred(y.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double v = model.b;
    for (Eigen::Index j = 0; j < X.cols(); ++j) v += model.w[static_cast<std::size_t>(j)] * X(i, j);
    pred[static_cast<std::size_t>(i)] = v;
  }
  return fit_metrics(pred, y, mode);
}

struct CvEntry {
  Hyperparams hyper;
  double mean_rmse = 0.0;
  std::vector<double> fold_rmse;
};

struct GridSearchResult {
  Hyperparams best;
  std::vector<CvEntry> cv_table;
};

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

inline std::vector<double> take(std::span<const double> y, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(y[r]);
  return out;
}

/// k-fold cross-validated grid search. Folds are computed once and shared by
/// every grid point. Ties on mean RMSE go to the smaller C, then smaller eps.
inline GridSearchResult grid_search(const Eigen::MatrixXd& X, std::span<const double> y,
                                    const std::vector<Hyperparams>& grid, std::size_t k, std::uint64_t seed,
                                    const SolverOptions& options = {}) {
  if (grid.empty()) fail(ErrorCode::InvalidArgument, "hyperparameter grid is empty");
  if (static_cast<std::size_t>(X.rows()) != y.size()) fail(ErrorCode::DimensionMismatch, "X and y differ in rows");
  const auto folds = kfold(y.size(), k, seed);
  std::vector<Eigen::MatrixXd> fit_x, val_x;
  std::vector<std::vector<double>> fit_y, val_y;
  for (const auto& f : folds) {
    fit_x.push_back(take_rows(X, f.fit));
    val_x.push_back(take_rows(X, f.validation));
    fit_y.push_back(take(y, f.fit));
    val_y.push_back(take(y, f.validation));
  }

  GridSearchResult result;
  for (const auto& hp : grid) {
    CvEntry entry{hp, 0.0, {}};
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto model = train_svr(fit_x[f], fit_y[f], hp, options);
      double sse = 0.0;
      for (Eigen::Index i = 0; i < val_x[f].rows(); ++i) {
        const Eigen::VectorXd xi = val_x[f].row(i).transpose();
        const double err = val_y[f][static_cast<std::size_t>(i)] -
                           model.predict(std::span<const double>(xi.data(), static_cast<std::size_t>(xi.size())));
        sse += err * err;
      }
      entry.fold_rmse.push_back(std::sqrt(sse / static_cast<double>(val_x[f].rows())));
    }
    entry.mean_rmse = std::accumulate(entry.fold_rmse.begin(), entry.fold_rmse.end(), 0.0) /
                      static_cast<double>(entry.fold_rmse.size());
    result.cv_table.push_back(std::move(entry));
  }
  const auto best = std::min_element(result.cv_table.begin(), result.cv_table.end(), [](const CvEntry& a, const CvEntry& b) {
    if (a.mean_rmse != b.mean_rmse) return a.mean_rmse < b.mean_rmse;
    if (a.hyper.C != b.hyper.C) return a.hyper.C < b.hyper.C;
    return a.hyper.epsilon < b.hyper.epsilon;
  });
  result.best = best->hyper;
  return result;
}

enum class ImportanceMode { coef, univariate_r2 };

/// R^2 of the least-squares fit y ~ a + b x + c x^2.
inline double quadratic_fit_r2(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) fail(ErrorCode::DimensionMismatch, "quadratic fit needs >= 3 paired points");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = x[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0;
    design(i, 1) = v;
    design(i, 2) = v * v;
    target(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(target);
  const double mean = target.mean();
  const double sst = (target.array() - mean).square().sum();
  if (sst == 0.0) fail(ErrorCode::ZeroVariance, "target is constant");
  const double sse = (target - design * beta).squaredNorm();
  return std::clamp(1.0 - sse / sst, 0.0, 1.0);
}

/// Min-max scaling onto [0, 100]. Equal raw scores (including a single
/// feature) all map to 100.
inline std::map<std::string, double> scale_importance(const std::vector<std::string>& names,
                                                      const std::vector<double>& raw) {
  std::map<std::string, double> out;
  if (raw.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it, hi = *hi_it;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    out[names[j]] = hi > lo ? 100.0 * ((raw[j] - lo) / (hi - lo)) : 100.0;
  }
  return out;
}

/// Feature importance on a 0-100 scale. `table` must hold every model feature
/// and, for univariate_r2, the target column.
inline std::map<std::string, double> importance(const LinearSvrModel& model, const FeatureTable& table,
                                                const std::string& target, ImportanceMode mode = ImportanceMode::coef) {
  if (!model.trained) fail(ErrorCode::UntrainedModel, "model has not been trained");
  if (model.features.empty()) fail(ErrorCode::InvalidArgument, "model has no features");
  std::vector<double> raw;
  if (mode == ImportanceMode::coef) {
    for (double v : model.w) raw.push_back(std::abs(v));
  } else {
    const auto y = table.column(table.require_column(target));
    for (const auto& f : model.features) raw.push_back(quadratic_fit_r2(table.column(table.require_column(f)), y));
  }
  return scale_importance(model.features, raw);
}

struct ModelReport {
  std::string target;
  LinearSvrModel model;
  StandardizationParams target_standardization;
  FitMetrics train;
  FitMetrics test;
  R2Mode r2_mode = R2Mode::determination;
  std::vector<CvEntry> cv_table;
  std::map<std::string, double> importance;
  ImportanceMode importance_mode = ImportanceMode::coef;
};

}  // namespace upho
