#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ptrial/analysis_set.hpp"
#include "ptrial/dataset.hpp"
#include "ptrial/errors.hpp"

namespace ptrial {

// Which covariates enter the outcome working model. Categorical names
// are one-hot expanded with the first (lexicographic) observed level as
// reference. `stratum_interactions` selects the stratified fit that
// gives each stratum its own intercept and slopes.
struct CovariateSpec {
  std::vector<std::string> numeric;
  std::vector<std::string> categorical;
  bool stratum_interactions = false;
};

namespace detail {

// Resolved expansion of a covariate spec against a dataset: column
// indices plus the dummy layout for categorical covariates.
struct DesignInfo {
  std::vector<int> numeric_cols;
  struct CatCol {
    int col;
    std::vector<std::string> levels;  // sorted; levels[0] is the reference
  };
  std::vector<CatCol> categorical_cols;
  std::size_t width = 0;  // expanded covariates, intercept excluded

  static DesignInfo resolve(const CovariateSpec& spec, const Dataset& data) {
    DesignInfo info;
    for (const auto& name : spec.numeric) {
      int c = data.numeric_index(name);
      if (c < 0) throw ValueError("unknown numeric covariate '" + name + "'");
      info.numeric_cols.push_back(c);
    }
    for (const auto& name : spec.categorical) {
      int c = data.categorical_index(name);
      if (c < 0) throw ValueError("unknown categorical covariate '" + name + "'");
      info.categorical_cols.push_back(
          {c, data.categorical_levels(static_cast<std::size_t>(c))});
    }
    info.width = info.numeric_cols.size();
    for (const auto& cat : info.categorical_cols) {
      info.width += cat.levels.size() > 1 ? cat.levels.size() - 1 : 0;
    }
    return info;
  }

  // Expanded row [1, x...] for one record.
  Eigen::VectorXd row(const Dataset& data, std::size_t record) const {
    const auto& rec = data.records()[record];
    Eigen::VectorXd x(width + 1);
    x(0) = 1.0;
    Eigen::Index at = 1;
    for (int c : numeric_cols) x(at++) = rec.numeric_x[static_cast<std::size_t>(c)];
    for (const auto& cat : categorical_cols) {
      const auto& v = rec.categorical_x[static_cast<std::size_t>(cat.col)];
      for (std::size_t l = 1; l < cat.levels.size(); ++l) {
        x(at++) = (v == cat.levels[l]) ? 1.0 : 0.0;
      }
    }
    return x;
  }
};

// Minimum-norm least squares through the normal equations; collinear
// expansions must not fail the fit.
struct OlsResult {
  Eigen::VectorXd beta;
  Eigen::Index rank = 0;
  double rss = 0.0;
  double tss = 0.0;
};

inline OlsResult solve_ols(const std::vector<Eigen::VectorXd>& rows,
                           const std::vector<double>& y) {
  const auto p = rows.front().size();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xtx.noalias() += rows[i] * rows[i].transpose();
    xty.noalias() += rows[i] * y[i];
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xtx);
  OlsResult out;
  out.beta = cod.solve(xty);
  out.rank = cod.rank();
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(y.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double r = y[i] - rows[i].dot(out.beta);
    out.rss += r * r;
    out.tss += (y[i] - ybar) * (y[i] - ybar);
  }
  return out;
}

}  // namespace detail

// Fitted outcome model for one arm over an analysis set. Prediction is
// affine in the expanded covariate row within each stratum; a global
// fit uses one block for all strata. Centering offsets shift each
// stratum's predictions so that arm residuals sum to zero per stratum.
class FittedModel {
 public:
  FittedModel(int arm, std::string arm_name, detail::DesignInfo info,
              std::vector<Eigen::VectorXd> blocks, bool per_stratum,
              std::vector<std::size_t> labels, std::size_t n_used,
              Eigen::Index rank, double r_squared,
              std::vector<std::string> warnings)
      : arm_(arm),
        arm_name_(std::move(arm_name)),
        info_(std::move(info)),
        blocks_(std::move(blocks)),
        per_stratum_(per_stratum),
        labels_(std::move(labels)),
        offsets_(count_strata(), 0.0),
        n_used_(n_used),
        rank_(rank),
        r_squared_(r_squared),
        warnings_(std::move(warnings)) {}

  int arm() const { return arm_; }
  const std::string& arm_name() const { return arm_name_; }
  bool per_stratum() const { return per_stratum_; }
  bool centered() const { return centered_; }
  std::size_t n_used() const { return n_used_; }
  Eigen::Index rank() const { return rank_; }
  double r_squared() const { return r_squared_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<double>& offsets() const { return offsets_; }
  const std::vector<Eigen::VectorXd>& blocks() const { return blocks_; }

  std::size_t count_strata() const {
    std::size_t h = 0;
    for (std::size_t l : labels_) h = std::max(h, l + 1);
    return h;
  }

  double predict(const Dataset& data, const AnalysisSet& aset,
                 std::size_t pos) const {
    check_aligned(aset);
    std::size_t h = labels_[pos];
    const Eigen::VectorXd& b = per_stratum_ ? blocks_[h] : blocks_[0];
    return info_.row(data, aset.indices[pos]).dot(b) + offsets_[h];
  }

  std::vector<double> predict_all(const Dataset& data,
                                  const AnalysisSet& aset) const {
    check_aligned(aset);
    std::vector<double> out(aset.n());
    for (std::size_t pos = 0; pos < aset.n(); ++pos) {
      out[pos] = predict(data, aset, pos);
    }
    return out;
  }

  FittedModel with_offsets(std::vector<double> offsets) const {
    FittedModel m = *this;
    m.offsets_ = std::move(offsets);
    m.centered_ = true;
    return m;
  }

  const std::vector<std::size_t>& labels() const { return labels_; }

 private:
  void check_aligned(const AnalysisSet& aset) const {
    if (aset.n() != labels_.size()) {
      throw ValueError("model was fitted on a different analysis set");
    }
  }

  int arm_;
  std::string arm_name_;
  detail::DesignInfo info_;
  std::vector<Eigen::VectorXd> blocks_;
  bool per_stratum_;
  std::vector<std::size_t> labels_;
  std::vector<double> offsets_;
  bool centered_ = false;
  std::size_t n_used_;
  Eigen::Index rank_;
  double r_squared_;
  std::vector<std::string> warnings_;
};

// Ordinary least squares of the arm's outcomes on the expanded
// covariates, over the arm's members of the analysis set.
inline FittedModel fit_linear(const AnalysisSet& aset, const std::string& arm,
                              const CovariateSpec& spec, const Dataset& data) {
  int arm_ix = data.schedule().arm_index(arm);
  if (arm_ix < 0) throw ValueError("unknown arm '" + arm + "'");
  auto info = detail::DesignInfo::resolve(spec, data);

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> y;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm != arm_ix) continue;
    rows.push_back(info.row(data, aset.indices[pos]));
    y.push_back(rec.outcome);
  }
  if (rows.empty()) {
    throw InsufficientDataError("no records in arm '" + arm +
                                "' within the analysis set");
  }
  auto ols = detail::solve_ols(rows, y);
  double r2 = ols.tss > 0.0 ? 1.0 - ols.rss / ols.tss : 1.0;
  StrataPartition strata = build_strata(aset);
  return FittedModel(arm_ix, arm, std::move(info), {ols.beta}, false,
                     strata.label, rows.size(), ols.rank, r2, {});
}

// Stratified linear fit: a separate intercept and slope block per
// stratum, equivalent to a pooled regression on stratum indicators and
// their interactions with the covariates. A stratum with fewer arm
// observations than coefficients falls back to an intercept-only fit
// there, keeping the intercept score equation intact.
inline FittedModel fit_anhecova(const AnalysisSet& aset, const std::string& arm,
                                const CovariateSpec& spec, const Dataset& data) {
  int arm_ix = data.schedule().arm_index(arm);
  if (arm_ix < 0) throw ValueError("unknown arm '" + arm + "'");
  auto info = detail::DesignInfo::resolve(spec, data);
  StrataPartition strata = build_strata(aset);

  std::vector<Eigen::VectorXd> blocks(strata.count());
  std::vector<std::string> warnings;
  std::size_t n_used = 0;
  Eigen::Index rank = 0;
  double rss = 0.0, tss_num = 0.0;
  std::vector<double> all_y;

  for (const auto& s : strata.strata) {
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> y;
    for (std::size_t pos : s.members) {
      const auto& rec = data.records()[aset.indices[pos]];
      if (rec.arm != arm_ix) continue;
      rows.push_back(info.row(data, aset.indices[pos]));
      y.push_back(rec.outcome);
    }
    if (rows.empty()) {
      throw InsufficientDataError("stratum " + std::to_string(s.id) +
                                  " has no records in arm '" + arm + "'");
    }
    bool fallback = rows.size() < info.width + 1;
    if (fallback && info.width > 0) {
      warnings.push_back("stratum " + std::to_string(s.id) +
                         ": too few arm records for slopes; intercept-only fit");
      double m = 0.0;
      for (double v : y) m += v;
      m /= static_cast<double>(y.size());
      Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(info.width) + 1);
      b(0) = m;
      blocks[s.id] = std::move(b);
      rank += 1;
      for (double v : y) rss += (v - m) * (v - m);
    } else {
      auto ols = detail::solve_ols(rows, y);
      blocks[s.id] = ols.beta;
      rank += ols.rank;
      rss += ols.rss;
    }
    n_used += rows.size();
    for (double v : y) all_y.push_back(v);
  }
  double ybar = mean(all_y);
  for (double v : all_y) tss_num += (v - ybar) * (v - ybar);
  double r2 = tss_num > 0.0 ? 1.0 - rss / tss_num : 1.0;
  return FittedModel(arm_ix, arm, std::move(info), std::move(blocks), true,
                     strata.label, n_used, rank, r2, std::move(warnings));
}

// Adds to each stratum the mean residual of the arm's members, so that
// centered residuals sum to zero within every stratum. Idempotent: a
// second pass computes zero increments.
inline FittedModel center_model(const FittedModel& model, const AnalysisSet& aset,
                                const Dataset& data) {
  auto mu = model.predict_all(data, aset);
  std::size_t n_strata = model.count_strata();
  std::vector<KahanSum> sums(n_strata);
  std::vector<std::size_t> counts(n_strata, 0);
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm != model.arm()) continue;
    std::size_t h = model.labels()[pos];
    sums[h].add(rec.outcome - mu[pos]);
    ++counts[h];
  }
  std::vector<double> offsets = model.offsets();
  for (std::size_t h = 0; h < n_strata; ++h) {
    if (counts[h] == 0) {
      throw InsufficientDataError("stratum " + std::to_string(h) +
                                  " has no records in arm '" + model.arm_name() +
                                  "' to center on");
    }
    offsets[h] += sums[h].value() / static_cast<double>(counts[h]);
  }
  return model.with_offsets(std::move(offsets));
}

// Sample analogues of the three adjustment conditions that guarantee an
// efficiency gain from covariate adjustment: per-stratum mean residuals,
// per-stratum covariance of residuals with own-arm predictions, and the
// overall covariance of residuals with cross-arm predictions.
struct AdjustmentDiagnostics {
  std::vector<double> mean_residual_j;   // per stratum, arm j
  std::vector<double> mean_residual_k;   // per stratum, arm k
  std::vector<double> cov_own_j;         // per stratum: cov(resid_j, mu_j)
  std::vector<double> cov_own_k;
  double cov_cross_j = 0.0;              // cov(resid_j, mu_k) over arm j
  double cov_cross_k = 0.0;              // cov(resid_k, mu_j) over arm k
  double max_abs = 0.0;
  double tolerance = 0.0;
  bool within_tolerance = true;
};

inline AdjustmentDiagnostics check_adjustment_conditions(
    const FittedModel& model_j, const FittedModel& model_k, const AnalysisSet& aset,
    const Dataset& data, std::optional<double> tolerance = std::nullopt) {
  auto mu_j = model_j.predict_all(data, aset);
  auto mu_k = model_k.predict_all(data, aset);
  StrataPartition strata = build_strata(aset);

  std::vector<double> outcomes;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    outcomes.push_back(data.records()[aset.indices[pos]].outcome);
  }
  double scale = outcomes.size() > 1 ? std::sqrt(sample_variance(outcomes)) : 1.0;
  if (scale == 0.0) scale = 1.0;

  AdjustmentDiagnostics diag;
  diag.tolerance = tolerance.value_or(1e-9 * scale);

  auto arm_stats = [&](int arm, const std::vector<double>& mu_own,
                       std::vector<double>& mean_res, std::vector<double>& cov_own) {
    mean_res.assign(strata.count(), 0.0);
    cov_own.assign(strata.count(), 0.0);
    for (const auto& s : strata.strata) {
      std::vector<double> res, pred;
      for (std::size_t pos : s.members) {
        const auto& rec = data.records()[aset.indices[pos]];
        if (rec.arm != arm) continue;
        res.push_back(rec.outcome - mu_own[pos]);
        pred.push_back(mu_own[pos]);
      }
      if (res.empty()) continue;
      mean_res[s.id] = mean(res);
      if (res.size() >= 2) cov_own[s.id] = sample_covariance(res, pred);
    }
  };
  arm_stats(aset.arm_j, mu_j, diag.mean_residual_j, diag.cov_own_j);
  arm_stats(aset.arm_k, mu_k, diag.mean_residual_k, diag.cov_own_k);

  auto cross = [&](int arm, const std::vector<double>& mu_own,
                   const std::vector<double>& mu_other) {
    std::vector<double> res, pred;
    for (std::size_t pos = 0; pos < aset.n(); ++pos) {
      const auto& rec = data.records()[aset.indices[pos]];
      if (rec.arm != arm) continue;
      res.push_back(rec.outcome - mu_own[pos]);
      pred.push_back(mu_other[pos]);
    }
    return res.size() >= 2 ? sample_covariance(res, pred) : 0.0;
  };
  diag.cov_cross_j = cross(aset.arm_j, mu_j, mu_k);
  diag.cov_cross_k = cross(aset.arm_k, mu_k, mu_j);

  for (const auto& v : {diag.mean_residual_j, diag.mean_residual_k, diag.cov_own_j,
                        diag.cov_own_k}) {
    for (double x : v) diag.max_abs = std::max(diag.max_abs, std::abs(x));
  }
  diag.max_abs = std::max({diag.max_abs, std::abs(diag.cov_cross_j),
                           std::abs(diag.cov_cross_k)});
  diag.within_tolerance = diag.max_abs <= diag.tolerance;
  return diag;
}

}  // namespace ptrial
