#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ptrial/analysis_set.hpp"
#include "ptrial/estimators.hpp"
#include "ptrial/math.hpp"
#include "ptrial/working_model.hpp"

namespace ptrial {

// Estimated asymptotic covariance of sqrt(n_jk) (theta_hat - theta),
// stored as the three entries of the symmetric 2x2 matrix. Diagonal
// entries of the adjusted estimators can be pulled slightly negative by
// the correction terms; only the variance of a contrast actually used
// for inference must be positive.
struct CovarianceEstimate {
  Method method = Method::Ipw;
  double s11 = 0.0;
  double s12 = 0.0;
  double s22 = 0.0;

  // Correction-term components, populated where applicable.
  double lambda_jk = 0.0;
  double lambda_kj = 0.0;
  double c_jk = 0.0;
  double delta_jk = 0.0;
  double delta_kj = 0.0;

  double quad(const std::array<double, 2>& c) const {
    return c[0] * c[0] * s11 + 2.0 * c[0] * c[1] * s12 + c[1] * c[1] * s22;
  }
};

struct ContrastInference {
  std::array<double, 2> contrast{1.0, -1.0};
  double estimate = 0.0;
  double se = 0.0;
  double alpha = 0.05;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  std::optional<double> margin;
  bool non_inferior = false;
};

namespace detail {

// Accumulates the inverse-weighted empirical moments over one arm:
//   wmean(f)    = (1/n) sum I(A=a) f_i / w_i
//   wcov(f, g)  = wmean(fg) - wmean(f) wmean(g)
// with n the full analysis-set size.
class ArmMoments {
 public:
  ArmMoments(const AnalysisSet& aset, const Dataset& data, int arm,
             const std::vector<double>& weights)
      : aset_(aset), data_(data), arm_(arm), weights_(weights) {}

  template <typename F>
  double wmean(F&& f) const {
    KahanSum s;
    for (std::size_t pos = 0; pos < aset_.n(); ++pos) {
      const auto& rec = data_.records()[aset_.indices[pos]];
      if (rec.arm != arm_) continue;
      s.add(f(pos, rec.outcome) / weights_[pos]);
    }
    return s.value() / static_cast<double>(aset_.n());
  }

  template <typename F, typename G>
  double wcov(F&& f, G&& g) const {
    double fg = wmean([&](std::size_t pos, double y) { return f(pos, y) * g(pos, y); });
    return fg - wmean(f) * wmean(g);
  }

 private:
  const AnalysisSet& aset_;
  const Dataset& data_;
  int arm_;
  const std::vector<double>& weights_;
};

}  // namespace detail

// Covariance for the unweighted arm means: within-arm sample variances
// scaled by the realized arm fractions (the usual two-sample form).
inline CovarianceEstimate cov_naive(const AnalysisSet& aset, const Dataset& data) {
  std::vector<double> yj, yk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) yj.push_back(rec.outcome);
    if (rec.arm == aset.arm_k) yk.push_back(rec.outcome);
  }
  if (yj.size() < 2 || yk.size() < 2) {
    throw DegenerateArmError("naive variance needs at least 2 observations per arm");
  }
  const double n = static_cast<double>(aset.n());
  CovarianceEstimate out;
  out.method = Method::Naive;
  out.s11 = sample_variance(yj) / (static_cast<double>(yj.size()) / n);
  out.s22 = sample_variance(yk) / (static_cast<double>(yk.size()) / n);
  out.s12 = 0.0;
  return out;
}

// Plug-in covariance for the IPW estimator: squared inverse-weighted
// second moments minus the outer product of the supplied estimate.
inline CovarianceEstimate cov_ipw(const AnalysisSet& aset, const Dataset& data,
                                  const PairEstimate& est) {
  const double n = static_cast<double>(aset.n());
  KahanSum sj, sk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) {
      double w = aset.weight_j[pos];
      sj.add(rec.outcome * rec.outcome / (w * w));
    }
    if (rec.arm == aset.arm_k) {
      double w = aset.weight_k[pos];
      sk.add(rec.outcome * rec.outcome / (w * w));
    }
  }
  CovarianceEstimate out;
  out.method = Method::Ipw;
  out.s11 = sj.value() / n - est.theta_jk * est.theta_jk;
  out.s22 = sk.value() / n - est.theta_kj * est.theta_kj;
  out.s12 = -est.theta_jk * est.theta_kj;
  return out;
}

// Covariance for the stabilized IPW estimator: squared inverse-weighted
// centered residuals; the two components are asymptotically uncorrelated.
inline CovarianceEstimate cov_sipw(const AnalysisSet& aset, const Dataset& data,
                                   const PairEstimate& est) {
  const double n = static_cast<double>(aset.n());
  KahanSum sj, sk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) {
      double w = aset.weight_j[pos];
      double r = rec.outcome - est.theta_jk;
      sj.add(r * r / (w * w));
    }
    if (rec.arm == aset.arm_k) {
      double w = aset.weight_k[pos];
      double r = rec.outcome - est.theta_kj;
      sk.add(r * r / (w * w));
    }
  }
  CovarianceEstimate out;
  out.method = Method::Sipw;
  out.s11 = sj.value() / n;
  out.s22 = sk.value() / n;
  out.s12 = 0.0;
  return out;
}

namespace detail {

// Shared correction terms for the augmented estimators:
//   lambda_jk = 2 q_jk^(j) - sigma2_jk     (per arm)
//   c_jk      = q_kj^(j) + q_jk^(k) - q_jk (off-diagonal)
// built from inverse-weighted empirical covariances of the outcome and
// the two model predictions.
struct AugmentedTerms {
  double lambda_jk, lambda_kj, c_jk, delta_jk, delta_kj;
};

inline AugmentedTerms augmented_terms(const AnalysisSet& aset, const Dataset& data,
                                      const std::vector<double>& mu_j,
                                      const std::vector<double>& mu_k) {
  ArmMoments armj(aset, data, aset.arm_j, aset.weight_j);
  ArmMoments armk(aset, data, aset.arm_k, aset.weight_k);
  auto outcome = [](std::size_t, double y) { return y; };
  auto fj = [&](std::size_t pos, double) { return mu_j[pos]; };
  auto fk = [&](std::size_t pos, double) { return mu_k[pos]; };

  AugmentedTerms t{};
  double q_jj = armj.wcov(outcome, fj);   // cov_j(Y, mu_j)
  double q_jk_cross = armj.wcov(outcome, fk);  // cov_j(Y, mu_k)
  double q_kj_cross = armk.wcov(outcome, fj);  // cov_k(Y, mu_j)
  double q_kk = armk.wcov(outcome, fk);   // cov_k(Y, mu_k)
  double s2_j = armj.wcov(fj, fj);
  double s2_k = armk.wcov(fk, fk);
  double q_mix = 0.5 * (armj.wcov(fj, fk) + armk.wcov(fj, fk));

  t.lambda_jk = 2.0 * q_jj - s2_j;
  t.lambda_kj = 2.0 * q_kk - s2_k;
  t.c_jk = q_jk_cross + q_kj_cross - q_mix;
  t.delta_jk = armj.wmean([&](std::size_t pos, double y) { return y - mu_j[pos]; });
  t.delta_kj = armk.wmean([&](std::size_t pos, double y) { return y - mu_k[pos]; });
  return t;
}

}  // namespace detail

// Covariance for the AIPW estimator: inverse-weighted squared residuals
// plus the correction matrix, minus the outer product of the weighted
// mean residuals.
inline CovarianceEstimate cov_aipw(const AnalysisSet& aset, const Dataset& data,
                                   const FittedModel& model_j,
                                   const FittedModel& model_k) {
  const double n = static_cast<double>(aset.n());
  auto mu_j = model_j.predict_all(data, aset);
  auto mu_k = model_k.predict_all(data, aset);
  auto t = detail::augmented_terms(aset, data, mu_j, mu_k);

  KahanSum sj, sk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) {
      double w = aset.weight_j[pos];
      double r = rec.outcome - mu_j[pos];
      sj.add(r * r / (w * w));
    }
    if (rec.arm == aset.arm_k) {
      double w = aset.weight_k[pos];
      double r = rec.outcome - mu_k[pos];
      sk.add(r * r / (w * w));
    }
  }
  CovarianceEstimate out;
  out.method = Method::Aipw;
  out.s11 = sj.value() / n + t.lambda_jk - t.delta_jk * t.delta_jk;
  out.s22 = sk.value() / n + t.lambda_kj - t.delta_kj * t.delta_kj;
  out.s12 = t.c_jk - t.delta_jk * t.delta_kj;
  out.lambda_jk = t.lambda_jk;
  out.lambda_kj = t.lambda_kj;
  out.c_jk = t.c_jk;
  out.delta_jk = t.delta_jk;
  out.delta_kj = t.delta_kj;
  return out;
}

// Covariance for the stabilized AIPW estimator: residuals are centered
// at the weighted mean residual before squaring; no outer-product term.
inline CovarianceEstimate cov_saipw(const AnalysisSet& aset, const Dataset& data,
                                    const FittedModel& model_j,
                                    const FittedModel& model_k) {
  const double n = static_cast<double>(aset.n());
  auto mu_j = model_j.predict_all(data, aset);
  auto mu_k = model_k.predict_all(data, aset);
  auto t = detail::augmented_terms(aset, data, mu_j, mu_k);

  KahanSum sj, sk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) {
      double w = aset.weight_j[pos];
      double r = rec.outcome - mu_j[pos] - t.delta_jk;
      sj.add(r * r / (w * w));
    }
    if (rec.arm == aset.arm_k) {
      double w = aset.weight_k[pos];
      double r = rec.outcome - mu_k[pos] - t.delta_kj;
      sk.add(r * r / (w * w));
    }
  }
  CovarianceEstimate out;
  out.method = Method::Saipw;
  out.s11 = sj.value() / n + t.lambda_jk;
  out.s22 = sk.value() / n + t.lambda_kj;
  out.s12 = t.c_jk;
  out.lambda_jk = t.lambda_jk;
  out.lambda_kj = t.lambda_kj;
  out.c_jk = t.c_jk;
  out.delta_jk = t.delta_jk;
  out.delta_kj = t.delta_kj;
  return out;
}

namespace detail {

// Gathers per-stratum arm samples, enforcing the two-per-cell minimum
// that within-stratum sample variances require.
struct StratumArmData {
  std::vector<double> y_j, y_k;      // outcomes by arm
  std::vector<double> mu_j_on_j, mu_k_on_j;  // predictions over arm-j members
  std::vector<double> mu_j_on_k, mu_k_on_k;  // predictions over arm-k members
  std::vector<double> mu_j_all, mu_k_all;    // predictions over all members
  double mean_j = 0.0, mean_k = 0.0;
  std::size_t n = 0;
};

inline std::vector<StratumArmData> stratum_arm_data(
    const AnalysisSet& aset, const Dataset& data, const StrataPartition& strata,
    const std::vector<double>* mu_j, const std::vector<double>* mu_k) {
  std::vector<StratumArmData> out(strata.count());
  for (const auto& s : strata.strata) {
    auto& d = out[s.id];
    d.n = s.members.size();
    for (std::size_t pos : s.members) {
      const auto& rec = data.records()[aset.indices[pos]];
      if (mu_j) {
        d.mu_j_all.push_back((*mu_j)[pos]);
        d.mu_k_all.push_back((*mu_k)[pos]);
      }
      if (rec.arm == aset.arm_j) {
        d.y_j.push_back(rec.outcome);
        if (mu_j) {
          d.mu_j_on_j.push_back((*mu_j)[pos]);
          d.mu_k_on_j.push_back((*mu_k)[pos]);
        }
      } else if (rec.arm == aset.arm_k) {
        d.y_k.push_back(rec.outcome);
        if (mu_j) {
          d.mu_j_on_k.push_back((*mu_j)[pos]);
          d.mu_k_on_k.push_back((*mu_k)[pos]);
        }
      }
    }
    if (d.y_j.size() < 2 || d.y_k.size() < 2) {
      throw DegenerateArmError(
          "stratum " + std::to_string(s.id) + " has fewer than 2 observations in arm '" +
          (d.y_j.size() < 2 ? aset.arm_j_name : aset.arm_k_name) + "'");
    }
    d.mean_j = mean(d.y_j);
    d.mean_k = mean(d.y_k);
  }
  return out;
}

// Between-stratum covariance matrix of the per-record stratum arm
// means, taken over every analysis-set member.
inline std::array<double, 3> gamma_between(const AnalysisSet& aset,
                                           const StrataPartition& strata,
                                           const std::vector<StratumArmData>& cells) {
  std::vector<double> gj(aset.n()), gk(aset.n());
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& d = cells[strata.label[pos]];
    gj[pos] = d.mean_j;
    gk[pos] = d.mean_k;
  }
  return {sample_variance(gj), sample_covariance(gj, gk), sample_variance(gk)};
}

}  // namespace detail

// Covariance for the post-stratified estimator: stratum-size-weighted
// within-stratum sample variances over realized arm fractions, plus the
// between-stratum covariance of the stratum means.
inline CovarianceEstimate cov_ps(const AnalysisSet& aset, const Dataset& data,
                                 const StrataPartition& strata) {
  auto cells = detail::stratum_arm_data(aset, data, strata, nullptr, nullptr);
  const double n = static_cast<double>(aset.n());
  KahanSum sj, sk;
  for (const auto& d : cells) {
    double size = static_cast<double>(d.n);
    double pi_j_hat = static_cast<double>(d.y_j.size()) / size;
    double pi_k_hat = static_cast<double>(d.y_k.size()) / size;
    sj.add(size / n * sample_variance(d.y_j) / pi_j_hat);
    sk.add(size / n * sample_variance(d.y_k) / pi_k_hat);
  }
  auto gamma = detail::gamma_between(aset, strata, cells);
  CovarianceEstimate out;
  out.method = Method::Ps;
  out.s11 = sj.value() + gamma[0];
  out.s12 = gamma[1];
  out.s22 = sk.value() + gamma[2];
  return out;
}

// Covariance for the adjusted post-stratified estimator: within-stratum
// residual variances plus stratum-level correction matrices, plus the
// between-stratum term. Within-stratum pieces use unbiased sample
// moments; prediction variances and their cross term are taken over all
// stratum members.
inline CovarianceEstimate cov_aps(const AnalysisSet& aset, const Dataset& data,
                                  const StrataPartition& strata,
                                  const FittedModel& model_j,
                                  const FittedModel& model_k) {
  auto mu_j = model_j.predict_all(data, aset);
  auto mu_k = model_k.predict_all(data, aset);
  auto cells = detail::stratum_arm_data(aset, data, strata, &mu_j, &mu_k);
  const double n = static_cast<double>(aset.n());

  KahanSum sj, sk, sc;
  for (const auto& d : cells) {
    double size = static_cast<double>(d.n);
    double pi_j_hat = static_cast<double>(d.y_j.size()) / size;
    double pi_k_hat = static_cast<double>(d.y_k.size()) / size;

    std::vector<double> res_j(d.y_j.size()), res_k(d.y_k.size());
    for (std::size_t i = 0; i < d.y_j.size(); ++i) res_j[i] = d.y_j[i] - d.mu_j_on_j[i];
    for (std::size_t i = 0; i < d.y_k.size(); ++i) res_k[i] = d.y_k[i] - d.mu_k_on_k[i];
    double tau2_j = sample_variance(res_j);
    double tau2_k = sample_variance(res_k);

    double q_jj = sample_covariance(d.y_j, d.mu_j_on_j);
    double q_kj_cross = sample_covariance(d.y_j, d.mu_k_on_j);
    double q_jk_cross = sample_covariance(d.y_k, d.mu_j_on_k);
    double q_kk = sample_covariance(d.y_k, d.mu_k_on_k);
    double s2_j = sample_variance(d.mu_j_all);
    double s2_k = sample_variance(d.mu_k_all);
    double q_mix = sample_covariance(d.mu_j_all, d.mu_k_all);

    double lambda_j = 2.0 * q_jj - s2_j;
    double lambda_k = 2.0 * q_kk - s2_k;
    double c_h = q_kj_cross + q_jk_cross - q_mix;

    sj.add(size / n * (tau2_j / pi_j_hat + lambda_j));
    sk.add(size / n * (tau2_k / pi_k_hat + lambda_k));
    sc.add(size / n * c_h);
  }
  auto gamma = detail::gamma_between(aset, strata, cells);
  CovarianceEstimate out;
  out.method = Method::Aps;
  out.s11 = sj.value() + gamma[0];
  out.s12 = sc.value() + gamma[1];
  out.s22 = sk.value() + gamma[2];
  return out;
}

// Normal-theory inference on a linear contrast of the paired means.
inline ContrastInference contrast_inference(const PairEstimate& est,
                                            const CovarianceEstimate& cov,
                                            const std::array<double, 2>& c,
                                            double alpha,
                                            std::optional<double> margin = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValueError("alpha must lie in (0, 1)");
  double v = cov.quad(c);
  if (!(v > 0.0)) {
    throw DegenerateVarianceError("contrast variance is not positive");
  }
  ContrastInference out;
  out.contrast = c;
  out.estimate = c[0] * est.theta_jk + c[1] * est.theta_kj;
  out.se = std::sqrt(v / static_cast<double>(est.n_jk));
  out.alpha = alpha;
  double zq = normal_quantile(1.0 - alpha / 2.0);
  out.ci_low = out.estimate - zq * out.se;
  out.ci_high = out.estimate + zq * out.se;
  out.z = out.estimate / out.se;
  out.p_value = 2.0 * (1.0 - normal_cdf(std::abs(out.z)));
  out.margin = margin;
  out.non_inferior = margin.has_value() && out.ci_low > *margin;
  return out;
}

}  // namespace ptrial
