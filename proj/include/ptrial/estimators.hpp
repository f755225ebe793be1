#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ptrial/analysis_set.hpp"
#include "ptrial/dataset.hpp"
#include "ptrial/errors.hpp"
#include "ptrial/math.hpp"
#include "ptrial/working_model.hpp"

namespace ptrial {

enum class Method { Naive, Ipw, Sipw, Aipw, Saipw, Ps, Aps };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Naive: return "naive";
    case Method::Ipw: return "ipw";
    case Method::Sipw: return "sipw";
    case Method::Aipw: return "aipw";
    case Method::Saipw: return "saipw";
    case Method::Ps: return "ps";
    case Method::Aps: return "aps";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  for (Method m : {Method::Naive, Method::Ipw, Method::Sipw, Method::Aipw,
                   Method::Saipw, Method::Ps, Method::Aps}) {
    if (s == method_name(m)) return m;
  }
  throw ConfigError("unknown method '" + s + "'");
}

// Per-stratum cell counts and arm means, reported with the
// post-stratified estimators.
struct StratumSummary {
  double pi_j = 0.0;
  double pi_k = 0.0;
  std::size_t n = 0;
  std::size_t n_j = 0;
  std::size_t n_k = 0;
  double mean_j = 0.0;
  double mean_k = 0.0;
};

// Paired mean estimate (theta_jk, theta_kj) for one method. For the
// augmented estimators `aux_jk`/`aux_kj` hold the weighted mean
// residual term.
struct PairEstimate {
  Method method = Method::Naive;
  double theta_jk = 0.0;
  double theta_kj = 0.0;
  std::size_t n_jk = 0;
  double aux_jk = 0.0;
  double aux_kj = 0.0;
  std::vector<StratumSummary> strata;
};

namespace detail {

inline void require_arm_observations(const AnalysisSet& aset, const Dataset& data) {
  std::size_t nj = 0, nk = 0;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    int arm = data.records()[aset.indices[pos]].arm;
    if (arm == aset.arm_j) ++nj;
    if (arm == aset.arm_k) ++nk;
  }
  if (nj == 0) {
    throw DegenerateArmError("no observations in arm '" + aset.arm_j_name + "'");
  }
  if (nk == 0) {
    throw DegenerateArmError("no observations in arm '" + aset.arm_k_name + "'");
  }
}

}  // namespace detail

// Arm-wise sample means over the analysis set. Ignores the varying
// assignment probabilities, so it is generally biased when they depend
// on the covariate key; kept as the reference comparator.
inline PairEstimate estimate_naive(const AnalysisSet& aset, const Dataset& data) {
  detail::require_arm_observations(aset, data);
  KahanSum sj, sk;
  std::size_t nj = 0, nk = 0;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) {
      sj.add(rec.outcome);
      ++nj;
    } else if (rec.arm == aset.arm_k) {
      sk.add(rec.outcome);
      ++nk;
    }
  }
  PairEstimate out;
  out.method = Method::Naive;
  out.n_jk = aset.n();
  out.theta_jk = sj.value() / static_cast<double>(nj);
  out.theta_kj = sk.value() / static_cast<double>(nk);
  return out;
}

// Inverse probability weighting: mean over the analysis set of
// I(A=arm) Y / w(arm).
inline PairEstimate estimate_ipw(const AnalysisSet& aset, const Dataset& data) {
  detail::require_arm_observations(aset, data);
  const double n = static_cast<double>(aset.n());
  KahanSum sj, sk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) sj.add(rec.outcome / aset.weight_j[pos]);
    if (rec.arm == aset.arm_k) sk.add(rec.outcome / aset.weight_k[pos]);
  }
  PairEstimate out;
  out.method = Method::Ipw;
  out.n_jk = aset.n();
  out.theta_jk = sj.value() / n;
  out.theta_kj = sk.value() / n;
  return out;
}

// Stabilized IPW: weights normalized to sum to one, making the contrast
// invariant to outcome shifts.
inline PairEstimate estimate_sipw(const AnalysisSet& aset, const Dataset& data) {
  detail::require_arm_observations(aset, data);
  KahanSum sj, sk, wj, wk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) {
      sj.add(rec.outcome / aset.weight_j[pos]);
      wj.add(1.0 / aset.weight_j[pos]);
    }
    if (rec.arm == aset.arm_k) {
      sk.add(rec.outcome / aset.weight_k[pos]);
      wk.add(1.0 / aset.weight_k[pos]);
    }
  }
  PairEstimate out;
  out.method = Method::Sipw;
  out.n_jk = aset.n();
  out.theta_jk = sj.value() / wj.value();
  out.theta_kj = sk.value() / wk.value();
  return out;
}

// Augmented IPW: weighted mean residual plus the model mean over the
// whole analysis set, which pools covariate information from members of
// every arm.
inline PairEstimate estimate_aipw(const AnalysisSet& aset, const Dataset& data,
                                  const FittedModel& model_j,
                                  const FittedModel& model_k) {
  detail::require_arm_observations(aset, data);
  const double n = static_cast<double>(aset.n());
  auto mu_j = model_j.predict_all(data, aset);
  auto mu_k = model_k.predict_all(data, aset);
  KahanSum rj, rk, mj, mk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) rj.add((rec.outcome - mu_j[pos]) / aset.weight_j[pos]);
    if (rec.arm == aset.arm_k) rk.add((rec.outcome - mu_k[pos]) / aset.weight_k[pos]);
    mj.add(mu_j[pos]);
    mk.add(mu_k[pos]);
  }
  PairEstimate out;
  out.method = Method::Aipw;
  out.n_jk = aset.n();
  out.aux_jk = rj.value() / n;
  out.aux_kj = rk.value() / n;
  out.theta_jk = out.aux_jk + mj.value() / n;
  out.theta_kj = out.aux_kj + mk.value() / n;
  return out;
}

// Stabilized AIPW: the residual term uses normalized weights.
inline PairEstimate estimate_saipw(const AnalysisSet& aset, const Dataset& data,
                                   const FittedModel& model_j,
                                   const FittedModel& model_k) {
  detail::require_arm_observations(aset, data);
  const double n = static_cast<double>(aset.n());
  auto mu_j = model_j.predict_all(data, aset);
  auto mu_k = model_k.predict_all(data, aset);
  KahanSum rj, rk, wj, wk, mj, mk;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    if (rec.arm == aset.arm_j) {
      rj.add((rec.outcome - mu_j[pos]) / aset.weight_j[pos]);
      wj.add(1.0 / aset.weight_j[pos]);
    }
    if (rec.arm == aset.arm_k) {
      rk.add((rec.outcome - mu_k[pos]) / aset.weight_k[pos]);
      wk.add(1.0 / aset.weight_k[pos]);
    }
    mj.add(mu_j[pos]);
    mk.add(mu_k[pos]);
  }
  PairEstimate out;
  out.method = Method::Saipw;
  out.n_jk = aset.n();
  out.aux_jk = rj.value() / wj.value();
  out.aux_kj = rk.value() / wk.value();
  out.theta_jk = out.aux_jk + mj.value() / n;
  out.theta_kj = out.aux_kj + mk.value() / n;
  return out;
}

namespace detail {

inline std::vector<StratumSummary> stratum_summaries(const AnalysisSet& aset,
                                                     const Dataset& data,
                                                     const StrataPartition& strata) {
  std::vector<StratumSummary> out;
  for (const auto& s : strata.strata) {
    StratumSummary cell;
    cell.pi_j = s.pi_j;
    cell.pi_k = s.pi_k;
    cell.n = s.members.size();
    KahanSum sj, sk;
    for (std::size_t pos : s.members) {
      const auto& rec = data.records()[aset.indices[pos]];
      if (rec.arm == aset.arm_j) {
        sj.add(rec.outcome);
        ++cell.n_j;
      } else if (rec.arm == aset.arm_k) {
        sk.add(rec.outcome);
        ++cell.n_k;
      }
    }
    if (cell.n_j == 0) {
      throw DegenerateArmError("stratum " + std::to_string(s.id) +
                               " has no observations in arm '" + aset.arm_j_name +
                               "'");
    }
    if (cell.n_k == 0) {
      throw DegenerateArmError("stratum " + std::to_string(s.id) +
                               " has no observations in arm '" + aset.arm_k_name +
                               "'");
    }
    cell.mean_j = sj.value() / static_cast<double>(cell.n_j);
    cell.mean_k = sk.value() / static_cast<double>(cell.n_k);
    out.push_back(cell);
  }
  return out;
}

}  // namespace detail

// Post-stratification: stratum-size-weighted arm means over strata with
// constant weight pairs. The weights sum to one by construction.
inline PairEstimate estimate_ps(const AnalysisSet& aset, const Dataset& data,
                                const StrataPartition& strata) {
  auto cells = detail::stratum_summaries(aset, data, strata);
  const double n = static_cast<double>(aset.n());
  KahanSum sj, sk;
  for (const auto& cell : cells) {
    sj.add(static_cast<double>(cell.n) * cell.mean_j);
    sk.add(static_cast<double>(cell.n) * cell.mean_k);
  }
  PairEstimate out;
  out.method = Method::Ps;
  out.n_jk = aset.n();
  out.theta_jk = sj.value() / n;
  out.theta_kj = sk.value() / n;
  out.strata = std::move(cells);
  return out;
}

// Covariate-adjusted post-stratification: within-stratum augmented
// estimates combined by stratum size.
inline PairEstimate estimate_aps(const AnalysisSet& aset, const Dataset& data,
                                 const StrataPartition& strata,
                                 const FittedModel& model_j,
                                 const FittedModel& model_k) {
  auto cells = detail::stratum_summaries(aset, data, strata);
  const double n = static_cast<double>(aset.n());
  auto mu_j = model_j.predict_all(data, aset);
  auto mu_k = model_k.predict_all(data, aset);

  KahanSum rj, rk, mj, mk;
  for (const auto& s : strata.strata) {
    KahanSum res_j, res_k;
    for (std::size_t pos : s.members) {
      const auto& rec = data.records()[aset.indices[pos]];
      if (rec.arm == aset.arm_j) res_j.add(rec.outcome - mu_j[pos]);
      if (rec.arm == aset.arm_k) res_k.add(rec.outcome - mu_k[pos]);
    }
    const auto& cell = cells[s.id];
    double size = static_cast<double>(s.members.size());
    rj.add(size / static_cast<double>(cell.n_j) * res_j.value());
    rk.add(size / static_cast<double>(cell.n_k) * res_k.value());
  }
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    mj.add(mu_j[pos]);
    mk.add(mu_k[pos]);
  }
  PairEstimate out;
  out.method = Method::Aps;
  out.n_jk = aset.n();
  out.aux_jk = rj.value() / n;
  out.aux_kj = rk.value() / n;
  out.theta_jk = out.aux_jk + mj.value() / n;
  out.theta_kj = out.aux_kj + mk.value() / n;
  out.strata = std::move(cells);
  return out;
}

}  // namespace ptrial
