#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ptrial/dataset.hpp"
#include "ptrial/errors.hpp"

namespace ptrial {

// The usable sample for comparing two arms, with one selection weight
// per member and arm. For the full concurrently-eligible set the
// weights are the assignment probabilities; for restricted sets they
// are the joint selection probabilities of (arm, selector).
struct AnalysisSet {
  int arm_j = -1;
  int arm_k = -1;
  std::string arm_j_name;
  std::string arm_k_name;
  std::vector<std::size_t> indices;  // record indices, in dataset order
  std::vector<double> weight_j;      // per member
  std::vector<double> weight_k;
  bool restricted = false;
  std::string selector_desc;

  std::size_t n() const { return indices.size(); }
};

// Post-stratum: members share one exact weight pair. `members` are
// positions into AnalysisSet::indices.
struct Stratum {
  std::size_t id = 0;
  double pi_j = 0.0;
  double pi_k = 0.0;
  std::vector<std::size_t> members;
};

struct StrataPartition {
  std::vector<Stratum> strata;
  std::vector<std::size_t> label;  // stratum id per analysis-set position

  std::size_t count() const { return strata.size(); }
};

// Deterministic subset rule over (arm, sub-study).
class Selector {
 public:
  enum class Kind { BySubstudy, ArmsOnly, ByPairs };

  static Selector by_substudy(std::vector<std::string> ids) {
    Selector s;
    s.kind_ = Kind::BySubstudy;
    s.substudies_ = std::move(ids);
    return s;
  }
  static Selector arms_only() {
    Selector s;
    s.kind_ = Kind::ArmsOnly;
    return s;
  }
  static Selector by_pairs(std::vector<std::pair<std::string, std::string>> pairs) {
    Selector s;
    s.kind_ = Kind::ByPairs;
    s.pairs_ = std::move(pairs);
    return s;
  }

  Kind kind() const { return kind_; }
  bool references_substudy() const { return kind_ != Kind::ArmsOnly; }

  // True when (arm, substudy) is kept. Arm/sub-study given by name;
  // sub-study may be empty for multi-arm trials.
  bool matches(const std::string& arm, const std::string& substudy,
               const std::string& arm_j, const std::string& arm_k) const {
    switch (kind_) {
      case Kind::ArmsOnly:
        return arm == arm_j || arm == arm_k;
      case Kind::BySubstudy:
        for (const auto& s : substudies_) {
          if (s == substudy) return true;
        }
        return false;
      case Kind::ByPairs:
        for (const auto& [a, r] : pairs_) {
          if (a == arm && r == substudy) return true;
        }
        return false;
    }
    return false;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::ArmsOnly:
        return "arms-only";
      case Kind::BySubstudy: {
        std::string out = "substudy in {";
        for (std::size_t i = 0; i < substudies_.size(); ++i) {
          if (i) out += ",";
          out += substudies_[i];
        }
        return out + "}";
      }
      case Kind::ByPairs: {
        std::string out = "(arm,substudy) in {";
        for (std::size_t i = 0; i < pairs_.size(); ++i) {
          if (i) out += ",";
          out += "(" + pairs_[i].first + "," + pairs_[i].second + ")";
        }
        return out + "}";
      }
    }
    return "";
  }

  const std::vector<std::string>& substudies() const { return substudies_; }
  const std::vector<std::pair<std::string, std::string>>& pairs() const {
    return pairs_;
  }

 private:
  Kind kind_ = Kind::ArmsOnly;
  std::vector<std::string> substudies_;
  std::vector<std::pair<std::string, std::string>> pairs_;
};

namespace detail {

inline std::pair<int, int> resolve_pair(const Dataset& data, const std::string& j,
                                        const std::string& k) {
  int aj = data.schedule().arm_index(j);
  int ak = data.schedule().arm_index(k);
  if (aj < 0) throw ValueError("unknown arm '" + j + "'");
  if (ak < 0) throw ValueError("unknown arm '" + k + "'");
  if (aj == ak) throw ValueError("arms to compare must differ");
  return {aj, ak};
}

}  // namespace detail

// All records that could have been randomized to either arm
// (both assignment probabilities strictly positive).
inline AnalysisSet build_ece(const Dataset& data, const std::string& arm_j,
                             const std::string& arm_k) {
  auto [aj, ak] = detail::resolve_pair(data, arm_j, arm_k);
  AnalysisSet out;
  out.arm_j = aj;
  out.arm_k = ak;
  out.arm_j_name = arm_j;
  out.arm_k_name = arm_k;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double pj = data.pi(i, aj);
    double pk = data.pi(i, ak);
    if (pj > 0.0 && pk > 0.0) {
      out.indices.push_back(i);
      out.weight_j.push_back(pj);
      out.weight_k.push_back(pk);
    }
  }
  if (out.indices.empty()) {
    throw EmptyEceError("no participant was concurrently eligible for arms '" +
                        arm_j + "' and '" + arm_k +
                        "'; a randomized comparison is not available");
  }
  return out;
}

// Restriction of the eligible set by a deterministic rule over
// (arm, sub-study), with weights re-computed from the joint assignment
// law. The rule must keep a positive selection probability for both
// arms on every covariate cell where the pair is available.
inline AnalysisSet build_restricted(const Dataset& data, const std::string& arm_j,
                                    const std::string& arm_k, const Selector& sel) {
  auto [aj, ak] = detail::resolve_pair(data, arm_j, arm_k);
  const AssignmentSchedule& sched = data.schedule();

  const bool have_joint = !sched.substudies.empty();
  if (sel.references_substudy() && !have_joint) {
    throw ValueError("selector '" + sel.describe() +
                     "' requires a sub-study design with a joint assignment law");
  }

  // Selection probability P(A = arm, rule holds | Z) for one schedule row.
  auto tilde = [&](const ScheduleRow& row, int arm, const std::string& arm_name) {
    if (!sel.references_substudy()) {
      // Rule depends on A only; P(A=a, rule | Z) is pi_a or 0.
      return sel.matches(arm_name, "", arm_j, arm_k)
                 ? row.pi[static_cast<std::size_t>(arm)]
                 : 0.0;
    }
    KahanSum s;
    for (std::size_t r = 0; r < sched.substudies.size(); ++r) {
      if (sel.matches(arm_name, sched.substudies[r], arm_j, arm_k)) {
        s.add((*row.joint)[static_cast<std::size_t>(arm)][r]);
      }
    }
    return s.value();
  };

  // Positivity must hold by design, on every cell where both arms are
  // available, before any data are examined.
  for (const auto& row : sched.rows) {
    double pj = row.pi[static_cast<std::size_t>(aj)];
    double pk = row.pi[static_cast<std::size_t>(ak)];
    if (pj <= 0.0 || pk <= 0.0) continue;
    if (tilde(row, aj, arm_j) <= 0.0) {
      throw PositivityError("restricted set '" + sel.describe() +
                            "': selection probability for arm '" + arm_j +
                            "' is zero at " + row.z.str());
    }
    if (tilde(row, ak, arm_k) <= 0.0) {
      throw PositivityError("restricted set '" + sel.describe() +
                            "': selection probability for arm '" + arm_k +
                            "' is zero at " + row.z.str());
    }
  }

  AnalysisSet out;
  out.arm_j = aj;
  out.arm_k = ak;
  out.arm_j_name = arm_j;
  out.arm_k_name = arm_k;
  out.restricted = true;
  out.selector_desc = sel.describe();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& rec = data.records()[i];
    double pj = data.pi(i, aj);
    double pk = data.pi(i, ak);
    if (pj <= 0.0 || pk <= 0.0) continue;
    std::string sub;
    if (sel.references_substudy()) {
      if (rec.substudy < 0) {
        throw ValueError("record '" + rec.id +
                         "' has no sub-study but the selector needs one");
      }
      sub = sched.substudies[static_cast<std::size_t>(rec.substudy)];
    }
    if (!sel.matches(sched.arms[static_cast<std::size_t>(rec.arm)], sub, arm_j,
                     arm_k)) {
      continue;
    }
    const ScheduleRow& row = sched.rows[rec.schedule_row];
    out.indices.push_back(i);
    out.weight_j.push_back(tilde(row, aj, arm_j));
    out.weight_k.push_back(tilde(row, ak, arm_k));
  }
  if (out.indices.empty()) {
    throw EmptyEceError("restricted analysis set '" + sel.describe() + "' is empty");
  }
  return out;
}

// Groups members by their exact weight pair. Compiled probabilities are
// deterministic, so binary equality is the intended merge rule: cells
// with equal weights must share a stratum, never be split.
inline StrataPartition build_strata(const AnalysisSet& aset) {
  StrataPartition out;
  out.label.resize(aset.n());
  std::map<std::pair<double, double>, std::size_t> seen;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    std::pair<double, double> key{aset.weight_j[pos], aset.weight_k[pos]};
    auto it = seen.find(key);
    if (it == seen.end()) {
      it = seen.emplace(key, out.strata.size()).first;
      Stratum s;
      s.id = out.strata.size();
      s.pi_j = key.first;
      s.pi_k = key.second;
      out.strata.push_back(std::move(s));
    }
    out.strata[it->second].members.push_back(pos);
    out.label[pos] = it->second;
  }
  return out;
}

// Alternative stratification on the full covariate key. Refines the
// weight-pair partition; useful for studying the cost of redundant
// strata.
inline StrataPartition build_strata_by_z(const AnalysisSet& aset,
                                         const Dataset& data) {
  StrataPartition out;
  out.label.resize(aset.n());
  std::map<ZKey, std::size_t> seen;
  for (std::size_t pos = 0; pos < aset.n(); ++pos) {
    const auto& rec = data.records()[aset.indices[pos]];
    auto it = seen.find(rec.z);
    if (it == seen.end()) {
      it = seen.emplace(rec.z, out.strata.size()).first;
      Stratum s;
      s.id = out.strata.size();
      s.pi_j = aset.weight_j[pos];
      s.pi_k = aset.weight_k[pos];
      out.strata.push_back(std::move(s));
    }
    out.strata[it->second].members.push_back(pos);
    out.label[pos] = it->second;
  }
  return out;
}

// Replaces design weights by realized within-stratum arm proportions.
// Optional refinement: with discrete strata the sample proportions may
// be used in place of the known probabilities.
inline AnalysisSet with_empirical_weights(const AnalysisSet& aset,
                                          const StrataPartition& strata,
                                          const Dataset& data) {
  AnalysisSet out = aset;
  for (const auto& s : strata.strata) {
    std::size_t nj = 0, nk = 0;
    for (std::size_t pos : s.members) {
      int arm = data.records()[aset.indices[pos]].arm;
      if (arm == aset.arm_j) ++nj;
      if (arm == aset.arm_k) ++nk;
    }
    if (nj == 0 || nk == 0) {
      throw DegenerateArmError(
          "empirical weights: a stratum has no observations in arm '" +
          (nj == 0 ? aset.arm_j_name : aset.arm_k_name) + "'");
    }
    double pj = static_cast<double>(nj) / static_cast<double>(s.members.size());
    double pk = static_cast<double>(nk) / static_cast<double>(s.members.size());
    for (std::size_t pos : s.members) {
      out.weight_j[pos] = pj;
      out.weight_k[pos] = pk;
    }
  }
  return out;
}

}  // namespace ptrial
