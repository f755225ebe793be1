#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptrial/errors.hpp"
#include "ptrial/math.hpp"

namespace ptrial {

using ordered_json = nlohmann::ordered_json;

// Probabilities entered as decimal literals are validated to this
// tolerance; compiled values are compared exactly downstream.
inline constexpr double kProbTol = 1e-12;

// Reserved level matching every declared level of a factor.
inline constexpr const char* kAnyLevel = "any";

// A randomization covariate cell: named categorical factor levels,
// e.g. enrollment window, disease subtype, baseline-medication flags.
// Factors are kept sorted by name so equality and ordering are
// independent of input order.
struct ZKey {
  std::vector<std::pair<std::string, std::string>> factors;

  static ZKey of(std::vector<std::pair<std::string, std::string>> f) {
    ZKey z;
    z.factors = std::move(f);
    std::sort(z.factors.begin(), z.factors.end());
    for (std::size_t i = 1; i < z.factors.size(); ++i) {
      if (z.factors[i].first == z.factors[i - 1].first) {
        throw ValueError("duplicate factor '" + z.factors[i].first +
                         "' in covariate key");
      }
    }
    return z;
  }

  const std::string* level(const std::string& factor) const {
    for (const auto& [name, lev] : factors) {
      if (name == factor) return &lev;
    }
    return nullptr;
  }

  bool has_wildcard() const {
    for (const auto& [name, lev] : factors) {
      if (lev == kAnyLevel) return true;
    }
    return false;
  }

  std::string str() const {
    std::string out = "(";
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (i) out += ", ";
      out += factors[i].first + "=" + factors[i].second;
    }
    return out + ")";
  }

  friend bool operator==(const ZKey& a, const ZKey& b) = default;
  friend auto operator<=>(const ZKey& a, const ZKey& b) = default;
};

// One sub-study within a design row: its selection probability given Z
// and the within-sub-study arm probabilities.
struct SubstudySpec {
  std::string id;
  double prob = 0.0;
  std::vector<std::pair<std::string, double>> arm_probs;
};

// One design row. A multi-arm row carries direct arm probabilities; a
// sub-study row carries the two-stage law. Levels may be the wildcard
// "any", expanded at compile time.
struct DesignRow {
  ZKey z;
  std::vector<std::pair<std::string, double>> direct_probs;
  std::vector<SubstudySpec> substudies;
};

enum class DesignFormat { MultiArm, SubStudy };

struct TrialDesign {
  std::vector<std::string> arms;
  // Declared factor universe, in document order.
  std::vector<std::pair<std::string, std::vector<std::string>>> factors;
  DesignFormat format = DesignFormat::MultiArm;
  std::vector<DesignRow> rows;

  int arm_index(const std::string& name) const {
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (arms[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  std::vector<std::string> substudy_ids() const {
    std::vector<std::string> ids;
    for (const auto& row : rows) {
      for (const auto& s : row.substudies) {
        if (std::find(ids.begin(), ids.end(), s.id) == ids.end()) {
          ids.push_back(s.id);
        }
      }
    }
    return ids;
  }

  friend bool operator==(const TrialDesign&, const TrialDesign&);
};

inline bool operator==(const SubstudySpec& a, const SubstudySpec& b) {
  return a.id == b.id && a.prob == b.prob && a.arm_probs == b.arm_probs;
}
inline bool operator==(const DesignRow& a, const DesignRow& b) {
  return a.z == b.z && a.direct_probs == b.direct_probs &&
         a.substudies == b.substudies;
}
inline bool operator==(const TrialDesign& a, const TrialDesign& b) {
  return a.arms == b.arms && a.factors == b.factors && a.format == b.format &&
         a.rows == b.rows;
}

// Fully expanded assignment law for one covariate cell. `joint[a][r]`
// is P(A = arm a, R = sub-study r | Z); absent for multi-arm designs.
struct ScheduleRow {
  ZKey z;
  std::vector<double> pi;  // marginal P(A = a | Z), indexed by arm
  std::optional<std::vector<std::vector<double>>> joint;
};

struct AssignmentSchedule {
  std::vector<std::string> arms;
  std::vector<std::string> substudies;  // empty for multi-arm designs
  std::vector<ScheduleRow> rows;

  const ScheduleRow* find(const ZKey& z) const {
    for (const auto& row : rows) {
      if (row.z == z) return &row;
    }
    return nullptr;
  }

  int arm_index(const std::string& name) const {
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (arms[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  int substudy_index(const std::string& id) const {
    for (std::size_t i = 0; i < substudies.size(); ++i) {
      if (substudies[i] == id) return static_cast<int>(i);
    }
    return -1;
  }
};

// A broken schedule invariant, for diagnostic reporting.
struct Violation {
  ZKey z;
  std::string arm;
  std::string rule;
  std::string detail;
};

namespace detail {

inline void require_keys(const ordered_json& obj, const char* where,
                         std::initializer_list<const char*> required,
                         std::initializer_list<const char*> optional = {}) {
  if (!obj.is_object()) {
    throw SchemaError(std::string(where) + " must be a JSON object");
  }
  for (const char* k : required) {
    if (!obj.contains(k)) {
      throw SchemaError(std::string(where) + ": missing field '" + k + "'");
    }
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || it.key() == k;
    for (const char* k : optional) known = known || it.key() == k;
    if (!known) {
      throw SchemaError(std::string(where) + ": unknown field '" + it.key() +
                        "'");
    }
  }
}

inline double read_prob(const ordered_json& v, const std::string& where) {
  if (!v.is_number()) throw SchemaError(where + " must be a number");
  double p = v.get<double>();
  if (!(p >= 0.0 && p <= 1.0)) {
    std::ostringstream os;
    os << where << ": probability " << p << " outside [0, 1]";
    throw ValueError(os.str());
  }
  return p;
}

inline void check_sum_to_one(double sum, const std::string& where) {
  if (std::abs(sum - 1.0) > kProbTol) {
    std::ostringstream os;
    os << where << ": row sum " << sum << " != 1";
    throw ValueError(os.str());
  }
}

}  // namespace detail

// Parses a design document. Schema:
//   { "arms": [...], "factors": {name: [levels...]},
//     "format": "multi-arm" | "sub-study",
//     "rows": [ {"z": {...}, "probs": {arm: p}}                (multi-arm)
//             | {"z": {...}, "substudies": {id: {"prob": p,
//                  "arm_probs": {arm: p}}}} ] }                (sub-study)
// Unknown fields are rejected.
inline TrialDesign parse_design(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("design: ") + e.what());
  }
  detail::require_keys(doc, "design", {"arms", "factors", "format", "rows"});

  TrialDesign d;
  if (!doc["arms"].is_array() || doc["arms"].empty()) {
    throw SchemaError("design: 'arms' must be a non-empty array");
  }
  for (const auto& a : doc["arms"]) {
    if (!a.is_string()) throw SchemaError("design: arm ids must be strings");
    std::string id = a.get<std::string>();
    if (d.arm_index(id) >= 0) throw ValueError("design: duplicate arm '" + id + "'");
    d.arms.push_back(std::move(id));
  }

  if (!doc["factors"].is_object() || doc["factors"].empty()) {
    throw SchemaError("design: 'factors' must be a non-empty object");
  }
  for (auto it = doc["factors"].begin(); it != doc["factors"].end(); ++it) {
    std::vector<std::string> levels;
    if (!it.value().is_array() || it.value().empty()) {
      throw SchemaError("design: factor '" + it.key() +
                        "' must list at least one level");
    }
    for (const auto& lev : it.value()) {
      if (!lev.is_string()) {
        throw SchemaError("design: levels of '" + it.key() + "' must be strings");
      }
      std::string l = lev.get<std::string>();
      if (l == kAnyLevel) {
        throw ValueError("design: level name 'any' is reserved");
      }
      if (std::find(levels.begin(), levels.end(), l) != levels.end()) {
        throw ValueError("design: duplicate level '" + l + "' for factor '" +
                         it.key() + "'");
      }
      levels.push_back(std::move(l));
    }
    d.factors.emplace_back(it.key(), std::move(levels));
  }

  std::string fmt = doc["format"].is_string() ? doc["format"].get<std::string>() : "";
  if (fmt == "multi-arm") {
    d.format = DesignFormat::MultiArm;
  } else if (fmt == "sub-study") {
    d.format = DesignFormat::SubStudy;
  } else {
    throw ValueError("design: format must be 'multi-arm' or 'sub-study'");
  }

  if (!doc["rows"].is_array() || doc["rows"].empty()) {
    throw SchemaError("design: 'rows' must be a non-empty array");
  }
  for (const auto& jrow : doc["rows"]) {
    const char* probs_key =
        d.format == DesignFormat::MultiArm ? "probs" : "substudies";
    detail::require_keys(jrow, "design row", {"z", probs_key});

    DesignRow row;
    if (!jrow["z"].is_object()) throw SchemaError("design row: 'z' must be an object");
    std::vector<std::pair<std::string, std::string>> zf;
    for (auto it = jrow["z"].begin(); it != jrow["z"].end(); ++it) {
      const auto* declared = [&]() -> const std::vector<std::string>* {
        for (const auto& [name, levels] : d.factors) {
          if (name == it.key()) return &levels;
        }
        return nullptr;
      }();
      if (declared == nullptr) {
        throw SchemaError("design row: unknown factor '" + it.key() + "'");
      }
      if (!it.value().is_string()) {
        throw SchemaError("design row: level of '" + it.key() + "' must be a string");
      }
      std::string lev = it.value().get<std::string>();
      if (lev != kAnyLevel &&
          std::find(declared->begin(), declared->end(), lev) == declared->end()) {
        throw ValueError("design row: unknown level '" + lev + "' for factor '" +
                         it.key() + "'");
      }
      zf.emplace_back(it.key(), std::move(lev));
    }
    if (zf.size() != d.factors.size()) {
      throw SchemaError("design row: z must name every declared factor");
    }
    row.z = ZKey::of(std::move(zf));

    if (d.format == DesignFormat::MultiArm) {
      double sum = 0.0;
      for (auto it = jrow["probs"].begin(); it != jrow["probs"].end(); ++it) {
        if (d.arm_index(it.key()) < 0) {
          throw ValueError("design row: unknown arm '" + it.key() + "'");
        }
        double p = detail::read_prob(it.value(), "design row " + row.z.str());
        row.direct_probs.emplace_back(it.key(), p);
        sum += p;
      }
      detail::check_sum_to_one(sum, "design row " + row.z.str());
    } else {
      double ssum = 0.0;
      for (auto it = jrow["substudies"].begin(); it != jrow["substudies"].end();
           ++it) {
        detail::require_keys(it.value(), "sub-study spec", {"prob", "arm_probs"});
        SubstudySpec s;
        s.id = it.key();
        s.prob = detail::read_prob(it.value()["prob"],
                                   "sub-study '" + s.id + "' in row " + row.z.str());
        double asum = 0.0;
        for (auto ap = it.value()["arm_probs"].begin();
             ap != it.value()["arm_probs"].end(); ++ap) {
          if (d.arm_index(ap.key()) < 0) {
            throw ValueError("sub-study '" + s.id + "': unknown arm '" + ap.key() +
                             "'");
          }
          double p = detail::read_prob(ap.value(), "sub-study '" + s.id + "' arm '" +
                                                       ap.key() + "'");
          s.arm_probs.emplace_back(ap.key(), p);
          asum += p;
        }
        detail::check_sum_to_one(asum, "arm probabilities of sub-study '" + s.id +
                                           "' in row " + row.z.str());
        ssum += s.prob;
        row.substudies.push_back(std::move(s));
      }
      detail::check_sum_to_one(ssum, "sub-study probabilities in row " + row.z.str());
    }

    for (const auto& prev : d.rows) {
      if (prev.z == row.z) {
        throw ValueError("design: duplicate covariate row " + row.z.str());
      }
    }
    d.rows.push_back(std::move(row));
  }
  return d;
}

inline std::string serialize_design(const TrialDesign& d) {
  ordered_json doc;
  doc["arms"] = d.arms;
  ordered_json fac = ordered_json::object();
  for (const auto& [name, levels] : d.factors) fac[name] = levels;
  doc["factors"] = fac;
  doc["format"] = d.format == DesignFormat::MultiArm ? "multi-arm" : "sub-study";
  doc["rows"] = ordered_json::array();
  for (const auto& row : d.rows) {
    ordered_json jrow;
    ordered_json z = ordered_json::object();
    for (const auto& [name, lev] : row.z.factors) z[name] = lev;
    jrow["z"] = z;
    if (d.format == DesignFormat::MultiArm) {
      ordered_json probs = ordered_json::object();
      for (const auto& [arm, p] : row.direct_probs) probs[arm] = p;
      jrow["probs"] = probs;
    } else {
      ordered_json subs = ordered_json::object();
      for (const auto& s : row.substudies) {
        ordered_json js;
        js["prob"] = s.prob;
        ordered_json ap = ordered_json::object();
        for (const auto& [arm, p] : s.arm_probs) ap[arm] = p;
        js["arm_probs"] = ap;
        subs[s.id] = js;
      }
      jrow["substudies"] = subs;
    }
    doc["rows"].push_back(jrow);
  }
  return doc.dump(2);
}

namespace detail {

// Expands wildcard levels against the declared factor universe,
// preserving declared level order.
inline std::vector<ZKey> expand_wildcards(
    const ZKey& z,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& factors) {
  std::vector<ZKey> out;
  out.push_back(ZKey{});
  for (const auto& [name, lev] : z.factors) {
    std::vector<std::string> choices;
    if (lev == kAnyLevel) {
      for (const auto& [fname, levels] : factors) {
        if (fname == name) choices = levels;
      }
    } else {
      choices.push_back(lev);
    }
    std::vector<ZKey> next;
    for (const auto& partial : out) {
      for (const auto& c : choices) {
        ZKey ext = partial;
        ext.factors.emplace_back(name, c);
        next.push_back(std::move(ext));
      }
    }
    out = std::move(next);
  }
  // ZKey factor lists stay sorted because the source key was sorted.
  return out;
}

}  // namespace detail

// Compiles a validated design into marginal (and, for sub-study
// designs, joint) assignment probabilities per covariate cell, applying
// the law of total probability over sub-studies:
//   P(A=a | Z) = sum_r P(R=r | Z) P(A=a | R=r, Z).
// Randomization strictness requires every marginal < 1.
inline AssignmentSchedule compile_schedule(const TrialDesign& d) {
  AssignmentSchedule sched;
  sched.arms = d.arms;
  if (d.format == DesignFormat::SubStudy) sched.substudies = d.substudy_ids();
  const std::size_t n_arms = d.arms.size();
  const std::size_t n_subs = sched.substudies.size();

  for (const auto& row : d.rows) {
    for (const auto& z : detail::expand_wildcards(row.z, d.factors)) {
      if (sched.find(z) != nullptr) {
        throw ValueError("design rows overlap at " + z.str());
      }
      ScheduleRow out;
      out.z = z;
      out.pi.assign(n_arms, 0.0);
      if (d.format == DesignFormat::MultiArm) {
        for (const auto& [arm, p] : row.direct_probs) {
          out.pi[static_cast<std::size_t>(d.arm_index(arm))] = p;
        }
      } else {
        std::vector<std::vector<double>> joint(
            n_arms, std::vector<double>(n_subs, 0.0));
        for (const auto& s : row.substudies) {
          auto r = static_cast<std::size_t>(sched.substudy_index(s.id));
          for (const auto& [arm, p] : s.arm_probs) {
            joint[static_cast<std::size_t>(d.arm_index(arm))][r] = s.prob * p;
          }
        }
        for (std::size_t a = 0; a < n_arms; ++a) {
          double m = 0.0;
          for (std::size_t r = 0; r < n_subs; ++r) m += joint[a][r];
          out.pi[a] = m;
        }
        out.joint = std::move(joint);
      }
      for (std::size_t a = 0; a < n_arms; ++a) {
        if (out.pi[a] >= 1.0) {
          throw ValueError("compiled marginal for arm '" + d.arms[a] + "' at " +
                           z.str() + " must be < 1");
        }
      }
      sched.rows.push_back(std::move(out));
    }
  }
  return sched;
}

// Diagnostic check of every schedule invariant; empty result means the
// schedule is internally consistent.
inline std::vector<Violation> validate_schedule(const AssignmentSchedule& s) {
  std::vector<Violation> out;
  for (const auto& row : s.rows) {
    KahanSum total;
    for (std::size_t a = 0; a < row.pi.size(); ++a) {
      total.add(row.pi[a]);
      if (row.pi[a] < 0.0) {
        out.push_back({row.z, s.arms[a], "pi >= 0", "negative probability"});
      }
      if (row.pi[a] >= 1.0) {
        out.push_back({row.z, s.arms[a], "pi < 1", "assignment is deterministic"});
      }
    }
    if (std::abs(total.value() - 1.0) > kProbTol) {
      std::ostringstream os;
      os << "marginals sum to " << total.value();
      out.push_back({row.z, "", "row sum 1", os.str()});
    }
    if (row.joint.has_value()) {
      KahanSum jtotal;
      for (std::size_t a = 0; a < row.joint->size(); ++a) {
        KahanSum marg;
        for (double v : (*row.joint)[a]) {
          jtotal.add(v);
          marg.add(v);
        }
        if (std::abs(marg.value() - row.pi[a]) > kProbTol) {
          std::ostringstream os;
          os << "joint sums to " << marg.value() << " but marginal is " << row.pi[a];
          out.push_back({row.z, s.arms[a], "marginal consistency", os.str()});
        }
      }
      if (std::abs(jtotal.value() - 1.0) > kProbTol) {
        std::ostringstream os;
        os << "joint table sums to " << jtotal.value();
        out.push_back({row.z, "", "joint sum 1", os.str()});
      }
    }
  }
  return out;
}

}  // namespace ptrial
