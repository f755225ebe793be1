#pragma once

#include <array>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ptrial/analysis_set.hpp"
#include "ptrial/dataset.hpp"
#include "ptrial/design.hpp"
#include "ptrial/errors.hpp"
#include "ptrial/estimators.hpp"
#include "ptrial/simulation.hpp"
#include "ptrial/variance.hpp"
#include "ptrial/working_model.hpp"

namespace ptrial {

// Exit codes shared by every subcommand so shell-level callers can
// distinguish error classes.
namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kViolations = 1;
inline constexpr int kBadInput = 2;   // parse, schema, value, config errors
inline constexpr int kEmptyEce = 3;
inline constexpr int kPositivity = 4;
inline constexpr int kDegenerate = 5;  // degenerate arms, strata, variances
}  // namespace exit_code

struct AnalysisRequest {
  std::string design_path;
  std::string data_path;
  std::string columns_path;
  std::string arm_j;
  std::string arm_k;
  std::vector<Method> methods = {Method::Naive, Method::Ipw,   Method::Sipw,
                                 Method::Aipw,  Method::Saipw, Method::Ps,
                                 Method::Aps};
  // Covariate names; numeric vs categorical is resolved against the
  // loaded dataset's column-map declarations.
  std::vector<std::string> covariates;
  WorkingModelKind model = WorkingModelKind::Linear;
  bool center = false;
  std::optional<std::string> subset;  // "arms-only" or "substudy=<id>[,<id>...]"
  double alpha = 0.05;
  std::optional<double> margin;
  std::string contrast = "diff";  // diff | theta_jk | theta_kj
  std::string out_path;           // empty -> stdout
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline int code_for(const Error& e) {
  if (dynamic_cast<const EmptyEceError*>(&e)) return exit_code::kEmptyEce;
  if (dynamic_cast<const PositivityError*>(&e)) return exit_code::kPositivity;
  if (dynamic_cast<const DegenerateArmError*>(&e) ||
      dynamic_cast<const InsufficientDataError*>(&e) ||
      dynamic_cast<const DegenerateVarianceError*>(&e)) {
    return exit_code::kDegenerate;
  }
  return exit_code::kBadInput;
}

inline Selector parse_selector(const std::string& text) {
  if (text == "arms-only") return Selector::arms_only();
  const std::string prefix = "substudy=";
  if (text.rfind(prefix, 0) == 0) {
    std::vector<std::string> ids;
    std::string rest = text.substr(prefix.size());
    std::stringstream ss(rest);
    std::string id;
    while (std::getline(ss, id, ',')) {
      if (!id.empty()) ids.push_back(id);
    }
    if (ids.empty()) throw ValueError("subset: no sub-study ids given");
    return Selector::by_substudy(ids);
  }
  throw ValueError("subset must be 'arms-only' or 'substudy=<id>[,...]'");
}

inline std::array<double, 2> contrast_vector(const std::string& name) {
  if (name == "diff") return {1.0, -1.0};
  if (name == "theta_jk") return {1.0, 0.0};
  if (name == "theta_kj") return {0.0, 1.0};
  throw ValueError("contrast must be diff, theta_jk, or theta_kj");
}

inline void write_output(const std::string& out_path, const std::string& text,
                         std::ostream& fallback) {
  if (out_path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + out_path + "'");
  out << text;
}

}  // namespace detail

// Compiles a design and prints its marginal table; violations (if the
// compiled schedule breaks an invariant) are listed one per line.
inline int cmd_validate_design(const std::string& design_path, std::ostream& out,
                               std::ostream& err) {
  TrialDesign design;
  AssignmentSchedule sched;
  try {
    design = parse_design(detail::read_file(design_path));
    sched = compile_schedule(design);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kBadInput;
  }
  auto violations = validate_schedule(sched);
  for (const auto& v : violations) {
    out << "violation: " << v.rule << " at " << v.z.str();
    if (!v.arm.empty()) out << " arm " << v.arm;
    out << ": " << v.detail << '\n';
  }
  if (!violations.empty()) return exit_code::kViolations;

  out << "arms:";
  for (const auto& a : sched.arms) out << ' ' << a;
  out << '\n';
  for (const auto& row : sched.rows) {
    out << row.z.str() << " ->";
    for (double p : row.pi) out << ' ' << p;
    out << '\n';
  }
  return exit_code::kOk;
}

// Full analysis of one arm pair on participant data; emits a JSON
// report per method.
inline int cmd_analyze(const AnalysisRequest& req, std::ostream& out,
                       std::ostream& err) {
  try {
    TrialDesign design = parse_design(detail::read_file(req.design_path));
    ColumnMap cols = ColumnMap::parse(detail::read_file(req.columns_path));
    Dataset data = load_records(detail::read_file(req.data_path), design, cols);

    AnalysisSet aset =
        req.subset ? build_restricted(data, req.arm_j, req.arm_k,
                                      detail::parse_selector(*req.subset))
                   : build_ece(data, req.arm_j, req.arm_k);
    StrataPartition strata = build_strata(aset);
    auto c = detail::contrast_vector(req.contrast);

    bool want_models = false;
    for (Method m : req.methods) {
      want_models = want_models || detail::needs_models(m);
    }
    std::optional<FittedModel> mj, mk;
    if (want_models) {
      CovariateSpec spec;
      spec.stratum_interactions = req.model == WorkingModelKind::Anhecova;
      for (const auto& name : req.covariates) {
        if (data.numeric_index(name) >= 0) {
          spec.numeric.push_back(name);
        } else if (data.categorical_index(name) >= 0) {
          spec.categorical.push_back(name);
        } else {
          throw ValueError("covariate '" + name +
                           "' is not declared in the column map");
        }
      }
      auto fit = req.model == WorkingModelKind::Linear ? fit_linear : fit_anhecova;
      mj = fit(aset, req.arm_j, spec, data);
      mk = fit(aset, req.arm_k, spec, data);
      if (req.center) {
        mj = center_model(*mj, aset, data);
        mk = center_model(*mk, aset, data);
      }
    }

    ordered_json doc;
    doc["design"] = req.design_path;
    doc["data"] = req.data_path;
    doc["arm_j"] = req.arm_j;
    doc["arm_k"] = req.arm_k;
    doc["n_records"] = data.size();
    doc["excluded_missing_outcome"] = data.excluded_missing_outcome();
    doc["n_jk"] = aset.n();
    doc["restricted"] = aset.restricted;
    if (aset.restricted) doc["selector"] = aset.selector_desc;
    doc["alpha"] = req.alpha;
    if (req.margin) doc["margin"] = *req.margin;
    doc["contrast"] = req.contrast;

    doc["strata"] = ordered_json::array();
    for (const auto& s : strata.strata) {
      std::size_t nj = 0, nk = 0;
      for (std::size_t pos : s.members) {
        int arm = data.records()[aset.indices[pos]].arm;
        if (arm == aset.arm_j) ++nj;
        if (arm == aset.arm_k) ++nk;
      }
      ordered_json js;
      js["pi_j"] = s.pi_j;
      js["pi_k"] = s.pi_k;
      js["n"] = s.members.size();
      js["n_j"] = nj;
      js["n_k"] = nk;
      doc["strata"].push_back(js);
    }

    if (want_models) {
      auto model_info = [](const FittedModel& m) {
        ordered_json jm;
        jm["n_used"] = m.n_used();
        jm["rank"] = m.rank();
        jm["r_squared"] = m.r_squared();
        jm["centered"] = m.centered();
        jm["warnings"] = m.warnings();
        return jm;
      };
      doc["model_j"] = model_info(*mj);
      doc["model_k"] = model_info(*mk);
    }

    doc["methods"] = ordered_json::object();
    for (Method m : req.methods) {
      PairEstimate est;
      CovarianceEstimate cov;
      switch (m) {
        case Method::Naive:
          est = estimate_naive(aset, data);
          cov = cov_naive(aset, data);
          break;
        case Method::Ipw:
          est = estimate_ipw(aset, data);
          cov = cov_ipw(aset, data, est);
          break;
        case Method::Sipw:
          est = estimate_sipw(aset, data);
          cov = cov_sipw(aset, data, est);
          break;
        case Method::Aipw:
          est = estimate_aipw(aset, data, *mj, *mk);
          cov = cov_aipw(aset, data, *mj, *mk);
          break;
        case Method::Saipw:
          est = estimate_saipw(aset, data, *mj, *mk);
          cov = cov_saipw(aset, data, *mj, *mk);
          break;
        case Method::Ps:
          est = estimate_ps(aset, data, strata);
          cov = cov_ps(aset, data, strata);
          break;
        case Method::Aps:
          est = estimate_aps(aset, data, strata, *mj, *mk);
          cov = cov_aps(aset, data, strata, *mj, *mk);
          break;
      }
      ContrastInference inf = contrast_inference(est, cov, c, req.alpha, req.margin);
      ordered_json jm;
      jm["theta_jk"] = est.theta_jk;
      jm["theta_kj"] = est.theta_kj;
      jm["sigma"] = {{cov.s11, cov.s12}, {cov.s12, cov.s22}};
      jm["contrast"] = inf.estimate;
      jm["se"] = inf.se;
      jm["ci"] = {inf.ci_low, inf.ci_high};
      jm["z"] = inf.z;
      jm["p_value"] = inf.p_value;
      if (req.margin) jm["non_inferior"] = inf.non_inferior;
      doc["methods"][method_name(m)] = jm;
    }

    detail::write_output(req.out_path, doc.dump(2) + "\n", out);
    return exit_code::kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return detail::code_for(e);
  }
}

// Runs a Monte Carlo study from a JSON config; writes <out>.json and
// <out>.txt and prints one summary line per (pair, method).
inline int cmd_simulate(const std::string& config_path, const std::string& out_prefix,
                        unsigned threads_override, std::ostream& out,
                        std::ostream& err) {
  try {
    SimulationConfig cfg = SimulationConfig::parse(detail::read_file(config_path));
    if (threads_override > 0) cfg.threads = threads_override;
    SimulationReport rep = run_monte_carlo(cfg);
    for (const auto& p : rep.pairs) {
      for (const auto& m : p.methods) {
        out << p.arm_j << " vs " << p.arm_k << " " << method_name(m.method)
            << ": bias " << m.bias << ", sd " << m.sd << ", se " << m.mean_se
            << ", cp " << m.coverage << ", failed " << m.failed << '\n';
      }
    }
    if (!out_prefix.empty()) {
      detail::write_output(out_prefix + ".json", rep.to_json().dump(2) + "\n", out);
      detail::write_output(out_prefix + ".txt", rep.to_table(), out);
    }
    return exit_code::kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return detail::code_for(e);
  }
}

}  // namespace ptrial
