#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ptrial/analysis_set.hpp"
#include "ptrial/dataset.hpp"
#include "ptrial/design.hpp"
#include "ptrial/errors.hpp"
#include "ptrial/estimators.hpp"
#include "ptrial/rng.hpp"
#include "ptrial/variance.hpp"
#include "ptrial/working_model.hpp"

namespace ptrial {

// One latent draw from the built-in data-generating process: covariates,
// an unobserved confounder, the enrollment window, all four potential
// outcomes, and the realized assignment.
struct DgpDraw {
  double x_c = 0.0;
  double x_b = 0.0;
  double z_sub = 0.0;
  double u = 0.0;
  int z_ew = 1;  // 1..3
  double y_pot[4] = {0.0, 0.0, 0.0, 0.0};
  int substudy = -1;  // 0..2
  int arm = -1;       // 0..3
  double y = 0.0;
};

namespace detail {

// Sub-study selection probabilities by (enrollment window, subtype).
inline const double* substudy_probs(int z_ew, int z_sub) {
  static const double table[3][2][3] = {
      //              sub = 0                 sub = 1
      {{1.0, 0.0, 0.0}, {0.4, 0.6, 0.0}},  // window 1
      {{1.0, 0.0, 0.0}, {0.3, 0.3, 0.4}},  // window 2
      {{1.0, 0.0, 0.0}, {0.4, 0.0, 0.6}},  // window 3
  };
  return table[z_ew - 1][z_sub];
}

// Covariates, confounder, enrollment window, and potential outcomes.
// Draw order is fixed: x_c, x_b, z_sub, u, eps1..eps4, u_window.
inline DgpDraw draw_latent(SplitMix64& rng) {
  DgpDraw d;
  d.x_c = rng.uniform(-3.0, 3.0);
  d.x_b = rng.bernoulli(0.5) ? 1.0 : 0.0;
  d.z_sub = rng.bernoulli(0.8) ? 1.0 : 0.0;
  d.u = rng.normal();
  double eps[4];
  for (double& e : eps) e = rng.normal();

  double q1 = 0.5 + d.x_c + 2.0 * d.x_b - d.z_sub + d.u;
  double q2 = 1.0 + 2.0 * d.x_c + d.x_b - d.z_sub + d.u;
  double q3 = -0.5 + d.x_c + d.x_b + d.z_sub + d.u;
  double qmax = std::max({q1, q2, q3});
  double e1 = std::exp(q1 - qmax), e2 = std::exp(q2 - qmax), e3 = std::exp(q3 - qmax);
  double total = e1 + e2 + e3;
  double uw = rng.next_double() * total;
  d.z_ew = uw < e1 ? 1 : (uw < e1 + e2 ? 2 : 3);

  d.y_pot[0] = 1.0 + d.x_c + d.x_b + d.z_sub + d.u + eps[0];
  d.y_pot[1] = 1.0 + d.x_c * d.x_c + d.x_b + d.z_sub + d.u + eps[1];
  d.y_pot[2] = 3.0 + d.x_c * d.x_b + d.z_sub + d.u + eps[2];
  d.y_pot[3] = 2.0 + d.x_c * d.z_sub - d.x_b + 2.0 * d.u + eps[3];
  return d;
}

// Two-stage randomization: sub-study by the table, then 1:1 between the
// shared control (arm 1) and the sub-study's own arm. Draw order:
// u_substudy, u_arm.
inline void assign_treatment(DgpDraw& d, SplitMix64& rng) {
  const double* probs = substudy_probs(d.z_ew, static_cast<int>(d.z_sub));
  double us = rng.next_double();
  d.substudy = us < probs[0] ? 0 : (us < probs[0] + probs[1] ? 1 : 2);
  d.arm = rng.bernoulli(0.5) ? 0 : d.substudy + 1;
  d.y = d.y_pot[d.arm];
}

}  // namespace detail

// The four-arm, three-sub-study demonstration design: a shared control
// evaluated against three investigational arms whose availability
// depends on enrollment window and disease subtype.
inline TrialDesign simulation_design() {
  auto make_sub = [](const std::string& id, double prob, const std::string& test_arm) {
    SubstudySpec s;
    s.id = id;
    s.prob = prob;
    s.arm_probs = {{"1", 0.5}, {test_arm, 0.5}};
    return s;
  };
  TrialDesign d;
  d.arms = {"1", "2", "3", "4"};
  d.factors = {{"ew", {"1", "2", "3"}}, {"sub", {"0", "1"}}};
  d.format = DesignFormat::SubStudy;

  DesignRow r11;
  r11.z = ZKey::of({{"ew", "1"}, {"sub", "1"}});
  r11.substudies = {make_sub("1", 0.4, "2"), make_sub("2", 0.6, "3")};
  DesignRow r21;
  r21.z = ZKey::of({{"ew", "2"}, {"sub", "1"}});
  r21.substudies = {make_sub("1", 0.3, "2"), make_sub("2", 0.3, "3"),
                    make_sub("3", 0.4, "4")};
  DesignRow r31;
  r31.z = ZKey::of({{"ew", "3"}, {"sub", "1"}});
  r31.substudies = {make_sub("1", 0.4, "2"), make_sub("3", 0.6, "4")};
  DesignRow r0;
  r0.z = ZKey::of({{"ew", kAnyLevel}, {"sub", "0"}});
  r0.substudies = {make_sub("1", 1.0, "2")};

  d.rows = {r11, r21, r31, r0};
  return d;
}

// Simulates one trial of n participants, bound to the compiled
// demonstration schedule. Deterministic in the seed.
inline Dataset generate_trial(std::size_t n, std::uint64_t seed) {
  AssignmentSchedule sched = compile_schedule(simulation_design());

  // (window, subtype) -> schedule row
  std::size_t row_of[3][2];
  for (int ew = 1; ew <= 3; ++ew) {
    for (int sub = 0; sub <= 1; ++sub) {
      ZKey z = ZKey::of({{"ew", std::to_string(ew)}, {"sub", std::to_string(sub)}});
      const ScheduleRow* r = sched.find(z);
      row_of[ew - 1][sub] = static_cast<std::size_t>(r - sched.rows.data());
    }
  }

  SplitMix64 rng(seed);
  std::vector<ParticipantRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DgpDraw d = detail::draw_latent(rng);
    detail::assign_treatment(d, rng);
    ParticipantRecord rec;
    rec.id = "r" + std::to_string(i + 1);
    rec.z = ZKey::of({{"ew", std::to_string(d.z_ew)},
                      {"sub", std::to_string(static_cast<int>(d.z_sub))}});
    rec.numeric_x = {d.x_c, d.x_b, d.z_sub};
    rec.arm = d.arm;
    rec.substudy = d.substudy;
    rec.outcome = d.y;
    rec.schedule_row = row_of[d.z_ew - 1][static_cast<int>(d.z_sub)];
    records.push_back(std::move(rec));
  }
  return Dataset(std::move(sched), std::move(records), {"x_c", "x_b", "z_sub"}, {},
                 0);
}

namespace detail {

inline std::pair<int, int> simulation_arm_pair(const std::string& j,
                                               const std::string& k) {
  auto parse = [](const std::string& a) {
    if (a.size() == 1 && a[0] >= '1' && a[0] <= '4') return a[0] - '1';
    throw ConfigError("unknown arm '" + a + "' for the simulation design");
  };
  int aj = parse(j), ak = parse(k);
  if (aj == ak) throw ConfigError("arms to compare must differ");
  return {aj, ak};
}

}  // namespace detail

// Monte Carlo approximation of the estimand: the mean potential-outcome
// difference over the subpopulation eligible for both arms. Streams M
// latent draws; never materializes them.
inline double true_contrast_oracle(const std::string& arm_j, const std::string& arm_k,
                                   std::size_t m, std::uint64_t seed) {
  auto [aj, ak] = detail::simulation_arm_pair(arm_j, arm_k);
  AssignmentSchedule sched = compile_schedule(simulation_design());
  double pi_tab[3][2][4];
  for (int ew = 1; ew <= 3; ++ew) {
    for (int sub = 0; sub <= 1; ++sub) {
      ZKey z = ZKey::of({{"ew", std::to_string(ew)}, {"sub", std::to_string(sub)}});
      const ScheduleRow* r = sched.find(z);
      for (int a = 0; a < 4; ++a) pi_tab[ew - 1][sub][a] = r->pi[a];
    }
  }
  SplitMix64 rng(seed);
  KahanSum sum_j, sum_k;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    DgpDraw d = detail::draw_latent(rng);
    const double* pi = pi_tab[d.z_ew - 1][static_cast<int>(d.z_sub)];
    if (pi[aj] <= 0.0 || pi[ak] <= 0.0) continue;
    sum_j.add(d.y_pot[aj]);
    sum_k.add(d.y_pot[ak]);
    ++count;
  }
  if (count == 0) throw EmptyEceError("oracle: eligible subpopulation is empty");
  return (sum_j.value() - sum_k.value()) / static_cast<double>(count);
}

// Monte Carlo evaluation of the probability limit of the unweighted arm
// means: for each arm, the ratio of the probability-weighted mean
// outcome to the mean probability over the eligible subpopulation.
inline double naive_limit_oracle(const std::string& arm_j, const std::string& arm_k,
                                 std::size_t m, std::uint64_t seed) {
  auto [aj, ak] = detail::simulation_arm_pair(arm_j, arm_k);
  AssignmentSchedule sched = compile_schedule(simulation_design());
  double pi_tab[3][2][4];
  for (int ew = 1; ew <= 3; ++ew) {
    for (int sub = 0; sub <= 1; ++sub) {
      ZKey z = ZKey::of({{"ew", std::to_string(ew)}, {"sub", std::to_string(sub)}});
      const ScheduleRow* r = sched.find(z);
      for (int a = 0; a < 4; ++a) pi_tab[ew - 1][sub][a] = r->pi[a];
    }
  }
  SplitMix64 rng(seed);
  KahanSum num_j, den_j, num_k, den_k;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    DgpDraw d = detail::draw_latent(rng);
    const double* pi = pi_tab[d.z_ew - 1][static_cast<int>(d.z_sub)];
    if (pi[aj] <= 0.0 || pi[ak] <= 0.0) continue;
    num_j.add(pi[aj] * d.y_pot[aj]);
    den_j.add(pi[aj]);
    num_k.add(pi[ak] * d.y_pot[ak]);
    den_k.add(pi[ak]);
    ++count;
  }
  if (count == 0) throw EmptyEceError("oracle: eligible subpopulation is empty");
  return num_j.value() / den_j.value() - num_k.value() / den_k.value();
}

enum class WorkingModelKind { Linear, Anhecova };
enum class Stratification { Pairs, JointZ };

struct SimulationConfig {
  std::size_t runs = 1000;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::vector<Method> methods = {Method::Naive, Method::Ipw,   Method::Sipw,
                                 Method::Aipw,  Method::Saipw, Method::Ps,
                                 Method::Aps};
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"2", "1"}, {"3", "1"}, {"4", "1"}};
  CovariateSpec covariates{{"x_c", "x_b", "z_sub"}, {}, false};
  WorkingModelKind model = WorkingModelKind::Linear;
  bool center = false;
  Stratification stratification = Stratification::Pairs;
  bool empirical_pi = false;
  std::size_t oracle_m = 10'000'000;
  double alpha = 0.05;
  unsigned threads = 0;  // 0 = hardware concurrency

  void validate() const {
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (n < 1) throw ConfigError("n must be >= 1");
    if (oracle_m < 1) throw ConfigError("oracle_m must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (methods.empty()) throw ConfigError("at least one method is required");
    if (pairs.empty()) throw ConfigError("at least one arm pair is required");
    for (const auto& [j, k] : pairs) detail::simulation_arm_pair(j, k);
    for (const auto& name : covariates.numeric) {
      if (name != "x_c" && name != "x_b" && name != "z_sub") {
        throw ConfigError("unknown simulation covariate '" + name + "'");
      }
    }
    if (!covariates.categorical.empty()) {
      throw ConfigError("the simulation has no categorical covariates");
    }
  }

  static SimulationConfig parse(const std::string& text) {
    ordered_json doc;
    try {
      doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("simulation config: ") + e.what());
    }
    detail::require_keys(doc, "simulation config", {},
                         {"runs", "n", "seed", "methods", "pairs", "covariates",
                          "model", "center", "stratification", "empirical_pi",
                          "oracle_m", "alpha", "threads"});
    SimulationConfig c;
    if (doc.contains("runs")) c.runs = doc["runs"].get<std::size_t>();
    if (doc.contains("n")) c.n = doc["n"].get<std::size_t>();
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("methods")) {
      c.methods.clear();
      if (doc["methods"].is_string() && doc["methods"] == "all") {
        c.methods = {Method::Naive, Method::Ipw,   Method::Sipw, Method::Aipw,
                     Method::Saipw, Method::Ps,    Method::Aps};
      } else {
        for (const auto& ms : doc["methods"]) {
          c.methods.push_back(method_from_name(ms.get<std::string>()));
        }
      }
    }
    if (doc.contains("pairs")) {
      c.pairs.clear();
      for (const auto& p : doc["pairs"]) {
        if (!p.is_array() || p.size() != 2) {
          throw ConfigError("pairs must be two-element arrays");
        }
        c.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
      }
    }
    if (doc.contains("covariates")) {
      detail::require_keys(doc["covariates"], "covariates", {},
                           {"numeric", "categorical"});
      c.covariates.numeric.clear();
      c.covariates.categorical.clear();
      if (doc["covariates"].contains("numeric")) {
        for (const auto& v : doc["covariates"]["numeric"]) {
          c.covariates.numeric.push_back(v.get<std::string>());
        }
      }
      if (doc["covariates"].contains("categorical")) {
        for (const auto& v : doc["covariates"]["categorical"]) {
          c.covariates.categorical.push_back(v.get<std::string>());
        }
      }
    }
    if (doc.contains("model")) {
      std::string m = doc["model"].get<std::string>();
      if (m == "linear") {
        c.model = WorkingModelKind::Linear;
      } else if (m == "anhecova") {
        c.model = WorkingModelKind::Anhecova;
      } else {
        throw ConfigError("model must be 'linear' or 'anhecova'");
      }
    }
    if (doc.contains("center")) c.center = doc["center"].get<bool>();
    if (doc.contains("stratification")) {
      std::string s = doc["stratification"].get<std::string>();
      if (s == "pairs") {
        c.stratification = Stratification::Pairs;
      } else if (s == "joint-z") {
        c.stratification = Stratification::JointZ;
      } else {
        throw ConfigError("stratification must be 'pairs' or 'joint-z'");
      }
    }
    if (doc.contains("empirical_pi")) c.empirical_pi = doc["empirical_pi"].get<bool>();
    if (doc.contains("oracle_m")) c.oracle_m = doc["oracle_m"].get<std::size_t>();
    if (doc.contains("alpha")) c.alpha = doc["alpha"].get<double>();
    if (doc.contains("threads")) c.threads = doc["threads"].get<unsigned>();
    c.validate();
    return c;
  }
};

struct MethodReport {
  Method method = Method::Naive;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double bias = 0.0;          // mean estimate minus oracle, signed
  double rel_bias_pct = 0.0;  // bias over the oracle value, in percent
  double sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
};

struct PairReport {
  std::string arm_j, arm_k;
  double oracle = 0.0;
  std::vector<MethodReport> methods;
};

struct SimulationReport {
  std::size_t runs = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::vector<PairReport> pairs;

  const MethodReport& method(std::size_t pair_ix, Method m) const {
    for (const auto& r : pairs[pair_ix].methods) {
      if (r.method == m) return r;
    }
    throw ConfigError("method not present in report");
  }

  ordered_json to_json() const {
    ordered_json doc;
    doc["runs"] = runs;
    doc["n"] = n;
    doc["seed"] = seed;
    doc["alpha"] = alpha;
    doc["pairs"] = ordered_json::array();
    for (const auto& p : pairs) {
      ordered_json jp;
      jp["arm_j"] = p.arm_j;
      jp["arm_k"] = p.arm_k;
      jp["oracle_contrast"] = p.oracle;
      jp["methods"] = ordered_json::array();
      for (const auto& m : p.methods) {
        ordered_json jm;
        jm["method"] = method_name(m.method);
        jm["completed"] = m.completed;
        jm["failed"] = m.failed;
        jm["bias"] = m.bias;
        jm["rel_bias_pct"] = m.rel_bias_pct;
        jm["sd"] = m.sd;
        jm["mean_se"] = m.mean_se;
        jm["coverage"] = m.coverage;
        jp["methods"].push_back(jm);
      }
      doc["pairs"].push_back(jp);
    }
    return doc;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(10) << "pair" << std::setw(8) << "method"
       << std::right << std::setw(10) << "bias" << std::setw(12) << "rel_bias%"
       << std::setw(10) << "sd" << std::setw(10) << "se" << std::setw(8) << "cp"
       << std::setw(8) << "failed" << '\n';
    for (const auto& p : pairs) {
      for (const auto& m : p.methods) {
        os << std::left << std::setw(10) << (p.arm_j + " vs " + p.arm_k)
           << std::setw(8) << method_name(m.method) << std::right << std::fixed
           << std::setprecision(3) << std::setw(10) << m.bias << std::setw(12)
           << m.rel_bias_pct << std::setw(10) << m.sd << std::setw(10) << m.mean_se
           << std::setw(8) << m.coverage << std::setw(8) << m.failed << '\n';
      }
    }
    return os.str();
  }
};

namespace detail {

struct RunCell {
  double contrast = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool failed = true;
};

inline bool needs_models(Method m) {
  return m == Method::Aipw || m == Method::Saipw || m == Method::Aps;
}

// Everything evaluated for one (run, pair); failures of one method do
// not abort the others.
inline void evaluate_run_pair(const Dataset& ds, const SimulationConfig& cfg,
                              const std::string& j, const std::string& k,
                              std::vector<RunCell>& out) {
  AnalysisSet aset = build_ece(ds, j, k);
  StrataPartition strata = cfg.stratification == Stratification::Pairs
                               ? build_strata(aset)
                               : build_strata_by_z(aset, ds);
  if (cfg.empirical_pi) {
    aset = with_empirical_weights(aset, build_strata(aset), ds);
  }

  bool want_models = false;
  for (Method m : cfg.methods) want_models = want_models || needs_models(m);
  std::optional<FittedModel> mj, mk;
  std::string model_error;
  if (want_models) {
    try {
      auto fit = cfg.model == WorkingModelKind::Linear ? fit_linear : fit_anhecova;
      mj = fit(aset, j, cfg.covariates, ds);
      mk = fit(aset, k, cfg.covariates, ds);
      if (cfg.center) {
        mj = center_model(*mj, aset, ds);
        mk = center_model(*mk, aset, ds);
      }
    } catch (const InsufficientDataError& e) {
      mj.reset();
      mk.reset();
      model_error = e.what();
    }
  }

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    Method m = cfg.methods[mi];
    RunCell& cell = out[mi];
    try {
      if (needs_models(m) && !mj) throw InsufficientDataError(model_error);
      PairEstimate est;
      CovarianceEstimate cov;
      switch (m) {
        case Method::Naive:
          est = estimate_naive(aset, ds);
          cov = cov_naive(aset, ds);
          break;
        case Method::Ipw:
          est = estimate_ipw(aset, ds);
          cov = cov_ipw(aset, ds, est);
          break;
        case Method::Sipw:
          est = estimate_sipw(aset, ds);
          cov = cov_sipw(aset, ds, est);
          break;
        case Method::Aipw:
          est = estimate_aipw(aset, ds, *mj, *mk);
          cov = cov_aipw(aset, ds, *mj, *mk);
          break;
        case Method::Saipw:
          est = estimate_saipw(aset, ds, *mj, *mk);
          cov = cov_saipw(aset, ds, *mj, *mk);
          break;
        case Method::Ps:
          est = estimate_ps(aset, ds, strata);
          cov = cov_ps(aset, ds, strata);
          break;
        case Method::Aps:
          est = estimate_aps(aset, ds, strata, *mj, *mk);
          cov = cov_aps(aset, ds, strata, *mj, *mk);
          break;
      }
      ContrastInference inf = contrast_inference(est, cov, {1.0, -1.0}, cfg.alpha);
      cell.contrast = inf.estimate;
      cell.se = inf.se;
      cell.lo = inf.ci_low;
      cell.hi = inf.ci_high;
      cell.failed = false;
    } catch (const DegenerateArmError&) {
    } catch (const InsufficientDataError&) {
    } catch (const DegenerateVarianceError&) {
    }
  }
}

}  // namespace detail

// Runs the full Monte Carlo study. Run r draws its own substream of the
// seed, and aggregation happens in run order after the parallel phase,
// so the report does not depend on thread count or scheduling.
inline SimulationReport run_monte_carlo(const SimulationConfig& cfg) {
  cfg.validate();
  const std::size_t n_pairs = cfg.pairs.size();
  const std::size_t n_methods = cfg.methods.size();

  // cells[run][pair][method]
  std::vector<detail::RunCell> cells(cfg.runs * n_pairs * n_methods);
  auto cell_span = [&](std::size_t run, std::size_t pair) {
    return cells.data() + (run * n_pairs + pair) * n_methods;
  };

  unsigned threads = cfg.threads > 0 ? cfg.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cfg.runs)));

  std::atomic<std::size_t> next_run{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t r = next_run.fetch_add(1);
      if (r >= cfg.runs) return;
      Dataset ds = generate_trial(cfg.n, SplitMix64::derive(cfg.seed, r));
      for (std::size_t p = 0; p < n_pairs; ++p) {
        std::vector<detail::RunCell> out(n_methods);
        detail::evaluate_run_pair(ds, cfg, cfg.pairs[p].first, cfg.pairs[p].second,
                                  out);
        std::copy(out.begin(), out.end(), cell_span(r, p));
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SimulationReport report;
  report.runs = cfg.runs;
  report.n = cfg.n;
  report.seed = cfg.seed;
  report.alpha = cfg.alpha;

  for (std::size_t p = 0; p < n_pairs; ++p) {
    PairReport pr;
    pr.arm_j = cfg.pairs[p].first;
    pr.arm_k = cfg.pairs[p].second;
    // Oracles use reserved substreams far outside the run range.
    pr.oracle = true_contrast_oracle(pr.arm_j, pr.arm_k, cfg.oracle_m,
                                     SplitMix64::derive(cfg.seed, (1ULL << 48) + p));
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      MethodReport mr;
      mr.method = cfg.methods[mi];
      std::vector<double> est, se;
      std::size_t covered = 0;
      for (std::size_t r = 0; r < cfg.runs; ++r) {
        const auto& cell = cell_span(r, p)[mi];
        if (cell.failed) {
          ++mr.failed;
          continue;
        }
        est.push_back(cell.contrast);
        se.push_back(cell.se);
        if (cell.lo <= pr.oracle && pr.oracle <= cell.hi) ++covered;
      }
      mr.completed = est.size();
      if (!est.empty()) {
        mr.bias = mean(est) - pr.oracle;
        mr.rel_bias_pct = 100.0 * mr.bias / pr.oracle;
        mr.sd = est.size() >= 2 ? std::sqrt(sample_variance(est)) : 0.0;
        mr.mean_se = mean(se);
        mr.coverage = static_cast<double>(covered) / static_cast<double>(est.size());
      }
      pr.methods.push_back(mr);
    }
    report.pairs.push_back(std::move(pr));
  }
  return report;
}

}  // namespace ptrial
