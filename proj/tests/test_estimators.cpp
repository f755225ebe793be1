#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ptrial/estimators.hpp"
#include "ptrial/rng.hpp"
#include "ptrial/simulation.hpp"

using namespace ptrial;

namespace {

// Reference fixture: two strata with weight pairs (0.5, 0.5) and
// (0.5, 0.25), a third arm present in the second stratum, n_jk = 7.
//   stratum a: arm-j outcomes {1, 3}, arm-k outcomes {2, 4}
//   stratum b: arm-j {5}, arm-k {6}, arm-l {0}
Dataset d1_fixture() {
  auto design = parse_design(R"({
    "arms": ["j", "k", "l"],
    "factors": {"w": ["a", "b"]},
    "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"j": 0.5, "k": 0.5}},
             {"z": {"w": "b"}, "probs": {"j": 0.5, "k": 0.25, "l": 0.25}}]
  })");
  AssignmentSchedule sched = compile_schedule(design);
  std::vector<ParticipantRecord> records;
  int next = 1;
  auto add = [&](const char* w, const char* arm, double y) {
    ParticipantRecord r;
    r.id = "r" + std::to_string(next++);
    r.z = ZKey::of({{"w", w}});
    r.arm = sched.arm_index(arm);
    r.outcome = y;
    r.schedule_row = static_cast<std::size_t>(sched.find(r.z) - sched.rows.data());
    records.push_back(std::move(r));
  };
  add("a", "j", 1.0);
  add("a", "j", 3.0);
  add("a", "k", 2.0);
  add("a", "k", 4.0);
  add("b", "j", 5.0);
  add("b", "k", 6.0);
  add("b", "l", 0.0);
  return Dataset(std::move(sched), std::move(records), {}, {}, 0);
}

// Constant-prediction stand-in for a fitted model.
FittedModel constant_model(const AnalysisSet& aset, const Dataset& data,
                           const std::string& arm, double value) {
  auto m = fit_linear(aset, arm, CovariateSpec{}, data);
  std::vector<double> offsets(m.count_strata());
  for (std::size_t h = 0; h < offsets.size(); ++h) {
    offsets[h] = value - m.blocks()[0](0);
  }
  return m.with_offsets(offsets);
}

// Small random datasets for the exact-identity suite: 2-4 strata,
// random weights, every stratum populated in both arms.
Dataset random_dataset(SplitMix64& rng) {
  int n_strata = 2 + static_cast<int>(rng.next() % 3);
  ordered_json doc;
  doc["arms"] = {"j", "k", "l"};
  ordered_json levels = ordered_json::array();
  for (int s = 0; s < n_strata; ++s) levels.push_back("s" + std::to_string(s));
  doc["factors"] = {{"w", levels}};
  doc["format"] = "multi-arm";
  doc["rows"] = ordered_json::array();
  for (int s = 0; s < n_strata; ++s) {
    double pj = 0.2 + 0.4 * rng.next_double();
    double pk = 0.1 + 0.5 * (1.0 - pj) * rng.next_double();
    double pl = 1.0 - pj - pk;
    ordered_json row;
    row["z"] = {{"w", "s" + std::to_string(s)}};
    row["probs"] = {{"j", pj}, {"k", pk}, {"l", pl}};
    doc["rows"].push_back(row);
  }
  auto design = parse_design(doc.dump());
  AssignmentSchedule sched = compile_schedule(design);

  std::vector<ParticipantRecord> records;
  int next = 1;
  for (int s = 0; s < n_strata; ++s) {
    int per_arm_j = 2 + static_cast<int>(rng.next() % 4);
    int per_arm_k = 2 + static_cast<int>(rng.next() % 4);
    int extra_l = static_cast<int>(rng.next() % 3);
    auto add = [&](const char* arm) {
      ParticipantRecord r;
      r.id = "r" + std::to_string(next++);
      r.z = ZKey::of({{"w", "s" + std::to_string(s)}});
      r.arm = sched.arm_index(arm);
      r.numeric_x = {rng.normal()};
      r.outcome = rng.normal() * 2.0 + s;
      r.schedule_row = static_cast<std::size_t>(sched.find(r.z) - sched.rows.data());
      records.push_back(std::move(r));
    };
    for (int i = 0; i < per_arm_j; ++i) add("j");
    for (int i = 0; i < per_arm_k; ++i) add("k");
    for (int i = 0; i < extra_l; ++i) add("l");
  }
  return Dataset(std::move(sched), std::move(records), {"x"}, {}, 0);
}

}  // namespace

TEST_CASE("reference fixture: unweighted arm means") {
  auto data = d1_fixture();
  auto aset = build_ece(data, "j", "k");
  REQUIRE(aset.n() == 7);
  auto est = estimate_naive(aset, data);
  REQUIRE(est.theta_jk == Catch::Approx(3.0).epsilon(1e-14));
  REQUIRE(est.theta_kj == Catch::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("reference fixture: inverse probability weighting") {
  auto data = d1_fixture();
  auto aset = build_ece(data, "j", "k");
  auto est = estimate_ipw(aset, data);
  REQUIRE(est.theta_jk == Catch::Approx(18.0 / 7.0).epsilon(1e-14));
  REQUIRE(est.theta_kj == Catch::Approx(36.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("reference fixture: stabilized weighting") {
  auto data = d1_fixture();
  auto aset = build_ece(data, "j", "k");
  auto est = estimate_sipw(aset, data);
  REQUIRE(est.theta_jk == Catch::Approx(3.0).epsilon(1e-14));
  REQUIRE(est.theta_kj == Catch::Approx(4.5).epsilon(1e-14));
}

TEST_CASE("reference fixture: post-stratification") {
  auto data = d1_fixture();
  auto aset = build_ece(data, "j", "k");
  auto strata = build_strata(aset);
  auto est = estimate_ps(aset, data, strata);
  REQUIRE(est.theta_jk == Catch::Approx(23.0 / 7.0).epsilon(1e-14));
  REQUIRE(est.theta_kj == Catch::Approx(30.0 / 7.0).epsilon(1e-14));
  REQUIRE(est.strata.size() == 2);
  REQUIRE(est.strata[0].mean_j == 2.0);
  REQUIRE(est.strata[1].mean_j == 5.0);
}

TEST_CASE("reference fixture: augmented estimator with intercept models") {
  auto data = d1_fixture();
  auto aset = build_ece(data, "j", "k");
  // Intercept-only fits equal the arm means 3 and 4.
  auto mj = fit_linear(aset, "j", CovariateSpec{}, data);
  auto mk = fit_linear(aset, "k", CovariateSpec{}, data);
  REQUIRE(mj.blocks()[0](0) == Catch::Approx(3.0).epsilon(1e-14));
  REQUIRE(mk.blocks()[0](0) == Catch::Approx(4.0).epsilon(1e-14));

  auto est = estimate_aipw(aset, data, mj, mk);
  // theta_jk: (1/7)((1-3)/.5 + (3-3)/.5 + (5-3)/.5) + 3 = 0 + 3
  REQUIRE(est.theta_jk == Catch::Approx(3.0).epsilon(1e-14));
  // theta_kj: (1/7)((2-4)/.5 + (4-4)/.5 + (6-4)/.25) + 4 = 4/7 + 4
  REQUIRE(est.theta_kj == Catch::Approx(4.0 + 4.0 / 7.0).epsilon(1e-14));
  REQUIRE(est.aux_kj == Catch::Approx(4.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("single stratum: naive equals stabilized weighting") {
  SplitMix64 rng(41);
  auto design = parse_design(R"({
    "arms": ["j", "k"],
    "factors": {"w": ["a"]},
    "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"j": 0.3, "k": 0.7}}]
  })");
  AssignmentSchedule sched = compile_schedule(design);
  std::vector<ParticipantRecord> records;
  for (int i = 0; i < 30; ++i) {
    ParticipantRecord r;
    r.id = std::to_string(i);
    r.z = ZKey::of({{"w", "a"}});
    r.arm = i % 3 == 0 ? 0 : 1;
    r.outcome = rng.normal();
    r.schedule_row = 0;
    records.push_back(std::move(r));
  }
  Dataset data(std::move(sched), std::move(records), {}, {}, 0);
  auto aset = build_ece(data, "j", "k");
  auto naive = estimate_naive(aset, data);
  auto sipw = estimate_sipw(aset, data);
  REQUIRE(naive.theta_jk == Catch::Approx(sipw.theta_jk).epsilon(1e-13));
  REQUIRE(naive.theta_kj == Catch::Approx(sipw.theta_kj).epsilon(1e-13));
}

TEST_CASE("degenerate arms raise errors") {
  auto design = parse_design(R"({
    "arms": ["j", "k"],
    "factors": {"w": ["a"]},
    "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"j": 0.5, "k": 0.5}}]
  })");
  AssignmentSchedule sched = compile_schedule(design);
  std::vector<ParticipantRecord> records;
  ParticipantRecord r;
  r.id = "solo";
  r.z = ZKey::of({{"w", "a"}});
  r.arm = 0;
  r.outcome = 1.0;
  r.schedule_row = 0;
  records.push_back(r);
  Dataset data(std::move(sched), std::move(records), {}, {}, 0);
  auto aset = build_ece(data, "j", "k");
  REQUIRE_THROWS_AS(estimate_naive(aset, data), DegenerateArmError);
  REQUIRE_THROWS_AS(estimate_ipw(aset, data), DegenerateArmError);

  // Post-stratification also fails when one stratum lacks an arm.
  auto data2 = d1_fixture();
  auto aset2 = build_ece(data2, "j", "l");
  auto strata2 = build_strata(aset2);
  REQUIRE_THROWS_AS(estimate_ps(aset2, data2, strata2), DegenerateArmError);
}

TEST_CASE("exact identity suite on random datasets") {
  SplitMix64 rng(20240501);
  for (int trial = 0; trial < 100; ++trial) {
    auto data = random_dataset(rng);
    auto aset = build_ece(data, "j", "k");
    auto strata = build_strata(aset);
    auto zero_j = constant_model(aset, data, "j", 0.0);
    auto zero_k = constant_model(aset, data, "k", 0.0);

    auto close = [](double a, double b) {
      return std::abs(a - b) <= 1e-10 * std::max({1.0, std::abs(a), std::abs(b)});
    };

    // Augmentation with a zero model collapses to plain weighting.
    auto ipw = estimate_ipw(aset, data);
    auto aipw0 = estimate_aipw(aset, data, zero_j, zero_k);
    REQUIRE(close(aipw0.theta_jk, ipw.theta_jk));
    REQUIRE(close(aipw0.theta_kj, ipw.theta_kj));

    auto sipw = estimate_sipw(aset, data);
    auto saipw0 = estimate_saipw(aset, data, zero_j, zero_k);
    REQUIRE(close(saipw0.theta_jk, sipw.theta_jk));
    REQUIRE(close(saipw0.theta_kj, sipw.theta_kj));

    auto ps = estimate_ps(aset, data, strata);
    auto aps0 = estimate_aps(aset, data, strata, zero_j, zero_k);
    REQUIRE(close(aps0.theta_jk, ps.theta_jk));
    REQUIRE(close(aps0.theta_kj, ps.theta_kj));

    // Stratum-arm-mean models make the stabilized augmented estimator
    // equal post-stratification, record by record.
    auto mean_j = fit_anhecova(aset, "j", CovariateSpec{}, data);
    auto mean_k = fit_anhecova(aset, "k", CovariateSpec{}, data);
    auto saipw_means = estimate_saipw(aset, data, mean_j, mean_k);
    REQUIRE(close(saipw_means.theta_jk, ps.theta_jk));
    REQUIRE(close(saipw_means.theta_kj, ps.theta_kj));

    // Centered models align all three augmented estimators.
    CovariateSpec spec;
    spec.numeric = {"x"};
    auto mj = center_model(fit_linear(aset, "j", spec, data), aset, data);
    auto mk = center_model(fit_linear(aset, "k", spec, data), aset, data);
    auto a = estimate_aipw(aset, data, mj, mk);
    auto sa = estimate_saipw(aset, data, mj, mk);
    auto ap = estimate_aps(aset, data, strata, mj, mk);
    REQUIRE(close(a.theta_jk, sa.theta_jk));
    REQUIRE(close(sa.theta_jk, ap.theta_jk));
    REQUIRE(close(a.theta_kj, sa.theta_kj));
    REQUIRE(close(sa.theta_kj, ap.theta_kj));

    // Outcome shifts move both stabilized components by the shift.
    const double c = 11.25;
    auto shifted_records = data.records();
    for (auto& rec : shifted_records) rec.outcome += c;
    Dataset shifted(data.schedule(), std::move(shifted_records), {"x"}, {}, 0);
    auto aset_shifted = build_ece(shifted, "j", "k");
    auto sipw_shifted = estimate_sipw(aset_shifted, shifted);
    REQUIRE(close(sipw_shifted.theta_jk - sipw.theta_jk, c));
    REQUIRE(close(sipw_shifted.theta_kj - sipw.theta_kj, c));
    REQUIRE(close(sipw_shifted.theta_jk - sipw_shifted.theta_kj,
                  sipw.theta_jk - sipw.theta_kj));
  }
}

TEST_CASE("record order never changes an estimate") {
  SplitMix64 rng(77);
  auto data = random_dataset(rng);
  auto aset = build_ece(data, "j", "k");
  auto strata = build_strata(aset);
  auto sipw = estimate_sipw(aset, data);
  auto ps = estimate_ps(aset, data, strata);

  // Reverse the records.
  auto reversed_records = data.records();
  std::reverse(reversed_records.begin(), reversed_records.end());
  Dataset reversed(data.schedule(), std::move(reversed_records), {"x"}, {}, 0);
  auto aset_r = build_ece(reversed, "j", "k");
  auto strata_r = build_strata(aset_r);
  auto sipw_r = estimate_sipw(aset_r, reversed);
  auto ps_r = estimate_ps(aset_r, reversed);
  REQUIRE(sipw_r.theta_jk == Catch::Approx(sipw.theta_jk).epsilon(1e-12));
  REQUIRE(sipw_r.theta_kj == Catch::Approx(sipw.theta_kj).epsilon(1e-12));
  REQUIRE(ps_r.theta_jk == Catch::Approx(ps.theta_jk).epsilon(1e-12));
  REQUIRE(ps_r.theta_kj == Catch::Approx(ps.theta_kj).epsilon(1e-12));
}

TEST_CASE("non-naive estimators agree with the oracle at large n") {
  // One large trial; every weighting/stratification estimator lands
  // near the oracle value while the naive mean does not.
  const std::size_t n = 100'000;
  auto ds = generate_trial(n, 99);
  double oracle = true_contrast_oracle("2", "1", 2'000'000, 123);

  auto aset = build_ece(ds, "2", "1");
  auto strata = build_strata(aset);
  CovariateSpec spec;
  spec.numeric = {"x_c", "x_b", "z_sub"};
  auto mj = fit_linear(aset, "2", spec, ds);
  auto mk = fit_linear(aset, "1", spec, ds);

  auto contrast = [](const PairEstimate& e) { return e.theta_jk - e.theta_kj; };
  // 3 MC standard errors at this n, using the rough table SDs.
  const double tol = 3.0 * 0.25 / std::sqrt(static_cast<double>(n) / 1000.0);
  REQUIRE(contrast(estimate_ipw(aset, ds)) == Catch::Approx(oracle).margin(2.5 * tol));
  REQUIRE(contrast(estimate_sipw(aset, ds)) == Catch::Approx(oracle).margin(tol));
  REQUIRE(contrast(estimate_saipw(aset, ds, mj, mk)) ==
          Catch::Approx(oracle).margin(tol));
  REQUIRE(contrast(estimate_ps(aset, ds, strata)) == Catch::Approx(oracle).margin(tol));
  REQUIRE(contrast(estimate_aps(aset, ds, strata, mj, mk)) ==
          Catch::Approx(oracle).margin(tol));
  // The naive mean sits near its own limit, far from the oracle.
  double naive_limit = naive_limit_oracle("2", "1", 2'000'000, 123);
  REQUIRE(contrast(estimate_naive(aset, ds)) ==
          Catch::Approx(naive_limit).margin(tol));
  REQUIRE(std::abs(contrast(estimate_naive(aset, ds)) - oracle) > 0.15);
}
