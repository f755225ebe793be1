#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>
#include <string>

#include "ptrial/design.hpp"
#include "ptrial/simulation.hpp"

using namespace ptrial;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const std::string kDataDir = PTRIAL_DATA_DIR;

}  // namespace

TEST_CASE("cf discontinuation design compiles to the published marginals") {
  auto design = parse_design(slurp(kDataDir + "/designs/simplify.json"));
  REQUIRE(design.arms.size() == 3);
  REQUIRE(design.rows.size() == 4);

  auto sched = compile_schedule(design);
  REQUIRE(sched.rows.size() == 6);  // two wildcard rows expand over EW

  auto pi = [&](std::initializer_list<std::pair<std::string, std::string>> z) {
    const ScheduleRow* row = sched.find(ZKey::of(z));
    REQUIRE(row != nullptr);
    return row->pi;
  };
  // Exact binary equality against the printed decimals.
  auto p = pi({{"HS", "1"}, {"DA", "1"}, {"EW", "EW1"}});
  REQUIRE(p[0] == 0.50);
  REQUIRE(p[1] == 0.25);
  REQUIRE(p[2] == 0.25);
  p = pi({{"HS", "1"}, {"DA", "1"}, {"EW", "EW2"}});
  REQUIRE(p[0] == 0.50);
  REQUIRE(p[1] == 0.375);
  REQUIRE(p[2] == 0.125);
  for (const char* ew : {"EW1", "EW2"}) {
    p = pi({{"HS", "1"}, {"DA", "0"}, {"EW", ew}});
    REQUIRE(p[0] == 0.50);
    REQUIRE(p[1] == 0.50);
    REQUIRE(p[2] == 0.0);
    p = pi({{"HS", "0"}, {"DA", "1"}, {"EW", ew}});
    REQUIRE(p[0] == 0.50);
    REQUIRE(p[1] == 0.0);
    REQUIRE(p[2] == 0.50);
  }
  REQUIRE(validate_schedule(sched).empty());
}

TEST_CASE("four-arm demo design compiles to its printed marginals") {
  auto sched = compile_schedule(simulation_design());
  auto pi = [&](const char* ew, const char* sub) {
    const ScheduleRow* row = sched.find(ZKey::of({{"ew", ew}, {"sub", sub}}));
    REQUIRE(row != nullptr);
    return row->pi;
  };
  auto p = pi("1", "1");
  REQUIRE((p[0] == 0.50 && p[1] == 0.20 && p[2] == 0.30 && p[3] == 0.0));
  p = pi("2", "1");
  REQUIRE((p[0] == 0.50 && p[1] == 0.15 && p[2] == 0.15 && p[3] == 0.20));
  p = pi("3", "1");
  REQUIRE((p[0] == 0.50 && p[1] == 0.20 && p[2] == 0.0 && p[3] == 0.30));
  for (const char* ew : {"1", "2", "3"}) {
    p = pi(ew, "0");
    REQUIRE((p[0] == 0.50 && p[1] == 0.50 && p[2] == 0.0 && p[3] == 0.0));
  }
  REQUIRE(validate_schedule(sched).empty());

  // The file fixture and the built-in design agree.
  auto from_file = parse_design(slurp(kDataDir + "/designs/simulation.json"));
  auto sched2 = compile_schedule(from_file);
  REQUIRE(sched2.rows.size() == sched.rows.size());
  for (const auto& row : sched.rows) {
    const ScheduleRow* other = sched2.find(row.z);
    REQUIRE(other != nullptr);
    REQUIRE(other->pi == row.pi);
  }
}

TEST_CASE("degenerate two-stage design equals the direct law") {
  std::string text = R"({
    "arms": ["1", "2"],
    "factors": {"w": ["a"]},
    "format": "sub-study",
    "rows": [{"z": {"w": "a"}, "substudies": {
      "only": {"prob": 1.0, "arm_probs": {"1": 0.5, "2": 0.5}}}}]
  })";
  auto sched = compile_schedule(parse_design(text));
  REQUIRE(sched.rows.size() == 1);
  REQUIRE(sched.rows[0].pi[0] == 0.5);
  REQUIRE(sched.rows[0].pi[1] == 0.5);
  REQUIRE(sched.rows[0].joint.has_value());
  REQUIRE((*sched.rows[0].joint)[0][0] == 0.5);
  REQUIRE((*sched.rows[0].joint)[1][0] == 0.5);
}

TEST_CASE("parse accepts a constant-ratio two-arm design") {
  std::string text = R"({
    "arms": ["1", "2"],
    "factors": {"w": ["a", "b"]},
    "format": "multi-arm",
    "rows": [{"z": {"w": "any"}, "probs": {"1": 0.5, "2": 0.5}}]
  })";
  auto design = parse_design(text);
  REQUIRE(design.rows.size() == 1);
  auto sched = compile_schedule(design);
  REQUIRE(sched.rows.size() == 2);
  REQUIRE_FALSE(sched.rows[0].joint.has_value());
}

TEST_CASE("row sums are validated") {
  std::string text = R"({
    "arms": ["1", "2"],
    "factors": {"w": ["a"]},
    "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"1": 0.6, "2": 0.6}}]
  })";
  REQUIRE_THROWS_WITH(parse_design(text),
                      Catch::Matchers::ContainsSubstring("row sum 1.2"));
}

TEST_CASE("schema violations are rejected") {
  REQUIRE_THROWS_AS(parse_design("{nope"), ParseError);
  REQUIRE_THROWS_AS(parse_design(R"({"arms": ["1"]})"), SchemaError);
  // Unknown top-level field
  REQUIRE_THROWS_AS(parse_design(R"({
    "arms": ["1", "2"], "factors": {"w": ["a"]}, "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"1": 0.5, "2": 0.5}}], "extra": 1})"),
                    SchemaError);
  // Unknown factor in a row
  REQUIRE_THROWS_AS(parse_design(R"({
    "arms": ["1", "2"], "factors": {"w": ["a"]}, "format": "multi-arm",
    "rows": [{"z": {"v": "a"}, "probs": {"1": 0.5, "2": 0.5}}]})"),
                    SchemaError);
  // Probability out of range
  REQUIRE_THROWS_AS(parse_design(R"({
    "arms": ["1", "2"], "factors": {"w": ["a"]}, "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"1": 1.5, "2": -0.5}}]})"),
                    ValueError);
  // Duplicate row
  REQUIRE_THROWS_AS(parse_design(R"({
    "arms": ["1", "2"], "factors": {"w": ["a"]}, "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"1": 0.5, "2": 0.5}},
             {"z": {"w": "a"}, "probs": {"1": 0.5, "2": 0.5}}]})"),
                    ValueError);
}

TEST_CASE("wildcard overlap is caught at compile time") {
  std::string text = R"({
    "arms": ["1", "2"],
    "factors": {"w": ["a", "b"]},
    "format": "multi-arm",
    "rows": [{"z": {"w": "any"}, "probs": {"1": 0.5, "2": 0.5}},
             {"z": {"w": "b"}, "probs": {"1": 0.25, "2": 0.75}}]
  })";
  REQUIRE_THROWS_AS(compile_schedule(parse_design(text)), ValueError);
}

TEST_CASE("deterministic assignment violates randomization strictness") {
  std::string text = R"({
    "arms": ["1", "2"],
    "factors": {"w": ["a"]},
    "format": "multi-arm",
    "rows": [{"z": {"w": "a"}, "probs": {"1": 1.0, "2": 0.0}}]
  })";
  REQUIRE_THROWS_AS(compile_schedule(parse_design(text)), ValueError);
}

TEST_CASE("validate_schedule flags hand-built inconsistencies") {
  AssignmentSchedule s;
  s.arms = {"1", "2"};
  ScheduleRow row;
  row.z = ZKey::of({{"w", "a"}});
  row.pi = {1.0, 0.0};
  s.rows.push_back(row);
  auto violations = validate_schedule(s);
  REQUIRE(violations.size() == 1);
  REQUIRE(violations[0].rule == "pi < 1");

  // Joint law that disagrees with the stored marginal.
  AssignmentSchedule s2;
  s2.arms = {"1", "2"};
  s2.substudies = {"s"};
  ScheduleRow row2;
  row2.z = ZKey::of({{"w", "a"}});
  row2.pi = {0.5, 0.5};
  row2.joint = {{0.51}, {0.49}};
  s2.rows.push_back(row2);
  auto v2 = validate_schedule(s2);
  REQUIRE(v2.size() == 2);
  REQUIRE(v2[0].rule == "marginal consistency");
  REQUIRE(v2[1].rule == "marginal consistency");
}

TEST_CASE("serialize then parse round-trips the design") {
  for (const char* file :
       {"/designs/simplify.json", "/designs/simulation.json",
        "/designs/two_window_substudies.json"}) {
    auto design = parse_design(slurp(kDataDir + file));
    auto again = parse_design(serialize_design(design));
    REQUIRE(again == design);
  }
}

TEST_CASE("zkey equality ignores factor order") {
  auto a = ZKey::of({{"x", "1"}, {"y", "2"}});
  auto b = ZKey::of({{"y", "2"}, {"x", "1"}});
  REQUIRE(a == b);
  REQUIRE_THROWS_AS(ZKey::of({{"x", "1"}, {"x", "2"}}), ValueError);
}
