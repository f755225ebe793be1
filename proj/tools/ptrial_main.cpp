// Command-line front end: validate-design, analyze, simulate.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ptrial/cli.hpp"

namespace {

std::vector<ptrial::Method> parse_methods(const std::string& spec) {
  using ptrial::Method;
  if (spec == "all") {
    return {Method::Naive, Method::Ipw,   Method::Sipw, Method::Aipw,
            Method::Saipw, Method::Ps,    Method::Aps};
  }
  std::vector<Method> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(ptrial::method_from_name(tok));
  }
  if (out.empty()) throw ptrial::ConfigError("no methods given");
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust treatment-effect estimation for platform trials"};
  app.require_subcommand(1);

  // validate-design
  auto* validate = app.add_subcommand(
      "validate-design", "Compile a design file and check its assignment law");
  std::string design_path;
  validate->add_option("--design", design_path, "Design JSON file")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Estimate a treatment contrast");
  ptrial::AnalysisRequest req;
  std::string arms, methods = "all", covariates, model = "linear";
  std::string subset, contrast = "diff";
  double margin = 0.0;
  bool have_margin = false;
  analyze->add_option("--design", req.design_path, "Design JSON file")->required();
  analyze->add_option("--data", req.data_path, "Participant CSV file")->required();
  analyze->add_option("--columns", req.columns_path, "Column map JSON file")
      ->required();
  analyze->add_option("--arms", arms, "Arm pair j,k")->required();
  analyze->add_option("--method", methods, "Comma list or 'all'");
  analyze->add_option("--covariates", covariates,
                      "Adjustment covariates (declared in the column map)");
  analyze->add_option("--model", model, "linear | anhecova");
  analyze->add_flag("--center", req.center, "Center residuals per stratum");
  analyze->add_option("--subset", subset,
                      "arms-only | substudy=<id>[,<id>...] (restricted set)");
  analyze->add_option("--alpha", req.alpha, "Two-sided level (default 0.05)");
  analyze->add_option("--margin", margin, "Non-inferiority margin")
      ->trigger_on_parse()
      ->each([&](const std::string&) { have_margin = true; });
  analyze->add_option("--contrast", contrast, "diff | theta_jk | theta_kj");
  analyze->add_option("--out", req.out_path, "Report path (default stdout)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study");
  std::string config_path, out_prefix;
  unsigned threads = 0;
  simulate->add_option("--config", config_path, "Simulation config JSON")->required();
  simulate->add_option("--out", out_prefix, "Output prefix (.json/.txt)");
  simulate->add_option("--threads", threads, "Worker threads (0 = auto)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      return ptrial::cmd_validate_design(design_path, std::cout, std::cerr);
    }
    if (analyze->parsed()) {
      auto arm_list = split_csv(arms);
      if (arm_list.size() != 2) {
        std::cerr << "error: --arms expects j,k\n";
        return ptrial::exit_code::kBadInput;
      }
      req.arm_j = arm_list[0];
      req.arm_k = arm_list[1];
      req.methods = parse_methods(methods);
      req.covariates = split_csv(covariates);
      if (model == "linear") {
        req.model = ptrial::WorkingModelKind::Linear;
      } else if (model == "anhecova") {
        req.model = ptrial::WorkingModelKind::Anhecova;
      } else {
        std::cerr << "error: --model must be linear or anhecova\n";
        return ptrial::exit_code::kBadInput;
      }
      if (!subset.empty()) req.subset = subset;
      if (have_margin) req.margin = margin;
      req.contrast = contrast;
      return ptrial::cmd_analyze(req, std::cout, std::cerr);
    }
    return ptrial::cmd_simulate(config_path, out_prefix, threads, std::cout,
                                std::cerr);
  } catch (const ptrial::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ptrial::exit_code::kBadInput;
  }
}
