#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgg/config.hpp"
#include "sgg/errors.hpp"
#include "sgg/pipeline.hpp"

namespace {

sgg::RunConfig load_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  sgg::RunConfig cfg =
      config_path.empty() ? sgg::RunConfig{} : sgg::RunConfig::load(config_path);
  for (const std::string& kv : overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw sgg::ConfigError("--set expects key.path=value, got '" + kv + "'");
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (const char* env = std::getenv("SGG_REPORT_DIR"); env && *env) cfg.paths.report_dir = env;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scene graph generation lab: synthetic scenes, pair pruning, relation prediction"};
  app.require_subcommand(1);
  app.fallthrough();  // -c / --set may follow the subcommand

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "run configuration JSON");
  app.add_option("--set", overrides, "override a config key by dotted path (key.path=value)");

  auto* gen = app.add_subcommand("generate", "generate the synthetic dataset and manifest");

  std::string stage;
  auto* train = app.add_subcommand("train", "train a stage from the dataset");
  train->add_option("stage", stage, "ppg | rpcm")->required();

  std::string task = "predcls";
  auto* evaluate = app.add_subcommand("evaluate", "evaluate the test split and write reports");
  evaluate->add_option("task", task, "predcls | sgcls | sgdet");

  std::vector<std::string> report_inputs;
  std::string report_out = ".";
  auto* report = app.add_subcommand("report", "merge report CSVs into a table and plots");
  report->add_option("csvs", report_inputs, "report CSV files")->required();
  report->add_option("-o,--out", report_out, "output directory");

  std::string selftest_dir = "selftest_reports";
  auto* selftest = app.add_subcommand("selftest", "run the built-in end-to-end pipeline check");
  selftest->add_option("-o,--out", selftest_dir, "report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      sgg::pipeline::cmd_generate(load_config(config_path, overrides));
    } else if (train->parsed()) {
      sgg::pipeline::cmd_train(load_config(config_path, overrides), stage);
    } else if (evaluate->parsed()) {
      sgg::eval::EvalReport rep =
          sgg::pipeline::cmd_evaluate(load_config(config_path, overrides), task);
      std::cout << sgg::eval::report_csv(rep);
    } else if (report->parsed()) {
      sgg::pipeline::cmd_report(report_inputs, report_out);
    } else if (selftest->parsed()) {
      if (const char* env = std::getenv("SGG_REPORT_DIR"); env && *env) selftest_dir = env;
      sgg::pipeline::cmd_selftest(selftest_dir);
      std::cout << "selftest ok\n";
    }
  } catch (const sgg::UserError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
