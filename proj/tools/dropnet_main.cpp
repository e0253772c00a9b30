// dropnet command-line front end.
//
//   dropnet validate <graph.json>
//   dropnet analyze --config cfg.json [--output-dir DIR]
//   dropnet train   --config cfg.json --seed N [--output-dir DIR]
//   dropnet verify  --config cfg.json --seed N [--output-dir DIR] [--fault-injection gradient]
//   dropnet sweep   --config cfg.json --seed N --axis p --values 0.25,0.5,1.0 [--jobs N]
//
// Exit codes: 0 ok, 2 config error, 3 certification failed, 4 check failure,
// 5 numeric overflow.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dropnet/experiment.hpp"

namespace {

using namespace dropnet;

std::uint64_t resolve_seed(const ExperimentConfig& cfg, const std::optional<std::uint64_t>& flag,
                           const char* command) {
  if (flag) return *flag;
  if (cfg.seed) return *cfg.seed;
  fail(Errc::config_error, std::string(command) + " needs a seed (--seed or config \"seed\")");
}

int cmd_validate(const std::string& graph_file) {
  BaseGraph g = graph_from_json(config_detail::load_json_file(graph_file));
  const GraphMeta& m = g.validate();
  std::cout << "L=" << m.depth << ", |E|=" << m.edge_count << ", paths=" << m.path_count
            << ", inputs=" << m.input_count << ", outputs=" << m.output_count
            << ", arborescence=" << (m.arborescence ? "yes" : "no") << "\n";
  return 0;
}

int cmd_analyze(const ExperimentConfig& cfg, const std::string& outdir) {
  Experiment ex = build_experiment(cfg);
  AnalyzeResult res = run_analyze(cfg);
  print_analyze(std::cout, res, ex);
  json report = risk_report_to_json(res.report);
  if (res.stats) report["paths"] = path_stats_to_json(ex.graph, *res.stats, res.weights)["paths"];
  experiment_detail::write_text_file(std::filesystem::path(outdir) / cfg.output.report,
                                     report.dump(2) + "\n");
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& outdir) {
  TrainResult res = run_train(cfg, seed);
  write_train_outputs(cfg, res, outdir);
  const TraceRecord& last = res.trace.records.back();
  std::cout << "steps=" << res.trace.steps << " D=" << fmt17(last.D);
  if (std::isfinite(last.I)) std::cout << " I=" << fmt17(last.I);
  if (res.trace.steps > 0 && cfg.optimizer->kind == OptimizerConfig::Kind::sgd) {
    std::uint64_t hits = 0;
    for (auto h : res.trace.step_boundary_hits) hits += h;
    std::cout << " boundary_hit_fraction="
              << fmt17(static_cast<double>(hits) / static_cast<double>(res.trace.steps));
  }
  if (res.certificate)
    std::cout << " alpha_max=" << fmt17(res.certificate->alpha_max)
              << " tau=" << fmt17(res.certificate->tau);
  std::cout << "\n";
  return 0;
}

int cmd_verify(ExperimentConfig cfg, std::uint64_t seed, const std::string& fault,
               const std::string& outdir) {
  if (fault == "gradient")
    cfg.verify.fault = Fault::gradient;
  else
    require(fault.empty() || fault == "none", Errc::config_error,
            "--fault-injection must be 'gradient' or 'none'");
  std::vector<CheckResult> results = run_verify(cfg, seed);
  print_check_results(std::cout, results);
  json report = check_results_to_json(results);
  report["seed"] = seed;
  experiment_detail::write_text_file(std::filesystem::path(outdir) / cfg.output.report,
                                     report.dump(2) + "\n");
  return all_passed(results) ? 0 : 4;
}

int cmd_sweep(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& axis,
              const std::vector<double>& values, unsigned jobs, const std::string& outdir) {
  std::vector<SweepPoint> points = run_sweep(cfg, sweep_axis_from_string(axis), values, seed,
                                             outdir, jobs);
  std::cout << "value,measured_decay_rate,certified_alpha_tau_half\n";
  for (const SweepPoint& pt : points)
    std::cout << fmt17(pt.value) << ',' << fmt17(pt.measured_rate) << ','
              << fmt17(pt.certified_rate) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dropout training on fixed-depth DAG topologies"};
  app.require_subcommand(1);

  std::string graph_file, config_file, outdir = ".", axis = "p", fault;
  std::optional<std::uint64_t> seed_flag;
  std::vector<double> values;
  unsigned jobs = 0;

  CLI::App* validate = app.add_subcommand("validate", "check a graph file and print its shape");
  validate->add_option("graph", graph_file, "graph JSON file")->required();

  CLI::App* analyze = app.add_subcommand("analyze", "exact risk report and path table");
  analyze->add_option("--config", config_file)->required();
  analyze->add_option("--output-dir", outdir);

  CLI::App* train = app.add_subcommand("train", "run sgd or gd and write the trace");
  train->add_option("--config", config_file)->required();
  train->add_option("--seed", seed_flag);
  train->add_option("--output-dir", outdir);

  CLI::App* verify = app.add_subcommand("verify", "run the property-check suite");
  verify->add_option("--config", config_file)->required();
  verify->add_option("--seed", seed_flag);
  verify->add_option("--output-dir", outdir);
  verify->add_option("--fault-injection", fault, "plant a bug to test the harness");

  CLI::App* sweep = app.add_subcommand("sweep", "train across values of one axis");
  sweep->add_option("--config", config_file)->required();
  sweep->add_option("--seed", seed_flag);
  sweep->add_option("--axis", axis, "p | alpha | depth");
  sweep->add_option("--values", values, "comma separated values")->required()->delimiter(',');
  sweep->add_option("--jobs", jobs, "sweep worker pool size (default: cores)");
  sweep->add_option("--output-dir", outdir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(graph_file);
    dropnet::ExperimentConfig cfg = dropnet::load_config_file(config_file);
    if (analyze->parsed()) return cmd_analyze(cfg, outdir);
    if (train->parsed()) return cmd_train(cfg, resolve_seed(cfg, seed_flag, "train"), outdir);
    if (verify->parsed())
      return cmd_verify(cfg, resolve_seed(cfg, seed_flag, "verify"), fault, outdir);
    if (sweep->parsed())
      return cmd_sweep(cfg, resolve_seed(cfg, seed_flag, "sweep"), axis, values, jobs, outdir);
  } catch (const dropnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
