#pragma once
// Drives whole experiments from a config: analyze, train, verify, sweep.
// Everything here is deterministic given (config, seed); the CLI is a thin
// shell around these calls and the tests drive them in-process.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dropnet/config.hpp"
#include "dropnet/dynamics.hpp"
#include "dropnet/risk.hpp"
#include "dropnet/serialize.hpp"
#include "dropnet/verify.hpp"

namespace dropnet {

namespace experiment_detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::config_error, "cannot write '" + path.string() + "'");
  out << content;
}

}  // namespace experiment_detail

// ---- analyze ----------------------------------------------------------------

struct AnalyzeResult {
  RiskReport report;
  std::optional<PathStats> stats;
  Weights weights;
  GraphMeta meta;
};

inline AnalyzeResult run_analyze(const ExperimentConfig& cfg) {
  Experiment ex = build_experiment(cfg);
  AnalyzeResult out{.report = {}, .stats = {}, .weights = ex.w0, .meta = ex.graph.validate()};
  out.report = risk_report(ex.graph, ex.w0, ex.dist, ex.data, ex.act, cfg.support_cap);
  if (ex.act.is_linear() && !ex.dist.joint())
    out.stats = path_stats(ex.graph, ex.dist, ex.data, cfg.support_cap);
  return out;
}

inline void print_analyze(std::ostream& os, const AnalyzeResult& res, const Experiment& ex) {
  os << "L=" << res.meta.depth << ", |E|=" << res.meta.edge_count << ", paths="
     << res.meta.path_count << ", outputs=" << res.meta.output_count
     << ", arborescence=" << (res.meta.arborescence ? "yes" : "no") << "\n";
  os << "D = " << fmt17(res.report.D) << "\n";
  if (res.report.decomposed)
    os << "J = " << fmt17(res.report.J) << "  R = " << fmt17(res.report.R)
       << "  const = " << fmt17(res.report.disconnected_constant) << "\n";
  if (res.report.I)
    os << "I = " << fmt17(*res.report.I) << "  D_star = " << fmt17(*res.report.D_star) << "\n";
  if (res.stats) {
    const PathStats& stats = *res.stats;
    std::vector<double> p = path_products(stats.paths, res.weights);
    os << "path                     eta          nu           z            P\n";
    for (std::size_t i = 0; i < stats.paths.size(); ++i) {
      std::string chain = std::to_string(stats.paths[i].start);
      NodeId v = stats.paths[i].start;
      for (EdgeId e : stats.paths[i].edges) {
        v = ex.graph.edge(e).target;
        chain += ">" + std::to_string(v);
      }
      os << std::left << std::setw(24) << chain << std::right;
      char buf[128];
      std::snprintf(buf, sizeof(buf), " %-12.6g %-12.6g %-12.6g %-12.6g", stats.terms[i].eta,
                    stats.terms[i].nu, stats.terms[i].z, p[i]);
      os << buf << "\n";
    }
  }
}

// ---- train ------------------------------------------------------------------

struct TrainResult {
  RunTrace trace;
  Experiment experiment;
  std::optional<StepSizeCertificate> certificate;
};

inline TrainResult run_train(const ExperimentConfig& cfg, std::uint64_t seed) {
  require(cfg.optimizer.has_value(), Errc::config_error, "train needs an 'optimizer' section");
  Experiment ex = build_experiment(cfg);
  const OptimizerConfig& opt = *cfg.optimizer;

  std::optional<StepSizeCertificate> certificate;
  if (cfg.certification) {
    require(opt.kind == OptimizerConfig::Kind::gd, Errc::config_error,
            "certification applies to gd runs");
    require(ex.act.is_linear(), Errc::nonlinear_activation,
            "certification needs the linear activation");
    PathStats stats = path_stats(ex.graph, ex.dist, ex.data, cfg.support_cap);
    const double eps = cfg.certification->epsilon.value_or(path_excess(stats, ex.w0));
    StepSizeCertificate cert =
        certify(ex.graph, ex.w0, stats, cfg.certification->M, cfg.certification->delta, eps);
    require_certified(cert);
    certificate = std::move(cert);
  }

  RunTrace trace;
  if (opt.kind == OptimizerConfig::Kind::gd) {
    GdOptions gd;
    gd.steps = opt.steps;
    gd.diag_every = opt.diag_every;
    gd.support_cap = cfg.support_cap;
    gd.certificate = certificate;
    if (opt.alpha_certified) {
      require(certificate.has_value(), Errc::config_error,
              "alpha \"certified\" needs a certification block");
      gd.alpha = certificate->alpha_max;
    } else {
      gd.alpha = opt.alpha;
    }
    trace = gd_run(ex.graph, ex.act, ex.w0, ex.dist, ex.data, gd);
  } else {
    SgdOptions sgd;
    sgd.steps = opt.steps;
    sgd.diag_every = opt.diag_every;
    sgd.support_cap = cfg.support_cap;
    sgd.schedule = opt.schedule;
    sgd.projection = build_projection(opt.projection, ex.graph);
    Rng rng(seed);
    trace = sgd_run(ex.graph, ex.act, ex.w0, ex.dist, ex.data, sgd, rng);
  }
  return TrainResult{std::move(trace), std::move(ex), std::move(certificate)};
}

inline std::string render_trace(const RunTrace& trace, const std::string& format) {
  std::ostringstream os;
  if (format == "jsonl")
    write_trace_jsonl(os, trace);
  else
    write_trace_csv(os, trace);
  return os.str();
}

inline void write_train_outputs(const ExperimentConfig& cfg, const TrainResult& res,
                                const std::string& outdir) {
  namespace fs = std::filesystem;
  const fs::path dir(outdir);
  experiment_detail::write_text_file(dir / cfg.output.trace,
                                     render_trace(res.trace, cfg.output.format));
  experiment_detail::write_text_file(dir / cfg.output.weights,
                                     weights_to_json(res.trace.final_weights).dump(2) + "\n");
  if (res.certificate)
    experiment_detail::write_text_file(dir / cfg.output.certificate,
                                       certificate_to_json(*res.certificate).dump(2) + "\n");
}

// ---- verify -----------------------------------------------------------------

inline std::vector<CheckResult> run_verify(const ExperimentConfig& cfg, std::uint64_t seed) {
  VerifyConfig vc;
  vc.seed = seed;
  vc.fault = cfg.verify.fault;
  vc.selection = cfg.verify.suite;
  vc.parallel = cfg.verify.parallel;
  vc.stationarity_steps = cfg.verify.stationarity_steps;
  vc.rate_steps = cfg.verify.rate_steps;
  vc.conservation_steps = cfg.verify.conservation_steps;
  vc.variance_steps = cfg.verify.variance_steps;
  return run_all(vc);
}

inline void print_check_results(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-7s", check_status_name(r.status));
    os << buf << " " << r.name << "  (" << r.detail << ", " << std::fixed << std::setprecision(2)
       << r.runtime_s << "s)\n";
    os.unsetf(std::ios::fixed);
  }
  os << (all_passed(results) ? "all checks passed" : "CHECK FAILURE") << "\n";
}

// ---- sweep ------------------------------------------------------------------

enum class SweepAxis { p, alpha, depth };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "p") return SweepAxis::p;
  if (s == "alpha") return SweepAxis::alpha;
  if (s == "depth") return SweepAxis::depth;
  fail(Errc::config_error, "sweep axis must be p, alpha, or depth");
}

struct SweepPoint {
  double value = 0.0;
  double measured_rate = std::numeric_limits<double>::quiet_NaN();
  double certified_rate = std::numeric_limits<double>::quiet_NaN();
  std::string trace_file;
};

namespace experiment_detail {

// Decay rate in nats per step measured between the first and last record
// with a usable gap.
inline double measured_decay_rate(const RunTrace& trace) {
  auto gap = [&](const TraceRecord& r) {
    if (std::isfinite(r.I)) return r.I;
    if (std::isfinite(trace.d_floor)) return r.D - trace.d_floor;
    return std::numeric_limits<double>::quiet_NaN();
  };
  const TraceRecord* first = nullptr;
  const TraceRecord* last = nullptr;
  for (const TraceRecord& r : trace.records) {
    if (!(gap(r) > 0.0)) continue;
    if (!first) first = &r;
    last = &r;
  }
  if (!first || !last || first == last) return std::numeric_limits<double>::quiet_NaN();
  return (std::log(gap(*first)) - std::log(gap(*last))) /
         static_cast<double>(last->t - first->t);
}

inline ExperimentConfig patch_config(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig cfg = base;
  switch (axis) {
    case SweepAxis::p: {
      require(!cfg.mask.is_null(), Errc::config_error, "config needs a 'mask' section");
      const std::string kind = cfg.mask.value("kind", "");
      require(kind == "dropconnect" || kind == "dropout", Errc::config_error,
              "sweep over p needs a dropconnect or dropout mask");
      cfg.mask["p"] = value;
      break;
    }
    case SweepAxis::alpha: {
      require(cfg.optimizer.has_value(), Errc::config_error, "sweep over alpha needs an optimizer");
      if (cfg.optimizer->kind == OptimizerConfig::Kind::gd) {
        cfg.optimizer->alpha = value;
        cfg.optimizer->alpha_certified = false;
      } else {
        require(cfg.optimizer->schedule.kind() == StepSchedule::Kind::constant, Errc::config_error,
                "sweep over alpha needs a constant sgd schedule");
        cfg.optimizer->schedule = StepSchedule::constant(value);
      }
      break;
    }
    case SweepAxis::depth: {
      const int depth = static_cast<int>(value);
      require(depth >= 1 && static_cast<double>(depth) == value, Errc::config_error,
              "depth values must be positive integers");
      cfg.graph = json{{"inline", graph_to_json(reference::line(depth))}};
      // depth sweeps rebuild the chain, so weights must come from a rule
      require(!cfg.weights.is_null() && cfg.weights.contains("init"), Errc::config_error,
              "sweep over depth needs rule-based weights (init)");
      break;
    }
  }
  return cfg;
}

}  // namespace experiment_detail

// Runs one train per value on a worker pool; each point gets a seed derived
// from (seed, index) and writes its own trace file, so output bytes do not
// depend on scheduling.
inline std::vector<SweepPoint> run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                         const std::vector<double>& values, std::uint64_t seed,
                                         const std::string& outdir, unsigned jobs) {
  require(!values.empty(), Errc::config_error, "sweep needs at least one value");
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  namespace fs = std::filesystem;

  std::vector<SweepPoint> points(values.size());
  auto run_point = [&](std::size_t idx) {
    ExperimentConfig cfg = experiment_detail::patch_config(base, axis, values[idx]);
    TrainResult res = run_train(cfg, split_seed(seed, idx));
    SweepPoint pt;
    pt.value = values[idx];
    pt.measured_rate = experiment_detail::measured_decay_rate(res.trace);
    if (res.certificate) {
      const double alpha = cfg.optimizer->alpha_certified ? res.certificate->alpha_max
                                                          : cfg.optimizer->alpha;
      pt.certified_rate = alpha * res.certificate->tau / 2.0;
    }
    const std::string axis_name =
        axis == SweepAxis::p ? "p" : (axis == SweepAxis::alpha ? "alpha" : "depth");
    std::string stem = cfg.output.trace;
    const std::string ext = cfg.output.format == "jsonl" ? ".jsonl" : ".csv";
    if (auto dot = stem.rfind('.'); dot != std::string::npos) stem = stem.substr(0, dot);
    pt.trace_file = stem + "_" + axis_name + "_" + fmt17(values[idx]) + ext;
    experiment_detail::write_text_file(fs::path(outdir) / pt.trace_file,
                                       render_trace(res.trace, cfg.output.format));
    points[idx] = std::move(pt);
  };

  std::vector<std::exception_ptr> errors(values.size());
  auto guarded = [&](std::size_t idx) {
    try {
      run_point(idx);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  };
  std::size_t next = 0;
  while (next < values.size()) {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < jobs && next < values.size(); ++k, ++next)
      pool.emplace_back(guarded, next);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& err : errors)
    if (err) std::rethrow_exception(err);

  std::ostringstream summary;
  summary << "value,measured_decay_rate,certified_alpha_tau_half\n";
  for (const SweepPoint& pt : points)
    summary << fmt17(pt.value) << ',' << fmt17(pt.measured_rate) << ','
            << fmt17(pt.certified_rate) << "\n";
  experiment_detail::write_text_file(fs::path(outdir) / base.output.summary, summary.str());
  return points;
}

}  // namespace dropnet
