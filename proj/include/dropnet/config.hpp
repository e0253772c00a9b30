#pragma once
// Experiment configuration: a single JSON document wiring a graph, an
// activation, a mask distribution, data, weights, and an optimizer together.
// The schema is validated strictly; unknown keys are rejected so typos never
// silently change an experiment.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dropnet/common.hpp"
#include "dropnet/dynamics.hpp"
#include "dropnet/reference.hpp"
#include "dropnet/serialize.hpp"
#include "dropnet/verify.hpp"

namespace dropnet {

namespace config_detail {

inline void check_keys(const json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
  require(j.is_object(), Errc::config_error, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(allowed.count(it.key()) != 0, Errc::config_error,
            "unknown key '" + it.key() + "' in " + where);
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::config_error, "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(Errc::config_error, "invalid JSON in '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace config_detail

struct WeightsInit {
  enum class Kind { file, values, zeros, root_heavy };
  Kind kind = Kind::zeros;
  std::string file;
  std::vector<double> values;
  double root = 1.0;
  double leaf = 0.1;
};

struct OptimizerConfig {
  enum class Kind { sgd, gd };
  Kind kind = Kind::sgd;
  std::uint64_t steps = 1000;
  std::uint64_t diag_every = 1;
  // sgd
  StepSchedule schedule = StepSchedule::constant(0.01);
  json projection;  // parsed lazily, needs the graph for ball radii checks
  // gd
  double alpha = 0.01;
  bool alpha_certified = false;  // "alpha": "certified" takes alpha_max
};

struct CertificationConfig {
  double M = 0.0;
  double delta = 0.0;
  std::optional<double> epsilon;  // defaults to I(W0)
};

struct OutputConfig {
  std::string trace = "trace.csv";
  std::string format = "csv";  // or "jsonl"
  std::string weights = "weights_final.json";
  std::string certificate = "certificate.json";
  std::string report = "report.json";
  std::string summary = "summary.csv";
};

struct VerifySection {
  std::optional<std::vector<std::string>> suite;
  Fault fault = Fault::none;
  bool parallel = true;
  std::uint64_t stationarity_steps = 100000;
  std::uint64_t rate_steps = 10000;
  std::uint64_t conservation_steps = 1000;
  std::uint64_t variance_steps = 10000;
};

struct ExperimentConfig {
  json graph;
  json activation;
  json mask;
  json data;
  json weights;
  std::optional<OptimizerConfig> optimizer;
  std::optional<CertificationConfig> certification;
  std::optional<std::uint64_t> seed;
  std::size_t support_cap = MaskDistribution::kDefaultSupportCap;
  OutputConfig output;
  VerifySection verify;
};

inline ExperimentConfig config_from_json(const json& j) {
  config_detail::check_keys(j, "config",
                            {"graph", "activation", "mask", "data", "weights", "optimizer",
                             "certification", "seed", "support_cap", "output", "verify"});
  ExperimentConfig cfg;
  if (j.contains("graph")) {
    cfg.graph = j.at("graph");
    config_detail::check_keys(cfg.graph, "graph", {"file", "layered", "builtin", "inline"});
    require(cfg.graph.size() == 1, Errc::config_error,
            "graph needs exactly one of file/layered/builtin/inline");
  }
  if (j.contains("activation")) {
    cfg.activation = j.at("activation");
    config_detail::check_keys(cfg.activation, "activation", {"kind", "coefficients"});
  }
  if (j.contains("mask")) {
    cfg.mask = j.at("mask");
    config_detail::check_keys(cfg.mask, "mask", {"kind", "p", "c", "table"});
  }
  if (j.contains("data")) {
    cfg.data = j.at("data");
    config_detail::check_keys(cfg.data, "data", {"file", "points"});
    require(cfg.data.size() == 1, Errc::config_error, "data needs exactly one of file/points");
  }
  if (j.contains("weights")) {
    cfg.weights = j.at("weights");
    config_detail::check_keys(cfg.weights, "weights", {"file", "values", "init"});
    require(cfg.weights.size() == 1, Errc::config_error,
            "weights needs exactly one of file/values/init");
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    config_detail::check_keys(o, "optimizer",
                              {"kind", "T", "diag_every", "schedule", "projection", "alpha"});
    OptimizerConfig opt;
    const std::string kind = o.value("kind", "sgd");
    if (kind == "sgd")
      opt.kind = OptimizerConfig::Kind::sgd;
    else if (kind == "gd")
      opt.kind = OptimizerConfig::Kind::gd;
    else
      fail(Errc::config_error, "optimizer kind must be 'sgd' or 'gd'");
    opt.steps = o.value("T", std::uint64_t{1000});
    opt.diag_every = o.value("diag_every", std::uint64_t{1});
    if (o.contains("schedule")) {
      const json& s = o.at("schedule");
      config_detail::check_keys(s, "schedule", {"kind", "alpha", "a", "t0"});
      const std::string skind = s.value("kind", "constant");
      if (skind == "constant")
        opt.schedule = StepSchedule::constant(s.value("alpha", 0.01));
      else if (skind == "robbins_monro")
        opt.schedule = StepSchedule::robbins_monro(s.value("a", 1.0), s.value("t0", 1.0));
      else
        fail(Errc::config_error, "schedule kind must be 'constant' or 'robbins_monro'");
    }
    if (o.contains("projection")) {
      opt.projection = o.at("projection");
      config_detail::check_keys(opt.projection, "projection", {"kind", "M", "radii"});
    }
    if (o.contains("alpha")) {
      if (o.at("alpha").is_string()) {
        require(o.at("alpha").get<std::string>() == "certified", Errc::config_error,
                "alpha must be a number or \"certified\"");
        opt.alpha_certified = true;
      } else {
        opt.alpha = o.at("alpha").get<double>();
      }
    }
    cfg.optimizer = std::move(opt);
  }
  if (j.contains("certification")) {
    const json& c = j.at("certification");
    config_detail::check_keys(c, "certification", {"M", "delta", "epsilon"});
    CertificationConfig cert;
    require(c.contains("M") && c.contains("delta"), Errc::config_error,
            "certification needs 'M' and 'delta'");
    cert.M = c.at("M").get<double>();
    cert.delta = c.at("delta").get<double>();
    if (c.contains("epsilon")) cert.epsilon = c.at("epsilon").get<double>();
    cfg.certification = cert;
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("support_cap")) cfg.support_cap = j.at("support_cap").get<std::size_t>();
  if (j.contains("output")) {
    const json& o = j.at("output");
    config_detail::check_keys(o, "output",
                              {"trace", "format", "weights", "certificate", "report", "summary"});
    cfg.output.trace = o.value("trace", cfg.output.trace);
    cfg.output.format = o.value("format", cfg.output.format);
    require(cfg.output.format == "csv" || cfg.output.format == "jsonl", Errc::config_error,
            "output format must be 'csv' or 'jsonl'");
    cfg.output.weights = o.value("weights", cfg.output.weights);
    cfg.output.certificate = o.value("certificate", cfg.output.certificate);
    cfg.output.report = o.value("report", cfg.output.report);
    cfg.output.summary = o.value("summary", cfg.output.summary);
  }
  if (j.contains("verify")) {
    const json& v = j.at("verify");
    config_detail::check_keys(v, "verify",
                              {"suite", "fault_injection", "parallel", "stationarity_steps",
                               "rate_steps", "conservation_steps", "variance_steps"});
    if (v.contains("suite")) cfg.verify.suite = v.at("suite").get<std::vector<std::string>>();
    const std::string fault = v.value("fault_injection", "none");
    if (fault == "none")
      cfg.verify.fault = Fault::none;
    else if (fault == "gradient")
      cfg.verify.fault = Fault::gradient;
    else
      fail(Errc::config_error, "fault_injection must be 'none' or 'gradient'");
    cfg.verify.parallel = v.value("parallel", true);
    cfg.verify.stationarity_steps = v.value("stationarity_steps", cfg.verify.stationarity_steps);
    cfg.verify.rate_steps = v.value("rate_steps", cfg.verify.rate_steps);
    cfg.verify.conservation_steps = v.value("conservation_steps", cfg.verify.conservation_steps);
    cfg.verify.variance_steps = v.value("variance_steps", cfg.verify.variance_steps);
  }
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  return config_from_json(config_detail::load_json_file(path));
}

// Materialized experiment: everything resolved against the graph.
struct Experiment {
  BaseGraph graph;
  Activation act;
  MaskDistribution dist;
  DataDistribution data;
  Weights w0;
};

inline BaseGraph build_graph(const json& section) {
  require(!section.is_null(), Errc::config_error, "config needs a 'graph' section");
  if (section.contains("file")) return graph_from_json(config_detail::load_json_file(section.at("file")));
  if (section.contains("layered")) return BaseGraph::from_layered(section.at("layered").get<std::vector<int>>());
  if (section.contains("builtin")) return reference::by_name(section.at("builtin").get<std::string>());
  return graph_from_json(section.at("inline"));
}

inline Activation build_activation(const json& section) {
  if (section.is_null()) return Activation::linear();
  const std::string kind = section.value("kind", "linear");
  if (kind == "linear") return Activation::linear();
  if (kind == "sigmoid") return Activation::sigmoid();
  if (kind == "polynomial") {
    require(section.contains("coefficients"), Errc::config_error, "polynomial needs coefficients");
    return Activation::polynomial(section.at("coefficients").get<std::vector<double>>());
  }
  fail(Errc::config_error, "unknown activation '" + kind + "'");
}

inline Weights build_weights(const json& section, const BaseGraph& g) {
  if (section.is_null()) return Weights::zeros(g.edge_count());
  if (section.contains("file"))
    return weights_from_json(config_detail::load_json_file(section.at("file")), g.edge_count());
  if (section.contains("values")) {
    std::vector<double> v = section.at("values").get<std::vector<double>>();
    require(static_cast<int>(v.size()) == g.edge_count(), Errc::dimension_mismatch,
            "weights values length does not match edge count");
    return Weights(std::move(v));
  }
  const json& init = section.at("init");
  config_detail::check_keys(init, "weights.init", {"kind", "root", "leaf"});
  const std::string kind = init.value("kind", "zeros");
  if (kind == "zeros") return Weights::zeros(g.edge_count());
  if (kind == "root_heavy")
    return reference::root_heavy(g, init.value("root", 1.0), init.value("leaf", 0.1));
  fail(Errc::config_error, "unknown weights init '" + kind + "'");
}

inline Experiment build_experiment(const ExperimentConfig& cfg) {
  BaseGraph g = build_graph(cfg.graph);
  Activation act = build_activation(cfg.activation);
  require(!cfg.mask.is_null(), Errc::config_error, "config needs a 'mask' section");
  MaskDistribution dist = mask_from_json(g, cfg.mask);
  DataDistribution data;
  if (!cfg.data.is_null()) {
    data = cfg.data.contains("file")
               ? data_from_json(config_detail::load_json_file(cfg.data.at("file")))
               : data_from_json(cfg.data.at("points"));
  } else if (dist.joint()) {
    // marginal of the joint table stands in where plain data would
    std::vector<DataPoint> pts;
    for (const JointPoint& pt : dist.joint_table()) pts.push_back({pt.sample, pt.prob});
    data = DataDistribution::from_points(std::move(pts));
  } else {
    fail(Errc::config_error, "config needs a 'data' section");
  }
  Weights w0 = build_weights(cfg.weights, g);
  return Experiment{std::move(g), act, std::move(dist), std::move(data), std::move(w0)};
}

inline ProjectionSet build_projection(const json& section, const BaseGraph&) {
  if (section.is_null()) return ProjectionSet::none();
  const std::string kind = section.value("kind", "none");
  if (kind == "none") return ProjectionSet::none();
  if (kind == "box") {
    require(section.contains("M"), Errc::config_error, "box projection needs 'M'");
    return ProjectionSet::box(section.at("M").get<double>());
  }
  if (kind == "layer_frobenius_ball") {
    require(section.contains("radii"), Errc::config_error, "ball projection needs 'radii'");
    return ProjectionSet::layer_frobenius_ball(section.at("radii").get<std::vector<double>>());
  }
  fail(Errc::config_error, "unknown projection '" + kind + "'");
}

}  // namespace dropnet
