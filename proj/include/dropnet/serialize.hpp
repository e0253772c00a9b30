#pragma once
// File formats:
//   graph    {"vertices": [id, ...], "edges": [[src, dst], ...]}
//   weights  {"edges": [w0, w1, ...]}            (ordered by EdgeId)
//   data     [{"x": [...], "y": [...], "p": q}, ...]
//   traces   CSV with the fixed header
//              t,D,I,grad_norm2,envelope,pl_lhs,pl_rhs,boundary_hit,A_t,B_t,C_0,...
//            or JSONL with the same fields.
// CSV floats are printed with 17 significant digits ('.' decimal point, no
// locale), so equal runs produce byte-identical files.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dropnet/data.hpp"
#include "dropnet/dynamics.hpp"
#include "dropnet/graph.hpp"
#include "dropnet/masks.hpp"
#include "dropnet/network.hpp"
#include "dropnet/risk.hpp"

namespace dropnet {

using nlohmann::json;

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- graph ----

inline json graph_to_json(const BaseGraph& g) {
  json j;
  j["vertices"] = g.vertices();
  json edges = json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.source, e.target});
  j["edges"] = std::move(edges);
  return j;
}

inline BaseGraph graph_from_json(const json& j) {
  require(j.is_object() && j.contains("vertices") && j.contains("edges"), Errc::config_error,
          "graph file needs 'vertices' and 'edges'");
  std::vector<NodeId> vertices;
  for (const json& v : j.at("vertices")) {
    require(v.is_number_integer(), Errc::config_error, "vertex ids must be integers");
    vertices.push_back(v.get<NodeId>());
  }
  std::vector<Edge> edges;
  for (const json& e : j.at("edges")) {
    require(e.is_array() && e.size() == 2, Errc::config_error, "edges must be [src, dst] pairs");
    edges.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
  }
  return BaseGraph::from_edges(std::move(vertices), std::move(edges));
}

inline json graph_meta_to_json(const GraphMeta& m) {
  return json{{"L", m.depth},
              {"edges", m.edge_count},
              {"paths", m.path_count},
              {"inputs", m.input_count},
              {"outputs", m.output_count},
              {"arborescence", m.arborescence}};
}

// ---- weights ----

inline json weights_to_json(const Weights& w) { return json{{"edges", w.values()}}; }

inline Weights weights_from_json(const json& j, int edge_count) {
  require(j.is_object() && j.contains("edges"), Errc::config_error,
          "weights file needs an 'edges' array ordered by edge id");
  std::vector<double> values = j.at("edges").get<std::vector<double>>();
  require(static_cast<int>(values.size()) == edge_count, Errc::dimension_mismatch,
          "weights file has " + std::to_string(values.size()) + " entries, graph has " +
              std::to_string(edge_count) + " edges");
  return Weights(std::move(values));
}

// ---- data ----

inline json data_to_json(const DataDistribution& d) {
  json j = json::array();
  for (const DataPoint& p : d.points())
    j.push_back({{"x", p.sample.x}, {"y", p.sample.y}, {"p", p.prob}});
  return j;
}

inline DataDistribution data_from_json(const json& j) {
  require(j.is_array(), Errc::config_error, "data file must be a list of {x, y, p} records");
  std::vector<DataPoint> pts;
  for (const json& rec : j) {
    require(rec.is_object() && rec.contains("x") && rec.contains("y"), Errc::config_error,
            "data records need 'x' and 'y'");
    DataPoint p;
    p.sample.x = rec.at("x").get<std::vector<double>>();
    p.sample.y = rec.at("y").get<std::vector<double>>();
    p.prob = rec.value("p", 1.0);
    pts.push_back(std::move(p));
  }
  return DataDistribution::from_points(std::move(pts));
}

// ---- mask distribution config fragment ----
// {"kind": "dropconnect"|"dropout"|"cutout"|"all_ones"|"tabular"|"joint_tabular",
//  "p": 0.5, "c": 2, "table": [...]}

inline MaskDistribution mask_from_json(const BaseGraph& g, const json& j) {
  require(j.is_object() && j.contains("kind"), Errc::config_error, "mask config needs 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "all_ones") return MaskDistribution::all_ones(g);
  if (kind == "dropconnect") {
    require(j.contains("p"), Errc::config_error, "dropconnect needs 'p'");
    return MaskDistribution::dropconnect(g, j.at("p").get<double>());
  }
  if (kind == "dropout") {
    require(j.contains("p"), Errc::config_error, "dropout needs 'p'");
    return MaskDistribution::dropout(g, j.at("p").get<double>());
  }
  if (kind == "cutout") {
    require(j.contains("c"), Errc::config_error, "cutout needs 'c'");
    return MaskDistribution::cutout(g, j.at("c").get<int>());
  }
  if (kind == "tabular") {
    require(j.contains("table"), Errc::config_error, "tabular needs 'table'");
    std::vector<MaskPoint> table;
    for (const json& rec : j.at("table")) {
      MaskPoint pt;
      pt.mask = Mask::from_bits(rec.at("bits").get<std::vector<std::uint8_t>>());
      pt.prob = rec.at("p").get<double>();
      table.push_back(std::move(pt));
    }
    return MaskDistribution::tabular(g, std::move(table));
  }
  if (kind == "joint_tabular") {
    require(j.contains("table"), Errc::config_error, "joint_tabular needs 'table'");
    std::vector<JointPoint> table;
    for (const json& rec : j.at("table")) {
      JointPoint pt;
      pt.mask = Mask::from_bits(rec.at("bits").get<std::vector<std::uint8_t>>());
      pt.sample.x = rec.at("x").get<std::vector<double>>();
      pt.sample.y = rec.at("y").get<std::vector<double>>();
      pt.prob = rec.at("p").get<double>();
      table.push_back(std::move(pt));
    }
    return MaskDistribution::joint_tabular(g, std::move(table));
  }
  fail(Errc::config_error, "unknown mask kind '" + kind + "'");
}

// ---- report objects ----

inline json risk_report_to_json(const RiskReport& r) {
  json j{{"D", r.D}};
  if (r.decomposed) {
    j["J"] = r.J;
    j["R"] = r.R;
    j["disconnected_constant"] = r.disconnected_constant;
  }
  if (r.I) j["I"] = *r.I;
  if (r.D_star) j["D_star"] = *r.D_star;
  return j;
}

inline json path_stats_to_json(const BaseGraph& g, const PathStats& stats, const Weights& w) {
  std::vector<double> p = path_products(stats.paths, w);
  json rows = json::array();
  for (std::size_t i = 0; i < stats.paths.size(); ++i) {
    std::string chain = std::to_string(stats.paths[i].start);
    NodeId v = stats.paths[i].start;
    for (EdgeId e : stats.paths[i].edges) {
      v = g.edge(e).target;
      chain += ">" + std::to_string(v);
    }
    rows.push_back({{"path", chain},
                    {"eta", stats.terms[i].eta},
                    {"nu", stats.terms[i].nu},
                    {"z", stats.terms[i].z},
                    {"P", p[i]}});
  }
  return json{{"paths", std::move(rows)},
              {"nu_min", stats.nu_min},
              {"nu_max", stats.nu_max},
              {"nu_l1", stats.nu_l1}};
}

inline json certificate_to_json(const StepSizeCertificate& c) {
  return json{{"M", c.M},
              {"delta", c.delta},
              {"epsilon", c.epsilon},
              {"C_min0", c.c_min0},
              {"C0", c.c0},
              {"I0", c.i0},
              {"nu_min", c.nu_min},
              {"nu_max", c.nu_max},
              {"nu_l1", c.nu_l1},
              {"kappa", c.kappa},
              {"tau", c.tau},
              {"beta", c.beta},
              {"alpha_max", c.alpha_max},
              {"alpha_terms",
               {{"region", c.alpha_term_region},
                {"smoothness", c.alpha_term_smooth},
                {"rate", c.alpha_term_rate}}},
              {"N9", c.n9_ok},
              {"N10", c.n10_ok},
              {"violation", c.violation}};
}

// ---- traces ----

namespace detail {

inline std::string trace_field(double v) { return fmt17(v); }

// JSONL needs valid JSON literals, so non-finite values become null.
inline std::string json_field(double v) { return std::isfinite(v) ? fmt17(v) : "null"; }

inline std::string predicate_field(int v) { return v < 0 ? "nan" : std::to_string(v); }

inline std::string json_predicate(int v) { return v < 0 ? "null" : std::to_string(v); }

}  // namespace detail

inline void write_trace_header_csv(std::ostream& os, std::size_t conserved_count) {
  os << "t,D,I,grad_norm2,envelope,pl_lhs,pl_rhs,boundary_hit,A_t,B_t";
  for (std::size_t i = 0; i < conserved_count; ++i) os << ",C_" << i;
  os << "\n";
}

inline void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  const std::size_t k = trace.records.empty() ? 0 : trace.records.front().c.size();
  write_trace_header_csv(os, k);
  for (const TraceRecord& r : trace.records) {
    os << r.t << ',' << detail::trace_field(r.D) << ',' << detail::trace_field(r.I) << ','
       << detail::trace_field(r.grad_norm2) << ',' << detail::trace_field(r.envelope) << ','
       << detail::trace_field(r.pl_lhs) << ',' << detail::trace_field(r.pl_rhs) << ','
       << (r.boundary_hit ? 1 : 0) << ',' << detail::predicate_field(r.a_t) << ','
       << detail::predicate_field(r.b_t);
    for (double c : r.c) os << ',' << detail::trace_field(c);
    os << "\n";
  }
}

inline void write_trace_jsonl(std::ostream& os, const RunTrace& trace) {
  for (const TraceRecord& r : trace.records) {
    os << "{\"t\":" << r.t << ",\"D\":" << detail::json_field(r.D)
       << ",\"I\":" << detail::json_field(r.I)
       << ",\"grad_norm2\":" << detail::json_field(r.grad_norm2)
       << ",\"envelope\":" << detail::json_field(r.envelope)
       << ",\"pl_lhs\":" << detail::json_field(r.pl_lhs)
       << ",\"pl_rhs\":" << detail::json_field(r.pl_rhs)
       << ",\"boundary_hit\":" << (r.boundary_hit ? 1 : 0)
       << ",\"A_t\":" << detail::json_predicate(r.a_t)
       << ",\"B_t\":" << detail::json_predicate(r.b_t) << ",\"C\":[";
    for (std::size_t i = 0; i < r.c.size(); ++i)
      os << (i ? "," : "") << detail::json_field(r.c[i]);
    os << "]}\n";
  }
}

}  // namespace dropnet
