#pragma once
// Small reference topologies and problems shared by the verification suite,
// the CLI builtins, and the tests.

#include <cmath>
#include <string>
#include <vector>

#include "dropnet/data.hpp"
#include "dropnet/graph.hpp"
#include "dropnet/masks.hpp"
#include "dropnet/network.hpp"

namespace dropnet::reference {

// Single chain of `depth` edges: vertices 0..depth.
inline BaseGraph line(int depth) {
  require(depth >= 1, Errc::empty_dims, "line depth must be >= 1");
  std::vector<NodeId> vertices;
  std::vector<Edge> edges;
  for (int v = 0; v <= depth; ++v) vertices.push_back(v);
  for (int v = 0; v < depth; ++v) edges.push_back({v, v + 1});
  return BaseGraph::from_edges(std::move(vertices), std::move(edges));
}

// Depth-3 arborescence: one root fanning out to 3, then 4 internal vertices,
// then 7 outputs. 14 edges, 7 paths.
inline BaseGraph depth3_tree() {
  std::vector<NodeId> vertices;
  for (int v = 0; v < 15; ++v) vertices.push_back(v);
  std::vector<Edge> edges = {{0, 1}, {0, 2}, {0, 3},            // root fan-out
                             {1, 4}, {1, 5}, {2, 6},  {3, 7},   // middle layer
                             {4, 8}, {4, 9}, {5, 10}, {5, 11},  // leaves
                             {6, 12}, {7, 13}, {7, 14}};
  return BaseGraph::from_edges(std::move(vertices), std::move(edges));
}

// Smallest non-tree DAG: two length-2 paths sharing one output.
inline BaseGraph diamond() {
  return BaseGraph::from_edges({0, 1, 2, 3}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
}

// depth3_tree with all edges reversed: 7 inputs compress into a single output,
// so paths overlap and the cross-path term is nonzero.
inline BaseGraph anti_tree() {
  BaseGraph t = depth3_tree();
  std::vector<Edge> reversed;
  for (const Edge& e : t.edges()) reversed.push_back({e.target, e.source});
  return BaseGraph::from_edges(t.vertices(), std::move(reversed));
}

inline BaseGraph by_name(const std::string& name) {
  if (name == "single_edge") return line(1);
  if (name == "line2") return line(2);
  if (name == "line3") return line(3);
  if (name == "depth3_tree") return depth3_tree();
  if (name == "diamond") return diamond();
  if (name == "anti_tree") return anti_tree();
  fail(Errc::config_error, "unknown builtin graph '" + name + "'");
}

// Root-heavy initialization: every non-leaf edge gets `root`, every leaf
// edge gets `leaf`. Keeps the conserved quantities safely positive.
inline Weights root_heavy(const BaseGraph& g, double root, double leaf) {
  Weights w = Weights::zeros(g.edge_count());
  for (EdgeId e : g.non_leaf_edges()) w[e] = root;
  for (EdgeId e : g.leaf_edges()) w[e] = leaf;
  return w;
}

inline DataDistribution singleton_data(std::vector<double> x, std::vector<double> y) {
  return DataDistribution::from_points({{{std::move(x), std::move(y)}, 1.0}});
}

struct Problem {
  std::string name;
  BaseGraph graph;
  Activation act = Activation::linear();
  MaskDistribution dist;
  DataDistribution data;
  Weights w0;
};

// One weight, one sample: D(w) = p (2 - w)^2 + 4 (1 - p), minimized at w = 2.
inline Problem single_edge(double p = 0.5) {
  BaseGraph g = line(1);
  MaskDistribution dist = MaskDistribution::dropconnect(g, p);
  return {"single_edge", g, Activation::linear(), std::move(dist), singleton_data({1.0}, {2.0}),
          Weights::zeros(1)};
}

// The depth-2 chain with hand-checkable certificate numbers:
// W0 = (1, 0.1), M = 2, delta = 0.3, data {X=1, Y=1}, dropconnect(1/2).
inline Problem line2_hand() {
  BaseGraph g = line(2);
  MaskDistribution dist = MaskDistribution::dropconnect(g, 0.5);
  return {"line2_hand", g, Activation::linear(), std::move(dist), singleton_data({1.0}, {1.0}),
          Weights({1.0, 0.1})};
}

// The depth-3 tree with a root-heavy start inside the certified region.
inline Problem depth3_tree_certified(double p = 0.5) {
  BaseGraph g = depth3_tree();
  MaskDistribution dist = MaskDistribution::dropconnect(g, p);
  DataDistribution data =
      singleton_data({1.0}, {0.9, 0.5, 1.1, 0.7, 1.2, 0.4, 0.8});
  Weights w0 = root_heavy(g, 1.0, 0.1);
  return {"depth3_tree", g, Activation::linear(), std::move(dist), std::move(data), std::move(w0)};
}

inline Problem diamond_problem() {
  BaseGraph g = diamond();
  MaskDistribution dist = MaskDistribution::dropconnect(g, 0.5);
  DataDistribution data =
      DataDistribution::from_points({{{{1.0}, {1.5}}, 0.5}, {{{-0.5}, {0.75}}, 0.5}});
  return {"diamond", g, Activation::linear(), std::move(dist), std::move(data),
          Weights({0.8, -0.4, 0.6, 1.1})};
}

inline DataDistribution three_point_data(int d_in, int d_out) {
  // fixed, loosely scaled points; probabilities deliberately uneven
  std::vector<DataPoint> pts;
  const double probs[3] = {0.5, 0.3, 0.2};
  for (int k = 0; k < 3; ++k) {
    std::vector<double> x(static_cast<std::size_t>(d_in));
    std::vector<double> y(static_cast<std::size_t>(d_out));
    for (int i = 0; i < d_in; ++i)
      x[static_cast<std::size_t>(i)] = 0.4 + 0.3 * k - 0.2 * i + (i % 2 ? -0.15 : 0.1) * (k + 1);
    for (int j = 0; j < d_out; ++j)
      y[static_cast<std::size_t>(j)] = -0.3 + 0.25 * j + 0.2 * k - (j % 2 ? 0.1 : -0.05) * (k + 1);
    pts.push_back({{std::move(x), std::move(y)}, probs[k]});
  }
  return DataDistribution::from_points(std::move(pts));
}

inline Weights fixed_weights(int n, double scale = 0.7) {
  // deterministic, non-symmetric values in (-scale, scale)
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e)
    w[static_cast<std::size_t>(e)] = scale * std::sin(1.7 * (e + 1)) * (e % 2 ? 1.0 : -0.8);
  return Weights(std::move(w));
}

// Dense [2,2,1] sigmoid problem for gradient checks.
inline Problem layered_221_sigmoid(bool shared_mask = false, double p = 0.5) {
  BaseGraph g = BaseGraph::from_layered({2, 2, 1});
  MaskDistribution dist =
      shared_mask ? MaskDistribution::dropout(g, p) : MaskDistribution::dropconnect(g, p);
  return {"layered_221_sigmoid", g, Activation::sigmoid(), std::move(dist), three_point_data(2, 1),
          fixed_weights(6)};
}

// Dense [2,3,2] sigmoid problem. With targets pinned at zero the risk is
// minimized on the interior set {W_2 = 0}, where the update direction has
// zero variance: projected SGD can settle there.
inline Problem layered_232_sigmoid(double p = 0.5) {
  BaseGraph g = BaseGraph::from_layered({2, 3, 2});
  MaskDistribution dist = MaskDistribution::dropconnect(g, p);
  DataDistribution data = DataDistribution::from_points(
      {{{{1.0, -0.5}, {0.0, 0.0}}, 0.6}, {{{-0.3, 0.8}, {0.0, 0.0}}, 0.4}});
  return {"layered_232_sigmoid", g, Activation::sigmoid(), std::move(dist), std::move(data),
          fixed_weights(12, 0.5)};
}

inline Weights random_weights(const BaseGraph& g, Rng& rng, double lo, double hi) {
  std::vector<double> w(static_cast<std::size_t>(g.edge_count()));
  for (auto& v : w) v = rng.uniform(lo, hi);
  return Weights(std::move(w));
}

}  // namespace dropnet::reference
