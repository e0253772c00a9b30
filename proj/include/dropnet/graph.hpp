#pragma once
// Base graphs: directed acyclic topologies in which every maximal
// input-to-output path has the same number of edges L. Edges carry the
// network weights and the dropout mask bits; vertices are the neurons.
//
// EdgeIds are dense indices 0..|E|-1 in a canonical order (topological by
// source depth, then by source and target vertex id), so weights and masks
// can live in flat arrays and every enumeration is reproducible bit for bit.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dropnet/common.hpp"

namespace dropnet {

using NodeId = int;
using EdgeId = int;

struct Edge {
  NodeId source = 0;
  NodeId target = 0;
};

// A maximal input-to-output path: L edges, consecutive edges sharing a vertex.
struct Path {
  std::vector<EdgeId> edges;
  NodeId start = 0;  // input vertex the path leaves from
  NodeId end = 0;    // output vertex the path arrives at
};

struct GraphMeta {
  int depth = 0;                 // L, the common path length
  int edge_count = 0;            // |E|
  std::uint64_t path_count = 0;  // |Gamma(G)|
  int input_count = 0;           // d_0
  int output_count = 0;          // d_L
  bool arborescence = false;     // rooted out-tree with a single input
};

struct PathFilter {
  std::optional<NodeId> start;  // gamma_0
  std::optional<EdgeId> via;    // path must traverse this edge
  std::optional<NodeId> end;    // gamma_L
};

class BaseGraph {
 public:
  static constexpr std::uint64_t kDefaultPathCap = 1000000;

  static BaseGraph from_edges(std::vector<NodeId> vertices, std::vector<Edge> edges) {
    BaseGraph g;
    g.build(std::move(vertices), std::move(edges));
    return g;
  }

  // Dense feedforward topology: complete bipartite edges between consecutive
  // layers with the given widths d_0..d_L.
  static BaseGraph from_layered(const std::vector<int>& dims) {
    require(dims.size() >= 2, Errc::empty_dims, "need at least input and output widths");
    for (int d : dims) require(d >= 1, Errc::empty_dims, "all layer widths must be >= 1");
    std::vector<NodeId> vertices;
    std::vector<int> offset(dims.size(), 0);
    int next = 0;
    for (std::size_t l = 0; l < dims.size(); ++l) {
      offset[l] = next;
      for (int i = 0; i < dims[l]; ++i) vertices.push_back(next++);
    }
    std::vector<Edge> edges;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      for (int s = 0; s < dims[l]; ++s)
        for (int t = 0; t < dims[l + 1]; ++t)
          edges.push_back({offset[l] + s, offset[l + 1] + t});
    return from_edges(std::move(vertices), std::move(edges));
  }

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int depth() const { return meta_.depth; }
  const GraphMeta& validate() const { return meta_; }

  const std::vector<NodeId>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(EdgeId e) const {
    require(e >= 0 && e < edge_count(), Errc::unknown_edge, "edge id " + std::to_string(e));
    return edges_[static_cast<std::size_t>(e)];
  }

  const std::vector<NodeId>& inputs() const { return inputs_; }    // sorted
  const std::vector<NodeId>& outputs() const { return outputs_; }  // sorted

  int vertex_index(NodeId v) const {
    auto it = index_.find(v);
    require(it != index_.end(), Errc::config_error, "unknown vertex " + std::to_string(v));
    return it->second;
  }
  int vertex_depth(NodeId v) const { return depth_[static_cast<std::size_t>(vertex_index(v))]; }
  int input_rank(NodeId v) const { return rank_of(inputs_, v); }
  int output_rank(NodeId v) const { return rank_of(outputs_, v); }

  const std::vector<EdgeId>& out_edges(NodeId v) const {
    return out_[static_cast<std::size_t>(vertex_index(v))];
  }
  const std::vector<EdgeId>& in_edges(NodeId v) const {
    return in_[static_cast<std::size_t>(vertex_index(v))];
  }

  bool is_leaf_edge(EdgeId e) const { return out_edges(edge(e).target).empty(); }
  const std::vector<EdgeId>& leaf_edges() const { return leaf_edges_; }
  const std::vector<EdgeId>& non_leaf_edges() const { return non_leaf_edges_; }

  // Vertices at a given distance from the inputs, sorted by id.
  const std::vector<NodeId>& layer(int d) const {
    require(d >= 0 && d <= meta_.depth, Errc::config_error, "layer out of range");
    return layers_[static_cast<std::size_t>(d)];
  }

  // All maximal paths matching the filter, ordered lexicographically by the
  // edge-id sequence. Errors out instead of truncating: the exact risk
  // decompositions need the complete path set.
  std::vector<Path> enumerate_paths(const PathFilter& filter = {},
                                    std::uint64_t cap = kDefaultPathCap) const {
    require(meta_.path_count <= cap, Errc::path_explosion,
            "graph has " + std::to_string(meta_.path_count) + " paths, cap " + std::to_string(cap));
    if (filter.via) edge(*filter.via);  // validates the id
    std::vector<Path> result;
    std::vector<EdgeId> stack;
    for (NodeId s : inputs_) {
      if (filter.start && *filter.start != s) continue;
      walk(s, s, stack, filter, result);
    }
    return result;
  }

  // Leaf edges of the subtree hanging below edge f. Empty for f itself a
  // leaf edge: conserved quantities are only defined on E \ L(G), and
  // callers treat leaf edges separately.
  std::vector<EdgeId> subtree_leaves(EdgeId f) const {
    const Edge& ef = edge(f);
    std::vector<EdgeId> found;
    std::vector<NodeId> frontier = {ef.target};
    std::set<NodeId> seen = {ef.target};
    while (!frontier.empty()) {
      NodeId v = frontier.back();
      frontier.pop_back();
      for (EdgeId e : out_edges(v)) {
        if (is_leaf_edge(e)) {
          found.push_back(e);
        } else if (seen.insert(edges_[static_cast<std::size_t>(e)].target).second) {
          frontier.push_back(edges_[static_cast<std::size_t>(e)].target);
        }
      }
    }
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    return found;
  }

 private:
  std::vector<NodeId> vertices_;  // sorted ascending
  std::vector<Edge> edges_;       // canonical order
  std::map<NodeId, int> index_;
  std::vector<std::vector<EdgeId>> out_, in_;  // by vertex index, edge ids ascending
  std::vector<int> depth_;                     // by vertex index
  std::vector<std::vector<NodeId>> layers_;    // vertices grouped by depth
  std::vector<NodeId> inputs_, outputs_;
  std::vector<EdgeId> leaf_edges_, non_leaf_edges_;
  GraphMeta meta_;

  static int rank_of(const std::vector<NodeId>& sorted, NodeId v) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
    require(it != sorted.end() && *it == v, Errc::config_error,
            "vertex " + std::to_string(v) + " is not in the requested boundary set");
    return static_cast<int>(it - sorted.begin());
  }

  void build(std::vector<NodeId> vertices, std::vector<Edge> edges) {
    require(!vertices.empty(), Errc::no_input_output, "graph has no vertices");
    std::sort(vertices.begin(), vertices.end());
    require(std::adjacent_find(vertices.begin(), vertices.end()) == vertices.end(),
            Errc::config_error, "duplicate vertex id");
    vertices_ = std::move(vertices);
    for (std::size_t i = 0; i < vertices_.size(); ++i) index_[vertices_[i]] = static_cast<int>(i);

    for (const Edge& e : edges) {
      require(index_.count(e.source) && index_.count(e.target), Errc::config_error,
              "edge references unknown vertex");
      require(e.source != e.target, Errc::cyclic_graph, "self loop at vertex " + std::to_string(e.source));
    }
    {
      std::set<std::pair<NodeId, NodeId>> seen;
      for (const Edge& e : edges)
        require(seen.insert({e.source, e.target}).second, Errc::config_error,
                "duplicate edge " + std::to_string(e.source) + "->" + std::to_string(e.target));
    }
    require(!edges.empty(), Errc::no_input_output, "graph has no edges");

    // Topological pass (Kahn) over the raw edge list.
    const std::size_t n = vertices_.size();
    std::vector<int> indeg(n, 0), outdeg(n, 0);
    for (const Edge& e : edges) {
      ++outdeg[static_cast<std::size_t>(index_[e.source])];
      ++indeg[static_cast<std::size_t>(index_[e.target])];
    }
    std::vector<std::vector<int>> succ(n);
    for (const Edge& e : edges)
      succ[static_cast<std::size_t>(index_[e.source])].push_back(index_[e.target]);

    std::vector<int> order;
    {
      std::vector<int> deg = indeg;
      std::vector<int> queue;
      for (std::size_t i = 0; i < n; ++i)
        if (deg[i] == 0) queue.push_back(static_cast<int>(i));
      while (!queue.empty()) {
        int v = queue.front();
        queue.erase(queue.begin());
        order.push_back(v);
        for (int w : succ[static_cast<std::size_t>(v)])
          if (--deg[static_cast<std::size_t>(w)] == 0) queue.push_back(w);
      }
      require(order.size() == n, Errc::cyclic_graph,
              "directed cycle through " + std::to_string(n - order.size()) + " vertex(es)");
    }

    for (std::size_t i = 0; i < n; ++i) {
      if (indeg[i] == 0) inputs_.push_back(vertices_[i]);
      if (outdeg[i] == 0) outputs_.push_back(vertices_[i]);
    }
    require(!inputs_.empty() && !outputs_.empty(), Errc::no_input_output,
            "graph must have at least one input and one output");
    for (NodeId v : inputs_)
      require(!std::binary_search(outputs_.begin(), outputs_.end(), v), Errc::no_input_output,
              "vertex " + std::to_string(v) + " is both an input and an output");

    // Uniform path length: min and max input distance agree per vertex, and
    // all outputs sit at the same distance.
    std::vector<int> dmin(n, 0), dmax(n, 0);
    std::vector<int> pmin(n, -1), pmax(n, -1);  // predecessor vertex index, for witnesses
    std::vector<std::vector<int>> pred(n);
    for (const Edge& e : edges)
      pred[static_cast<std::size_t>(index_[e.target])].push_back(index_[e.source]);
    for (int vi : order) {
      auto v = static_cast<std::size_t>(vi);
      for (int ui : pred[v]) {
        auto u = static_cast<std::size_t>(ui);
        if (pmin[v] < 0 || dmin[u] + 1 < dmin[v]) {
          dmin[v] = dmin[u] + 1;
          pmin[v] = ui;
        }
        if (pmax[v] < 0 || dmax[u] + 1 > dmax[v]) {
          dmax[v] = dmax[u] + 1;
          pmax[v] = ui;
        }
      }
    }
    auto chain = [&](int vi, const std::vector<int>& parent) {
      std::string s = std::to_string(vertices_[static_cast<std::size_t>(vi)]);
      while (parent[static_cast<std::size_t>(vi)] >= 0) {
        vi = parent[static_cast<std::size_t>(vi)];
        s = std::to_string(vertices_[static_cast<std::size_t>(vi)]) + "->" + s;
      }
      return s;
    };
    for (std::size_t i = 0; i < n; ++i) {
      if (dmin[i] != dmax[i])
        fail(Errc::non_uniform_path_length,
             "paths of length " + std::to_string(dmin[i]) + " and " + std::to_string(dmax[i]) +
                 " reach vertex " + std::to_string(vertices_[i]) + ": " +
                 chain(static_cast<int>(i), pmin) + " vs " + chain(static_cast<int>(i), pmax));
    }
    int L = dmin[static_cast<std::size_t>(index_[outputs_.front()])];
    for (NodeId v : outputs_) {
      int d = dmin[static_cast<std::size_t>(index_[v])];
      if (d != L)
        fail(Errc::non_uniform_path_length,
             "outputs at depths " + std::to_string(L) + " and " + std::to_string(d) + ": " +
                 chain(index_[outputs_.front()], pmin) + " vs " + chain(index_[v], pmin));
    }
    require(L >= 1, Errc::no_input_output, "graph depth must be at least 1");
    depth_ = dmin;
    layers_.assign(static_cast<std::size_t>(L) + 1, {});
    for (std::size_t i = 0; i < n; ++i)
      layers_[static_cast<std::size_t>(depth_[i])].push_back(vertices_[i]);

    // Canonical edge order, then adjacency in terms of final edge ids.
    std::sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
      int da = depth_[static_cast<std::size_t>(index_[a.source])];
      int db = depth_[static_cast<std::size_t>(index_[b.source])];
      return std::tie(da, a.source, a.target) < std::tie(db, b.source, b.target);
    });
    edges_ = std::move(edges);
    out_.assign(n, {});
    in_.assign(n, {});
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      out_[static_cast<std::size_t>(index_[edges_[e].source])].push_back(static_cast<EdgeId>(e));
      in_[static_cast<std::size_t>(index_[edges_[e].target])].push_back(static_cast<EdgeId>(e));
    }

    for (std::size_t e = 0; e < edges_.size(); ++e) {
      auto id = static_cast<EdgeId>(e);
      if (out_[static_cast<std::size_t>(index_[edges_[e].target])].empty())
        leaf_edges_.push_back(id);
      else
        non_leaf_edges_.push_back(id);
    }

    meta_.depth = L;
    meta_.edge_count = static_cast<int>(edges_.size());
    meta_.input_count = static_cast<int>(inputs_.size());
    meta_.output_count = static_cast<int>(outputs_.size());
    meta_.path_count = count_paths(order, succ);
    meta_.arborescence = inputs_.size() == 1 && [&] {
      for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] > 1) return false;
      return true;
    }();
  }

  std::uint64_t count_paths(const std::vector<int>& order,
                            const std::vector<std::vector<int>>& succ) const {
    constexpr std::uint64_t kSat = 1ull << 62;
    std::vector<std::uint64_t> c(vertices_.size(), 0);
    for (NodeId v : inputs_) c[static_cast<std::size_t>(index_.at(v))] = 1;
    for (int vi : order)
      for (int wi : succ[static_cast<std::size_t>(vi)]) {
        auto& cw = c[static_cast<std::size_t>(wi)];
        cw = std::min(kSat, cw + std::min(kSat, c[static_cast<std::size_t>(vi)]));
      }
    std::uint64_t total = 0;
    for (NodeId v : outputs_) total = std::min(kSat, total + c[static_cast<std::size_t>(index_.at(v))]);
    return total;
  }

  void walk(NodeId start, NodeId v, std::vector<EdgeId>& stack, const PathFilter& filter,
            std::vector<Path>& result) const {
    const auto& next = out_edges(v);
    if (next.empty()) {
      if (filter.end && *filter.end != v) return;
      if (filter.via &&
          std::find(stack.begin(), stack.end(), *filter.via) == stack.end())
        return;
      result.push_back({stack, start, v});
      return;
    }
    for (EdgeId e : next) {
      stack.push_back(e);
      walk(start, edges_[static_cast<std::size_t>(e)].target, stack, filter, result);
      stack.pop_back();
    }
  }
};

}  // namespace dropnet
