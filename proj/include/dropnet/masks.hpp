#pragma once
// Distributions over {0,1}-valued edge masks F. A mask selects the random
// subgraph G_F trained in one step; the supported families are
//   all_ones      - no masking,
//   dropconnect   - i.i.d. Bernoulli(p) per edge,
//   dropout       - one Bernoulli(p) shared by all edges into a vertex
//                   (the per-(layer,row) sharing pattern of dense nets),
//   cutout        - a c-window at a uniformly random center knocks out
//                   first-layer edges,
//   tabular       - explicit finite support,
//   joint_tabular - explicit finite support over (F, x, y) triples; only
//                   valid for sampling-style consumers, since the exact
//                   path decompositions require F independent of (X, Y).
//
// Support enumeration is exact and runs in a fixed canonical order so that
// every downstream reduction is reproducible.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dropnet/common.hpp"
#include "dropnet/data.hpp"
#include "dropnet/graph.hpp"

namespace dropnet {

class Mask {
 public:
  Mask() = default;
  explicit Mask(int edge_count, bool value = true)
      : bits_(static_cast<std::size_t>(edge_count), value ? 1 : 0) {}
  static Mask from_bits(std::vector<std::uint8_t> bits) {
    Mask m;
    m.bits_ = std::move(bits);
    return m;
  }

  int size() const { return static_cast<int>(bits_.size()); }
  bool bit(EdgeId e) const { return bits_[static_cast<std::size_t>(e)] != 0; }
  void set(EdgeId e, bool v) { bits_[static_cast<std::size_t>(e)] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool all_ones() const {
    for (auto b : bits_)
      if (!b) return false;
    return true;
  }

  int popcount() const {
    int c = 0;
    for (auto b : bits_) c += b;
    return c;
  }

  // Packed form for subgraph bookkeeping; only graphs this small are
  // enumerable anyway.
  std::uint64_t bits64() const {
    require(bits_.size() <= 64, Errc::support_too_large, "mask too wide for packed form");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) v |= 1ull << i;
    return v;
  }

  bool covers(const std::vector<EdgeId>& edges) const {
    for (EdgeId e : edges)
      if (!bit(e)) return false;
    return true;
  }

  friend bool operator==(const Mask& a, const Mask& b) { return a.bits_ == b.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
};

struct MaskPoint {
  Mask mask;
  double prob = 0.0;
};

struct JointPoint {
  Mask mask;
  Sample sample;
  double prob = 0.0;
};

class MaskDistribution {
 public:
  enum class Kind { all_ones, dropconnect, dropout, cutout, tabular, joint_tabular };

  static constexpr std::size_t kDefaultSupportCap = std::size_t{1} << 20;

  static MaskDistribution all_ones(const BaseGraph& g) {
    MaskDistribution d(Kind::all_ones, g.edge_count());
    return d;
  }

  static MaskDistribution dropconnect(const BaseGraph& g, double p) {
    MaskDistribution d(Kind::dropconnect, g.edge_count());
    d.p_ = check_p(p);
    // one free bit per edge
    d.group_of_.resize(static_cast<std::size_t>(g.edge_count()));
    for (int e = 0; e < g.edge_count(); ++e) d.group_of_[static_cast<std::size_t>(e)] = e;
    d.group_count_ = g.edge_count();
    return d;
  }

  static MaskDistribution dropout(const BaseGraph& g, double p) {
    MaskDistribution d(Kind::dropout, g.edge_count());
    d.p_ = check_p(p);
    // shared bit per target vertex = per (layer, output row) in matrix form
    std::vector<NodeId> targets;
    for (const Edge& e : g.edges()) targets.push_back(e.target);
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    d.group_of_.resize(static_cast<std::size_t>(g.edge_count()));
    for (int e = 0; e < g.edge_count(); ++e) {
      auto it = std::lower_bound(targets.begin(), targets.end(), g.edge(e).target);
      d.group_of_[static_cast<std::size_t>(e)] = static_cast<int>(it - targets.begin());
    }
    d.group_count_ = static_cast<int>(targets.size());
    return d;
  }

  static MaskDistribution cutout(const BaseGraph& g, int c) {
    require(c >= 1, Errc::config_error, "cutout window halfwidth must be >= 1");
    MaskDistribution d(Kind::cutout, g.edge_count());
    d.cutout_c_ = c;
    const std::vector<NodeId> row_vertices = g.layer(1);
    const int d1 = static_cast<int>(row_vertices.size());
    const int d0 = static_cast<int>(g.inputs().size());
    auto row_rank = [&](NodeId v) {
      auto it = std::lower_bound(row_vertices.begin(), row_vertices.end(), v);
      return static_cast<int>(it - row_vertices.begin());
    };
    // first-layer edges in matrix coordinates, 1-based (r, l)
    std::vector<std::pair<int, int>> coord(static_cast<std::size_t>(g.edge_count()), {-1, -1});
    for (int e = 0; e < g.edge_count(); ++e) {
      const Edge& ed = g.edge(e);
      if (g.vertex_depth(ed.source) == 0)
        coord[static_cast<std::size_t>(e)] = {row_rank(ed.target) + 1, g.input_rank(ed.source) + 1};
    }
    // enumerate window centers, merging centers that knock out the same edges
    const double pc = 1.0 / (static_cast<double>(d1) * static_cast<double>(d0));
    for (int s1 = 1; s1 <= d1; ++s1) {
      for (int s2 = 1; s2 <= d0; ++s2) {
        Mask m(g.edge_count(), true);
        for (int e = 0; e < g.edge_count(); ++e) {
          auto [r, l] = coord[static_cast<std::size_t>(e)];
          if (r >= 1 && std::abs(r - s1) < c && std::abs(l - s2) < c) m.set(e, false);
        }
        bool merged = false;
        for (auto& pt : d.table_)
          if (pt.mask == m) {
            pt.prob += pc;
            merged = true;
            break;
          }
        if (!merged) d.table_.push_back({std::move(m), pc});
      }
    }
    return d;
  }

  static MaskDistribution tabular(const BaseGraph& g, std::vector<MaskPoint> table) {
    MaskDistribution d(Kind::tabular, g.edge_count());
    require(!table.empty(), Errc::config_error, "tabular mask distribution needs support points");
    double sum = 0.0;
    for (const MaskPoint& pt : table) {
      require(pt.mask.size() == g.edge_count(), Errc::dimension_mismatch,
              "mask length does not match edge count");
      require(pt.prob >= 0.0, Errc::config_error, "negative probability");
      sum += pt.prob;
    }
    require(std::abs(sum - 1.0) < 1e-9, Errc::config_error,
            "mask probabilities sum to " + std::to_string(sum));
    for (MaskPoint& pt : table) {
      pt.prob /= sum;
      bool merged = false;
      for (auto& have : d.table_)
        if (have.mask == pt.mask) {
          have.prob += pt.prob;
          merged = true;
          break;
        }
      if (!merged) d.table_.push_back(std::move(pt));
    }
    return d;
  }

  static MaskDistribution joint_tabular(const BaseGraph& g, std::vector<JointPoint> table) {
    MaskDistribution d(Kind::joint_tabular, g.edge_count());
    require(!table.empty(), Errc::config_error, "joint distribution needs support points");
    const std::size_t dx = table.front().sample.x.size();
    const std::size_t dy = table.front().sample.y.size();
    double sum = 0.0;
    for (const JointPoint& pt : table) {
      require(pt.mask.size() == g.edge_count(), Errc::dimension_mismatch,
              "mask length does not match edge count");
      require(pt.sample.x.size() == dx && pt.sample.y.size() == dy, Errc::dimension_mismatch,
              "inconsistent sample dimensions in joint table");
      require(pt.prob >= 0.0, Errc::config_error, "negative probability");
      sum += pt.prob;
    }
    require(std::abs(sum - 1.0) < 1e-9, Errc::config_error,
            "joint probabilities sum to " + std::to_string(sum));
    d.joint_ = std::move(table);
    for (JointPoint& pt : d.joint_) pt.prob /= sum;
    return d;
  }

  Kind kind() const { return kind_; }
  bool joint() const { return kind_ == Kind::joint_tabular; }
  int edge_count() const { return edge_count_; }
  double p() const { return p_; }
  int cutout_halfwidth() const { return cutout_c_; }
  const std::vector<JointPoint>& joint_table() const { return joint_; }

  bool enumerable(std::size_t cap = kDefaultSupportCap) const {
    if ((kind_ == Kind::dropconnect || kind_ == Kind::dropout) && p_ < 1.0) {
      if (group_count_ >= 63) return false;
      return (std::size_t{1} << group_count_) <= cap;
    }
    return support_size() <= cap;
  }

  std::size_t support_size() const {
    switch (kind_) {
      case Kind::all_ones: return 1;
      case Kind::dropconnect:
      case Kind::dropout:
        if (p_ >= 1.0) return 1;
        require(group_count_ < 63, Errc::support_too_large, "mask support has more than 2^62 points");
        return std::size_t{1} << group_count_;
      case Kind::cutout:
      case Kind::tabular: return table_.size();
      case Kind::joint_tabular: {
        // marginal support (duplicate masks merged)
        std::size_t n = 0;
        for (std::size_t i = 0; i < joint_.size(); ++i) {
          bool dup = false;
          for (std::size_t j = 0; j < i; ++j)
            if (joint_[j].mask == joint_[i].mask) dup = true;
          if (!dup) ++n;
        }
        return n;
      }
    }
    return 0;
  }

  // Visits the complete support as (mask, probability) in canonical order.
  template <class Fn>
  void for_each_support(Fn&& fn, std::size_t cap = kDefaultSupportCap) const {
    require(support_size() <= cap, Errc::support_too_large,
            "mask support has " + std::to_string(support_size()) + " points, cap " +
                std::to_string(cap));
    switch (kind_) {
      case Kind::all_ones: {
        fn(Mask(edge_count_, true), 1.0);
        return;
      }
      case Kind::dropconnect:
      case Kind::dropout: {
        if (p_ >= 1.0) {
          fn(Mask(edge_count_, true), 1.0);
          return;
        }
        const int k = group_count_;
        Mask m(edge_count_, false);
        for (std::uint64_t word = 0; word < (std::uint64_t{1} << k); ++word) {
          const int ones = std::popcount(word);
          for (int e = 0; e < edge_count_; ++e)
            m.set(e, (word & (std::uint64_t{1} << group_of_[static_cast<std::size_t>(e)])) != 0);
          fn(m, std::pow(p_, ones) * std::pow(1.0 - p_, k - ones));
        }
        return;
      }
      case Kind::cutout:
      case Kind::tabular: {
        for (const MaskPoint& pt : table_) fn(pt.mask, pt.prob);
        return;
      }
      case Kind::joint_tabular: {
        std::vector<MaskPoint> marginal;
        for (const JointPoint& pt : joint_) {
          bool merged = false;
          for (auto& have : marginal)
            if (have.mask == pt.mask) {
              have.prob += pt.prob;
              merged = true;
              break;
            }
          if (!merged) marginal.push_back({pt.mask, pt.prob});
        }
        for (const MaskPoint& pt : marginal) fn(pt.mask, pt.prob);
        return;
      }
    }
  }

  std::vector<MaskPoint> enumerate_support(std::size_t cap = kDefaultSupportCap) const {
    std::vector<MaskPoint> out;
    for_each_support([&](const Mask& m, double prob) { out.push_back({m, prob}); }, cap);
    return out;
  }

  // mu_g = P(G_F = g), evaluated from the distribution's own law.
  double subgraph_probability(const Mask& g) const {
    require(g.size() == edge_count_, Errc::dimension_mismatch, "mask length mismatch");
    switch (kind_) {
      case Kind::all_ones: return g.all_ones() ? 1.0 : 0.0;
      case Kind::dropconnect: {
        int ones = g.popcount();
        return std::pow(p_, ones) * std::pow(1.0 - p_, edge_count_ - ones);
      }
      case Kind::dropout: {
        std::vector<int> state(static_cast<std::size_t>(group_count_), -1);
        for (int e = 0; e < edge_count_; ++e) {
          int& s = state[static_cast<std::size_t>(group_of_[static_cast<std::size_t>(e)])];
          int b = g.bit(e) ? 1 : 0;
          if (s < 0)
            s = b;
          else if (s != b)
            return 0.0;  // inconsistent with the sharing pattern
        }
        int ones = 0, groups = 0;
        for (int s : state)
          if (s >= 0) {
            ++groups;
            ones += s;
          }
        return std::pow(p_, ones) * std::pow(1.0 - p_, groups - ones);
      }
      case Kind::cutout:
      case Kind::tabular: {
        for (const MaskPoint& pt : table_)
          if (pt.mask == g) return pt.prob;
        return 0.0;
      }
      case Kind::joint_tabular: {
        double s = 0.0;
        for (const JointPoint& pt : joint_)
          if (pt.mask == g) s += pt.prob;
        return s;
      }
    }
    return 0.0;
  }

  // eta_gamma: probability that every edge of the path stays unmasked,
  // accumulated over the enumerated support.
  double path_retention(const Path& gamma, std::size_t cap = kDefaultSupportCap) const {
    double eta = 0.0;
    for_each_support(
        [&](const Mask& m, double prob) {
          if (m.covers(gamma.edges)) eta += prob;
        },
        cap);
    return eta;
  }

  // One support pass for all paths at once.
  std::vector<double> path_retentions(const std::vector<Path>& paths,
                                      std::size_t cap = kDefaultSupportCap) const {
    std::vector<double> eta(paths.size(), 0.0);
    for_each_support(
        [&](const Mask& m, double prob) {
          for (std::size_t i = 0; i < paths.size(); ++i)
            if (m.covers(paths[i].edges)) eta[i] += prob;
        },
        cap);
    return eta;
  }

  Mask sample(Rng& rng) const {
    switch (kind_) {
      case Kind::all_ones: return Mask(edge_count_, true);
      case Kind::dropconnect:
      case Kind::dropout: {
        std::vector<std::uint8_t> group_bit(static_cast<std::size_t>(group_count_));
        for (int gidx = 0; gidx < group_count_; ++gidx)
          group_bit[static_cast<std::size_t>(gidx)] = rng.bernoulli(p_) ? 1 : 0;
        Mask m(edge_count_, false);
        for (int e = 0; e < edge_count_; ++e)
          m.set(e, group_bit[static_cast<std::size_t>(group_of_[static_cast<std::size_t>(e)])] != 0);
        return m;
      }
      case Kind::cutout:
      case Kind::tabular: {
        double u = rng.uniform01();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < table_.size(); ++i) {
          acc += table_[i].prob;
          if (u < acc) return table_[i].mask;
        }
        return table_.back().mask;
      }
      case Kind::joint_tabular: {
        return joint_[joint_index(rng)].mask;
      }
    }
    return Mask(edge_count_, true);
  }

  // One (F, x, y) draw. Independent families consume the mask draw first and
  // the data draw second; the joint table consumes a single draw.
  std::pair<Mask, Sample> sample_joint(Rng& rng, const DataDistribution& data) const {
    if (kind_ == Kind::joint_tabular) {
      const JointPoint& pt = joint_[joint_index(rng)];
      return {pt.mask, pt.sample};
    }
    Mask m = sample(rng);
    return {std::move(m), data.sample(rng)};
  }

 private:
  MaskDistribution(Kind kind, int edge_count) : kind_(kind), edge_count_(edge_count) {}

  static double check_p(double p) {
    require(p > 0.0 && p <= 1.0, Errc::config_error, "retention probability must be in (0, 1]");
    return p;
  }

  std::size_t joint_index(Rng& rng) const {
    double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < joint_.size(); ++i) {
      acc += joint_[i].prob;
      if (u < acc) return i;
    }
    return joint_.size() - 1;
  }

  Kind kind_;
  int edge_count_ = 0;
  double p_ = 1.0;
  int cutout_c_ = 0;
  std::vector<int> group_of_;  // Bernoulli group per edge (dropconnect/dropout)
  int group_count_ = 0;
  std::vector<MaskPoint> table_;   // cutout / tabular support, canonical order
  std::vector<JointPoint> joint_;  // joint_tabular support
};

}  // namespace dropnet
