#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "dropnet/masks.hpp"
#include "dropnet/reference.hpp"

using namespace dropnet;

namespace {

double support_total(const MaskDistribution& d) {
  double total = 0.0;
  d.for_each_support([&](const Mask&, double p) { total += p; });
  return total;
}

// eta by brute-force support accumulation, independent of path_retention's
// internals (recomputes coverage by hand).
double eta_oracle(const MaskDistribution& d, const Path& path) {
  double eta = 0.0;
  d.for_each_support([&](const Mask& m, double p) {
    for (EdgeId e : path.edges)
      if (!m.bit(e)) return;
    eta += p;
  });
  return eta;
}

}  // namespace

TEST_CASE("dropconnect support on one and two edges") {
  BaseGraph g1 = reference::line(1);
  auto pts = MaskDistribution::dropconnect(g1, 0.5).enumerate_support();
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].mask.bit(0) == false);
  CHECK(pts[0].prob == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pts[1].mask.bit(0) == true);

  BaseGraph g2 = reference::line(2);
  const double p = 0.3;
  auto pts2 = MaskDistribution::dropconnect(g2, p).enumerate_support();
  REQUIRE(pts2.size() == 4);
  std::map<int, double> by_ones;
  for (const auto& pt : pts2) by_ones[pt.mask.popcount()] += pt.prob;
  CHECK(by_ones[0] == doctest::Approx((1 - p) * (1 - p)).epsilon(1e-14));
  CHECK(by_ones[1] == doctest::Approx(2 * p * (1 - p)).epsilon(1e-14));
  CHECK(by_ones[2] == doctest::Approx(p * p).epsilon(1e-14));
}

TEST_CASE("dropout shares one bit per target vertex") {
  BaseGraph g = BaseGraph::from_layered({2, 1});
  const double p = 0.7;
  auto pts = MaskDistribution::dropout(g, p).enumerate_support();
  REQUIRE(pts.size() == 2);  // both edges enter the single output
  CHECK(pts[0].mask.popcount() == 0);
  CHECK(pts[0].prob == doctest::Approx(1 - p).epsilon(1e-15));
  CHECK(pts[1].mask.popcount() == 2);
  CHECK(pts[1].prob == doctest::Approx(p).epsilon(1e-15));
}

TEST_CASE("support probabilities sum to one") {
  BaseGraph tree = reference::depth3_tree();
  BaseGraph layered = BaseGraph::from_layered({3, 4, 2});
  CHECK(support_total(MaskDistribution::dropconnect(tree, 0.37)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(support_total(MaskDistribution::dropout(layered, 0.41)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(support_total(MaskDistribution::cutout(layered, 2)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(support_total(MaskDistribution::all_ones(tree)) == 1.0);
}

TEST_CASE("cutout zeroes a window on first-layer edges only") {
  BaseGraph g = BaseGraph::from_layered({3, 3, 2});
  MaskDistribution d = MaskDistribution::cutout(g, 1);
  // c=1: exactly the (r,l) = (s1,s2) entry dies; all second-layer bits stay
  d.for_each_support([&](const Mask& m, double) {
    int zeros = 0;
    for (int e = 0; e < g.edge_count(); ++e) {
      if (!m.bit(e)) {
        ++zeros;
        CHECK(g.vertex_depth(g.edge(e).source) == 0);
      }
    }
    CHECK(zeros == 1);
  });
  CHECK(d.support_size() == 9);
}

TEST_CASE("subgraph probability matches the enumerated support") {
  BaseGraph g = BaseGraph::from_layered({2, 2});
  for (const MaskDistribution& d :
       {MaskDistribution::dropconnect(g, 0.35), MaskDistribution::dropout(g, 0.6),
        MaskDistribution::cutout(g, 1)}) {
    double total = 0.0;
    d.for_each_support([&](const Mask& m, double prob) {
      CHECK(d.subgraph_probability(m) == doctest::Approx(prob).epsilon(1e-12));
      total += prob;
    });
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  // masks inconsistent with dropout's sharing have probability zero
  MaskDistribution dropout = MaskDistribution::dropout(g, 0.5);
  Mask inconsistent(g.edge_count(), true);
  inconsistent.set(0, false);  // edges 0 and 1 share a target group... find a pair
  bool found_zero = false;
  for (int e = 1; e < g.edge_count(); ++e) {
    if (g.edge(e).target == g.edge(0).target) {
      found_zero = true;
      CHECK(dropout.subgraph_probability(inconsistent) == 0.0);
    }
  }
  CHECK(found_zero);
}

TEST_CASE("sampled frequencies match enumerated probabilities") {
  BaseGraph g = BaseGraph::from_layered({2, 2});
  const int n = 100000;
  for (const MaskDistribution& d :
       {MaskDistribution::dropconnect(g, 0.5), MaskDistribution::dropout(g, 0.3),
        MaskDistribution::cutout(g, 1)}) {
    Rng rng(2024);
    std::map<std::uint64_t, int> counts;
    for (int i = 0; i < n; ++i) ++counts[d.sample(rng).bits64()];
    d.for_each_support([&](const Mask& m, double q) {
      double freq = counts[m.bits64()] / static_cast<double>(n);
      double band = 4.0 * std::sqrt(q * (1 - q) / n);
      CHECK(std::abs(freq - q) <= band + 1e-12);
    });
  }
}

TEST_CASE("single-edge empirical retention sits in the binomial band") {
  BaseGraph g = reference::line(1);
  MaskDistribution d = MaskDistribution::dropconnect(g, 0.5);
  Rng rng(303);
  const int n = 100000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += d.sample(rng).bit(0) ? 1 : 0;
  const double mean = ones / static_cast<double>(n);
  CHECK(std::abs(mean - 0.5) <= 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("retention probability equals the closed form for dropconnect") {
  for (const BaseGraph& g : {reference::line(2), reference::diamond(), reference::depth3_tree(),
                             BaseGraph::from_layered({2, 3, 2})}) {
    for (double p : {0.25, 0.8}) {
      MaskDistribution d = MaskDistribution::dropconnect(g, p);
      for (const Path& path : g.enumerate_paths()) {
        double eta = d.path_retention(path);
        CHECK(eta == doctest::Approx(std::pow(p, g.depth())).epsilon(1e-12));
        CHECK(eta == doctest::Approx(eta_oracle(d, path)).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("retention for shared masks and windows") {
  // one shared group of two edges: the single path through either edge
  // survives with probability p
  BaseGraph g = BaseGraph::from_layered({2, 1});
  MaskDistribution d = MaskDistribution::dropout(g, 0.45);
  for (const Path& path : g.enumerate_paths())
    CHECK(d.path_retention(path) == doctest::Approx(0.45).epsilon(1e-12));

  BaseGraph deep = BaseGraph::from_layered({1, 2, 1});
  MaskDistribution all = MaskDistribution::all_ones(deep);
  for (const Path& path : deep.enumerate_paths()) CHECK(all.path_retention(path) == 1.0);

  MaskDistribution cut = MaskDistribution::cutout(deep, 1);
  for (const Path& path : deep.enumerate_paths())
    CHECK(cut.path_retention(path) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("batched retentions agree with the scalar call") {
  BaseGraph g = reference::depth3_tree();
  MaskDistribution d = MaskDistribution::dropconnect(g, 0.5);
  std::vector<Path> paths = g.enumerate_paths();
  std::vector<double> batched = d.path_retentions(paths);
  for (std::size_t i = 0; i < paths.size(); ++i)
    CHECK(batched[i] == d.path_retention(paths[i]));
}

TEST_CASE("tabular validation and renormalization") {
  BaseGraph g = reference::line(1);
  Mask on(1, true), off(1, false);
  // small rounding in the sum is repaired
  MaskDistribution d = MaskDistribution::tabular(g, {{on, 0.6 + 2e-10}, {off, 0.4}});
  CHECK(support_total(d) == doctest::Approx(1.0).epsilon(1e-12));
  // a real deviation is an error
  CHECK_THROWS_AS(MaskDistribution::tabular(g, {{on, 0.7}, {off, 0.4}}), Error);
  CHECK_THROWS_AS(MaskDistribution::tabular(g, {{on, -0.2}, {off, 1.2}}), Error);
  // duplicate masks merge
  MaskDistribution merged = MaskDistribution::tabular(g, {{on, 0.3}, {on, 0.3}, {off, 0.4}});
  CHECK(merged.support_size() == 2);
}

TEST_CASE("parameter validation") {
  BaseGraph g = reference::line(1);
  CHECK_THROWS_AS(MaskDistribution::dropconnect(g, 0.0), Error);
  CHECK_THROWS_AS(MaskDistribution::dropconnect(g, 1.3), Error);
  CHECK_THROWS_AS(MaskDistribution::cutout(g, 0), Error);
  CHECK_NOTHROW(MaskDistribution::dropconnect(g, 1.0));
}

TEST_CASE("dropconnect with p = 1 always returns all ones") {
  BaseGraph g = reference::line(2);
  MaskDistribution d = MaskDistribution::dropconnect(g, 1.0);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) CHECK(d.sample(rng).all_ones());
  CHECK(d.support_size() == 1);
}

TEST_CASE("support cap raises SupportTooLarge") {
  BaseGraph g = BaseGraph::from_layered({4, 4});  // 16 edges -> 65536 masks
  MaskDistribution d = MaskDistribution::dropconnect(g, 0.5);
  CHECK_THROWS_WITH_AS(d.enumerate_support(1000), doctest::Contains("SupportTooLarge"), Error);
  CHECK(d.enumerable());
  CHECK_FALSE(d.enumerable(1000));
}

TEST_CASE("joint tabular keeps masks and samples together") {
  BaseGraph g = reference::line(1);
  Mask on(1, true), off(1, false);
  MaskDistribution d = MaskDistribution::joint_tabular(
      g, {{on, {{1.0}, {2.0}}, 0.5}, {off, {{-1.0}, {0.0}}, 0.5}});
  CHECK(d.joint());
  Rng rng(7);
  DataDistribution unused = reference::singleton_data({9.0}, {9.0});
  for (int i = 0; i < 40; ++i) {
    auto [mask, sample] = d.sample_joint(rng, unused);
    if (mask.bit(0))
      CHECK(sample.x[0] == 1.0);
    else
      CHECK(sample.x[0] == -1.0);
  }
  // marginal support merges by mask
  CHECK(d.support_size() == 2);
  CHECK(d.subgraph_probability(on) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("deterministic sampling given the seed") {
  BaseGraph g = reference::depth3_tree();
  MaskDistribution d = MaskDistribution::dropconnect(g, 0.5);
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(d.sample(a) == d.sample(b));
}
