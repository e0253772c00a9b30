#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dropnet/reference.hpp"
#include "dropnet/risk.hpp"

using namespace dropnet;

namespace {

const Activation kLinear = Activation::linear();

double fd_risk_gradient(const BaseGraph& g, Weights w, const MaskDistribution& dist,
                        const DataDistribution& data, const Activation& act, int e) {
  const double h = 1e-6 * (1.0 + std::abs(w[e]));
  const double keep = w[e];
  w[e] = keep + h;
  double up = exact_risk(g, w, dist, data, act);
  w[e] = keep - h;
  double down = exact_risk(g, w, dist, data, act);
  return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("single edge dropout risk closed form") {
  for (double p : {0.25, 0.5, 0.9}) {
    reference::Problem pr = reference::single_edge(p);
    for (double w : {-1.0, 0.0, 0.7, 2.0, 3.5}) {
      double expect = p * (2.0 - w) * (2.0 - w) + 4.0 * (1.0 - p);
      CHECK(exact_risk(pr.graph, Weights({w}), pr.dist, pr.data, kLinear) ==
            doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("all-ones masking reduces to the plain risk") {
  reference::Problem pr = reference::layered_221_sigmoid();
  MaskDistribution all = MaskDistribution::all_ones(pr.graph);
  double dropped = exact_risk(pr.graph, pr.w0, all, pr.data, pr.act);
  double plain = 0.0;
  for (const DataPoint& pt : pr.data.points())
    plain += pt.prob * loss(forward(pr.graph, pr.w0, pt.sample.x, pr.act).output, pt.sample.y);
  CHECK(dropped == doctest::Approx(plain).epsilon(1e-15));
}

TEST_CASE("decomposition identity holds on every small test graph") {
  struct Case {
    const char* label;
    BaseGraph graph;
    DataDistribution data;
    bool tree;
  };
  std::vector<double> x7(7);
  for (int i = 0; i < 7; ++i) x7[static_cast<std::size_t>(i)] = 0.4 + 0.2 * i;
  std::vector<Case> cases;
  cases.push_back({"line3", reference::line(3), reference::singleton_data({1.0}, {2.0}), true});
  cases.push_back({"tree", reference::depth3_tree(),
                   reference::singleton_data({1.0}, {0.9, 0.5, 1.1, 0.7, 1.2, 0.4, 0.8}), true});
  cases.push_back({"diamond", reference::diamond(), reference::diamond_problem().data, false});
  cases.push_back({"anti_tree", reference::anti_tree(),
                   reference::singleton_data(x7, {1.0}), false});

  Rng rng(77);
  for (const Case& c : cases) {
    for (const MaskDistribution& dist : {MaskDistribution::dropconnect(c.graph, 0.5),
                                         MaskDistribution::dropout(c.graph, 0.5)}) {
      std::vector<double> constants;
      for (int k = 0; k < 5; ++k) {
        Weights w = reference::random_weights(c.graph, rng, -1.0, 1.0);
        const double d = exact_risk(c.graph, w, dist, c.data, kLinear);
        const PathDecomposition dec = path_decomposition(c.graph, w, dist, c.data, kLinear);
        CHECK(std::abs(d - dec.J - dec.R - dec.disconnected_constant) <=
              1e-10 * (1.0 + std::abs(d)));
        if (c.tree) CHECK(dec.R == 0.0);
        constants.push_back(dec.disconnected_constant);
      }
      for (double v : constants) CHECK(std::abs(v - constants.front()) <= 1e-12);
    }
  }
}

TEST_CASE("decomposition identity under window and tabular masks") {
  // cutout and tabular supports are not product laws, so the retention
  // accounting cannot lean on independence across edges
  Rng rng(404);
  {
    BaseGraph g = BaseGraph::from_layered({2, 2, 1});
    DataDistribution data = DataDistribution::from_points(
        {{{{1.0, -0.4}, {0.8}}, 0.7}, {{{0.2, 0.9}, {-0.3}}, 0.3}});
    for (int c : {1, 2}) {
      MaskDistribution dist = MaskDistribution::cutout(g, c);
      for (int k = 0; k < 3; ++k) {
        Weights w = reference::random_weights(g, rng, -1.0, 1.0);
        const double d = exact_risk(g, w, dist, data, kLinear);
        const PathDecomposition dec = path_decomposition(g, w, dist, data, kLinear);
        CHECK(std::abs(d - dec.J - dec.R - dec.disconnected_constant) <=
              1e-10 * (1.0 + std::abs(d)));
      }
    }
  }
  {
    // a lopsided three-point support over diamond masks
    BaseGraph g = reference::diamond();
    Mask all(4, true);
    Mask left(4, true);
    left.set(1, false);
    left.set(3, false);
    Mask none(4, false);
    MaskDistribution dist =
        MaskDistribution::tabular(g, {{all, 0.5}, {left, 0.3}, {none, 0.2}});
    DataDistribution data = reference::singleton_data({1.0}, {1.5});
    for (int k = 0; k < 3; ++k) {
      Weights w = reference::random_weights(g, rng, -1.0, 1.0);
      const double d = exact_risk(g, w, dist, data, kLinear);
      const PathDecomposition dec = path_decomposition(g, w, dist, data, kLinear);
      CHECK(std::abs(d - dec.J - dec.R - dec.disconnected_constant) <=
            1e-10 * (1.0 + std::abs(d)));
      // the none mask contributes its whole weight to the constant
      CHECK(dec.disconnected_constant >= 0.2 * data.second_moment_y(0) - 1e-12);
      std::vector<double> g_enum = exact_gradient(g, w, dist, data, kLinear);
      std::vector<double> g_path = path_decomposition_gradient(g, w, dist, data, kLinear);
      for (std::size_t e = 0; e < g_enum.size(); ++e)
        CHECK(g_enum[e] == doctest::Approx(g_path[e]).epsilon(1e-9));
    }
  }
}

TEST_CASE("cross-path term is nonzero on the diamond at generic weights") {
  reference::Problem pr = reference::diamond_problem();
  PathDecomposition dec = path_decomposition(pr.graph, pr.w0, pr.dist, pr.data, kLinear);
  CHECK(std::abs(dec.R) > 1e-8);
  // hand form: only the full subgraph keeps both paths alive
  // R = -p^4 (E[Y^2] - 2 P1 P2 E[X^2])
  const double p4 = std::pow(0.5, 4);
  const double p1 = pr.w0[0] * pr.w0[2];
  const double p2 = pr.w0[1] * pr.w0[3];
  const double expect =
      -p4 * (pr.data.second_moment_y(0) - 2.0 * p1 * p2 * pr.data.second_moment_x(0));
  CHECK(dec.R == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("single edge decomposition by hand") {
  reference::Problem pr = reference::single_edge(0.3);
  Weights w({0.8});
  PathDecomposition dec = path_decomposition(pr.graph, w, pr.dist, pr.data, kLinear);
  CHECK(dec.J == doctest::Approx(0.3 * (2.0 - 0.8) * (2.0 - 0.8)).epsilon(1e-14));
  CHECK(dec.R == 0.0);
  CHECK(dec.disconnected_constant == doctest::Approx(0.7 * 4.0).epsilon(1e-14));
}

TEST_CASE("exact gradient matches finite differences and vanishes at the optimum") {
  Rng rng(5);
  reference::Problem tree = reference::depth3_tree_certified();
  Weights w = reference::random_weights(tree.graph, rng, -0.8, 0.8);
  std::vector<double> grad = exact_gradient(tree.graph, w, tree.dist, tree.data, kLinear);
  for (int e = 0; e < tree.graph.edge_count(); ++e)
    CHECK(grad[static_cast<std::size_t>(e)] ==
          doctest::Approx(fd_risk_gradient(tree.graph, w, tree.dist, tree.data, kLinear, e))
              .epsilon(1e-6));

  // put every path product at its target: gradient must vanish
  PathStats stats = path_stats(tree.graph, tree.dist, tree.data);
  Weights opt = reference::root_heavy(tree.graph, 1.0, 0.0);
  for (std::size_t i = 0; i < stats.paths.size(); ++i) {
    const Path& path = stats.paths[i];
    opt[path.edges.back()] = stats.terms[i].z;  // roots are 1, leaf carries z
  }
  CHECK(path_excess(stats, opt) == doctest::Approx(0.0));
  for (double v : exact_gradient(tree.graph, opt, tree.dist, tree.data, kLinear))
    CHECK(std::abs(v) <= 1e-10);
  // and the enumerated risk equals the floor exactly there
  ArborescenceDecomposition dec =
      arborescence_decomposition(tree.graph, opt, tree.dist, tree.data, kLinear);
  CHECK(exact_risk(tree.graph, opt, tree.dist, tree.data, kLinear) ==
        doctest::Approx(dec.D_star + dec.disconnected_constant).epsilon(1e-12));
}

TEST_CASE("the three gradient routes agree") {
  Rng rng(21);
  reference::Problem tree = reference::depth3_tree_certified();
  PathStats stats = path_stats(tree.graph, tree.dist, tree.data);
  for (int k = 0; k < 3; ++k) {
    Weights w = reference::random_weights(tree.graph, rng, -1.0, 1.0);
    std::vector<double> g1 = exact_gradient(tree.graph, w, tree.dist, tree.data, kLinear);
    std::vector<double> g2 = path_decomposition_gradient(tree.graph, w, tree.dist, tree.data, kLinear);
    std::vector<double> g3 = path_excess_gradient(tree.graph, stats, w);
    double scale = 1.0;
    for (double v : g1) scale = std::max(scale, std::abs(v));
    for (std::size_t e = 0; e < g1.size(); ++e) {
      CHECK(std::abs(g1[e] - g2[e]) / scale <= 1e-8);
      CHECK(std::abs(g1[e] - g3[e]) / scale <= 1e-8);
    }
  }
  // the path-form gradient also covers non-tree graphs
  reference::Problem dia = reference::diamond_problem();
  std::vector<double> g1 = exact_gradient(dia.graph, dia.w0, dia.dist, dia.data, kLinear);
  std::vector<double> g2 = path_decomposition_gradient(dia.graph, dia.w0, dia.dist, dia.data, kLinear);
  for (std::size_t e = 0; e < g1.size(); ++e) CHECK(g1[e] == doctest::Approx(g2[e]).epsilon(1e-10));
}

TEST_CASE("arborescence decomposition and path stats") {
  reference::Problem tree = reference::depth3_tree_certified();
  ArborescenceDecomposition dec =
      arborescence_decomposition(tree.graph, tree.w0, tree.dist, tree.data, kLinear);
  const PathStats& stats = dec.stats;
  REQUIRE(stats.paths.size() == 7);
  // i.i.d. Bernoulli masks: every path retains with probability p^L
  for (const PathTerm& t : stats.terms) {
    CHECK(t.eta == doctest::Approx(std::pow(0.5, 3)).epsilon(1e-12));
    CHECK(t.nu == doctest::Approx(stats.nu_min).epsilon(1e-12));
  }
  CHECK(stats.nu_min / stats.nu_l1 == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  // I + D_star + const reproduces the enumerated risk at several points
  Rng rng(31);
  for (int k = 0; k < 5; ++k) {
    Weights w = reference::random_weights(tree.graph, rng, -1.0, 1.0);
    ArborescenceDecomposition d = arborescence_decomposition(tree.graph, w, tree.dist, tree.data, kLinear);
    double exact = exact_risk(tree.graph, w, tree.dist, tree.data, kLinear);
    CHECK(std::abs(exact - d.I - d.D_star - d.disconnected_constant) <= 1e-10 * (1.0 + exact));
  }
}

TEST_CASE("decomposition preconditions") {
  reference::Problem dia = reference::diamond_problem();
  CHECK_THROWS_WITH_AS(
      arborescence_decomposition(dia.graph, dia.w0, dia.dist, dia.data, kLinear),
      doctest::Contains("NotArborescence"), Error);

  reference::Problem tree = reference::depth3_tree_certified();
  CHECK_THROWS_WITH_AS(
      path_decomposition(tree.graph, tree.w0, tree.dist, tree.data, Activation::sigmoid()),
      doctest::Contains("NonlinearActivation"), Error);

  // joint tables are rejected by the decompositions but fine for the risk
  BaseGraph line1 = reference::line(1);
  MaskDistribution joint = MaskDistribution::joint_tabular(
      line1, {{Mask(1, true), {{1.0}, {2.0}}, 0.5}, {Mask(1, false), {{1.0}, {0.5}}, 0.5}});
  DataDistribution stub = reference::singleton_data({1.0}, {1.0});
  CHECK_THROWS_WITH_AS(path_decomposition(line1, Weights({1.0}), joint, stub, kLinear),
                       doctest::Contains("JointMaskDataDistribution"), Error);
  double d = exact_risk(line1, Weights({1.0}), joint, stub, kLinear);
  CHECK(d == doctest::Approx(0.5 * 1.0 + 0.5 * 0.25).epsilon(1e-14));

  // vanishing input second moment
  BaseGraph g = reference::line(1);
  DataDistribution degenerate = reference::singleton_data({0.0}, {1.0});
  CHECK_THROWS_WITH_AS(
      arborescence_decomposition(g, Weights({1.0}), MaskDistribution::dropconnect(g, 0.5),
                                 degenerate, kLinear),
      doctest::Contains("DegenerateInput"), Error);
}

TEST_CASE("monte carlo estimates agree with exact values") {
  reference::Problem pr = reference::single_edge();
  Weights w({0.5});
  const double exact = exact_risk(pr.graph, w, pr.dist, pr.data, kLinear);
  Rng rng(123);
  McEstimate est = mc_risk(pr.graph, w, pr.dist, pr.data, kLinear, 100000, rng);
  CHECK(std::abs(est.value - exact) <= 4.0 * est.std_error);
  CHECK(est.std_error > 0.0);

  std::vector<double> grad = exact_gradient(pr.graph, w, pr.dist, pr.data, kLinear);
  Rng rng2(123);
  McGradient gest = mc_gradient(pr.graph, w, pr.dist, pr.data, kLinear, 100000, rng2);
  for (std::size_t e = 0; e < grad.size(); ++e)
    CHECK(std::abs(gest.mean[e] - grad[e]) <= 4.0 * gest.std_error[e] + 1e-12);
}

TEST_CASE("monte carlo determinism and zero-variance exactness") {
  reference::Problem pr = reference::layered_221_sigmoid();
  Rng a(9), b(9);
  McEstimate ea = mc_risk(pr.graph, pr.w0, pr.dist, pr.data, pr.act, 500, a);
  McEstimate eb = mc_risk(pr.graph, pr.w0, pr.dist, pr.data, pr.act, 500, b);
  CHECK(ea.value == eb.value);
  CHECK(ea.std_error == eb.std_error);

  // all-ones mask + singleton data: no randomness at all
  BaseGraph g = reference::line(1);
  MaskDistribution all = MaskDistribution::all_ones(g);
  DataDistribution data = reference::singleton_data({1.0}, {2.0});
  Rng rng(1);
  McEstimate est = mc_risk(g, Weights({0.7}), all, data, kLinear, 300, rng);
  CHECK(est.std_error == 0.0);
  CHECK(est.value == doctest::Approx(exact_risk(g, Weights({0.7}), all, data, kLinear)));
}

TEST_CASE("risk report bundles both decompositions") {
  reference::Problem tree = reference::depth3_tree_certified();
  RiskReport rep = risk_report(tree.graph, tree.w0, tree.dist, tree.data, kLinear);
  REQUIRE(rep.decomposed);
  REQUIRE(rep.I.has_value());
  REQUIRE(rep.D_star.has_value());
  CHECK(rep.R == 0.0);
  // no decomposition is claimed outside its preconditions
  RiskReport sig = risk_report(tree.graph, tree.w0, tree.dist, tree.data, Activation::sigmoid());
  CHECK_FALSE(sig.decomposed);
  CHECK_FALSE(sig.I.has_value());
  CHECK(std::abs(rep.D - rep.J - rep.R - rep.disconnected_constant) <= 1e-10 * (1 + rep.D));
  CHECK(std::abs(rep.D - *rep.I - *rep.D_star - rep.disconnected_constant) <=
        1e-10 * (1 + rep.D));
}
