#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dropnet/network.hpp"
#include "dropnet/reference.hpp"
#include "dropnet/risk.hpp"

using namespace dropnet;

namespace {

// central finite differences of the per-sample loss
std::vector<double> fd_gradient(const BaseGraph& g, const Weights& w, const std::vector<double>& x,
                                const std::vector<double>& y, const Activation& act) {
  std::vector<double> grad(static_cast<std::size_t>(g.edge_count()));
  Weights probe = w;
  for (int e = 0; e < g.edge_count(); ++e) {
    const double h = 1e-6 * (1.0 + std::abs(w[e]));
    const double keep = probe[e];
    probe[e] = keep + h;
    double up = loss(forward(g, probe, x, act).output, y);
    probe[e] = keep - h;
    double down = loss(forward(g, probe, x, act).output, y);
    probe[e] = keep;
    grad[static_cast<std::size_t>(e)] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  return worst;
}

}  // namespace

TEST_CASE("loss basics") {
  CHECK(loss({0.0}, {0.0}) == 0.0);
  CHECK(loss({1.0, 1.0}, {0.0, 0.0}) == 2.0);
  CHECK(loss({3.0}, {1.0}) == 4.0);
  CHECK_THROWS_AS(loss({1.0}, {1.0, 2.0}), Error);
}

TEST_CASE("activation values and analytic derivatives") {
  Activation lin = Activation::linear();
  Activation sig = Activation::sigmoid();
  Activation poly = Activation::polynomial({1.0, -2.0, 0.5, 0.25});
  CHECK(lin.value(3.25) == 3.25);
  CHECK(sig.value(0.0) == 0.5);
  CHECK(poly.value(2.0) == doctest::Approx(1.0 - 4.0 + 2.0 + 2.0));
  // derivative vs central differences on a grid over [-5, 5]
  for (const Activation& act : {lin, sig, poly}) {
    for (int k = 0; k <= 40; ++k) {
      double z = -5.0 + 0.25 * k;
      double fd = (act.value(z + 1e-6) - act.value(z - 1e-6)) / 2e-6;
      CHECK(act.derivative(z) == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK(act.polynomially_bounded());
  }
  CHECK(poly.smoothness_order() == 3);
}

TEST_CASE("forward on a two-edge chain multiplies the weights") {
  BaseGraph g = BaseGraph::from_layered({1, 1, 1});
  Weights w({2.0, 3.0});
  CHECK(forward(g, w, {1.0}, Activation::linear()).output[0] == doctest::Approx(6.0));
  // sigmoid at zero weights: hidden value 0.5, affine output stays 0
  Weights zeros = Weights::zeros(2);
  ForwardResult f = forward(g, zeros, {7.0}, Activation::sigmoid());
  CHECK(f.output[0] == 0.0);
  CHECK(f.vertex_value[1] == doctest::Approx(0.5));
}

TEST_CASE("linear output is the sum of path products") {
  Rng rng(11);
  for (const BaseGraph& g : {reference::diamond(), reference::line(3),
                             BaseGraph::from_layered({2, 3, 2}), BaseGraph::from_layered({1, 2, 1})}) {
    Weights w = reference::random_weights(g, rng, -1.0, 1.0);
    std::vector<double> x(g.inputs().size());
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<double> out = forward(g, w, x, Activation::linear()).output;
    std::vector<Path> paths = g.enumerate_paths();
    std::vector<double> p = path_products(paths, w);
    std::vector<double> expect(out.size(), 0.0);
    for (std::size_t i = 0; i < paths.size(); ++i)
      expect[static_cast<std::size_t>(g.output_rank(paths[i].end))] +=
          p[i] * x[static_cast<std::size_t>(g.input_rank(paths[i].start))];
    for (std::size_t j = 0; j < out.size(); ++j)
      CHECK(out[j] == doctest::Approx(expect[j]).epsilon(1e-12));
  }
}

TEST_CASE("backprop equals finite differences") {
  Rng rng(3);
  std::vector<BaseGraph> graphs;
  graphs.push_back(BaseGraph::from_layered({2, 3, 2}));
  graphs.push_back(reference::depth3_tree());
  for (const BaseGraph& g : graphs) {
    for (const Activation& act :
         {Activation::linear(), Activation::sigmoid(), Activation::polynomial({0.0, 1.0, -0.3})}) {
      Weights w = reference::random_weights(g, rng, -0.9, 0.9);
      std::vector<double> x(g.inputs().size()), y(g.outputs().size());
      for (auto& v : x) v = rng.uniform(-1.0, 1.0);
      for (auto& v : y) v = rng.uniform(-1.0, 1.0);
      std::vector<double> fb = backprop(g, w, x, y, act);
      CHECK(max_rel_gap(fb, fd_gradient(g, w, x, y, act)) < 1e-5);
    }
  }
}

TEST_CASE("backprop edge cases") {
  BaseGraph g = BaseGraph::from_layered({1, 1});
  // derivative of (y - wx)^2 at y=0, x=1 is 2w
  Weights w({1.7});
  CHECK(backprop(g, w, {1.0}, {0.0}, Activation::linear())[0] == doctest::Approx(2.0 * 1.7));
  // zero residual means zero gradient
  BaseGraph g2 = BaseGraph::from_layered({2, 2});
  Weights w2({0.3, -0.2, 0.8, 0.1});
  std::vector<double> x = {0.5, -1.0};
  std::vector<double> y = forward(g2, w2, x, Activation::linear()).output;
  for (double v : backprop(g2, w2, x, y, Activation::linear())) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("masked direction zero set and weight-zeroing oracle") {
  Rng rng(9);
  BaseGraph g = BaseGraph::from_layered({2, 3, 2});
  Activation act = Activation::sigmoid();
  Weights w = reference::random_weights(g, rng, -1.0, 1.0);
  MaskDistribution dist = MaskDistribution::dropconnect(g, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    Mask f = dist.sample(rng);
    std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<double> y = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<double> delta = masked_direction(g, w, f, x, y, act);
    // masked coordinates are exactly zero
    for (int e = 0; e < g.edge_count(); ++e)
      if (!f.bit(e)) CHECK(delta[static_cast<std::size_t>(e)] == 0.0);
    // independent oracle: zero the weights first, then plain backprop
    Weights zeroed = w;
    for (int e = 0; e < g.edge_count(); ++e)
      if (!f.bit(e)) zeroed[e] = 0.0;
    std::vector<double> oracle = backprop(g, zeroed, x, y, act);
    for (int e = 0; e < g.edge_count(); ++e) {
      double expect = f.bit(e) ? oracle[static_cast<std::size_t>(e)] : 0.0;
      CHECK(delta[static_cast<std::size_t>(e)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked direction hand values") {
  BaseGraph g = BaseGraph::from_layered({1, 1});
  Weights w({0.4});
  Mask on(1, true), off(1, false);
  // d/dw (y - wx)^2 = -2(y - w) at x=1: w=0.4, y=2 -> -3.2
  CHECK(masked_direction(g, w, on, {1.0}, {2.0}, Activation::linear())[0] ==
        doctest::Approx(-2.0 * (2.0 - 0.4)));
  CHECK(masked_direction(g, w, off, {1.0}, {2.0}, Activation::linear())[0] == 0.0);
  // every coordinate of the all-zeros mask is pinned to zero
  BaseGraph g3 = BaseGraph::from_layered({2, 3, 2});
  Mask none(g3.edge_count(), false);
  for (double v : masked_direction(g3, Weights::constant(12, 0.4), none, {1.0, 1.0}, {1.0, 1.0},
                                   Activation::sigmoid()))
    CHECK(v == 0.0);
  // all-ones mask reproduces plain backprop
  BaseGraph g2 = reference::depth3_tree();
  Rng rng(4);
  Weights w2 = reference::random_weights(g2, rng, -1, 1);
  std::vector<double> y2(7, 0.5);
  Mask all(g2.edge_count(), true);
  std::vector<double> a = masked_direction(g2, w2, all, {1.0}, y2, Activation::linear());
  std::vector<double> b = backprop(g2, w2, {1.0}, y2, Activation::linear());
  for (std::size_t e = 0; e < a.size(); ++e) CHECK(a[e] == b[e]);
}

TEST_CASE("graph route agrees with the layered matrix route") {
  Rng rng(13);
  for (const std::vector<int>& dims :
       {std::vector<int>{1, 1, 1}, std::vector<int>{2, 3, 2}, std::vector<int>{3, 2, 4, 1}}) {
    BaseGraph g = BaseGraph::from_layered(dims);
    layered::Layout lay = layered::Layout::infer(g);
    for (const Activation& act : {Activation::linear(), Activation::sigmoid()}) {
      Weights w = reference::random_weights(g, rng, -1.0, 1.0);
      std::vector<double> x(static_cast<std::size_t>(dims.front()));
      std::vector<double> y(static_cast<std::size_t>(dims.back()));
      for (auto& v : x) v = rng.uniform(-1.0, 1.0);
      for (auto& v : y) v = rng.uniform(-1.0, 1.0);
      std::vector<double> out_g = forward(g, w, x, act).output;
      std::vector<double> out_m = layered::forward(lay, w, x, act).output;
      for (std::size_t j = 0; j < out_g.size(); ++j)
        CHECK(out_g[j] == doctest::Approx(out_m[j]).epsilon(1e-13));
      std::vector<double> fb_g = backprop(g, w, x, y, act);
      std::vector<double> fb_m = layered::backprop(lay, w, x, y, act);
      for (std::size_t e = 0; e < fb_g.size(); ++e)
        CHECK(fb_g[e] == doctest::Approx(fb_m[e]).epsilon(1e-12));
    }
  }
}

TEST_CASE("dimension mismatches are rejected") {
  BaseGraph g = BaseGraph::from_layered({2, 1});
  Weights w = Weights::zeros(2);
  CHECK_THROWS_AS(forward(g, w, {1.0}, Activation::linear()), Error);
  CHECK_THROWS_AS(backprop(g, w, {1.0, 2.0}, {1.0, 2.0}, Activation::linear()), Error);
  CHECK_THROWS_AS(forward(g, Weights::zeros(5), {1.0, 2.0}, Activation::linear()), Error);
}

TEST_CASE("weights reject non-finite values") {
  CHECK_THROWS_AS(Weights({1.0, std::numeric_limits<double>::infinity()}), Error);
  Weights w({1.0, 2.0});
  w[0] = std::nan("");
  CHECK_THROWS_AS(w.ensure_finite("test"), Error);
}
