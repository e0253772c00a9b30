#pragma once
// The network function, its gradient, and the masked update direction.
//
// The primary implementation is per-edge message passing on the base graph:
// every internal vertex applies the activation to the weighted sum of its
// in-edges, output vertices stay affine. A matrix-form implementation for
// dense layered graphs lives in namespace `layered` and is cross-checked
// against the graph route in the tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dropnet/common.hpp"
#include "dropnet/data.hpp"
#include "dropnet/graph.hpp"
#include "dropnet/masks.hpp"

namespace dropnet {

// Activations restricted to polynomially bounded maps with continuous
// derivatives; ReLU-style kinks are out of contract.
class Activation {
 public:
  enum class Kind { linear, sigmoid, polynomial };

  static Activation linear() { return Activation(Kind::linear, {}); }
  static Activation sigmoid() { return Activation(Kind::sigmoid, {}); }
  static Activation polynomial(std::vector<double> coefficients) {
    require(!coefficients.empty(), Errc::config_error, "polynomial needs coefficients");
    return Activation(Kind::polynomial, std::move(coefficients));
  }

  Kind kind() const { return kind_; }
  bool is_linear() const { return kind_ == Kind::linear; }
  const std::vector<double>& coefficients() const { return coeffs_; }

  double value(double z) const {
    switch (kind_) {
      case Kind::linear: return z;
      case Kind::sigmoid: return 1.0 / (1.0 + std::exp(-z));
      case Kind::polynomial: {
        double acc = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 0;) acc = acc * z + coeffs_[i];
        return acc;
      }
    }
    return z;
  }

  // Analytic derivative; never a numerical one.
  double derivative(double z) const {
    switch (kind_) {
      case Kind::linear: return 1.0;
      case Kind::sigmoid: {
        double s = 1.0 / (1.0 + std::exp(-z));
        return s * (1.0 - s);
      }
      case Kind::polynomial: {
        double acc = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 1;)
          acc = acc * z + coeffs_[i] * static_cast<double>(i);
        return acc;
      }
    }
    return 1.0;
  }

  // Continuous derivatives available. Linear and sigmoid are smooth; for a
  // polynomial we report its degree, the order up to which it stays
  // polynomially bounded in the class definition.
  int smoothness_order() const {
    if (kind_ == Kind::polynomial) return static_cast<int>(coeffs_.size()) - 1;
    return std::numeric_limits<int>::max();
  }

  bool polynomially_bounded() const { return true; }

  // sup |sigma(z)| over |z| <= m, used by the variance monitor.
  double abs_bound(double m) const {
    switch (kind_) {
      case Kind::linear: return m;
      case Kind::sigmoid: return 1.0;
      case Kind::polynomial: {
        double acc = 0.0;
        for (std::size_t i = 0; i < coeffs_.size(); ++i)
          acc += std::abs(coeffs_[i]) * std::pow(m, static_cast<double>(i));
        return acc;
      }
    }
    return m;
  }

  // sup |sigma'(z)| over |z| <= m.
  double derivative_abs_bound(double m) const {
    switch (kind_) {
      case Kind::linear: return 1.0;
      case Kind::sigmoid: return 0.25;
      case Kind::polynomial: {
        double acc = 0.0;
        for (std::size_t i = 1; i < coeffs_.size(); ++i)
          acc += static_cast<double>(i) * std::abs(coeffs_[i]) * std::pow(m, static_cast<double>(i - 1));
        return acc;
      }
    }
    return 1.0;
  }

  const char* name() const {
    switch (kind_) {
      case Kind::linear: return "linear";
      case Kind::sigmoid: return "sigmoid";
      case Kind::polynomial: return "polynomial";
    }
    return "linear";
  }

 private:
  Activation(Kind kind, std::vector<double> coeffs) : kind_(kind), coeffs_(std::move(coeffs)) {}
  Kind kind_;
  std::vector<double> coeffs_;
};

// One real weight per edge, stored flat by EdgeId.
class Weights {
 public:
  Weights() = default;
  explicit Weights(std::vector<double> values) : w_(std::move(values)) {
    require(all_finite(w_), Errc::numeric_overflow, "non-finite weight at construction");
  }
  static Weights zeros(int n) { return Weights(std::vector<double>(static_cast<std::size_t>(n), 0.0)); }
  static Weights constant(int n, double v) {
    return Weights(std::vector<double>(static_cast<std::size_t>(n), v));
  }

  int size() const { return static_cast<int>(w_.size()); }
  double operator[](EdgeId e) const { return w_[static_cast<std::size_t>(e)]; }
  double& operator[](EdgeId e) { return w_[static_cast<std::size_t>(e)]; }
  const std::vector<double>& values() const { return w_; }
  std::vector<double>& values() { return w_; }

  void ensure_finite(const std::string& context) const {
    for (std::size_t i = 0; i < w_.size(); ++i)
      if (!std::isfinite(w_[i]))
        fail(Errc::numeric_overflow, context + ": weight " + std::to_string(i) + " is not finite");
  }

 private:
  std::vector<double> w_;
};

// Squared Euclidean loss.
inline double loss(const std::vector<double>& yhat, const std::vector<double>& y) {
  require(yhat.size() == y.size(), Errc::dimension_mismatch, "prediction/target size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += sq(yhat[i] - y[i]);
  return s;
}

struct ForwardResult {
  std::vector<double> output;        // by output rank
  std::vector<double> vertex_value;  // A_v, by vertex index
  std::vector<double> vertex_pre;    // pre-activation per vertex index
};

namespace detail {

// Message-passing forward; `mask` of nullptr means no masking.
inline ForwardResult forward_impl(const BaseGraph& g, const Weights& w, const Mask* mask,
                                  const std::vector<double>& x, const Activation& act) {
  require(static_cast<int>(x.size()) == static_cast<int>(g.inputs().size()),
          Errc::dimension_mismatch, "input size does not match graph inputs");
  require(w.size() == g.edge_count(), Errc::dimension_mismatch,
          "weight vector does not match edge count");
  const int L = g.depth();
  const auto n = static_cast<std::size_t>(g.vertex_count());
  ForwardResult r;
  r.vertex_value.assign(n, 0.0);
  r.vertex_pre.assign(n, 0.0);
  for (NodeId v : g.inputs())
    r.vertex_value[static_cast<std::size_t>(g.vertex_index(v))] =
        x[static_cast<std::size_t>(g.input_rank(v))];
  for (int d = 1; d <= L; ++d) {
    for (NodeId v : g.layer(d)) {
      double pre = 0.0;
      for (EdgeId e : g.in_edges(v)) {
        double we = w[e];
        if (mask && !mask->bit(e)) we = 0.0;
        pre += we * r.vertex_value[static_cast<std::size_t>(g.vertex_index(g.edge(e).source))];
      }
      auto vi = static_cast<std::size_t>(g.vertex_index(v));
      r.vertex_pre[vi] = pre;
      r.vertex_value[vi] = (d == L) ? pre : act.value(pre);  // last layer stays affine
    }
  }
  r.output.resize(g.outputs().size());
  for (NodeId v : g.outputs())
    r.output[static_cast<std::size_t>(g.output_rank(v))] =
        r.vertex_value[static_cast<std::size_t>(g.vertex_index(v))];
  return r;
}

// Reverse message passing for the gradient of the squared loss. Sensitivity
// at an output is the residual y - yhat; per edge the partial derivative is
// -2 * sensitivity(target) * value(source).
inline std::vector<double> backprop_impl(const BaseGraph& g, const Weights& w, const Mask* mask,
                                         const std::vector<double>& x, const std::vector<double>& y,
                                         const Activation& act) {
  require(static_cast<int>(y.size()) == static_cast<int>(g.outputs().size()),
          Errc::dimension_mismatch, "target size does not match graph outputs");
  ForwardResult f = forward_impl(g, w, mask, x, act);
  const int L = g.depth();
  std::vector<double> sens(static_cast<std::size_t>(g.vertex_count()), 0.0);
  for (NodeId v : g.outputs())
    sens[static_cast<std::size_t>(g.vertex_index(v))] =
        y[static_cast<std::size_t>(g.output_rank(v))] -
        f.vertex_value[static_cast<std::size_t>(g.vertex_index(v))];
  for (int d = L - 1; d >= 1; --d) {
    for (NodeId v : g.layer(d)) {
      double acc = 0.0;
      for (EdgeId e : g.out_edges(v)) {
        double we = w[e];
        if (mask && !mask->bit(e)) we = 0.0;
        acc += we * sens[static_cast<std::size_t>(g.vertex_index(g.edge(e).target))];
      }
      auto vi = static_cast<std::size_t>(g.vertex_index(v));
      sens[vi] = acc * act.derivative(f.vertex_pre[vi]);
    }
  }
  std::vector<double> fb(static_cast<std::size_t>(g.edge_count()), 0.0);
  for (int e = 0; e < g.edge_count(); ++e) {
    const Edge& ed = g.edge(e);
    fb[static_cast<std::size_t>(e)] =
        -2.0 * sens[static_cast<std::size_t>(g.vertex_index(ed.target))] *
        f.vertex_value[static_cast<std::size_t>(g.vertex_index(ed.source))];
  }
  return fb;
}

}  // namespace detail

inline ForwardResult forward(const BaseGraph& g, const Weights& w, const std::vector<double>& x,
                             const Activation& act) {
  return detail::forward_impl(g, w, nullptr, x, act);
}

inline ForwardResult forward_masked(const BaseGraph& g, const Weights& w, const Mask& mask,
                                    const std::vector<double>& x, const Activation& act) {
  require(mask.size() == g.edge_count(), Errc::dimension_mismatch, "mask length mismatch");
  return detail::forward_impl(g, w, &mask, x, act);
}

// Gradient of loss(Psi_W(x), y) with respect to every edge weight.
inline std::vector<double> backprop(const BaseGraph& g, const Weights& w,
                                    const std::vector<double>& x, const std::vector<double>& y,
                                    const Activation& act) {
  return detail::backprop_impl(g, w, nullptr, x, y, act);
}

// Delta = F .* FB_{F .* W}(x, y): the gradient of the masked network, with
// masked coordinates pinned to zero so they are never updated.
inline std::vector<double> masked_direction(const BaseGraph& g, const Weights& w, const Mask& mask,
                                            const std::vector<double>& x,
                                            const std::vector<double>& y, const Activation& act) {
  require(mask.size() == g.edge_count(), Errc::dimension_mismatch, "mask length mismatch");
  std::vector<double> fb = detail::backprop_impl(g, w, &mask, x, y, act);
  for (int e = 0; e < g.edge_count(); ++e)
    if (!mask.bit(e)) fb[static_cast<std::size_t>(e)] = 0.0;
  return fb;
}

// Matrix-form recursions for dense layered graphs. Independent of the graph
// route above; the tests require both to agree on layered topologies.
namespace layered {

struct Layout {
  std::vector<int> dims;          // d_0 .. d_L
  std::vector<int> block_offset;  // first edge id of each inter-layer block

  static Layout infer(const BaseGraph& g) {
    Layout lay;
    for (int d = 0; d <= g.depth(); ++d) {
      int width = static_cast<int>(g.layer(d).size());
      require(width >= 1, Errc::config_error, "graph is not layered");
      lay.dims.push_back(width);
    }
    int offset = 0;
    for (int l = 0; l + 1 <= g.depth(); ++l) {
      lay.block_offset.push_back(offset);
      offset += lay.dims[static_cast<std::size_t>(l)] * lay.dims[static_cast<std::size_t>(l + 1)];
    }
    require(offset == g.edge_count(), Errc::config_error,
            "graph is not a dense layered topology");
    return lay;
  }

  int layers() const { return static_cast<int>(dims.size()) - 1; }

  // Edge id of W_{layer}[r][l], layer in 1..L, r < d_layer, l < d_{layer-1}.
  // Canonical edge order within a block is (source l, target r).
  int weight_index(int layer, int r, int l) const {
    return block_offset[static_cast<std::size_t>(layer - 1)] +
           l * dims[static_cast<std::size_t>(layer)] + r;
  }
};

struct LayeredForward {
  std::vector<double> output;
  std::vector<std::vector<double>> a;    // A_0 .. A_L
  std::vector<std::vector<double>> pre;  // pre-activations per layer 1..L
};

inline LayeredForward forward(const Layout& lay, const Weights& w, const std::vector<double>& x,
                              const Activation& act) {
  const int L = lay.layers();
  LayeredForward f;
  f.a.resize(static_cast<std::size_t>(L) + 1);
  f.pre.resize(static_cast<std::size_t>(L) + 1);
  f.a[0] = x;
  for (int i = 1; i <= L; ++i) {
    const int rows = lay.dims[static_cast<std::size_t>(i)];
    const int cols = lay.dims[static_cast<std::size_t>(i - 1)];
    std::vector<double> pre(static_cast<std::size_t>(rows), 0.0);
    for (int r = 0; r < rows; ++r)
      for (int l = 0; l < cols; ++l)
        pre[static_cast<std::size_t>(r)] +=
            w[lay.weight_index(i, r, l)] * f.a[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(l)];
    f.pre[static_cast<std::size_t>(i)] = pre;
    if (i == L) {
      f.a[static_cast<std::size_t>(i)] = pre;
    } else {
      std::vector<double> av(static_cast<std::size_t>(rows));
      for (int r = 0; r < rows; ++r) av[static_cast<std::size_t>(r)] = act.value(pre[static_cast<std::size_t>(r)]);
      f.a[static_cast<std::size_t>(i)] = std::move(av);
    }
  }
  f.output = f.a[static_cast<std::size_t>(L)];
  return f;
}

// FB tensor via the matrix recursion: the top sensitivity is the residual
// y - W_L A_{L-1}, lower ones are (W_{i+1}^T R_{i+1}) .* sigma'(W_i A_{i-1}),
// and the per-block gradient is -2 R_i A_{i-1}^T.
inline std::vector<double> backprop(const Layout& lay, const Weights& w,
                                    const std::vector<double>& x, const std::vector<double>& y,
                                    const Activation& act) {
  const int L = lay.layers();
  LayeredForward f = forward(lay, w, x, act);
  std::vector<std::vector<double>> r(static_cast<std::size_t>(L) + 1);
  r[static_cast<std::size_t>(L)].resize(y.size());
  for (std::size_t j = 0; j < y.size(); ++j)
    r[static_cast<std::size_t>(L)][j] = y[j] - f.a[static_cast<std::size_t>(L)][j];
  for (int i = L - 1; i >= 1; --i) {
    const int rows = lay.dims[static_cast<std::size_t>(i)];
    const int above = lay.dims[static_cast<std::size_t>(i + 1)];
    std::vector<double> ri(static_cast<std::size_t>(rows), 0.0);
    for (int l = 0; l < rows; ++l) {
      double acc = 0.0;
      for (int q = 0; q < above; ++q)
        acc += w[lay.weight_index(i + 1, q, l)] * r[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(q)];
      ri[static_cast<std::size_t>(l)] =
          acc * act.derivative(f.pre[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)]);
    }
    r[static_cast<std::size_t>(i)] = std::move(ri);
  }
  std::vector<double> fb(static_cast<std::size_t>(lay.block_offset.back()) +
                             static_cast<std::size_t>(lay.dims[static_cast<std::size_t>(L)] *
                                                      lay.dims[static_cast<std::size_t>(L - 1)]),
                         0.0);
  for (int i = 1; i <= L; ++i) {
    const int rows = lay.dims[static_cast<std::size_t>(i)];
    const int cols = lay.dims[static_cast<std::size_t>(i - 1)];
    for (int rr = 0; rr < rows; ++rr)
      for (int l = 0; l < cols; ++l)
        fb[static_cast<std::size_t>(lay.weight_index(i, rr, l))] =
            -2.0 * r[static_cast<std::size_t>(i)][static_cast<std::size_t>(rr)] *
            f.a[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(l)];
  }
  return fb;
}

}  // namespace layered

}  // namespace dropnet
