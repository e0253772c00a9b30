#pragma once
// Optimizers and convergence machinery: projected dropout SGD, deterministic
// gradient descent on the dropout risk, conserved quantities of the gradient
// flow, the certified step size with its region checks, the PL inequality,
// the per-step drift bound on conserved quantities, and the exponential
// convergence envelope.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dropnet/common.hpp"
#include "dropnet/data.hpp"
#include "dropnet/graph.hpp"
#include "dropnet/masks.hpp"
#include "dropnet/network.hpp"
#include "dropnet/risk.hpp"

namespace dropnet {

constexpr double kRelSlack = 1e-9;  // absorbs floating-point accumulation in bound checks

// Convex compact constraint sets with a unique Euclidean projection.
class ProjectionSet {
 public:
  enum class Kind { none, box, layer_frobenius_ball };

  static ProjectionSet none() { return ProjectionSet(Kind::none); }
  static ProjectionSet box(double bound) {
    require(bound > 0.0, Errc::config_error, "box bound must be positive");
    ProjectionSet p(Kind::box);
    p.bound_ = bound;
    return p;
  }
  static ProjectionSet layer_frobenius_ball(std::vector<double> radii) {
    for (double r : radii) require(r > 0.0, Errc::config_error, "ball radius must be positive");
    ProjectionSet p(Kind::layer_frobenius_ball);
    p.radii_ = std::move(radii);
    return p;
  }

  Kind kind() const { return kind_; }
  bool active_set() const { return kind_ != Kind::none; }
  double box_bound() const { return bound_; }
  const std::vector<double>& radii() const { return radii_; }

  // Projects in place; returns true when the projection moved the point.
  bool project(const BaseGraph& g, Weights& w) const {
    switch (kind_) {
      case Kind::none: return false;
      case Kind::box: {
        bool hit = false;
        for (int e = 0; e < w.size(); ++e) {
          double clipped = std::clamp(w[e], -bound_, bound_);
          if (clipped != w[e]) {
            w[e] = clipped;
            hit = true;
          }
        }
        return hit;
      }
      case Kind::layer_frobenius_ball: {
        require(static_cast<int>(radii_.size()) == g.depth(), Errc::dimension_mismatch,
                "need one radius per layer");
        bool hit = false;
        for (int l = 0; l < g.depth(); ++l) {
          double norm2 = 0.0;
          for (int e = 0; e < g.edge_count(); ++e)
            if (g.vertex_depth(g.edge(e).source) == l) norm2 += sq(w[e]);
          double norm = std::sqrt(norm2);
          double radius = radii_[static_cast<std::size_t>(l)];
          if (norm > radius) {
            double scale = radius / norm;
            for (int e = 0; e < g.edge_count(); ++e)
              if (g.vertex_depth(g.edge(e).source) == l) w[e] *= scale;
            hit = true;
          }
        }
        return hit;
      }
    }
    return false;
  }

 private:
  explicit ProjectionSet(Kind kind) : kind_(kind) {}
  Kind kind_;
  double bound_ = 0.0;
  std::vector<double> radii_;
};

class StepSchedule {
 public:
  enum class Kind { constant, robbins_monro };

  static StepSchedule constant(double alpha) {
    require(alpha >= 0.0, Errc::config_error, "step size must be nonnegative");
    StepSchedule s(Kind::constant);
    s.alpha_ = alpha;
    return s;
  }
  // alpha_t = a / (t0 + t): diverging sum, square-summable.
  static StepSchedule robbins_monro(double a, double t0) {
    require(a > 0.0 && t0 > 0.0, Errc::config_error, "robbins-monro needs a > 0 and t0 > 0");
    StepSchedule s(Kind::robbins_monro);
    s.a_ = a;
    s.t0_ = t0;
    return s;
  }

  Kind kind() const { return kind_; }
  double alpha(std::uint64_t t) const {  // t >= 1 for the first update
    return kind_ == Kind::constant ? alpha_ : a_ / (t0_ + static_cast<double>(t));
  }

 private:
  explicit StepSchedule(Kind kind) : kind_(kind) {}
  Kind kind_;
  double alpha_ = 0.0;
  double a_ = 0.0, t0_ = 0.0;
};

// C_f = W_f^2 - sum of squared leaf weights of the subtree below f, for
// every non-leaf edge f. Invariant under the gradient flow of the risk.
struct ConservedSet {
  std::vector<EdgeId> edges;   // non-leaf edges, ascending
  std::vector<double> values;  // C_f per edge above
  double c_min = std::numeric_limits<double>::quiet_NaN();
};

inline ConservedSet conserved_quantities(const BaseGraph& g, const Weights& w) {
  ConservedSet set;
  set.edges = g.non_leaf_edges();
  set.values.reserve(set.edges.size());
  for (EdgeId f : set.edges) {
    double c = sq(w[f]);
    for (EdgeId l : g.subtree_leaves(f)) c -= sq(w[l]);
    set.values.push_back(c);
  }
  if (!set.values.empty()) set.c_min = *std::min_element(set.values.begin(), set.values.end());
  return set;
}

// Region and rate certificate. All quantities are fixed from the initial
// point; the run then only has to stay inside the certified region.
struct StepSizeCertificate {
  double M = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;
  double c_min0 = 0.0;
  std::vector<double> c0;  // conserved values at the initial point
  double i0 = 0.0;         // I(W0)
  double nu_min = 0.0;
  double nu_max = 0.0;
  double nu_l1 = 0.0;
  double kappa = 0.0;
  double tau = 0.0;
  double beta = 0.0;
  double alpha_max = 0.0;
  double alpha_term_region = 0.0;
  double alpha_term_smooth = 0.0;
  double alpha_term_rate = 0.0;
  bool n9_ok = false;
  bool n10_ok = false;
  std::string violation;  // empty when certified

  bool ok() const { return violation.empty(); }
};

inline void require_certified(const StepSizeCertificate& cert) {
  require(cert.ok(), Errc::certification_failed, cert.violation);
}

// Certifies the initial point and computes the step-size bound
//   alpha_max = min( nu_min e^{-1/2} C0^L / (8 |nu|_1 (2L-1) M^{2(L-1)} I0),
//                    1 / (12 nu_max |Gamma| M^{2(L-1)}),
//                    1 / (2 nu_min C0^{L-1}) )
// and the envelope rate tau = 4 nu_min e^{-1/2} C0^{L-1}. kappa is the
// per-step contraction parameter at its maximizing value.
inline StepSizeCertificate certify(const BaseGraph& g, const Weights& w0, const PathStats& stats,
                                   double M, double delta, double epsilon) {
  require(g.validate().arborescence, Errc::not_arborescence,
          "step-size certification is defined on arborescences");
  require(0.0 < delta && delta < M, Errc::certification_failed,
          "region parameters need 0 < delta < M");
  const int L = g.depth();
  require(L >= 2, Errc::certification_failed,
          "L1: depth-1 trees have no non-leaf edges, so C_min is undefined");

  StepSizeCertificate cert;
  cert.M = M;
  cert.delta = delta;
  cert.epsilon = epsilon;

  ConservedSet cons = conserved_quantities(g, w0);
  cert.c0 = cons.values;
  cert.c_min0 = cons.c_min;
  cert.i0 = path_excess(stats, w0);
  cert.nu_min = stats.nu_min;
  cert.nu_max = stats.nu_max;
  cert.nu_l1 = stats.nu_l1;

  // (N10): half the smallest conserved value exceeds delta^2.
  cert.n10_ok = 0.5 * cert.c_min0 > sq(delta);

  // (N9): W0 in the region and every |z_gamma| <= M^L.
  bool in_region = true;
  for (EdgeId f : g.non_leaf_edges())
    in_region = in_region && std::abs(w0[f]) > delta && std::abs(w0[f]) < M;
  for (EdgeId f : g.leaf_edges()) in_region = in_region && std::abs(w0[f]) < M;
  for (double c : cons.values) in_region = in_region && c > 0.0;  // C_f in [C_f/2, 3C_f/2]
  in_region = in_region && cert.i0 <= epsilon;
  const bool z_bounded = stats.z_max_abs <= std::pow(M, L);
  cert.n9_ok = in_region && z_bounded;

  const double m_pow = std::pow(M, 2 * (L - 1));
  const double c_pow_lm1 = std::pow(cert.c_min0, L - 1);
  const double gamma_count = static_cast<double>(stats.paths.size());
  cert.kappa = c_pow_lm1 * std::pow(1.0 + 1.0 / (2.0 * (L - 1)), -(L - 1));
  cert.tau = 4.0 * stats.nu_min * std::exp(-0.5) * c_pow_lm1;
  cert.beta = 6.0 * stats.nu_max * gamma_count * m_pow;

  cert.alpha_term_region =
      cert.i0 > 0.0 ? stats.nu_min * std::exp(-0.5) * std::pow(cert.c_min0, L) /
                          (8.0 * stats.nu_l1 * (2.0 * L - 1.0) * m_pow * cert.i0)
                    : std::numeric_limits<double>::infinity();
  cert.alpha_term_smooth = 1.0 / (12.0 * stats.nu_max * gamma_count * m_pow);
  cert.alpha_term_rate = 1.0 / (2.0 * stats.nu_min * c_pow_lm1);
  cert.alpha_max =
      std::min({cert.alpha_term_region, cert.alpha_term_smooth, cert.alpha_term_rate});

  if (!cert.n9_ok)
    cert.violation = z_bounded ? "N9: initial point outside the certified region"
                               : "N9: some |z_gamma| exceeds M^L";
  else if (!cert.n10_ok)
    cert.violation = "N10: C_min(W0)/2 must exceed delta^2";
  return cert;
}

// PL inequality at one point: |grad I|^2 >= 4 nu_min C_min^{L-1} I(W).
struct PlCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

inline PlCheck pl_check(const BaseGraph& g, const Weights& w, const PathStats& stats,
                        double c_min_t) {
  PlCheck out;
  std::vector<double> grad = path_excess_gradient(g, stats, w);
  for (double v : grad) out.lhs += v * v;
  out.rhs = 4.0 * stats.nu_min * std::pow(c_min_t, stats.depth - 1) * path_excess(stats, w);
  out.ok = out.lhs >= out.rhs * (1.0 - kRelSlack);
  return out;
}

struct TraceRecord {
  std::uint64_t t = 0;
  double D = std::numeric_limits<double>::quiet_NaN();
  double I = std::numeric_limits<double>::quiet_NaN();
  double grad_norm2 = std::numeric_limits<double>::quiet_NaN();
  double envelope = std::numeric_limits<double>::quiet_NaN();  // gap / certified bound
  double pl_lhs = std::numeric_limits<double>::quiet_NaN();
  double pl_rhs = std::numeric_limits<double>::quiet_NaN();
  bool boundary_hit = false;  // projection clipped the step that produced this state
  int a_t = -1;               // cumulative contraction predicate; -1 = not applicable
  int b_t = -1;               // cumulative region predicate
  std::vector<double> c;      // conserved values, non-leaf edge order
  bool estimated = false;     // diagnostics are Monte Carlo, not exact
  double pi_norm = 0.0;       // projection residual magnitude / alpha
};

struct RunTrace {
  std::vector<TraceRecord> records;
  std::vector<std::uint8_t> step_boundary_hits;  // one flag per executed step
  std::vector<std::pair<std::uint64_t, Weights>> snapshots;
  Weights final_weights;
  std::uint64_t steps = 0;
  bool exact_diagnostics = true;
  double d_floor = std::numeric_limits<double>::quiet_NaN();  // D_star + disconnected const
  std::optional<StepSizeCertificate> certificate;
};

// Per-step drift of conserved quantities under GD against the certified
// bound 4 alpha^2 |nu|_1 M^{2(L-1)} I(W^t).
struct DriftCheck {
  double max_drift = 0.0;
  double bound = 0.0;
  bool ok = false;
};

inline DriftCheck drift_check(const TraceRecord& before, const TraceRecord& after, double alpha,
                              double nu_l1, double M, int L) {
  DriftCheck out;
  require(before.c.size() == after.c.size(), Errc::dimension_mismatch,
          "trace records from different graphs");
  double c_scale = 1.0;
  for (std::size_t i = 0; i < before.c.size(); ++i) {
    out.max_drift = std::max(out.max_drift, std::abs(after.c[i] - before.c[i]));
    c_scale = std::max({c_scale, std::abs(before.c[i]), std::abs(after.c[i])});
  }
  out.bound = 4.0 * sq(alpha) * nu_l1 * std::pow(M, 2 * (L - 1)) * before.I;
  // the measured difference is quantized at the ulp of C, so once the bound
  // shrinks below the representation floor a few ulps must be allowed
  const double resolution = 8.0 * std::numeric_limits<double>::epsilon() * c_scale;
  out.ok = out.max_drift <= out.bound * (1.0 + kRelSlack) + resolution;
  return out;
}

namespace detail {

// Shared diagnostic context: decides between the path route (linear
// activation on an arborescence with independent masks), full enumeration,
// and Monte Carlo estimates.
struct DiagContext {
  const BaseGraph& g;
  const MaskDistribution& dist;
  const DataDistribution& data;
  const Activation& act;
  std::size_t support_cap;
  std::size_t mc_samples;
  bool decomposable = false;
  bool enumerable = false;
  std::optional<PathStats> stats;
  double d_floor = std::numeric_limits<double>::quiet_NaN();

  DiagContext(const BaseGraph& graph, const MaskDistribution& d, const DataDistribution& dd,
              const Activation& a, std::size_t cap, std::size_t mc)
      : g(graph), dist(d), data(dd), act(a), support_cap(cap), mc_samples(mc) {
    enumerable = dist.enumerable(support_cap);
    decomposable = g.validate().arborescence && act.is_linear() && !dist.joint() && enumerable;
    if (decomposable) {
      ArborescenceDecomposition dec =
          arborescence_decomposition(g, Weights::zeros(g.edge_count()), dist, data, act, support_cap);
      stats = std::move(dec.stats);
      d_floor = dec.D_star + dec.disconnected_constant;
    }
  }

  void fill(TraceRecord& rec, const Weights& w, Rng* mc_rng) const {
    rec.c = conserved_quantities(g, w).values;
    if (decomposable) {
      rec.I = path_excess(*stats, w);
      rec.D = rec.I + d_floor;
      std::vector<double> grad = path_excess_gradient(g, *stats, w);
      rec.grad_norm2 = 0.0;
      for (double v : grad) rec.grad_norm2 += v * v;
      double c_min = rec.c.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : *std::min_element(rec.c.begin(), rec.c.end());
      if (!rec.c.empty()) {
        PlCheck pl = pl_check(g, w, *stats, c_min);
        rec.pl_lhs = pl.lhs;
        rec.pl_rhs = pl.rhs;
      }
      rec.estimated = false;
    } else if (enumerable) {
      rec.D = exact_risk(g, w, dist, data, act, support_cap);
      std::vector<double> grad = exact_gradient(g, w, dist, data, act, support_cap);
      rec.grad_norm2 = 0.0;
      for (double v : grad) rec.grad_norm2 += v * v;
      rec.estimated = false;
    } else {
      Rng& rng = *mc_rng;
      rec.D = mc_risk(g, w, dist, data, act, mc_samples, rng).value;
      McGradient grad = mc_gradient(g, w, dist, data, act, mc_samples, rng);
      rec.grad_norm2 = 0.0;
      for (double v : grad.mean) rec.grad_norm2 += v * v;
      rec.estimated = true;
    }
  }
};

}  // namespace detail

struct SgdOptions {
  std::uint64_t steps = 0;
  StepSchedule schedule = StepSchedule::constant(0.0);
  ProjectionSet projection = ProjectionSet::none();
  std::uint64_t diag_every = 1;
  std::size_t support_cap = MaskDistribution::kDefaultSupportCap;
  std::size_t mc_diag_samples = 4096;
  bool keep_snapshots = false;
};

// Projected dropout SGD: W <- P_H(W - alpha_t * Delta_t) with a fresh
// (F, X, Y) draw per step. Diagnostics are exact whenever the supports are
// enumerable and are flagged as estimates otherwise.
inline RunTrace sgd_run(const BaseGraph& g, const Activation& act, const Weights& w0,
                        const MaskDistribution& dist, const DataDistribution& data,
                        const SgdOptions& opt, Rng& rng) {
  require(opt.diag_every >= 1, Errc::config_error, "diag_every must be >= 1");
  if (!dist.joint()) detail::check_dims(g, data);
  require(w0.size() == g.edge_count(), Errc::dimension_mismatch, "initial weights size mismatch");

  // Diagnostics consume their own stream so the trajectory does not depend
  // on how often we record.
  Rng diag_rng(split_seed(rng.next_u64(), 0x9d1a9));
  detail::DiagContext ctx(g, dist, data, act, opt.support_cap, opt.mc_diag_samples);

  RunTrace trace;
  trace.exact_diagnostics = ctx.decomposable || ctx.enumerable;
  trace.d_floor = ctx.d_floor;
  trace.step_boundary_hits.reserve(opt.steps);

  Weights w = w0;
  bool last_hit = false;
  double last_pi = 0.0;
  auto record = [&](std::uint64_t t) {
    TraceRecord rec;
    rec.t = t;
    rec.boundary_hit = last_hit;
    rec.pi_norm = last_pi;
    ctx.fill(rec, w, &diag_rng);
    trace.records.push_back(std::move(rec));
    if (opt.keep_snapshots) trace.snapshots.emplace_back(t, w);
  };

  record(0);
  for (std::uint64_t t = 0; t < opt.steps; ++t) {
    const double alpha = opt.schedule.alpha(t + 1);
    auto [mask, sample] = dist.sample_joint(rng, data);
    std::vector<double> delta = masked_direction(g, w, mask, sample.x, sample.y, act);
    Weights proposed = w;
    for (int e = 0; e < w.size(); ++e) proposed[e] -= alpha * delta[static_cast<std::size_t>(e)];
    Weights projected = proposed;
    last_hit = opt.projection.project(g, projected);
    double residual2 = 0.0;
    for (int e = 0; e < w.size(); ++e) residual2 += sq(proposed[e] - projected[e]);
    last_pi = alpha > 0.0 ? std::sqrt(residual2) / alpha : 0.0;
    w = std::move(projected);
    w.ensure_finite("sgd step " + std::to_string(t + 1));
    trace.step_boundary_hits.push_back(last_hit ? 1 : 0);
    if ((t + 1) % opt.diag_every == 0 || t + 1 == opt.steps) record(t + 1);
  }
  trace.final_weights = std::move(w);
  trace.steps = opt.steps;
  return trace;
}

struct GdOptions {
  enum class Route { automatic, enumeration, path };
  std::uint64_t steps = 0;
  double alpha = 0.0;
  std::uint64_t diag_every = 1;
  std::size_t support_cap = MaskDistribution::kDefaultSupportCap;
  Route route = Route::automatic;
  std::optional<StepSizeCertificate> certificate;
};

// Deterministic gradient descent W <- W - alpha grad D(W) with full
// diagnostics. With a certificate attached, the contraction predicate, the
// region predicate, and the envelope ratio are tracked at every step.
inline RunTrace gd_run(const BaseGraph& g, const Activation& act, const Weights& w0,
                       const MaskDistribution& dist, const DataDistribution& data,
                       const GdOptions& opt) {
  require(opt.diag_every >= 1, Errc::config_error, "diag_every must be >= 1");
  if (!dist.joint()) detail::check_dims(g, data);
  require(w0.size() == g.edge_count(), Errc::dimension_mismatch, "initial weights size mismatch");

  detail::DiagContext ctx(g, dist, data, act, opt.support_cap, 0);
  bool use_path = false;
  switch (opt.route) {
    case GdOptions::Route::automatic: use_path = ctx.decomposable; break;
    case GdOptions::Route::path:
      require(ctx.decomposable, Errc::config_error,
              "path-form gradient needs a linear arborescence with independent masks");
      use_path = true;
      break;
    case GdOptions::Route::enumeration:
      require(ctx.enumerable, Errc::support_too_large, "mask support is not enumerable");
      use_path = false;
      break;
  }
  require(use_path || ctx.enumerable, Errc::support_too_large,
          "gradient descent needs an enumerable mask support");
  if (opt.certificate) {
    require_certified(*opt.certificate);
    require(ctx.decomposable, Errc::certification_failed,
            "certified runs need a linear arborescence with independent masks");
  }

  RunTrace trace;
  trace.exact_diagnostics = true;
  trace.d_floor = ctx.d_floor;
  trace.certificate = opt.certificate;

  const StepSizeCertificate* cert = opt.certificate ? &*opt.certificate : nullptr;
  double i_prev = std::numeric_limits<double>::quiet_NaN();
  double i_zero = std::numeric_limits<double>::quiet_NaN();
  bool a_flag = true, b_flag = true;
  double contraction = 1.0;
  if (cert) contraction = std::exp(-2.0 * ctx.stats->nu_min * cert->kappa * opt.alpha);
  // Double precision converges in finite time: once a step moves every
  // weight by at most a few ulps the iterate is the attainable fixed point,
  // further contraction is unobservable, and the envelope bound saturates
  // at the stall level instead of decaying below representable resolution.
  bool stalled = false;
  double i_stall = 0.0;

  auto region_ok = [&](const Weights& w, const std::vector<double>& c_vals) {
    for (std::size_t i = 0; i < c_vals.size(); ++i) {
      double lo = cert->c0[i] / 2.0, hi = 3.0 * cert->c0[i] / 2.0;
      if (c_vals[i] < lo * (1.0 - kRelSlack) || c_vals[i] > hi * (1.0 + kRelSlack)) return false;
    }
    for (EdgeId f : g.non_leaf_edges())
      if (!(std::abs(w[f]) > cert->delta * (1.0 - kRelSlack) &&
            std::abs(w[f]) < cert->M * (1.0 + kRelSlack)))
        return false;
    for (EdgeId f : g.leaf_edges())
      if (!(std::abs(w[f]) < cert->M * (1.0 + kRelSlack))) return false;
    return true;
  };

  Weights w = w0;
  auto observe = [&](std::uint64_t t, TraceRecord& rec) {
    ctx.fill(rec, w, nullptr);
    rec.t = t;
    if (!cert) return;
    if (t == 0) {
      i_zero = rec.I;
      i_prev = rec.I;
    } else {
      if (!stalled)
        a_flag = a_flag && rec.I <= i_prev * contraction * (1.0 + kRelSlack) + 1e-300;
      i_prev = rec.I;
    }
    b_flag = b_flag && rec.I <= cert->epsilon * (1.0 + kRelSlack) && region_ok(w, rec.c);
    rec.a_t = a_flag ? 1 : 0;
    rec.b_t = b_flag ? 1 : 0;
    double bound = i_zero * std::exp(-opt.alpha * cert->tau * static_cast<double>(t) / 2.0);
    if (stalled) bound = std::max(bound, 2.0 * i_stall);
    rec.envelope = bound == 0.0 ? (rec.I == 0.0 ? 0.0 : std::numeric_limits<double>::infinity())
                                : rec.I / bound;
  };

  for (std::uint64_t t = 0;; ++t) {
    const bool at_record = t % opt.diag_every == 0 || t == opt.steps;
    if (cert || at_record) {
      // with a certificate the predicates are tracked at every step
      TraceRecord rec;
      observe(t, rec);
      if (at_record) trace.records.push_back(std::move(rec));
    }
    if (t == opt.steps) break;
    std::vector<double> grad = use_path ? path_excess_gradient(g, *ctx.stats, w)
                                        : exact_gradient(g, w, dist, data, act, opt.support_cap);
    bool tiny_step = cert != nullptr;
    for (int e = 0; e < w.size(); ++e) {
      const double before = w[e];
      w[e] -= opt.alpha * grad[static_cast<std::size_t>(e)];
      tiny_step = tiny_step && std::abs(w[e] - before) <=
                                   4.0 * std::numeric_limits<double>::epsilon() *
                                       std::max(1.0, std::abs(before));
    }
    if (tiny_step && !stalled) {
      stalled = true;
      i_stall = i_prev;
    }
    w.ensure_finite("gd step " + std::to_string(t + 1));
  }
  trace.final_weights = std::move(w);
  trace.steps = opt.steps;
  trace.step_boundary_hits.assign(opt.steps, 0);
  return trace;
}

// The certified rate specialized to i.i.d. Bernoulli(p) masks, with the
// initial excess replaced by its worst-case bound over the region so the
// reported alpha*tau depends only on (p, L, d_L, C_min0, M).
struct DropconnectRate {
  double alpha_max = 0.0;
  double tau = 0.0;
  double alpha_tau = 0.0;
  double scaling = 0.0;   // p^L C0^{2L} / (L d_L^2 M^{4L})
  double eta = 0.0;       // p^L
  double nu_ratio = 0.0;  // nu_min / |nu|_1, equals 1/d_L here
};

inline DropconnectRate dropconnect_rate(double p, int L, int d_L, double c_min0, double M,
                                        const PathStats& stats) {
  require(L >= 2, Errc::certification_failed, "rate needs depth >= 2");
  DropconnectRate out;
  out.eta = std::pow(p, L);
  out.nu_ratio = stats.nu_min / stats.nu_l1;
  const double m_pow = std::pow(M, 2 * (L - 1));
  // worst case over retention-free starts: (|z| + |P|)^2 <= 4 M^{2L} per
  // path, weighted by E[X^2] |Gamma| rather than |nu|_1 so the bound does
  // not itself shrink with p
  const double ex2 = stats.nu_max / out.eta;
  const double i0_bound =
      4.0 * ex2 * static_cast<double>(stats.paths.size()) * std::pow(M, 2 * L);
  const double term_region = stats.nu_min * std::exp(-0.5) * std::pow(c_min0, L) /
                             (8.0 * stats.nu_l1 * (2.0 * L - 1.0) * m_pow * i0_bound);
  const double term_smooth =
      1.0 / (12.0 * stats.nu_max * static_cast<double>(stats.paths.size()) * m_pow);
  const double term_rate = 1.0 / (2.0 * stats.nu_min * std::pow(c_min0, L - 1));
  out.alpha_max = std::min({term_region, term_smooth, term_rate});
  out.tau = 4.0 * stats.nu_min * std::exp(-0.5) * std::pow(c_min0, L - 1);
  out.alpha_tau = out.alpha_max * out.tau;
  out.scaling = std::pow(p, L) * std::pow(c_min0, 2 * L) /
                (static_cast<double>(L) * sq(static_cast<double>(d_L)) * std::pow(M, 4 * L));
  return out;
}

}  // namespace dropnet
