#pragma once
// The dropout risk D(W) and its exact decompositions.
//
// Two independent routes are kept side by side on purpose:
//   * enumeration - D and grad D as explicit sums over the mask support and
//     the data support (any activation);
//   * path form    - for linear activations, D = J + R + const where J sums
//     per-path quadratics weighted by retention probabilities, R collects
//     the cross-path interference, and const absorbs the mask outcomes that
//     disconnect an output entirely. On arborescences R vanishes and
//     D = I + D_star + const with I a weighted quadratic in path products.
// The test suites check the routes against each other.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dropnet/common.hpp"
#include "dropnet/data.hpp"
#include "dropnet/graph.hpp"
#include "dropnet/masks.hpp"
#include "dropnet/network.hpp"

namespace dropnet {

struct PathTerm {
  double eta = 0.0;  // retention probability of the path
  double nu = 0.0;   // eta * E[X_{gamma_0}^2]
  double z = 0.0;    // E[Y_{gamma_L} X_{gamma_0}] / E[X_{gamma_0}^2]
};

struct PathStats {
  std::vector<Path> paths;  // canonical order
  std::vector<PathTerm> terms;
  int depth = 0;
  double nu_min = 0.0;
  double nu_max = 0.0;
  double nu_l1 = 0.0;
  double z_max_abs = 0.0;
};

struct RiskReport {
  double D = 0.0;
  bool decomposed = false;  // J/R/const need a linear activation and (F, X, Y) independence
  double J = 0.0;
  double R = 0.0;
  double disconnected_constant = 0.0;
  std::optional<double> I;       // arborescence only
  std::optional<double> D_star;  // arborescence only
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct McGradient {
  std::vector<double> mean;
  std::vector<double> std_error;
};

namespace detail {

inline void check_dims(const BaseGraph& g, const DataDistribution& data) {
  require(data.input_dim() == static_cast<int>(g.inputs().size()), Errc::dimension_mismatch,
          "data input dimension does not match graph inputs");
  require(data.output_dim() == static_cast<int>(g.outputs().size()), Errc::dimension_mismatch,
          "data output dimension does not match graph outputs");
}

inline void check_independent(const MaskDistribution& dist) {
  require(!dist.joint(), Errc::joint_mask_data,
          "path decompositions require the mask independent of the data");
}

inline void check_linear(const Activation& act) {
  require(act.is_linear(), Errc::nonlinear_activation,
          "path decompositions are only defined for the linear activation");
}

// P_gamma and the per-position partial products d P_gamma / d W_e.
struct PathProducts {
  std::vector<double> p;
  std::vector<std::vector<double>> dp;  // [path][position along the path]
};

inline PathProducts path_products_full(const std::vector<Path>& paths, const Weights& w) {
  PathProducts out;
  out.p.resize(paths.size());
  out.dp.resize(paths.size());
  std::vector<double> prefix, suffix;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& edges = paths[i].edges;
    const std::size_t L = edges.size();
    prefix.assign(L + 1, 1.0);
    suffix.assign(L + 1, 1.0);
    for (std::size_t k = 0; k < L; ++k) prefix[k + 1] = prefix[k] * w[edges[k]];
    for (std::size_t k = L; k-- > 0;) suffix[k] = suffix[k + 1] * w[edges[k]];
    out.p[i] = prefix[L];
    out.dp[i].resize(L);
    for (std::size_t k = 0; k < L; ++k) out.dp[i][k] = prefix[k] * suffix[k + 1];
  }
  return out;
}

}  // namespace detail

inline std::vector<double> path_products(const std::vector<Path>& paths, const Weights& w) {
  return detail::path_products_full(paths, w).p;
}

// Retention probabilities and data moments per path.
inline PathStats path_stats(const BaseGraph& g, const MaskDistribution& dist,
                            const DataDistribution& data,
                            std::size_t support_cap = MaskDistribution::kDefaultSupportCap) {
  detail::check_dims(g, data);
  detail::check_independent(dist);
  PathStats s;
  s.paths = g.enumerate_paths();
  s.depth = g.depth();
  std::vector<double> eta = dist.path_retentions(s.paths, support_cap);
  s.terms.resize(s.paths.size());
  bool first = true;
  for (std::size_t i = 0; i < s.paths.size(); ++i) {
    const Path& path = s.paths[i];
    const int xi = g.input_rank(path.start);
    const int yj = g.output_rank(path.end);
    const double ex2 = data.second_moment_x(xi);
    require(ex2 > 1e-15, Errc::degenerate_input,
            "E[X^2] vanishes for input " + std::to_string(path.start));
    PathTerm& t = s.terms[i];
    t.eta = eta[i];
    t.nu = eta[i] * ex2;
    t.z = data.cross_moment_yx(yj, xi) / ex2;
    s.nu_l1 += t.nu;
    s.nu_min = first ? t.nu : std::min(s.nu_min, t.nu);
    s.nu_max = first ? t.nu : std::max(s.nu_max, t.nu);
    s.z_max_abs = std::max(s.z_max_abs, std::abs(t.z));
    first = false;
  }
  return s;
}

// D(W): expectation of the masked squared loss over (F, X, Y). Independent
// families sum mask support x data support; a joint table is summed directly.
inline double exact_risk(const BaseGraph& g, const Weights& w, const MaskDistribution& dist,
                         const DataDistribution& data, const Activation& act,
                         std::size_t support_cap = MaskDistribution::kDefaultSupportCap) {
  if (!dist.joint()) detail::check_dims(g, data);
  double total = 0.0;
  if (dist.joint()) {
    for (const JointPoint& pt : dist.joint_table())
      total += pt.prob * loss(forward_masked(g, w, pt.mask, pt.sample.x, act).output, pt.sample.y);
    return total;
  }
  dist.for_each_support(
      [&](const Mask& m, double mu) {
        double risk_m = 0.0;
        for (const DataPoint& pt : data.points())
          risk_m += pt.prob * loss(forward_masked(g, w, m, pt.sample.x, act).output, pt.sample.y);
        total += mu * risk_m;
      },
      support_cap);
  return total;
}

// grad D(W): the exact conditional expectation of the masked update
// direction, summed in the same canonical order as exact_risk.
inline std::vector<double> exact_gradient(const BaseGraph& g, const Weights& w,
                                          const MaskDistribution& dist,
                                          const DataDistribution& data, const Activation& act,
                                          std::size_t support_cap = MaskDistribution::kDefaultSupportCap) {
  if (!dist.joint()) detail::check_dims(g, data);
  std::vector<double> grad(static_cast<std::size_t>(g.edge_count()), 0.0);
  auto accumulate = [&](const Mask& m, const Sample& sample, double prob) {
    std::vector<double> delta = masked_direction(g, w, m, sample.x, sample.y, act);
    for (std::size_t e = 0; e < grad.size(); ++e) grad[e] += prob * delta[e];
  };
  if (dist.joint()) {
    for (const JointPoint& pt : dist.joint_table()) accumulate(pt.mask, pt.sample, pt.prob);
    return grad;
  }
  dist.for_each_support(
      [&](const Mask& m, double mu) {
        for (const DataPoint& pt : data.points()) accumulate(m, pt.sample, mu * pt.prob);
      },
      support_cap);
  return grad;
}

// Monte Carlo risk over n i.i.d. (F, X, Y) draws, with the unbiased
// standard error of the mean.
inline McEstimate mc_risk(const BaseGraph& g, const Weights& w, const MaskDistribution& dist,
                          const DataDistribution& data, const Activation& act, std::size_t n,
                          Rng& rng) {
  require(n >= 1, Errc::config_error, "need at least one sample");
  if (!dist.joint()) detail::check_dims(g, data);
  // Welford running moments: exact zero variance for constant draws.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto [mask, sample] = dist.sample_joint(rng, data);
    double v = loss(forward_masked(g, w, mask, sample.x, act).output, sample.y);
    double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  McEstimate est;
  est.value = mean;
  if (n > 1)
    est.std_error = std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1)) / static_cast<double>(n));
  return est;
}

inline McGradient mc_gradient(const BaseGraph& g, const Weights& w, const MaskDistribution& dist,
                              const DataDistribution& data, const Activation& act, std::size_t n,
                              Rng& rng) {
  require(n >= 1, Errc::config_error, "need at least one sample");
  if (!dist.joint()) detail::check_dims(g, data);
  const auto m = static_cast<std::size_t>(g.edge_count());
  std::vector<double> mean(m, 0.0), m2(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto [mask, sample] = dist.sample_joint(rng, data);
    std::vector<double> delta = masked_direction(g, w, mask, sample.x, sample.y, act);
    for (std::size_t e = 0; e < m; ++e) {
      double d = delta[e] - mean[e];
      mean[e] += d / static_cast<double>(i + 1);
      m2[e] += d * (delta[e] - mean[e]);
    }
  }
  McGradient est;
  est.mean = std::move(mean);
  est.std_error.assign(m, 0.0);
  if (n > 1)
    for (std::size_t e = 0; e < m; ++e)
      est.std_error[e] =
          std::sqrt(std::max(0.0, m2[e] / static_cast<double>(n - 1)) / static_cast<double>(n));
  return est;
}

struct PathDecomposition {
  double J = 0.0;
  double R = 0.0;
  double disconnected_constant = 0.0;
};

// D = J + R + disconnected_constant for linear activations on any uniform
// base graph. The constant collects E[Y_f^2] over mask outcomes that leave
// output f with no surviving path; it is independent of W and reported
// explicitly so the identity is testable.
inline PathDecomposition path_decomposition(const BaseGraph& g, const Weights& w,
                                            const MaskDistribution& dist,
                                            const DataDistribution& data, const Activation& act,
                                            std::size_t support_cap = MaskDistribution::kDefaultSupportCap) {
  detail::check_dims(g, data);
  detail::check_independent(dist);
  detail::check_linear(act);

  const std::vector<Path> paths = g.enumerate_paths();
  const std::vector<double> p = path_products(paths, w);
  std::vector<double> eta(paths.size(), 0.0);

  // paths grouped by output rank
  std::vector<std::vector<std::size_t>> by_output(g.outputs().size());
  for (std::size_t i = 0; i < paths.size(); ++i)
    by_output[static_cast<std::size_t>(g.output_rank(paths[i].end))].push_back(i);

  std::vector<double> ey2(g.outputs().size());
  for (std::size_t f = 0; f < ey2.size(); ++f) ey2[f] = data.second_moment_y(static_cast<int>(f));

  double r_term = 0.0;
  double disconnected = 0.0;
  std::vector<std::size_t> alive;
  dist.for_each_support(
      [&](const Mask& m, double mu) {
        for (std::size_t f = 0; f < by_output.size(); ++f) {
          alive.clear();
          for (std::size_t i : by_output[f])
            if (m.covers(paths[i].edges)) alive.push_back(i);
          if (alive.empty()) {
            disconnected += mu * ey2[f];
            continue;
          }
          const double k = static_cast<double>(alive.size());
          for (std::size_t i : alive) {
            eta[i] += mu;
            double cross = 0.0;
            for (std::size_t j : alive) {
              if (j == i) continue;
              cross += p[j] * data.cross_moment_xx(g.input_rank(paths[i].start),
                                                   g.input_rank(paths[j].start));
            }
            r_term += mu * ((1.0 - 1.0 / k) * ey2[f] - p[i] * cross);
          }
        }
      },
      support_cap);

  PathDecomposition out;
  out.R = r_term == 0.0 ? 0.0 : -r_term;  // avoid a cosmetic -0
  out.disconnected_constant = disconnected;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const int xi = g.input_rank(paths[i].start);
    const int yj = g.output_rank(paths[i].end);
    out.J += eta[i] * (data.second_moment_y(yj) - 2.0 * p[i] * data.cross_moment_yx(yj, xi) +
                       p[i] * p[i] * data.second_moment_x(xi));
  }
  return out;
}

// grad (J + R): the path-form gradient. Equals grad D for linear activations.
inline std::vector<double> path_decomposition_gradient(
    const BaseGraph& g, const Weights& w, const MaskDistribution& dist,
    const DataDistribution& data, const Activation& act,
    std::size_t support_cap = MaskDistribution::kDefaultSupportCap) {
  detail::check_dims(g, data);
  detail::check_independent(dist);
  detail::check_linear(act);

  const std::vector<Path> paths = g.enumerate_paths();
  const detail::PathProducts pp = detail::path_products_full(paths, w);
  std::vector<double> grad(static_cast<std::size_t>(g.edge_count()), 0.0);

  std::vector<std::vector<std::size_t>> by_output(g.outputs().size());
  for (std::size_t i = 0; i < paths.size(); ++i)
    by_output[static_cast<std::size_t>(g.output_rank(paths[i].end))].push_back(i);

  std::vector<double> eta(paths.size(), 0.0);
  std::vector<std::size_t> alive;
  dist.for_each_support(
      [&](const Mask& m, double mu) {
        for (std::size_t f = 0; f < by_output.size(); ++f) {
          alive.clear();
          for (std::size_t i : by_output[f])
            if (m.covers(paths[i].edges)) alive.push_back(i);
          for (std::size_t i : alive) {
            eta[i] += mu;
            // cross terms: the ordered sum over (gamma, delta) differentiates
            // to twice d(P_i) P_j accumulated over gamma's edges
            for (std::size_t j : alive) {
              if (j == i) continue;
              const double exx = data.cross_moment_xx(g.input_rank(paths[i].start),
                                                      g.input_rank(paths[j].start));
              for (std::size_t k = 0; k < paths[i].edges.size(); ++k)
                grad[static_cast<std::size_t>(paths[i].edges[k])] +=
                    2.0 * mu * exx * pp.dp[i][k] * pp.p[j];
            }
          }
        }
      },
      support_cap);

  for (std::size_t i = 0; i < paths.size(); ++i) {
    const int xi = g.input_rank(paths[i].start);
    const int yj = g.output_rank(paths[i].end);
    const double coeff =
        eta[i] * (-2.0 * data.cross_moment_yx(yj, xi) + 2.0 * pp.p[i] * data.second_moment_x(xi));
    for (std::size_t k = 0; k < paths[i].edges.size(); ++k)
      grad[static_cast<std::size_t>(paths[i].edges[k])] += coeff * pp.dp[i][k];
  }
  return grad;
}

// I(W) = sum_gamma nu_gamma (z_gamma - P_gamma)^2, the W-dependent part of
// the risk on an arborescence.
inline double path_excess(const PathStats& stats, const Weights& w) {
  const std::vector<double> p = path_products(stats.paths, w);
  double total = 0.0;
  for (std::size_t i = 0; i < stats.paths.size(); ++i)
    total += stats.terms[i].nu * sq(stats.terms[i].z - p[i]);
  return total;
}

// grad I(W).
inline std::vector<double> path_excess_gradient(const BaseGraph& g, const PathStats& stats,
                                                const Weights& w) {
  const detail::PathProducts pp = detail::path_products_full(stats.paths, w);
  std::vector<double> grad(static_cast<std::size_t>(g.edge_count()), 0.0);
  for (std::size_t i = 0; i < stats.paths.size(); ++i) {
    const double coeff = 2.0 * stats.terms[i].nu * (pp.p[i] - stats.terms[i].z);
    for (std::size_t k = 0; k < stats.paths[i].edges.size(); ++k)
      grad[static_cast<std::size_t>(stats.paths[i].edges[k])] += coeff * pp.dp[i][k];
  }
  return grad;
}

struct ArborescenceDecomposition {
  double I = 0.0;
  double D_star = 0.0;                 // risk floor reachable at P_gamma = z_gamma
  double disconnected_constant = 0.0;  // W-independent, reported separately
  PathStats stats;
};

inline ArborescenceDecomposition arborescence_decomposition(
    const BaseGraph& g, const Weights& w, const MaskDistribution& dist,
    const DataDistribution& data, const Activation& act,
    std::size_t support_cap = MaskDistribution::kDefaultSupportCap) {
  require(g.validate().arborescence, Errc::not_arborescence,
          "decomposition into I + D_star needs an arborescence");
  detail::check_linear(act);
  ArborescenceDecomposition out;
  out.stats = path_stats(g, dist, data, support_cap);
  out.I = path_excess(out.stats, w);
  for (std::size_t i = 0; i < out.stats.paths.size(); ++i) {
    const Path& path = out.stats.paths[i];
    const PathTerm& t = out.stats.terms[i];
    const int xi = g.input_rank(path.start);
    const int yj = g.output_rank(path.end);
    const double ey2 = data.second_moment_y(yj);
    out.D_star += t.eta * (ey2 - sq(data.cross_moment_yx(yj, xi)) / data.second_moment_x(xi));
    // every output of an arborescence has exactly one incoming path
    out.disconnected_constant += (1.0 - t.eta) * ey2;
  }
  return out;
}

// Full report: enumerated D plus the matching decomposition terms.
inline RiskReport risk_report(const BaseGraph& g, const Weights& w, const MaskDistribution& dist,
                              const DataDistribution& data, const Activation& act,
                              std::size_t support_cap = MaskDistribution::kDefaultSupportCap) {
  RiskReport rep;
  rep.D = exact_risk(g, w, dist, data, act, support_cap);
  if (act.is_linear() && !dist.joint()) {
    rep.decomposed = true;
    PathDecomposition dec = path_decomposition(g, w, dist, data, act, support_cap);
    rep.J = dec.J;
    rep.R = dec.R;
    rep.disconnected_constant = dec.disconnected_constant;
    if (g.validate().arborescence) {
      ArborescenceDecomposition arb = arborescence_decomposition(g, w, dist, data, act, support_cap);
      rep.I = arb.I;
      rep.D_star = arb.D_star;
    }
  }
  return rep;
}

}  // namespace dropnet
