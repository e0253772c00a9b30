#pragma once
// Finitely supported data distributions over input-output pairs (x, y).
// Finite support covers both the empirical-risk and the tabular online
// setting; expectations are exact weighted sums throughout.

#include <cmath>
#include <string>
#include <vector>

#include "dropnet/common.hpp"

namespace dropnet {

struct Sample {
  std::vector<double> x;
  std::vector<double> y;
};

struct DataPoint {
  Sample sample;
  double prob = 0.0;
};

class DataDistribution {
 public:
  DataDistribution() = default;

  static DataDistribution from_points(std::vector<DataPoint> points) {
    require(!points.empty(), Errc::config_error, "data distribution needs at least one point");
    const std::size_t dx = points.front().sample.x.size();
    const std::size_t dy = points.front().sample.y.size();
    require(dx >= 1 && dy >= 1, Errc::dimension_mismatch, "samples must be nonempty vectors");
    double sum = 0.0;
    for (const DataPoint& p : points) {
      require(p.sample.x.size() == dx && p.sample.y.size() == dy, Errc::dimension_mismatch,
              "inconsistent sample dimensions");
      require(p.prob >= 0.0, Errc::config_error, "negative probability");
      require(all_finite(p.sample.x) && all_finite(p.sample.y), Errc::config_error,
              "non-finite sample value");
      sum += p.prob;
    }
    // Tolerate serialization rounding, reject anything larger.
    require(std::abs(sum - 1.0) < 1e-9, Errc::config_error,
            "probabilities sum to " + std::to_string(sum));
    for (DataPoint& p : points) p.prob /= sum;
    DataDistribution d;
    d.points_ = std::move(points);
    return d;
  }

  const std::vector<DataPoint>& points() const { return points_; }
  int input_dim() const { return static_cast<int>(points_.front().sample.x.size()); }
  int output_dim() const { return static_cast<int>(points_.front().sample.y.size()); }

  const Sample& sample(Rng& rng) const {
    double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      acc += points_[i].prob;
      if (u < acc) return points_[i].sample;
    }
    return points_.back().sample;
  }

  // E[X_i^2]
  double second_moment_x(int i) const {
    double s = 0.0;
    for (const DataPoint& p : points_) s += p.prob * sq(p.sample.x[static_cast<std::size_t>(i)]);
    return s;
  }

  // E[X_i X_j]
  double cross_moment_xx(int i, int j) const {
    double s = 0.0;
    for (const DataPoint& p : points_)
      s += p.prob * p.sample.x[static_cast<std::size_t>(i)] * p.sample.x[static_cast<std::size_t>(j)];
    return s;
  }

  // E[Y_j X_i]
  double cross_moment_yx(int j, int i) const {
    double s = 0.0;
    for (const DataPoint& p : points_)
      s += p.prob * p.sample.y[static_cast<std::size_t>(j)] * p.sample.x[static_cast<std::size_t>(i)];
    return s;
  }

  // E[Y_j^2]
  double second_moment_y(int j) const {
    double s = 0.0;
    for (const DataPoint& p : points_) s += p.prob * sq(p.sample.y[static_cast<std::size_t>(j)]);
    return s;
  }

  // E[|Y|_2^m |X|_2^n]
  double norm_moment(int m, int n) const {
    double s = 0.0;
    for (const DataPoint& p : points_) {
      double nx = 0.0, ny = 0.0;
      for (double v : p.sample.x) nx += v * v;
      for (double v : p.sample.y) ny += v * v;
      s += p.prob * std::pow(std::sqrt(ny), m) * std::pow(std::sqrt(nx), n);
    }
    return s;
  }

  double max_abs_x() const {
    double m = 0.0;
    for (const DataPoint& p : points_)
      for (double v : p.sample.x) m = std::max(m, std::abs(v));
    return m;
  }
  double max_abs_y() const {
    double m = 0.0;
    for (const DataPoint& p : points_)
      for (double v : p.sample.y) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::vector<DataPoint> points_;
};

}  // namespace dropnet
