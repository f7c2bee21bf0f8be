#pragma once

// Spatial and temporal error measures: localization error, an exact earth
// mover's distance, ROI tracks and quantile bands over realizations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "skf/errors.hpp"
#include "skf/matalg.hpp"
#include "skf/model.hpp"

namespace skf {

struct SourceDistribution {
  Vector weights;  // non-negative after taking magnitudes
  Positions positions;
};

enum class LocalizationMode { peak, mass_centre };

namespace detail {

inline void check_distribution(const SourceDistribution& d) {
  if (d.weights.size() != d.positions.rows()) throw PreconditionError("weights and positions differ in length");
  if (d.weights.size() == 0) throw PreconditionError("empty source distribution");
  if (!d.weights.allFinite() || !d.positions.allFinite()) throw DomainError("non-finite source distribution");
}

}  // namespace detail

// Distance from the estimate's peak (or |weight|-weighted centre) to the true
// position. Ties in the peak break towards the lowest index.
inline double localization_error(const SourceDistribution& est, const Eigen::RowVector3d& truth,
                                 LocalizationMode mode = LocalizationMode::peak) {
  detail::check_distribution(est);
  const Vector w = est.weights.cwiseAbs();
  const double total = w.sum();
  if (!(total > 0.0)) throw UndefinedMetricError("localization error undefined for an all-zero estimate");
  Eigen::RowVector3d at;
  if (mode == LocalizationMode::peak) {
    Index best = 0;
    w.maxCoeff(&best);
    at = est.positions.row(best);
  } else {
    at = (w.transpose() * est.positions) / total;
  }
  return (at - truth).norm();
}

// Normalized |weights| with entries below threshold * max dropped, then
// renormalized. Indices into the original distribution are kept.
struct MassPoints {
  std::vector<double> mass;
  std::vector<Eigen::RowVector3d> at;
};

inline MassPoints normalized_mass(const SourceDistribution& d, double threshold) {
  detail::check_distribution(d);
  if (threshold < 0.0 || threshold >= 1.0) throw DomainError("EMD threshold must lie in [0, 1)");
  const Vector w = d.weights.cwiseAbs();
  const double peak = w.maxCoeff();
  if (!(peak > 0.0)) throw UndefinedMetricError("EMD undefined for an all-zero distribution");
  MassPoints mp;
  double total = 0.0;
  for (Index k = 0; k < w.size(); ++k) {
    if (w(k) <= 0.0 || w(k) < threshold * peak) continue;
    mp.mass.push_back(w(k));
    mp.at.emplace_back(d.positions.row(k));
    total += w(k);
  }
  for (double& m : mp.mass) m /= total;
  return mp;
}

// Exact transport cost between two point masses of equal total, solved as a
// min-cost flow by successive shortest paths with Dijkstra potentials.
inline double transport_cost(const std::vector<double>& supply_in, const std::vector<double>& demand_in,
                             const Matrix& cost) {
  const std::size_t n1 = supply_in.size(), n2 = demand_in.size();
  if (cost.rows() != static_cast<Index>(n1) || cost.cols() != static_cast<Index>(n2))
    throw PreconditionError("cost matrix shape does not match the masses");
  std::vector<double> supply = supply_in, demand = demand_in;
  const double scale = std::max(1.0, std::accumulate(supply.begin(), supply.end(), 0.0));
  const double eps = 1e-14 * scale;
  Matrix flow = Matrix::Zero(static_cast<Index>(n1), static_cast<Index>(n2));
  const std::size_t nodes = n1 + n2;
  std::vector<double> pot(nodes, 0.0), dist(nodes);
  std::vector<long> parent(nodes);
  std::vector<char> done(nodes);
  constexpr double inf = std::numeric_limits<double>::infinity();

  auto remaining = [&] {
    double s = 0.0;
    for (double v : supply) s += v;
    return s;
  };
  std::size_t guard = 0;
  const std::size_t max_rounds = 4 * (nodes + 1) * (nodes + 1) + 100;
  while (remaining() > eps) {
    if (++guard > max_rounds) throw IterationFailure("transport solver did not terminate", remaining(), static_cast<int>(guard));
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < n1; ++i)
      if (supply[i] > eps) dist[i] = 0.0;
    // dense Dijkstra over reduced costs
    for (std::size_t iter = 0; iter < nodes; ++iter) {
      std::size_t u = nodes;
      double best = inf;
      for (std::size_t v = 0; v < nodes; ++v)
        if (!done[v] && dist[v] < best) best = dist[v], u = v;
      if (u == nodes) break;
      done[u] = 1;
      if (u < n1) {
        for (std::size_t j = 0; j < n2; ++j) {
          const std::size_t v = n1 + j;
          if (done[v]) continue;  // keeps the parent tree acyclic under rounding
          const double nd = dist[u] + cost(static_cast<Index>(u), static_cast<Index>(j)) + pot[u] - pot[v];
          if (nd < dist[v]) dist[v] = nd, parent[v] = static_cast<long>(u);
        }
      } else {
        const std::size_t j = u - n1;
        for (std::size_t i = 0; i < n1; ++i) {
          if (done[i] || flow(static_cast<Index>(i), static_cast<Index>(j)) <= eps) continue;
          const double nd = dist[u] - cost(static_cast<Index>(i), static_cast<Index>(j)) + pot[u] - pot[i];
          if (nd < dist[i]) dist[i] = nd, parent[i] = static_cast<long>(u);
        }
      }
    }
    std::size_t target = nodes;
    for (std::size_t j = 0; j < n2; ++j)
      if (demand[j] > eps && (target == nodes || dist[n1 + j] < dist[target])) target = n1 + j;
    if (target == nodes || dist[target] == inf) throw NumericalError("transport problem has no augmenting path");
    for (std::size_t v = 0; v < nodes; ++v) pot[v] += std::min(dist[v], dist[target]);

    double delta = demand[target - n1];
    std::size_t v = target;
    while (parent[v] >= 0) {
      const auto u = static_cast<std::size_t>(parent[v]);
      if (u >= n1) delta = std::min(delta, flow(static_cast<Index>(v), static_cast<Index>(u - n1)));
      v = u;
    }
    delta = std::min(delta, supply[v]);
    const std::size_t start = v;
    v = target;
    while (parent[v] >= 0) {
      const auto u = static_cast<std::size_t>(parent[v]);
      if (u < n1)
        flow(static_cast<Index>(u), static_cast<Index>(v - n1)) += delta;
      else
        flow(static_cast<Index>(v), static_cast<Index>(u - n1)) -= delta;
      v = u;
    }
    supply[start] -= delta;
    demand[target - n1] -= delta;
  }
  return (flow.array() * cost.array()).sum();
}

inline Matrix euclidean_costs(const std::vector<Eigen::RowVector3d>& a, const std::vector<Eigen::RowVector3d>& b) {
  Matrix c(static_cast<Index>(a.size()), static_cast<Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c(static_cast<Index>(i), static_cast<Index>(j)) = (a[i] - b[j]).norm();
  return c;
}

inline constexpr double kDefaultEmdThreshold = 0.01;

// Wasserstein-1 distance between normalized |weights| with Euclidean ground
// cost.
inline double earth_movers_distance(const SourceDistribution& p, const SourceDistribution& q,
                                    double threshold = kDefaultEmdThreshold) {
  const MassPoints a = normalized_mass(p, threshold);
  const MassPoints b = normalized_mass(q, threshold);
  return transport_cost(a.mass, b.mass, euclidean_costs(a.at, b.at));
}

// Mean |z| over the ROI sources, per time sample.
inline Vector roi_mean_track(const Matrix& z, const std::vector<Index>& roi) {
  if (roi.empty()) throw PreconditionError("ROI must not be empty");
  Vector track = Vector::Zero(z.rows());
  for (Index k : roi) {
    if (k < 0 || k >= z.cols()) throw PreconditionError("ROI index out of range");
    track += z.col(k).cwiseAbs();
  }
  return track / static_cast<double>(roi.size());
}

struct TrackEnsemble {
  std::vector<Vector> runs;
  std::vector<std::string> labels;  // run identifiers, parallel to runs (may be empty)

  Index length() const { return runs.empty() ? 0 : runs.front().size(); }
};

struct QuantileBand {
  Vector mean;
  Vector lower;
  Vector upper;
};

// Linear interpolation between order statistics at h = (N - 1) p.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline QuantileBand quantile_band(const TrackEnsemble& e, double lo = 0.05, double hi = 0.95) {
  if (e.runs.size() < 2) throw PreconditionError("quantile band needs at least two realizations");
  if (!(0.0 <= lo && lo < hi && hi <= 1.0)) throw DomainError("band quantiles must satisfy 0 <= lo < hi <= 1");
  if (!e.labels.empty() && e.labels.size() != e.runs.size())
    throw PreconditionError("ensemble labels and runs differ in count");
  const Index t_len = e.length();
  for (const auto& r : e.runs)
    if (r.size() != t_len) throw PreconditionError("ensemble tracks differ in length");
  QuantileBand band{Vector(t_len), Vector(t_len), Vector(t_len)};
  std::vector<double> col(e.runs.size());
  for (Index t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < e.runs.size(); ++i) col[i] = e.runs[i](t);
    std::sort(col.begin(), col.end());
    double sum = 0.0;
    for (double v : col) sum += v;
    band.mean(t) = sum / static_cast<double>(col.size());
    band.lower(t) = quantile_sorted(col, lo);
    band.upper(t) = quantile_sorted(col, hi);
  }
  return band;
}

}  // namespace skf
