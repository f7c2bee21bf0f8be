#pragma once

// Ground-truth generators: Gaussian pulse tracks, the coupled Jansen-Rit
// neural-mass model, and the scalar track for the BDF-order experiment.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "skf/errors.hpp"
#include "skf/matalg.hpp"
#include "skf/model.hpp"

namespace skf {

// ---------------------------------------------------------------- pulses

struct PulseScenario {
  std::vector<Index> deep_sources;
  std::vector<Index> surface_sources;
  double deep_peak = 0.020;     // s
  double surface_peak = 0.022;  // s
  double pulse_width = 0.002;   // s, Gaussian standard deviation
  double deep_amplitude = 1.0;
  double surface_amplitude = 1.0;
  double duration = 0.04;  // s
  double fs = 2500.0;      // Hz
};

inline Index pulse_samples(const PulseScenario& s) { return static_cast<Index>(std::llround(s.duration * s.fs)); }

inline double gaussian_pulse(double t, double peak, double width, double amplitude) {
  const double u = (t - peak) / width;
  return amplitude * std::exp(-0.5 * u * u);
}

inline SourceActivity gaussian_pulse_tracks(const PulseScenario& s, Index n_sources) {
  if (s.deep_sources.empty() || s.surface_sources.empty()) throw DomainError("pulse groups must be non-empty");
  if (!(s.fs > 0.0) || !(s.duration > 0.0) || !(s.pulse_width > 0.0))
    throw DomainError("pulse scenario needs positive fs, duration and width");
  for (double peak : {s.deep_peak, s.surface_peak})
    if (peak < 0.0 || peak > s.duration) throw DomainError("pulse peak time outside [0, duration]");
  std::set<Index> seen;
  for (const auto* group : {&s.deep_sources, &s.surface_sources}) {
    for (Index k : *group) {
      if (k < 0 || k >= n_sources) throw DomainError("pulse source index out of range");
      if (!seen.insert(k).second) throw DomainError("pulse groups must be disjoint");
    }
  }
  const Index t_len = pulse_samples(s);
  SourceActivity a{Matrix::Zero(t_len, n_sources), s.fs};
  for (Index t = 0; t < t_len; ++t) {
    const double time = static_cast<double>(t) / s.fs;
    const double deep = gaussian_pulse(time, s.deep_peak, s.pulse_width, s.deep_amplitude);
    const double surface = gaussian_pulse(time, s.surface_peak, s.pulse_width, s.surface_amplitude);
    for (Index k : s.deep_sources) a.amplitudes(t, k) = deep;
    for (Index k : s.surface_sources) a.amplitudes(t, k) = surface;
  }
  return a;
}

// Indices of the `count` sources closest to `centre`.
inline std::vector<Index> nearest_sources(const Positions& positions, const Eigen::RowVector3d& centre, Index count) {
  std::vector<Index> idx(static_cast<std::size_t>(positions.rows()));
  for (Index k = 0; k < positions.rows(); ++k) idx[static_cast<std::size_t>(k)] = k;
  count = std::min(count, positions.rows());
  std::partial_sort(idx.begin(), idx.begin() + count, idx.end(), [&](Index a, Index b) {
    const double da = (positions.row(a) - centre).squaredNorm();
    const double db = (positions.row(b) - centre).squaredNorm();
    return da < db || (da == db && a < b);
  });
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ----------------------------------------------------------- Jansen-Rit

struct JansenRitParams {
  double a = 100.0;  // 1/s
  double b = 50.0;   // 1/s
  double A = 3.25;   // mV
  double B = 22.0;   // mV
  double C1 = 135.0;
  double C2 = 108.0;
  double C3 = 33.75;
  double C4 = 33.75;
  double e0 = 2.5;   // 1/s
  double nu0 = 6.0;  // mV
  double r = 0.56;   // 1/mV
};

// Coupling weight used for connected column pairs in the reference table.
inline constexpr double kJansenRitCoupling = 10.0;
inline constexpr double kJansenRitDrive = 200.0;  // 1/s

inline double sigmoid(double nu, const JansenRitParams& p) { return 2.0 * p.e0 / (1.0 + std::exp(p.r * (p.nu0 - nu))); }

struct JansenRitNetwork {
  JansenRitParams params;
  Matrix coupling;  // K, N x N, K(k, j) weights column j into column k
  Matrix delays;    // tau, N x N, seconds
  Vector drive;     // p per column, 1/s
  // Optional onset time per column, seconds from the start of integration
  // (transient included): p_k(t) = drive(k) for t >= onset(k), 0 before.
  // Empty means every drive is on from t = 0.
  Vector drive_onset;
  // Columns drive patches of sources; the column output is copied to every
  // source of its patch.
  std::vector<std::vector<Index>> column_to_sources;
  double drive_noise_std = 0.0;  // 1/s, > 0 enables a stochastic drive
  double output_scale = 1.0;     // source units per mV

  Index columns() const noexcept { return coupling.rows(); }

  static JansenRitNetwork single(double drive) {
    JansenRitNetwork net;
    net.coupling = Matrix::Zero(1, 1);
    net.delays = Matrix::Zero(1, 1);
    net.drive = Vector::Constant(1, drive);
    net.column_to_sources = {{0}};
    return net;
  }
};

struct JansenRitRun {
  double duration = 1.0;  // s, recorded after the transient
  double fs_int = 10000.0;
  double fs_out = 1000.0;
  double transient = 0.0;  // s, simulated then discarded
  std::uint64_t seed = 0;
};

struct JansenRitOutput {
  Matrix columns;  // T x N, deviation of (ue - ui) from the undriven rest state, mV
  double fs = 0.0;
  double min_rate = 0.0;  // extreme sigmoid outputs seen while integrating
  double max_rate = 0.0;
  Vector rest_potential;  // (ue - ui) at rest per column, mV
};

namespace detail {

// State layout per column: u0, ue, ui, u0', ue', ui'.
inline constexpr Index kJrStates = 6;

struct JansenRitRhs {
  const JansenRitNetwork& net;
  double min_rate = std::numeric_limits<double>::infinity();
  double max_rate = -std::numeric_limits<double>::infinity();

  double sig(double v) {
    const double s = sigmoid(v, net.params);
    min_rate = std::min(min_rate, s);
    max_rate = std::max(max_rate, s);
    return s;
  }

  // delayed(k, j) is (ue - ui) of column j as seen by column k.
  template <class Delayed>
  Vector operator()(const Vector& y, const Vector& drive, Delayed&& delayed) {
    const auto& p = net.params;
    const Index n = net.columns();
    Vector dy(y.size());
    for (Index k = 0; k < n; ++k) {
      const Index o = kJrStates * k;
      const double u0 = y(o), ue = y(o + 1), ui = y(o + 2);
      const double v0 = y(o + 3), ve = y(o + 4), vi = y(o + 5);
      double coupled = 0.0;
      for (Index j = 0; j < n; ++j)
        if (net.coupling(k, j) != 0.0) coupled += net.coupling(k, j) * sig(delayed(k, j));
      dy(o) = v0;
      dy(o + 1) = ve;
      dy(o + 2) = vi;
      dy(o + 3) = p.A * p.a * sig(ue - ui) - 2.0 * p.a * v0 - p.a * p.a * u0;
      dy(o + 4) = p.A * p.a * (coupled + p.C2 * sig(p.C1 * u0) + drive(k)) - 2.0 * p.a * ve - p.a * p.a * ue;
      dy(o + 5) = p.B * p.b * p.C4 * sig(p.C3 * u0) - 2.0 * p.b * vi - p.b * p.b * ui;
    }
    return dy;
  }
};

inline double column_potential(const Vector& y, Index j) { return y(kJrStates * j + 1) - y(kJrStates * j + 2); }

// Undriven rest state: relax the delay-free system from zero until the
// right-hand side vanishes.
inline Vector jansen_rit_rest(const JansenRitNetwork& net, double h) {
  JansenRitRhs rhs{net};
  const Vector zero_drive = Vector::Zero(net.columns());
  Vector y = Vector::Zero(kJrStates * net.columns());
  auto now = [](const Vector& s) { return [&s](Index, Index j) { return column_potential(s, j); }; };
  const auto max_steps = static_cast<long>(30.0 / h);
  for (long step = 0; step < max_steps; ++step) {
    const Vector k1 = rhs(y, zero_drive, now(y));
    if (step % 100 == 0 && k1.cwiseAbs().maxCoeff() < 1e-9) return y;
    const Vector y2 = y + 0.5 * h * k1;
    const Vector k2 = rhs(y2, zero_drive, now(y2));
    const Vector y3 = y + 0.5 * h * k2;
    const Vector k3 = rhs(y3, zero_drive, now(y3));
    const Vector y4 = y + h * k3;
    const Vector k4 = rhs(y4, zero_drive, now(y4));
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  throw IterationFailure("Jansen-Rit network has no stable undriven rest state", 0.0, 0);
}

}  // namespace detail

// Fixed-step RK4 on the 6-state-per-column system, written in deviations
// from the undriven rest state so that rest is an exact fixed point. Delayed
// couplings read a linearly interpolated history of (ue - ui); before t = 0
// the history is the rest value.
inline JansenRitOutput jansen_rit_simulate(const JansenRitNetwork& net, const JansenRitRun& run) {
  const auto& p = net.params;
  const Index n = net.columns();
  if (n < 1) throw PreconditionError("network needs at least one column");
  if (net.coupling.cols() != n || net.delays.rows() != n || net.delays.cols() != n || net.drive.size() != n)
    throw PreconditionError("network coupling, delay and drive shapes disagree");
  if (net.drive_onset.size() != 0 && net.drive_onset.size() != n)
    throw PreconditionError("drive_onset must be empty or hold one time per column");
  if (!(p.a > 0.0 && p.b > 0.0 && p.e0 > 0.0 && p.r > 0.0)) throw DomainError("a, b, e0 and r must be positive");
  if ((net.coupling.array() < 0.0).any() || (net.delays.array() < 0.0).any())
    throw DomainError("coupling and delays must be non-negative");
  for (Index k = 0; k < n; ++k)
    if (net.coupling(k, k) != 0.0) throw DomainError("coupling diagonal must be zero");
  if (run.fs_int < 10.0 * std::max(p.a, p.b) / (2.0 * std::numbers::pi))
    throw PreconditionError("integration rate too low for the model rate constants");
  const double ratio_f = run.fs_int / run.fs_out;
  const auto ratio = static_cast<long>(std::llround(ratio_f));
  if (ratio < 1 || std::abs(ratio_f - static_cast<double>(ratio)) > 1e-9)
    throw PreconditionError("fs_int must be an integer multiple of fs_out");
  if (!(run.duration > 0.0) || run.transient < 0.0) throw PreconditionError("duration must be positive");

  const double h = 1.0 / run.fs_int;
  const Vector rest = detail::jansen_rit_rest(net, h);
  Vector rest_potential(n);
  for (Index j = 0; j < n; ++j) rest_potential(j) = detail::column_potential(rest, j);

  const long skip = std::lround(run.transient * run.fs_int);
  const long out_len = std::lround(run.duration * run.fs_out);
  const long total = skip + out_len * ratio;

  // history of (ue - ui) per column at integration grid points
  std::vector<Vector> history;
  history.reserve(static_cast<std::size_t>(total + 1));
  history.push_back(rest_potential);

  auto delayed_at = [&](double time, const Vector& current, Index k, Index j) {
    const double tau = net.delays(k, j);
    if (tau == 0.0) return detail::column_potential(current, j);
    const double q = (time - tau) / h;
    if (q <= 0.0) return rest_potential(j);
    const auto last = static_cast<double>(history.size() - 1);
    if (q >= last) return history.back()(j);
    const auto i0 = static_cast<std::size_t>(q);
    const double w = q - static_cast<double>(i0);
    return (1.0 - w) * history[i0](j) + w * history[i0 + 1](j);
  };

  detail::JansenRitRhs rhs{net};
  Vector y = rest;
  const Vector rest_rhs = rhs(rest, Vector::Zero(n), [&](Index, Index j) { return rest_potential(j); });

  std::mt19937_64 rng(run.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  JansenRitOutput out;
  out.fs = run.fs_out;
  out.columns = Matrix::Zero(out_len, n);
  out.rest_potential = rest_potential;

  for (long step = 0; step < total; ++step) {
    const double t0 = static_cast<double>(step) * h;
    Vector drive = net.drive;
    if (net.drive_onset.size() == n)
      for (Index k = 0; k < n; ++k)
        if (t0 < net.drive_onset(k)) drive(k) = 0.0;
    if (net.drive_noise_std > 0.0)
      for (Index k = 0; k < n; ++k) drive(k) += net.drive_noise_std * normal(rng);
    auto eval = [&](const Vector& s, double time) {
      return Vector(rhs(s, drive, [&](Index k, Index j) { return delayed_at(time, s, k, j); }) - rest_rhs);
    };
    const Vector k1 = eval(y, t0);
    const Vector k2 = eval(y + 0.5 * h * k1, t0 + 0.5 * h);
    const Vector k3 = eval(y + 0.5 * h * k2, t0 + 0.5 * h);
    const Vector k4 = eval(y + h * k3, t0 + h);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    for (Index k = 0; k < n; ++k) {
      for (Index c = 0; c < 3; ++c) {
        const double v = y(detail::kJrStates * k + c);
        if (!std::isfinite(v) || std::abs(v) > 1e3) {
          std::ostringstream os;
          os << "Jansen-Rit state diverged (|u| > 1000 mV) at integration step " << step;
          throw DivergenceError(os.str(), static_cast<std::size_t>(step));
        }
      }
    }
    Vector pot(n);
    for (Index j = 0; j < n; ++j) pot(j) = detail::column_potential(y, j);
    history.push_back(pot);

    const long rec = step + 1 - skip;  // grid index after the transient, 1-based
    if (rec >= 1) {
      const long row = (rec - 1) / ratio;
      out.columns.row(row) += (pot - rest_potential).transpose() / static_cast<double>(ratio);
    }
  }
  out.min_rate = rhs.min_rate;
  out.max_rate = rhs.max_rate;
  return out;
}

inline SourceActivity jansen_rit_activity(const JansenRitNetwork& net, const JansenRitOutput& out, Index n_sources) {
  if (static_cast<Index>(net.column_to_sources.size()) != net.columns())
    throw PreconditionError("column_to_sources must list a patch per column");
  SourceActivity a{Matrix::Zero(out.columns.rows(), n_sources), out.fs};
  for (Index c = 0; c < net.columns(); ++c) {
    for (Index k : net.column_to_sources[static_cast<std::size_t>(c)]) {
      if (k < 0 || k >= n_sources) throw DomainError("column patch source index out of range");
      a.amplitudes.col(k) += net.output_scale * out.columns.col(c);
    }
  }
  return a;
}

// ------------------------------------------------------------- 1-D track

enum class Toy1dKind { sinusoids, chirp };

struct Toy1dTrack {
  Vector truth;
  Vector observations;
  double dt = 0.01;
};

inline double toy_1d_value(Toy1dKind kind, double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case Toy1dKind::sinusoids:
      return 0.5 * t + std::sin(two_pi * 4.0 * t) + 0.6 * std::sin(two_pi * 10.8 * t + 1.0) +
             0.3 * std::sin(two_pi * 21.2 * t + 2.0);
    case Toy1dKind::chirp:
      return 0.2 * t + std::sin(two_pi * (2.0 + 4.0 * t) * t);
  }
  return 0.0;
}

// Smooth, fast-varying scalar path sampled every dt with additive Gaussian
// observation noise.
inline Toy1dTrack toy_1d_track(Toy1dKind kind, Index samples, double noise_std, std::uint64_t seed, double dt = 0.01) {
  if (samples < 10) throw PreconditionError("toy track needs at least 10 samples");
  if (noise_std < 0.0) throw DomainError("noise_std must be non-negative");
  Toy1dTrack tr{Vector(samples), Vector(samples), dt};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index t = 0; t < samples; ++t) {
    tr.truth(t) = toy_1d_value(kind, static_cast<double>(t) * dt);
    const double noise = normal(rng);
    tr.observations(t) = tr.truth(t) + noise_std * noise;
  }
  return tr;
}

}  // namespace skf
