#pragma once

// Ground truth and noisy realizations for a configured experiment.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "skf/model.hpp"
#include "skf/model_io.hpp"
#include "skf/pipeline/config.hpp"
#include "skf/simulate.hpp"
#include "skf/tuning.hpp"

namespace skf {

struct ScenarioData {
  ScenarioKind kind = ScenarioKind::pulse;
  double fs = 0.0;
  LeadField simulation;
  LeadField inversion;
  SourceActivity truth;      // on the simulation grid
  MeasurementSeries clean;   // noise-free sensor data
  // pulse
  std::vector<Index> roi_deep;
  std::vector<Index> roi_surface;
  Index deep_peak_sample = 0;
  Index surface_peak_sample = 0;
  // jansen_rit
  JansenRitOutput columns;
  std::vector<Eigen::RowVector3d> true_centre;  // mass centre of |truth| per sample
  std::vector<char> evaluated;                  // samples entering DLE/EMD statistics
  // toy1d
  std::vector<Toy1dTrack> toy_tracks;  // one per realization

  Index samples() const { return kind == ScenarioKind::toy1d ? toy_tracks.front().truth.size() : clean.samples(); }
};

inline std::uint64_t realization_seed(const ExperimentConfig& c, int i) { return c.seed + static_cast<std::uint64_t>(i); }

inline std::pair<LeadField, LeadField> build_lead_fields(const LeadFieldConfig& c) {
  if (c.from_file) {
    LeadField sim = read_lead_field(c.simulation_path);
    LeadField inv = read_lead_field(c.inversion_path);
    if (sim.sensors() != inv.sensors())
      throw ConfigError("lead_field.inversion", "simulation and inversion lead fields differ in sensor count");
    return {std::move(sim), std::move(inv)};
  }
  return {toy_lead_field(c.simulation_sources, c.sensors, c.geometry, c.conductivity, c.simulation_seed),
          toy_lead_field(c.inversion_sources, c.sensors, c.geometry, c.conductivity, c.inversion_seed)};
}

inline std::vector<Index> sources_within(const Positions& positions, const Eigen::RowVector3d& centre, double radius) {
  std::vector<Index> out;
  for (Index k = 0; k < positions.rows(); ++k)
    if ((positions.row(k) - centre).norm() < radius) out.push_back(k);
  return out;
}

namespace detail {

inline void build_pulse(const ExperimentConfig& c, ScenarioData& d) {
  const auto& s = c.scenario;
  PulseScenario p;
  p.deep_sources = nearest_sources(d.simulation.source_positions(), s.deep.centre, s.deep.count);
  p.surface_sources = nearest_sources(d.simulation.source_positions(), s.surface.centre, s.surface.count);
  p.deep_peak = s.deep.peak_s;
  p.surface_peak = s.surface.peak_s;
  p.deep_amplitude = s.deep.amplitude;
  p.surface_amplitude = s.surface.amplitude;
  p.pulse_width = s.pulse_width_s;
  p.duration = s.duration_s;
  p.fs = c.fs_hz;
  try {
    d.truth = gaussian_pulse_tracks(p, d.simulation.sources());
  } catch (const DomainError& e) {
    throw ConfigError("scenario", e.what());
  }
  d.roi_deep = sources_within(d.inversion.source_positions(), s.deep.centre, s.roi_radius_m);
  d.roi_surface = sources_within(d.inversion.source_positions(), s.surface.centre, s.roi_radius_m);
  if (d.roi_deep.empty()) throw ConfigError("scenario.roi_radius_m", "no inversion source near the deep centre");
  if (d.roi_surface.empty()) throw ConfigError("scenario.roi_radius_m", "no inversion source near the surface centre");
  d.deep_peak_sample = static_cast<Index>(std::llround(s.deep.peak_s * c.fs_hz));
  d.surface_peak_sample = static_cast<Index>(std::llround(s.surface.peak_s * c.fs_hz));
}

inline JansenRitNetwork spread_network(const ExperimentConfig& c, const LeadField& simulation) {
  const auto& s = c.scenario;
  const auto n = static_cast<Index>(s.columns.size());
  JansenRitNetwork net;
  net.coupling = Matrix::Zero(n, n);
  net.delays = Matrix::Zero(n, n);
  for (Index k = 1; k < n; ++k) {
    net.coupling(k, k - 1) = s.coupling;
    net.delays(k, k - 1) = s.delay_s;
  }
  net.drive = Vector(n);
  net.drive_onset = Vector(n);
  for (Index k = 0; k < n; ++k) {
    const auto& col = s.columns[static_cast<std::size_t>(k)];
    net.drive(k) = col.drive;
    net.drive_onset(k) = col.onset_s + s.transient_s;
    net.column_to_sources.push_back(nearest_sources(simulation.source_positions(), col.centre, col.patch));
  }
  net.output_scale = s.output_scale;
  net.drive_noise_std = s.drive_noise_std;
  return net;
}

inline void build_jansen_rit(const ExperimentConfig& c, ScenarioData& d) {
  const auto& s = c.scenario;
  const JansenRitNetwork net = spread_network(c, d.simulation);
  JansenRitRun run;
  run.duration = s.duration_s;
  run.fs_int = s.fs_int_hz;
  run.fs_out = c.fs_hz;
  run.transient = s.transient_s;
  run.seed = c.seed;
  try {
    d.columns = jansen_rit_simulate(net, run);
  } catch (const DomainError& e) {
    throw ConfigError("scenario", e.what());
  } catch (const PreconditionError& e) {
    throw ConfigError("scenario", e.what());
  }
  d.truth = jansen_rit_activity(net, d.columns, d.simulation.sources());

  const Index t_len = d.truth.amplitudes.rows();
  Vector total(t_len);
  d.true_centre.assign(static_cast<std::size_t>(t_len), Eigen::RowVector3d::Zero());
  for (Index t = 0; t < t_len; ++t) {
    const Vector w = d.truth.amplitudes.row(t).cwiseAbs().transpose();
    total(t) = w.sum();
    if (total(t) > 0.0)
      d.true_centre[static_cast<std::size_t>(t)] = (w.transpose() * d.simulation.source_positions()) / total(t);
  }
  // Samples with at least 10% of the peak total activity; the first two
  // samples are skipped because the BDF2 rate channel is not yet defined.
  const double peak = total.maxCoeff();
  d.evaluated.assign(static_cast<std::size_t>(t_len), 0);
  for (Index t = 2; t < t_len; ++t) d.evaluated[static_cast<std::size_t>(t)] = peak > 0.0 && total(t) >= 0.1 * peak;
}

}  // namespace detail

inline ScenarioData build_scenario(const ExperimentConfig& c) {
  ScenarioData d;
  d.kind = c.scenario.kind;
  d.fs = c.fs_hz;
  if (d.kind == ScenarioKind::toy1d) {
    for (int i = 0; i < c.n_realizations; ++i)
      d.toy_tracks.push_back(toy_1d_track(Toy1dKind::sinusoids, c.scenario.samples, c.scenario.noise_std,
                                          realization_seed(c, i), c.scenario.toy_dt));
    return d;
  }
  auto [sim, inv] = build_lead_fields(c.lead_field);
  d.simulation = std::move(sim);
  d.inversion = std::move(inv);
  if (d.kind == ScenarioKind::pulse) detail::build_pulse(c, d);
  else detail::build_jansen_rit(c, d);
  d.clean = project(d.truth, d.simulation);
  return d;
}

// Realization i carries noise drawn from seed base + i, independent of the
// method, so every method sees the same noisy series.
inline std::vector<MeasurementSeries> noisy_realizations(const ScenarioData& d, const ExperimentConfig& c,
                                                         double snr_db) {
  std::vector<MeasurementSeries> ys;
  ys.reserve(static_cast<std::size_t>(c.n_realizations));
  for (int i = 0; i < c.n_realizations; ++i) ys.push_back(add_noise(d.clean, snr_db, realization_seed(c, i)));
  return ys;
}

// snr_hat used by the sensitivity prior. Nominal mode converts the configured
// SNR to a power ratio of data over noise; baseline mode averages the
// per-realization baseline estimates so the batch shares one prior.
inline double prior_snr_hat(const ExperimentConfig& c, double snr_db, const std::vector<MeasurementSeries>& ys) {
  if (c.snr_hat == SnrHatMode::nominal) return 1.0 + std::pow(10.0, snr_db / 10.0);
  double sum = 0.0;
  for (const auto& y : ys) sum += estimate_snr_hat(y);
  return sum / static_cast<double>(ys.size());
}

}  // namespace skf
