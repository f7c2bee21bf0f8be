#pragma once

// Experiment pipeline: simulate, tune, estimate and evaluate every
// (method, SNR) pair, then write run artifacts, metric and band CSVs, SVG
// plots and a manifest.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "skf/bdf.hpp"
#include "skf/estimators.hpp"
#include "skf/metrics.hpp"
#include "skf/model_io.hpp"
#include "skf/pipeline/config.hpp"
#include "skf/pipeline/scenario.hpp"
#include "skf/pipeline/svg.hpp"
#include "skf/tuning.hpp"

namespace skf {

struct MetricRow {
  std::string run_id;
  std::string method;
  std::string metric;
  std::string component;  // time in seconds or a named component
  double value = 0.0;
};

struct NamedBand {
  std::string track;
  std::vector<Index> samples;
  QuantileBand band;
};

struct JobSpec {
  std::string label;
  std::optional<MethodConfig> method;  // empty for toy1d jobs
  int bdf_order = 0;                   // toy1d: 0 = no BDF
  std::optional<double> snr_db;        // empty for toy1d jobs
};

struct JobTimings {
  double simulate_s = 0.0;
  double estimate_s = 0.0;
  PhaseTimings phases;
  double evaluate_s = 0.0;
  double write_s = 0.0;
};

struct JobResult {
  JobSpec spec;
  bool ok = true;
  std::string error_kind;  // numerical | io | error
  std::string error;
  std::vector<std::uint64_t> seeds;
  JobTimings timings;
  long degenerate = 0;
  std::vector<MetricRow> metrics;
  std::vector<NamedBand> bands;
  std::vector<std::string> files;
};

struct PipelineResult {
  ExperimentConfig config;
  std::string hash;
  std::filesystem::path out_dir;
  std::vector<JobResult> jobs;
  std::vector<std::string> files;
  double wall_s = 0.0;

  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& j : jobs) n += j.ok ? 0 : 1;
    return n;
  }

  // 0 success, 3 numerical failure in some run, 4 I/O failure
  int exit_code() const {
    int code = 0;
    for (const auto& j : jobs) {
      if (j.ok) continue;
      code = std::max(code, j.error_kind == "io" ? 4 : 3);
    }
    return code;
  }
};

struct PipelineOptions {
  std::function<void(const std::string&)> log;
};

inline std::string snr_tag(double snr) {
  if (snr == std::round(snr) && std::abs(snr) < 1e9) return std::to_string(static_cast<long long>(snr));
  return format_double(snr);
}

inline std::string job_id(const JobSpec& s) {
  return s.snr_db ? s.label + "_snr" + snr_tag(*s.snr_db) : s.label;
}

inline std::string run_id(const JobSpec& s, int realization) { return job_id(s) + "_r" + std::to_string(realization); }

// Value of an aggregate metric row (run id = job id) of a finished job.
inline std::optional<double> job_aggregate(const JobResult& j, const std::string& metric, const std::string& component) {
  const std::string id = job_id(j.spec);
  for (const auto& r : j.metrics)
    if (r.run_id == id && r.metric == metric && r.component == component) return r.value;
  return std::nullopt;
}

inline const NamedBand* job_band(const JobResult& j, const std::string& track) {
  for (const auto& b : j.bands)
    if (b.track == track) return &b;
  return nullptr;
}

inline std::vector<JobSpec> plan_jobs(const ExperimentConfig& c) {
  std::vector<JobSpec> jobs;
  if (c.scenario.kind == ScenarioKind::toy1d) {
    for (int order : c.scenario.bdf_orders)
      jobs.push_back({order == 0 ? "rw" : "bdf" + std::to_string(order), std::nullopt, order, std::nullopt});
    return jobs;
  }
  for (const auto& m : c.methods)
    for (double snr : c.snr_db) jobs.push_back({m.label(), m, m.bdf_order, snr});
  return jobs;
}

// ---------------------------------------------------------------- estimate

inline std::vector<StandardizedEstimate> estimate_batch(const LeadField& inversion, const MethodConfig& m, std::span<const MeasurementSeries> ys,
                                                        double snr_hat) {
  const auto prior = sensitivity_theta(inversion, ys.front().noise_covariance(), snr_hat);
  const double fs = ys.front().sampling_frequency();
  const double dt = 1.0 / fs;
  switch (m.method) {
    case Method::sloreta:
      return sloreta(ys, inversion, prior);
    case Method::rw_skf: {
      const auto pv = process_variance(inversion, m.rho_db, fs);
      return rw_skf(ys, inversion, prior, EvolutionSpec::random_walk(pv.q, dt));
    }
    case Method::cr_skf: {
      const auto pv = process_variance(inversion, m.rho_db, fs);
      return cr_skf(ys, inversion, prior, EvolutionSpec::change_rate(split_cr_variances(pv, dt), dt),
                    make_bdf(m.bdf_order, dt));
    }
  }
  throw PreconditionError("unknown method");
}

// ---------------------------------------------------------------- evaluate

namespace detail {

inline std::string time_component(Index sample, double fs) { return format_double(static_cast<double>(sample) / fs); }

inline double band_mean_width(const QuantileBand& b) { return (b.upper - b.lower).mean(); }

inline double time_averaged_sd(const TrackEnsemble& e, const QuantileBand& b) {
  double sd = 0.0;
  const double n = static_cast<double>(e.runs.size());
  for (Index t = 0; t < e.length(); ++t) {
    double v = 0.0;
    for (const auto& r : e.runs) v += (r(t) - b.mean(t)) * (r(t) - b.mean(t));
    sd += std::sqrt(v / (n - 1.0));
  }
  return sd / static_cast<double>(e.length());
}

inline Index argmax(const Vector& v) {
  Index k = 0;
  v.maxCoeff(&k);
  return k;
}

}  // namespace detail

// Pulse scenario: deep and surface ROI-mean tracks, their quantile bands and
// peak statistics. `clean_z`, when given, is the estimate from noise-free data
// and serves as the reference for peak attenuation.
inline void evaluate_pulse(const ScenarioData& d, const ExperimentConfig& c, JobResult& job,
                           const std::vector<const Matrix*>& z, const Matrix* clean_z) {
  const std::string id = job_id(job.spec);
  const std::string& label = job.spec.label;
  struct Roi {
    const char* name;
    const std::vector<Index>* sources;
    Index peak;
  };
  for (const Roi roi : {Roi{"deep", &d.roi_deep, d.deep_peak_sample}, Roi{"surface", &d.roi_surface, d.surface_peak_sample}}) {
    TrackEnsemble e;
    for (std::size_t i = 0; i < z.size(); ++i) {
      Vector track = roi_mean_track(*z[i], *roi.sources);
      const Index p = detail::argmax(track);
      const std::string rid = run_id(job.spec, static_cast<int>(i));
      job.metrics.push_back({rid, label, "roi_peak_time_s", roi.name, static_cast<double>(p) / d.fs});
      job.metrics.push_back({rid, label, "roi_peak_value", roi.name, track(p)});
      e.runs.push_back(std::move(track));
      e.labels.push_back(rid);
    }
    if (z.size() < 2) continue;
    QuantileBand band = quantile_band(e, c.band_lo, c.band_hi);
    const Index mp = detail::argmax(band.mean);
    job.metrics.push_back({id, label, "band_width", roi.name, detail::band_mean_width(band)});
    job.metrics.push_back({id, label, "track_sd", roi.name, detail::time_averaged_sd(e, band)});
    job.metrics.push_back({id, label, "mean_peak_time_s", roi.name, static_cast<double>(mp) / d.fs});
    job.metrics.push_back({id, label, "peak_delay_samples", roi.name, static_cast<double>(mp - roi.peak)});
    job.metrics.push_back({id, label, "peak_delay_s", roi.name, static_cast<double>(mp - roi.peak) / d.fs});
    if (clean_z) {
      const Vector ref = roi_mean_track(*clean_z, *roi.sources);
      const double ref_peak = ref.maxCoeff();
      if (ref_peak > 0.0)
        job.metrics.push_back({id, label, "peak_attenuation", roi.name, band.mean(mp) / ref_peak});
    }
    NamedBand nb{roi.name, {}, std::move(band)};
    for (Index t = 0; t < e.length(); ++t) nb.samples.push_back(t);
    job.bands.push_back(std::move(nb));
  }
}

// Jansen-Rit spread scenario: per-sample mass-centre and peak localization
// errors against the true activity mass centre, and the EMD between |z| and
// |truth|, over the evaluated samples.
inline void evaluate_spread(const ScenarioData& d, const ExperimentConfig& c, JobResult& job,
                            const std::vector<const Matrix*>& z) {
  const std::string id = job_id(job.spec);
  const std::string& label = job.spec.label;
  const Positions& inv_pos = d.inversion.source_positions();
  const Positions& sim_pos = d.simulation.source_positions();
  std::vector<Index> eval_samples, emd_samples;
  for (Index t = 0; t < static_cast<Index>(d.evaluated.size()); ++t) {
    if (!d.evaluated[static_cast<std::size_t>(t)]) continue;
    eval_samples.push_back(t);
    if (t % c.emd_stride == 0) emd_samples.push_back(t);
  }
  if (eval_samples.empty()) throw UndefinedMetricError("no sample carries enough true activity to evaluate");

  TrackEnsemble dle_mc, dle_pk, emd;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const std::string rid = run_id(job.spec, static_cast<int>(i));
    Vector mc(static_cast<Index>(eval_samples.size())), pk(mc.size()), em(static_cast<Index>(emd_samples.size()));
    Index e_idx = 0;
    for (std::size_t s = 0; s < eval_samples.size(); ++s) {
      const Index t = eval_samples[s];
      const auto centre = d.true_centre[static_cast<std::size_t>(t)];
      const Vector w = z[i]->row(t).cwiseAbs().transpose();
      const double peak = w.maxCoeff();
      const Vector support = (w.array() >= c.support_threshold * peak).select(w, 0.0);
      mc(static_cast<Index>(s)) = localization_error({support, inv_pos}, centre, LocalizationMode::mass_centre);
      pk(static_cast<Index>(s)) = localization_error({w, inv_pos}, centre, LocalizationMode::peak);
      const std::string tc = detail::time_component(t, d.fs);
      job.metrics.push_back({rid, label, "dle_mass_centre", tc, mc(static_cast<Index>(s))});
      job.metrics.push_back({rid, label, "dle_peak", tc, pk(static_cast<Index>(s))});
      if (e_idx < em.size() && emd_samples[static_cast<std::size_t>(e_idx)] == t) {
        const Vector truth = d.truth.amplitudes.row(t).cwiseAbs().transpose();
        em(e_idx) = earth_movers_distance({w, inv_pos}, {truth, sim_pos}, c.emd_threshold);
        job.metrics.push_back({rid, label, "emd", tc, em(e_idx)});
        ++e_idx;
      }
    }
    dle_mc.runs.push_back(std::move(mc));
    dle_pk.runs.push_back(std::move(pk));
    emd.runs.push_back(std::move(em));
    for (auto* e : {&dle_mc, &dle_pk, &emd}) e->labels.push_back(rid);
  }

  auto add = [&](const char* track, TrackEnsemble& e, const std::vector<Index>& samples) {
    Vector mean = Vector::Zero(e.length());
    for (const auto& r : e.runs) mean += r / static_cast<double>(e.runs.size());
    job.metrics.push_back({id, label, std::string("max_") + track, "all", mean.maxCoeff()});
    job.metrics.push_back({id, label, std::string("mean_") + track, "all", mean.mean()});
    if (e.runs.size() < 2) return;
    QuantileBand band = quantile_band(e, c.band_lo, c.band_hi);
    job.metrics.push_back({id, label, "band_width", track, detail::band_mean_width(band)});
    job.bands.push_back({track, samples, std::move(band)});
  };
  add("dle_mass_centre", dle_mc, eval_samples);
  add("dle_peak", dle_pk, eval_samples);
  if (!emd_samples.empty()) add("emd", emd, emd_samples);
}

// ------------------------------------------------------------------- jobs

namespace detail {

inline std::string classify(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
  return "error";
}

inline nlohmann::json phase_json(const PhaseTimings& p) {
  return {{"predict_s", p.predict_s}, {"update_s", p.update_s}, {"standardize_s", p.standardize_s}};
}

inline void write_run_artifact(const std::filesystem::path& out_dir, const ExperimentConfig& c, JobResult& job,
                               int realization, const StandardizedEstimate& e) {
  const std::string rid = run_id(job.spec, realization);
  const std::filesystem::path rel = std::filesystem::path("runs") / (rid + ".csv");
  spill(out_dir / rel, encode_table_csv("z_", sample_times(e.z.rows(), c.fs_hz), e.z));
  long degenerate = 0;
  for (int k : e.degenerate) degenerate += k;
  nlohmann::json meta = {{"method", std::string(method_name(e.method))},
                         {"label", job.spec.label},
                         {"snr_db", *job.spec.snr_db},
                         {"realization", realization},
                         {"seed", realization_seed(c, realization)},
                         {"fs_hz", c.fs_hz},
                         {"degenerate_entries", degenerate},
                         {"timings", phase_json(e.timings)}};
  if (job.spec.method->method != Method::sloreta) meta["rho_db"] = job.spec.method->rho_db;
  if (job.spec.method->method == Method::cr_skf) meta["bdf_order"] = job.spec.method->bdf_order;
  spill(sidecar_path(out_dir / rel), meta.dump(2) + "\n");
  job.files.push_back(rel.generic_string());
  job.files.push_back(sidecar_path(rel).generic_string());
}

inline void run_toy_job(const ScenarioData& d, const ExperimentConfig& c, JobResult& job,
                        const std::filesystem::path& out_dir) {
  const auto& s = c.scenario;
  const auto t0 = Clock::now();
  TrackEnsemble err;
  Vector rmse(static_cast<Index>(d.toy_tracks.size()));
  for (std::size_t i = 0; i < d.toy_tracks.size(); ++i) {
    const auto& track = d.toy_tracks[i];
    const double noise_var = std::max(s.noise_std * s.noise_std, 1e-12);
    const Vector est = track_scalar(track.observations, track.dt, noise_var, s.toy_q, s.theta0, job.spec.bdf_order);
    const Vector e = (est - track.truth).cwiseAbs();
    const Index n = e.size() - s.burn_in;
    rmse(static_cast<Index>(i)) = std::sqrt(e.tail(n).squaredNorm() / static_cast<double>(n));
    const std::string rid = run_id(job.spec, static_cast<int>(i));
    job.seeds.push_back(realization_seed(c, static_cast<int>(i)));
    job.metrics.push_back({rid, job.spec.label, "rmse", "post_burn_in", rmse(static_cast<Index>(i))});
    err.runs.push_back(e);
    err.labels.push_back(rid);
    if (c.write_runs) {
      Matrix table(e.size(), 3);
      table << track.truth, track.observations, est;
      const std::filesystem::path rel = std::filesystem::path("runs") / (rid + ".csv");
      spill(out_dir / rel, encode_table_csv("x_", sample_times(e.size(), 1.0 / track.dt), table));
      const nlohmann::json meta = {{"columns", {"truth", "observation", "estimate"}},
                                   {"bdf_order", job.spec.bdf_order},
                                   {"seed", realization_seed(c, static_cast<int>(i))},
                                   {"fs_hz", 1.0 / track.dt}};
      spill(sidecar_path(out_dir / rel), meta.dump(2) + "\n");
      job.files.push_back(rel.generic_string());
      job.files.push_back(sidecar_path(rel).generic_string());
    }
  }
  job.timings.estimate_s = seconds_since(t0);
  job.metrics.push_back({job_id(job.spec), job.spec.label, "mean_rmse", "post_burn_in", rmse.mean()});
  if (err.runs.size() >= 2) {
    NamedBand nb{"abs_error", {}, quantile_band(err, c.band_lo, c.band_hi)};
    for (Index t = 0; t < err.length(); ++t) nb.samples.push_back(t);
    job.bands.push_back(std::move(nb));
  }
}

inline void run_source_job(const ScenarioData& d, const ExperimentConfig& c, JobResult& job,
                           const std::filesystem::path& out_dir) {
  auto t0 = Clock::now();
  std::vector<MeasurementSeries> ys = noisy_realizations(d, c, *job.spec.snr_db);
  for (int i = 0; i < c.n_realizations; ++i) job.seeds.push_back(realization_seed(c, i));
  const double snr_hat = prior_snr_hat(c, *job.spec.snr_db, ys);
  // noise-free reference for peak attenuation, sharing the noise covariance
  const bool with_reference = d.kind == ScenarioKind::pulse;
  if (with_reference) ys.emplace_back(d.clean.data(), d.fs, ys.front().noise_covariance());
  job.timings.simulate_s = seconds_since(t0);

  t0 = Clock::now();
  const auto estimates = estimate_batch(d.inversion, *job.spec.method, ys, snr_hat);
  job.timings.estimate_s = seconds_since(t0);
  job.timings.phases = estimates.front().timings;
  for (std::size_t i = 0; i < static_cast<std::size_t>(c.n_realizations); ++i)
    for (int k : estimates[i].degenerate) job.degenerate += k;

  t0 = Clock::now();
  if (c.write_runs)
    for (int i = 0; i < c.n_realizations; ++i)
      write_run_artifact(out_dir, c, job, i, estimates[static_cast<std::size_t>(i)]);
  job.timings.write_s = seconds_since(t0);

  t0 = Clock::now();
  std::vector<const Matrix*> z;
  for (int i = 0; i < c.n_realizations; ++i) z.push_back(&estimates[static_cast<std::size_t>(i)].z);
  if (d.kind == ScenarioKind::pulse) evaluate_pulse(d, c, job, z, with_reference ? &estimates.back().z : nullptr);
  else evaluate_spread(d, c, job, z);
  job.metrics.push_back({job_id(job.spec), job.spec.label, "degenerate_entries", "all", static_cast<double>(job.degenerate)});
  job.timings.evaluate_s = seconds_since(t0);
}

template <class Fn>
void for_each_job(std::size_t n, int workers, Fn&& fn) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < std::min(w, n); ++k)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

// ----------------------------------------------------------------- output

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

inline std::string metrics_csv(const std::vector<JobResult>& jobs) {
  std::string out = "run_id,method,metric,time_or_component,value\n";
  for (const auto& j : jobs)
    for (const auto& r : j.metrics)
      out += csv_field(r.run_id) + "," + csv_field(r.method) + "," + r.metric + "," + csv_field(r.component) + "," +
             format_double(r.value) + "\n";
  return out;
}

inline std::string bands_csv(const std::vector<JobResult>& jobs, double fs) {
  std::string out = "method,snr_db,track,sample,time_s,mean,lower,upper\n";
  for (const auto& j : jobs)
    for (const auto& b : j.bands)
      for (std::size_t k = 0; k < b.samples.size(); ++k) {
        const auto i = static_cast<Index>(k);
        out += csv_field(j.spec.label) + "," + (j.spec.snr_db ? format_double(*j.spec.snr_db) : std::string()) + "," +
               b.track + "," + std::to_string(b.samples[k]) + "," +
               format_double(static_cast<double>(b.samples[k]) / fs) + "," + format_double(b.band.mean(i)) + "," +
               format_double(b.band.lower(i)) + "," + format_double(b.band.upper(i)) + "\n";
      }
  return out;
}

inline Vector band_times(const NamedBand& b, double fs) {
  Vector t(static_cast<Index>(b.samples.size()));
  for (std::size_t k = 0; k < b.samples.size(); ++k) t(static_cast<Index>(k)) = static_cast<double>(b.samples[k]) / fs;
  return t;
}

inline std::string provenance(const ExperimentConfig& c, const std::string& hash, const std::string& what) {
  return "skf config_hash=" + hash + " name=" + c.name + " data=bands.csv " + what;
}

inline std::vector<std::pair<std::string, std::string>> render_plots(const ExperimentConfig& c, const std::string& hash,
                                                                     const std::vector<JobResult>& jobs) {
  std::vector<std::pair<std::string, std::string>> plots;  // relative path, svg
  const double fs = c.fs_hz;
  const auto& palette = plot_palette();
  for (const auto& j : jobs) {
    if (!j.ok || j.bands.empty()) continue;
    PlotSpec spec;
    spec.x_label = "time (s)";
    spec.provenance = provenance(c, hash, "method=" + j.spec.label + (j.spec.snr_db ? " snr_db=" + snr_tag(*j.spec.snr_db) : ""));
    std::size_t colour = 0;
    for (const auto& b : j.bands) {
      if (b.track == "dle_peak" || b.track == "emd") continue;  // separate comparison plots
      spec.series.push_back({b.track, band_times(b, fs), b.band.mean, b.band.lower, b.band.upper,
                             palette[colour++ % palette.size()]});
    }
    const std::string band_pct = format_double(100 * c.band_lo) + "-" + format_double(100 * c.band_hi) + "% band";
    switch (c.scenario.kind) {
      case ScenarioKind::pulse:
        spec.title = j.spec.label + ", SNR " + snr_tag(*j.spec.snr_db) + " dB: ROI mean |z| (" + band_pct + ")";
        spec.y_label = "mean |z|";
        break;
      case ScenarioKind::jansen_rit:
        spec.title = j.spec.label + ", SNR " + snr_tag(*j.spec.snr_db) + " dB: mass-centre DLE (" + band_pct + ")";
        spec.y_label = "DLE (m)";
        break;
      case ScenarioKind::toy1d:
        spec.title = j.spec.label + ": absolute tracking error (" + band_pct + ")";
        spec.y_label = "|estimate - truth|";
        break;
    }
    plots.emplace_back("plots/band_" + job_id(j.spec) + ".svg", render_svg(spec));
  }
  if (c.scenario.kind == ScenarioKind::jansen_rit) {
    for (double snr : c.snr_db) {
      for (const auto& [track, title, unit] : {std::tuple{"dle_mass_centre", "mass-centre DLE", "DLE (m)"},
                                               std::tuple{"emd", "EMD", "EMD (m)"}}) {
        PlotSpec spec;
        spec.title = std::string(title) + " over time, SNR " + snr_tag(snr) + " dB (mean over realizations)";
        spec.x_label = "time (s)";
        spec.y_label = unit;
        spec.provenance = provenance(c, hash, std::string("track=") + track + " snr_db=" + snr_tag(snr));
        std::size_t colour = 0;
        for (const auto& j : jobs) {
          if (!j.ok || !j.spec.snr_db || *j.spec.snr_db != snr) continue;
          if (const NamedBand* b = job_band(j, track))
            spec.series.push_back({j.spec.label, band_times(*b, fs), b->band.mean, {}, {}, palette[colour++ % palette.size()]});
        }
        if (!spec.series.empty())
          plots.emplace_back("plots/" + std::string(track == std::string("emd") ? "emd" : "dle") + "_snr" + snr_tag(snr) + ".svg",
                             render_svg(spec));
      }
    }
  }
  return plots;
}

}  // namespace detail

// Writes metrics.csv, bands.csv, plots and manifest.json for finished jobs.
inline void write_outputs(PipelineResult& r) {
  namespace fs = std::filesystem;
  const auto& c = r.config;
  fs::create_directories(r.out_dir / "plots");
  detail::spill(r.out_dir / "metrics.csv", detail::metrics_csv(r.jobs));
  detail::spill(r.out_dir / "bands.csv", detail::bands_csv(r.jobs, c.fs_hz));
  for (const auto& j : r.jobs) r.files.insert(r.files.end(), j.files.begin(), j.files.end());
  r.files.push_back("metrics.csv");
  r.files.push_back("bands.csv");
  for (const auto& [rel, svg] : detail::render_plots(c, r.hash, r.jobs)) {
    detail::spill(r.out_dir / rel, svg);
    r.files.push_back(rel);
  }

  nlohmann::json jobs = nlohmann::json::array(), failures = nlohmann::json::array();
  for (const auto& j : r.jobs) {
    nlohmann::json jj = {{"id", job_id(j.spec)},
                         {"label", j.spec.label},
                         {"status", j.ok ? "ok" : "failed"},
                         {"seeds", j.seeds},
                         {"degenerate_entries", j.degenerate},
                         {"timings",
                          {{"simulate_s", j.timings.simulate_s},
                           {"estimate_s", j.timings.estimate_s},
                           {"phases", detail::phase_json(j.timings.phases)},
                           {"write_s", j.timings.write_s},
                           {"evaluate_s", j.timings.evaluate_s}}}};
    if (j.spec.snr_db) jj["snr_db"] = *j.spec.snr_db;
    if (j.spec.method) jj["method"] = std::string(method_name(j.spec.method->method));
    else jj["bdf_order"] = j.spec.bdf_order;
    if (!j.ok) {
      jj["error"] = j.error;
      nlohmann::json f = {{"id", job_id(j.spec)}, {"method", j.spec.label}, {"kind", j.error_kind}, {"error", j.error}, {"seeds", j.seeds}};
      if (j.spec.snr_db) f["snr_db"] = *j.spec.snr_db;
      failures.push_back(f);
    }
    jobs.push_back(jj);
  }
  r.files.push_back("manifest.json");
  const nlohmann::json manifest = {{"config", config_to_json(c)},
                                   {"config_hash", r.hash},
                                   {"jobs", jobs},
                                   {"failures", failures},
                                   {"wall_time_s", r.wall_s},
                                   {"files", r.files}};
  detail::spill(r.out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// Runs every job of the configuration. Failures are recorded per job with
// their (method, SNR, seeds) coordinates and do not stop the other jobs.
inline PipelineResult run_pipeline(const ExperimentConfig& c, const PipelineOptions& opts = {}) {
  namespace fs = std::filesystem;
  const auto start = detail::Clock::now();
  PipelineResult r;
  r.config = c;
  r.hash = config_hash(c);
  r.out_dir = c.output_dir;
  try {
    fs::create_directories(r.out_dir / "runs");
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("cannot create output directory: ") + e.what());
  }
  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (!opts.log) return;
    std::lock_guard lock(log_mutex);
    opts.log(msg);
  };

  const ScenarioData d = build_scenario(c);
  log("scenario ready: " + std::to_string(d.samples()) + " samples");
  const auto specs = plan_jobs(c);
  r.jobs.resize(specs.size());
  detail::for_each_job(specs.size(), c.workers, [&](std::size_t i) {
    JobResult& job = r.jobs[i];
    job.spec = specs[i];
    const auto t0 = detail::Clock::now();
    try {
      if (d.kind == ScenarioKind::toy1d) detail::run_toy_job(d, c, job, r.out_dir);
      else detail::run_source_job(d, c, job, r.out_dir);
    } catch (const std::exception& e) {
      job.ok = false;
      job.error_kind = detail::classify(e);
      job.error = e.what();
      job.metrics.clear();
      job.bands.clear();
    }
    log(job_id(job.spec) + (job.ok ? " done in " : " FAILED after ") + format_double(detail::seconds_since(t0)) +
        " s" + (job.ok ? "" : ": " + job.error));
  });
  r.wall_s = detail::seconds_since(start);
  write_outputs(r);
  return r;
}

// ------------------------------------------------------------------ sweep

enum class SweepParameter { rho_db, fs, bdf_order };

inline std::optional<SweepParameter> parse_sweep_parameter(std::string_view s) {
  if (s == "rho_db") return SweepParameter::rho_db;
  if (s == "fs") return SweepParameter::fs;
  if (s == "bdf_order") return SweepParameter::bdf_order;
  return std::nullopt;
}

inline std::string_view sweep_parameter_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::rho_db: return "rho_db";
    case SweepParameter::fs: return "fs";
    case SweepParameter::bdf_order: return "bdf_order";
  }
  return "?";
}

inline ExperimentConfig apply_sweep_value(ExperimentConfig c, SweepParameter p, double v) {
  switch (p) {
    case SweepParameter::rho_db:
      for (auto& m : c.methods) m.rho_db = v;
      break;
    case SweepParameter::fs:
      if (!(v > 0.0)) throw ConfigError("sweep.values", "sampling frequencies must be positive");
      c.fs_hz = v;
      if (c.scenario.kind == ScenarioKind::toy1d) c.scenario.toy_dt = 1.0 / v;
      break;
    case SweepParameter::bdf_order: {
      if (v != std::round(v) || v < 1 || v > kMaxBdfOrder)
        throw ConfigError("sweep.values", "BDF orders must be integers 1..3");
      for (auto& m : c.methods) m.bdf_order = static_cast<int>(v);
      if (c.scenario.kind == ScenarioKind::toy1d) c.scenario.bdf_orders = {static_cast<int>(v)};
      break;
    }
  }
  return c;
}

struct SweepResult {
  std::vector<PipelineResult> runs;
  std::filesystem::path summary;

  int exit_code() const {
    int code = 0;
    for (const auto& r : runs) code = std::max(code, r.exit_code());
    return code;
  }
};

// One pipeline execution per value, each in <out>/<param>_<value>/, with the
// same noise seeds, plus summary.csv comparing band width, peak delay and
// peak attenuation across values.
inline SweepResult sweep(const ExperimentConfig& base, SweepParameter p, const std::vector<double>& values,
                         const PipelineOptions& opts = {}) {
  if (values.empty()) throw ConfigError("sweep.values", "must list at least one value");
  SweepResult res;
  const std::string name(sweep_parameter_name(p));
  for (double v : values) {
    ExperimentConfig c = apply_sweep_value(base, p, v);
    c.output_dir = base.output_dir / (name + "_" + format_double(v));
    if (opts.log) opts.log("sweep " + name + " = " + format_double(v));
    res.runs.push_back(run_pipeline(c, opts));
  }
  auto cell = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string(); };
  std::string out = "parameter,value,method,snr_db,track,band_width,peak_delay_s,peak_attenuation,status\n";
  for (std::size_t k = 0; k < values.size(); ++k) {
    for (const auto& j : res.runs[k].jobs) {
      const std::string prefix = name + "," + format_double(values[k]) + "," + j.spec.label + "," +
                                 (j.spec.snr_db ? format_double(*j.spec.snr_db) : std::string()) + ",";
      if (!j.ok) {
        out += prefix + ",,,,failed\n";
        continue;
      }
      for (const auto& b : j.bands) {
        out += prefix + b.track + "," + format_double(detail::band_mean_width(b.band)) + "," +
               cell(job_aggregate(j, "peak_delay_s", b.track)) + "," + cell(job_aggregate(j, "peak_attenuation", b.track)) +
               ",ok\n";
      }
    }
  }
  std::filesystem::create_directories(base.output_dir);
  res.summary = base.output_dir / "summary.csv";
  detail::spill(res.summary, out);
  return res;
}

}  // namespace skf
