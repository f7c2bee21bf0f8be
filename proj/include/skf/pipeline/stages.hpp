#pragma once

// The pipeline split into file-backed stages: simulate writes lead fields,
// ground truth and noisy series; estimate reads series and writes z runs;
// evaluate reads z runs and writes metrics, bands and plots.

#include <filesystem>
#include <string>
#include <vector>

#include "skf/pipeline/run.hpp"

namespace skf {

inline const char* kSimulationLeadFieldFile = "lead_field_simulation.lfd";
inline const char* kInversionLeadFieldFile = "lead_field_inversion.lfd";

inline std::filesystem::path series_path(const std::filesystem::path& dir, double snr_db, int realization) {
  return dir / "series" / ("snr" + snr_tag(snr_db) + "_r" + std::to_string(realization) + ".csv");
}

namespace detail {

inline void require_source_scenario(const ExperimentConfig& c) {
  if (c.scenario.kind == ScenarioKind::toy1d)
    throw ConfigError("scenario.kind", "toy1d has no sensor data; use the `run` subcommand");
}

inline void write_stage_manifest(const std::filesystem::path& out, const std::string& stage, const ExperimentConfig& c,
                                 const std::vector<std::string>& files, const nlohmann::json& failures) {
  const nlohmann::json m = {{"stage", stage},
                            {"config", config_to_json(c)},
                            {"config_hash", config_hash(c)},
                            {"failures", failures},
                            {"files", files}};
  spill(out / (stage + "_manifest.json"), m.dump(2) + "\n");
}

}  // namespace detail

inline std::vector<std::string> simulate_to_disk(const ExperimentConfig& c, const std::filesystem::path& out) {
  detail::require_source_scenario(c);
  std::filesystem::create_directories(out / "series");
  const ScenarioData d = build_scenario(c);
  std::vector<std::string> files = {kSimulationLeadFieldFile, kInversionLeadFieldFile, "activity.csv"};
  write_lead_field(out / kSimulationLeadFieldFile, d.simulation);
  write_lead_field(out / kInversionLeadFieldFile, d.inversion);
  write_activity(out / "activity.csv", d.truth);
  for (double snr : c.snr_db) {
    const auto ys = noisy_realizations(d, c, snr);
    for (int i = 0; i < c.n_realizations; ++i) {
      const auto p = series_path(out, snr, i);
      write_series(p, ys[static_cast<std::size_t>(i)]);
      files.push_back(std::filesystem::relative(p, out).generic_string());
    }
  }
  detail::write_stage_manifest(out, "simulate", c, files, nlohmann::json::array());
  return files;
}

// Reads series written by simulate_to_disk from `in` and writes the runs/
// artifacts into `out`. Returns the jobs with their failures.
inline std::vector<JobResult> estimate_from_disk(const ExperimentConfig& c, const std::filesystem::path& in,
                                                 const std::filesystem::path& out) {
  detail::require_source_scenario(c);
  std::filesystem::create_directories(out / "runs");
  const LeadField inversion = read_lead_field(in / kInversionLeadFieldFile);
  std::vector<JobResult> jobs;
  nlohmann::json failures = nlohmann::json::array();
  std::vector<std::string> files;
  for (const auto& spec : plan_jobs(c)) {
    JobResult job;
    job.spec = spec;
    try {
      std::vector<MeasurementSeries> ys;
      for (int i = 0; i < c.n_realizations; ++i) {
        ys.push_back(read_series(series_path(in, *spec.snr_db, i)));
        job.seeds.push_back(realization_seed(c, i));
      }
      const auto estimates = estimate_batch(inversion, *spec.method, ys, prior_snr_hat(c, *spec.snr_db, ys));
      for (int i = 0; i < c.n_realizations; ++i)
        detail::write_run_artifact(out, c, job, i, estimates[static_cast<std::size_t>(i)]);
    } catch (const std::exception& e) {
      job.ok = false;
      job.error_kind = detail::classify(e);
      job.error = e.what();
      failures.push_back({{"id", job_id(spec)}, {"kind", job.error_kind}, {"error", job.error}});
    }
    files.insert(files.end(), job.files.begin(), job.files.end());
    jobs.push_back(std::move(job));
  }
  detail::write_stage_manifest(out, "estimate", c, files, failures);
  return jobs;
}

// Rebuilds the ground truth from the configuration, reads the z runs from
// `in`/runs and writes metrics.csv, bands.csv, plots and manifest.json.
inline PipelineResult evaluate_from_disk(const ExperimentConfig& c, const std::filesystem::path& in,
                                         const std::filesystem::path& out) {
  detail::require_source_scenario(c);
  const auto start = detail::Clock::now();
  PipelineResult r;
  r.config = c;
  r.hash = config_hash(c);
  r.out_dir = out;
  const ScenarioData d = build_scenario(c);
  for (const auto& spec : plan_jobs(c)) {
    JobResult job;
    job.spec = spec;
    try {
      std::vector<Matrix> z;
      for (int i = 0; i < c.n_realizations; ++i) {
        const auto table = decode_table_csv(detail::slurp(in / "runs" / (run_id(spec, i) + ".csv")), "z_");
        if (table.values.rows() != d.samples() || table.values.cols() != d.inversion.sources())
          throw PreconditionError("run " + run_id(spec, i) + " does not match the configured scenario");
        z.push_back(table.values);
        job.seeds.push_back(realization_seed(c, i));
        const auto meta = read_sidecar(in / "runs" / (run_id(spec, i) + ".csv"));
        if (meta.contains("degenerate_entries")) job.degenerate += meta["degenerate_entries"].get<long>();
      }
      std::vector<const Matrix*> zp;
      for (const auto& m : z) zp.push_back(&m);
      if (d.kind == ScenarioKind::pulse) evaluate_pulse(d, c, job, zp, nullptr);
      else evaluate_spread(d, c, job, zp);
      job.metrics.push_back({job_id(spec), spec.label, "degenerate_entries", "all", static_cast<double>(job.degenerate)});
    } catch (const std::exception& e) {
      job.ok = false;
      job.error_kind = detail::classify(e);
      job.error = e.what();
      job.metrics.clear();
      job.bands.clear();
    }
    r.jobs.push_back(std::move(job));
  }
  r.wall_s = detail::seconds_since(start);
  write_outputs(r);
  return r;
}

}  // namespace skf
