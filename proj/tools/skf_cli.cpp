// skf: config-driven experiment runner.
//
//   skf run      --config c.json [--out dir] [--workers k] [--seed s] [--verbose]
//   skf sweep    --config c.json --param rho_db|fs|bdf_order --values 0,44,70
//   skf simulate --config c.json --out dir
//   skf estimate --config c.json --in simdir --out dir
//   skf evaluate --config c.json --in estdir --out dir
//   skf lfgen    --sources n --sensors m --seed s --out lf.lfd
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skf/skf.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Common {
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c, bool needs_out) {
  app->add_option("--config", c.config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  auto* out = app->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  app->add_option("--workers", c.workers, "concurrent jobs (fallback: SKF_WORKERS)")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "base seed; realization i uses seed + i");
  app->add_flag("--verbose", c.verbose, "progress on stderr");
}

skf::ExperimentConfig resolve(const Common& c) {
  skf::ExperimentConfig cfg = skf::load_config(c.config);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) {
    cfg.workers = *c.workers;
  } else if (const char* env = std::getenv("SKF_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w < 1) throw std::invalid_argument("");
      cfg.workers = w;
    } catch (const std::exception&) {
      throw skf::ConfigError("SKF_WORKERS", std::string("expected a positive integer, got '") + env + "'");
    }
  }
  return cfg;
}

skf::PipelineOptions options(const Common& c) {
  skf::PipelineOptions o;
  if (c.verbose) o.log = [](const std::string& msg) { std::cerr << "[skf] " << msg << "\n"; };
  return o;
}

int report(const skf::PipelineResult& r) {
  std::cout << "wrote " << r.files.size() << " files to " << r.out_dir.string() << " (config " << r.hash << ")\n";
  for (const auto& j : r.jobs)
    if (!j.ok) std::cerr << "failed: " << skf::job_id(j.spec) << " [" << j.error_kind << "] " << j.error << "\n";
  return r.exit_code();
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw skf::ConfigError("sweep.values", "cannot parse '" + item + "' as a number");
    }
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Standardized Kalman filter experiments"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, sim_opts, est_opts, eval_opts;
  auto* run = app.add_subcommand("run", "full pipeline: simulate, estimate, evaluate, plot");
  add_common(run, run_opts, false);

  auto* sw = app.add_subcommand("sweep", "one pipeline per parameter value plus a summary table");
  add_common(sw, sweep_opts, false);
  std::string sweep_param, sweep_values;
  sw->add_option("--param", sweep_param, "rho_db | fs | bdf_order")->required();
  sw->add_option("--values", sweep_values, "comma-separated values")->required();

  auto* sim = app.add_subcommand("simulate", "write lead fields, ground truth and noisy series");
  add_common(sim, sim_opts, true);

  std::string est_in, eval_in;
  auto* est = app.add_subcommand("estimate", "estimate z from series written by simulate");
  add_common(est, est_opts, true);
  est->add_option("--in", est_in, "simulate output directory")->required()->check(CLI::ExistingDirectory);

  auto* ev = app.add_subcommand("evaluate", "metrics, bands and plots from runs written by estimate");
  add_common(ev, eval_opts, true);
  ev->add_option("--in", eval_in, "estimate output directory")->required()->check(CLI::ExistingDirectory);

  auto* lf = app.add_subcommand("lfgen", "write a toy lead field");
  int lf_sources = 200, lf_sensors = 32;
  std::uint64_t lf_seed = 12;
  double lf_conductivity = 0.33;
  std::string lf_out;
  lf->add_option("--sources", lf_sources, "number of sources")->check(CLI::PositiveNumber);
  lf->add_option("--sensors", lf_sensors, "number of sensors")->check(CLI::Range(2, 100000));
  lf->add_option("--seed", lf_seed, "source placement seed");
  lf->add_option("--conductivity", lf_conductivity, "S/m")->check(CLI::PositiveNumber);
  lf->add_option("--out", lf_out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return report(skf::run_pipeline(resolve(run_opts), options(run_opts)));
    if (*sw) {
      const auto param = skf::parse_sweep_parameter(sweep_param);
      if (!param) throw skf::ConfigError("sweep.param", "expected rho_db, fs or bdf_order");
      const auto res = skf::sweep(resolve(sweep_opts), *param, parse_values(sweep_values), options(sweep_opts));
      for (const auto& r : res.runs) report(r);
      std::cout << "summary: " << res.summary.string() << "\n";
      return res.exit_code();
    }
    if (*sim) {
      const auto files = skf::simulate_to_disk(resolve(sim_opts), sim_opts.out);
      std::cout << "wrote " << files.size() << " files to " << sim_opts.out << "\n";
      return 0;
    }
    if (*est) {
      const auto jobs = skf::estimate_from_disk(resolve(est_opts), est_in, est_opts.out);
      int code = 0;
      for (const auto& j : jobs) {
        if (j.ok) continue;
        std::cerr << "failed: " << skf::job_id(j.spec) << " [" << j.error_kind << "] " << j.error << "\n";
        code = std::max(code, j.error_kind == "io" ? kExitIo : kExitNumerical);
      }
      return code;
    }
    if (*ev) return report(skf::evaluate_from_disk(resolve(eval_opts), eval_in, eval_opts.out));
    if (*lf) {
      const auto field = skf::toy_lead_field(lf_sources, lf_sensors, skf::SphereGeometry{}, lf_conductivity, lf_seed);
      skf::write_lead_field(lf_out, field);
      std::cout << "wrote " << lf_out << " (" << field.sensors() << " sensors x " << field.sources() << " sources)\n";
      return 0;
    }
  } catch (const skf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const skf::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const skf::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const skf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
