#pragma once

// Versioned JSON experiment configuration. Parsing reports the offending
// field as a path such as `methods[1].rho_db`.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "skf/errors.hpp"
#include "skf/bdf.hpp"
#include "skf/estimators.hpp"
#include "skf/metrics.hpp"
#include "skf/model.hpp"
#include "skf/model_io.hpp"
#include "skf/simulate.hpp"
#include "skf/tuning.hpp"

namespace skf {

inline constexpr int kConfigVersion = 1;

enum class ScenarioKind { pulse, jansen_rit, toy1d };

struct PulseGroupConfig {
  Eigen::RowVector3d centre = Eigen::RowVector3d::Zero();
  int count = 6;       // simulation sources nearest to the centre
  double peak_s = 0.02;
  double amplitude = 0.01;
};

struct ColumnConfig {
  Eigen::RowVector3d centre = Eigen::RowVector3d::Zero();
  int patch = 4;  // simulation sources driven by the column
  double onset_s = 0.0;
  double drive = kJansenRitDrive;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::pulse;
  double duration_s = 0.04;
  // pulse
  double pulse_width_s = 0.002;
  PulseGroupConfig deep{{0.0, 0.0, 0.0}, 6, 0.020, 0.04};
  PulseGroupConfig surface{{0.0, 0.03, 0.065}, 6, 0.022, 0.01};
  double roi_radius_m = 0.02;
  // jansen_rit
  std::vector<ColumnConfig> columns;
  double coupling = kJansenRitCoupling;  // chain weight column k -> k + 1
  double delay_s = 0.01;
  double fs_int_hz = 10000.0;
  double output_scale = 1e-3;
  double transient_s = 0.0;
  double drive_noise_std = 0.0;
  // toy1d
  int samples = 400;
  double toy_dt = 0.01;
  double noise_std = 0.05;
  double toy_q = 0.007;
  double theta0 = 1.0;
  int burn_in = 50;
  std::vector<int> bdf_orders{0, 1, 2};
};

struct LeadFieldConfig {
  bool from_file = false;
  std::filesystem::path simulation_path;
  std::filesystem::path inversion_path;
  int sensors = 32;
  int simulation_sources = 400;
  int inversion_sources = 200;
  std::uint64_t simulation_seed = 11;
  std::uint64_t inversion_seed = 12;
  double conductivity = 0.33;
  SphereGeometry geometry;
};

struct MethodConfig {
  Method method = Method::cr_skf;
  double rho_db = kDefaultRhoDb;
  int bdf_order = 2;
  std::string custom_label;  // defaults to the method name

  std::string label() const { return custom_label.empty() ? std::string(method_name(method)) : custom_label; }
};

enum class SnrHatMode { nominal, baseline };

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string name = "experiment";
  ScenarioConfig scenario;
  LeadFieldConfig lead_field;
  std::vector<MethodConfig> methods;
  std::vector<double> snr_db{25.0, 15.0, 5.0};
  int n_realizations = 25;
  double fs_hz = 2500.0;
  std::uint64_t seed = 1000;
  SnrHatMode snr_hat = SnrHatMode::nominal;
  double band_lo = 0.025;
  double band_hi = 0.975;
  double emd_threshold = kDefaultEmdThreshold;
  // fraction of the per-sample max |z| kept for mass-centre localization
  double support_threshold = 0.5;
  int emd_stride = 1;  // evaluate EMD every k-th sample
  int workers = 1;
  bool write_runs = true;
  std::filesystem::path output_dir = "out";
};

namespace detail {

using nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline std::string index_path(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

inline const json* field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

inline void read_number(const json& obj, const std::string& base, const std::string& key, double& out) {
  if (const json* j = field(obj, key)) out = get_number(*j, join_path(base, key));
}

inline void read_positive(const json& obj, const std::string& base, const std::string& key, double& out) {
  read_number(obj, base, key, out);
  if (!(out > 0.0)) throw ConfigError(join_path(base, key), "must be positive");
}

inline void read_int(const json& obj, const std::string& base, const std::string& key, int& out, int min_value) {
  if (const json* j = field(obj, key)) {
    const std::string path = join_path(base, key);
    if (!j->is_number_integer()) throw ConfigError(path, "expected an integer");
    const auto v = j->get<long long>();
    if (v < min_value) throw ConfigError(path, "must be >= " + std::to_string(min_value));
    if (v > 1'000'000'000) throw ConfigError(path, "is too large");
    out = static_cast<int>(v);
  }
}

inline void read_seed(const json& obj, const std::string& base, const std::string& key, std::uint64_t& out) {
  if (const json* j = field(obj, key)) {
    if (!j->is_number_unsigned() && !(j->is_number_integer() && j->get<long long>() >= 0))
      throw ConfigError(join_path(base, key), "expected a non-negative integer");
    out = j->get<std::uint64_t>();
  }
}

inline void read_bool(const json& obj, const std::string& base, const std::string& key, bool& out) {
  if (const json* j = field(obj, key)) {
    if (!j->is_boolean()) throw ConfigError(join_path(base, key), "expected true or false");
    out = j->get<bool>();
  }
}

inline std::string read_string(const json& obj, const std::string& base, const std::string& key,
                               const std::string& fallback) {
  if (const json* j = field(obj, key)) {
    if (!j->is_string()) throw ConfigError(join_path(base, key), "expected a string");
    return j->get<std::string>();
  }
  return fallback;
}

inline const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  return j;
}

inline void reject_unknown(const json& obj, const std::string& base, std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(join_path(base, it.key()), "unknown field");
  }
}

inline Eigen::RowVector3d read_point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path, "expected [x, y, z] in metres");
  Eigen::RowVector3d p;
  for (std::size_t i = 0; i < 3; ++i) p(static_cast<Index>(i)) = get_number(j[i], index_path(path, i));
  return p;
}

inline PulseGroupConfig read_group(const json& j, const std::string& path, PulseGroupConfig g) {
  require_object(j, path);
  reject_unknown(j, path, {"centre", "count", "peak_s", "amplitude"});
  if (const json* c = field(j, "centre")) g.centre = read_point(*c, join_path(path, "centre"));
  read_int(j, path, "count", g.count, 1);
  read_number(j, path, "peak_s", g.peak_s);
  read_number(j, path, "amplitude", g.amplitude);
  return g;
}

inline std::vector<ColumnConfig> default_columns() {
  return {{{0.0, -0.04, 0.04}, 4, 0.10, kJansenRitDrive},
          {{0.0, -0.01, 0.055}, 4, 0.45, kJansenRitDrive},
          {{0.0, 0.02, 0.055}, 4, 0.50, kJansenRitDrive},
          {{0.0, 0.045, 0.035}, 4, 0.55, kJansenRitDrive}};
}

inline ScenarioConfig read_scenario(const json& j, const std::string& path) {
  require_object(j, path);
  ScenarioConfig s;
  const std::string kind = read_string(j, path, "kind", "pulse");
  if (kind == "pulse") {
    s.kind = ScenarioKind::pulse;
    reject_unknown(j, path, {"kind", "duration_s", "pulse_width_s", "deep", "surface", "roi_radius_m"});
    read_positive(j, path, "duration_s", s.duration_s);
    read_positive(j, path, "pulse_width_s", s.pulse_width_s);
    if (const json* g = field(j, "deep")) s.deep = read_group(*g, join_path(path, "deep"), s.deep);
    if (const json* g = field(j, "surface")) s.surface = read_group(*g, join_path(path, "surface"), s.surface);
    read_positive(j, path, "roi_radius_m", s.roi_radius_m);
    for (const auto* g : {&s.deep, &s.surface}) {
      if (g->peak_s < 0.0 || g->peak_s > s.duration_s)
        throw ConfigError(join_path(path, g == &s.deep ? "deep.peak_s" : "surface.peak_s"),
                          "must lie within [0, duration_s]");
    }
  } else if (kind == "jansen_rit") {
    s.kind = ScenarioKind::jansen_rit;
    s.duration_s = 0.7;
    s.columns = default_columns();
    reject_unknown(j, path, {"kind", "duration_s", "columns", "coupling", "delay_s", "fs_int_hz", "output_scale",
                             "transient_s", "drive_noise_std"});
    read_positive(j, path, "duration_s", s.duration_s);
    if (const json* cols = field(j, "columns")) {
      const std::string cpath = join_path(path, "columns");
      if (!cols->is_array() || cols->empty()) throw ConfigError(cpath, "expected a non-empty array");
      s.columns.clear();
      for (std::size_t i = 0; i < cols->size(); ++i) {
        const std::string p = index_path(cpath, i);
        const json& c = require_object((*cols)[i], p);
        reject_unknown(c, p, {"centre", "patch", "onset_s", "drive"});
        ColumnConfig col;
        if (const json* ce = field(c, "centre")) col.centre = read_point(*ce, join_path(p, "centre"));
        else throw ConfigError(join_path(p, "centre"), "is required");
        read_int(c, p, "patch", col.patch, 1);
        read_number(c, p, "onset_s", col.onset_s);
        read_number(c, p, "drive", col.drive);
        if (col.onset_s < 0.0) throw ConfigError(join_path(p, "onset_s"), "must be non-negative");
        s.columns.push_back(col);
      }
    }
    read_number(j, path, "coupling", s.coupling);
    read_number(j, path, "delay_s", s.delay_s);
    if (s.coupling < 0.0) throw ConfigError(join_path(path, "coupling"), "must be non-negative");
    if (s.delay_s < 0.0) throw ConfigError(join_path(path, "delay_s"), "must be non-negative");
    read_positive(j, path, "fs_int_hz", s.fs_int_hz);
    read_positive(j, path, "output_scale", s.output_scale);
    read_number(j, path, "transient_s", s.transient_s);
    read_number(j, path, "drive_noise_std", s.drive_noise_std);
  } else if (kind == "toy1d") {
    s.kind = ScenarioKind::toy1d;
    reject_unknown(j, path, {"kind", "samples", "dt", "noise_std", "q", "theta0", "burn_in", "bdf_orders"});
    read_int(j, path, "samples", s.samples, 10);
    read_positive(j, path, "dt", s.toy_dt);
    read_number(j, path, "noise_std", s.noise_std);
    if (s.noise_std < 0.0) throw ConfigError(join_path(path, "noise_std"), "must be non-negative");
    read_positive(j, path, "q", s.toy_q);
    read_positive(j, path, "theta0", s.theta0);
    read_int(j, path, "burn_in", s.burn_in, 0);
    if (s.burn_in >= s.samples) throw ConfigError(join_path(path, "burn_in"), "must be smaller than samples");
    if (const json* o = field(j, "bdf_orders")) {
      const std::string opath = join_path(path, "bdf_orders");
      if (!o->is_array() || o->empty()) throw ConfigError(opath, "expected a non-empty array");
      s.bdf_orders.clear();
      for (std::size_t i = 0; i < o->size(); ++i) {
        if (!(*o)[i].is_number_integer()) throw ConfigError(index_path(opath, i), "expected an integer");
        const int v = (*o)[i].get<int>();
        if (v < 0 || v > kMaxBdfOrder) throw ConfigError(index_path(opath, i), "BDF order must be 0..3 (0 = none)");
        s.bdf_orders.push_back(v);
      }
    }
  } else {
    throw ConfigError(join_path(path, "kind"), "unknown scenario kind '" + kind + "' (pulse | jansen_rit | toy1d)");
  }
  return s;
}

inline LeadFieldConfig read_lead_field(const json& j, const std::string& path) {
  require_object(j, path);
  LeadFieldConfig lf;
  const std::string kind = read_string(j, path, "kind", "toy");
  if (kind == "file") {
    reject_unknown(j, path, {"kind", "simulation", "inversion"});
    lf.from_file = true;
    lf.simulation_path = read_string(j, path, "simulation", "");
    lf.inversion_path = read_string(j, path, "inversion", lf.simulation_path.string());
    if (lf.simulation_path.empty()) throw ConfigError(join_path(path, "simulation"), "is required for kind 'file'");
  } else if (kind == "toy") {
    reject_unknown(j, path, {"kind", "sensors", "simulation_sources", "inversion_sources", "simulation_seed",
                             "inversion_seed", "conductivity", "sensor_radius", "source_radius", "source_min_z"});
    read_int(j, path, "sensors", lf.sensors, 2);
    read_int(j, path, "simulation_sources", lf.simulation_sources, 1);
    read_int(j, path, "inversion_sources", lf.inversion_sources, 1);
    read_seed(j, path, "simulation_seed", lf.simulation_seed);
    read_seed(j, path, "inversion_seed", lf.inversion_seed);
    read_positive(j, path, "conductivity", lf.conductivity);
    read_positive(j, path, "sensor_radius", lf.geometry.sensor_radius);
    read_positive(j, path, "source_radius", lf.geometry.source_radius);
    read_number(j, path, "source_min_z", lf.geometry.source_min_z);
    if (!(lf.geometry.source_radius < lf.geometry.sensor_radius))
      throw ConfigError(join_path(path, "source_radius"), "must be smaller than sensor_radius");
  } else {
    throw ConfigError(join_path(path, "kind"), "unknown lead-field kind '" + kind + "' (toy | file)");
  }
  return lf;
}

inline std::vector<MethodConfig> read_methods(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of methods");
  if (j.empty()) throw ConfigError(path, "must list at least one method");
  std::vector<MethodConfig> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = index_path(path, i);
    MethodConfig m;
    const json* name = nullptr;
    if (j[i].is_string()) {
      name = &j[i];
    } else {
      require_object(j[i], p);
      reject_unknown(j[i], p, {"name", "label", "rho_db", "bdf_order"});
      m.custom_label = read_string(j[i], p, "label", "");
      for (char ch : m.custom_label)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-')
          throw ConfigError(join_path(p, "label"), "may only contain letters, digits, '_' and '-'");
      name = field(j[i], "name");
      if (!name) throw ConfigError(join_path(p, "name"), "is required");
      read_number(j[i], p, "rho_db", m.rho_db);
      read_int(j[i], p, "bdf_order", m.bdf_order, 1);
      if (m.bdf_order > kMaxBdfOrder) throw ConfigError(join_path(p, "bdf_order"), "supported orders are 1..3");
    }
    if (!name->is_string()) throw ConfigError(join_path(p, "name"), "expected a string");
    const auto parsed = parse_method(name->get<std::string>());
    if (!parsed)
      throw ConfigError(j[i].is_string() ? p : join_path(p, "name"),
                        "unknown method '" + name->get<std::string>() + "' (sloreta | rw_skf | cr_skf)");
    m.method = *parsed;
    for (const auto& prev : out)
      if (prev.label() == m.label())
        throw ConfigError(index_path(path, i), "duplicate method label '" + m.label() + "' (set a distinct label)");
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  require_object(j, "");
  reject_unknown(j, "", {"version", "name", "scenario", "lead_field", "methods", "snr_db", "n_realizations", "fs_hz",
                         "seed", "snr_hat", "band", "emd_threshold", "support_threshold", "emd_stride", "workers",
                         "write_runs", "output_dir"});
  ExperimentConfig c;
  read_int(j, "", "version", c.version, 1);
  if (c.version != kConfigVersion)
    throw ConfigError("version", "unsupported schema version " + std::to_string(c.version) + " (expected 1)");
  c.name = read_string(j, "", "name", c.name);
  if (const json* s = field(j, "scenario")) c.scenario = read_scenario(*s, "scenario");
  else throw ConfigError("scenario", "is required");
  if (const json* lf = field(j, "lead_field")) c.lead_field = read_lead_field(*lf, "lead_field");

  if (const json* m = field(j, "methods")) c.methods = read_methods(*m, "methods");
  else if (c.scenario.kind != ScenarioKind::toy1d) throw ConfigError("methods", "is required");

  if (const json* s = field(j, "snr_db")) {
    if (!s->is_array() || s->empty()) throw ConfigError("snr_db", "expected a non-empty array");
    c.snr_db.clear();
    for (std::size_t i = 0; i < s->size(); ++i) c.snr_db.push_back(get_number((*s)[i], index_path("snr_db", i)));
  }
  read_int(j, "", "n_realizations", c.n_realizations, 1);
  read_positive(j, "", "fs_hz", c.fs_hz);
  read_seed(j, "", "seed", c.seed);
  const std::string mode = read_string(j, "", "snr_hat", "nominal");
  if (mode == "nominal") c.snr_hat = SnrHatMode::nominal;
  else if (mode == "baseline") c.snr_hat = SnrHatMode::baseline;
  else throw ConfigError("snr_hat", "expected 'nominal' or 'baseline'");
  if (const json* b = field(j, "band")) {
    if (!b->is_array() || b->size() != 2) throw ConfigError("band", "expected [lo, hi]");
    c.band_lo = get_number((*b)[0], "band[0]");
    c.band_hi = get_number((*b)[1], "band[1]");
    if (!(0.0 <= c.band_lo && c.band_lo < c.band_hi && c.band_hi <= 1.0))
      throw ConfigError("band", "must satisfy 0 <= lo < hi <= 1");
  }
  read_number(j, "", "emd_threshold", c.emd_threshold);
  if (c.emd_threshold < 0.0 || c.emd_threshold >= 1.0) throw ConfigError("emd_threshold", "must lie in [0, 1)");
  read_number(j, "", "support_threshold", c.support_threshold);
  if (c.support_threshold < 0.0 || c.support_threshold >= 1.0)
    throw ConfigError("support_threshold", "must lie in [0, 1)");
  read_int(j, "", "emd_stride", c.emd_stride, 1);
  read_int(j, "", "workers", c.workers, 1);
  read_bool(j, "", "write_runs", c.write_runs);
  c.output_dir = read_string(j, "", "output_dir", c.output_dir.string());
  if (c.scenario.kind == ScenarioKind::toy1d) c.fs_hz = 1.0 / c.scenario.toy_dt;
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = detail::slurp(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON in ") + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

namespace detail {

inline nlohmann::json point_json(const Eigen::RowVector3d& p) { return nlohmann::json::array({p(0), p(1), p(2)}); }

}  // namespace detail

// Fully resolved configuration (defaults filled in), used for the manifest
// and the provenance hash.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j;
  j["version"] = c.version;
  j["name"] = c.name;
  const auto& s = c.scenario;
  json sc;
  switch (s.kind) {
    case ScenarioKind::pulse:
      sc = {{"kind", "pulse"},
            {"duration_s", s.duration_s},
            {"pulse_width_s", s.pulse_width_s},
            {"roi_radius_m", s.roi_radius_m}};
      for (const auto& [key, g] : {std::pair{"deep", &s.deep}, std::pair{"surface", &s.surface}})
        sc[key] = {{"centre", detail::point_json(g->centre)},
                   {"count", g->count},
                   {"peak_s", g->peak_s},
                   {"amplitude", g->amplitude}};
      break;
    case ScenarioKind::jansen_rit: {
      sc = {{"kind", "jansen_rit"},       {"duration_s", s.duration_s},     {"coupling", s.coupling},
            {"delay_s", s.delay_s},       {"fs_int_hz", s.fs_int_hz},       {"output_scale", s.output_scale},
            {"transient_s", s.transient_s}, {"drive_noise_std", s.drive_noise_std}};
      json cols = json::array();
      for (const auto& col : s.columns)
        cols.push_back({{"centre", detail::point_json(col.centre)},
                        {"patch", col.patch},
                        {"onset_s", col.onset_s},
                        {"drive", col.drive}});
      sc["columns"] = cols;
      break;
    }
    case ScenarioKind::toy1d:
      sc = {{"kind", "toy1d"}, {"samples", s.samples}, {"dt", s.toy_dt},          {"noise_std", s.noise_std},
            {"q", s.toy_q},    {"theta0", s.theta0},   {"burn_in", s.burn_in}, {"bdf_orders", s.bdf_orders}};
      break;
  }
  j["scenario"] = sc;
  const auto& lf = c.lead_field;
  if (lf.from_file) {
    j["lead_field"] = {{"kind", "file"},
                       {"simulation", lf.simulation_path.string()},
                       {"inversion", lf.inversion_path.string()}};
  } else {
    j["lead_field"] = {{"kind", "toy"},
                       {"sensors", lf.sensors},
                       {"simulation_sources", lf.simulation_sources},
                       {"inversion_sources", lf.inversion_sources},
                       {"simulation_seed", lf.simulation_seed},
                       {"inversion_seed", lf.inversion_seed},
                       {"conductivity", lf.conductivity},
                       {"sensor_radius", lf.geometry.sensor_radius},
                       {"source_radius", lf.geometry.source_radius},
                       {"source_min_z", lf.geometry.source_min_z}};
  }
  json methods = json::array();
  for (const auto& m : c.methods) {
    json mj = {{"name", std::string(method_name(m.method))}, {"label", m.label()}};
    if (m.method != Method::sloreta) mj["rho_db"] = m.rho_db;
    if (m.method == Method::cr_skf) mj["bdf_order"] = m.bdf_order;
    methods.push_back(mj);
  }
  j["methods"] = methods;
  j["snr_db"] = c.snr_db;
  j["n_realizations"] = c.n_realizations;
  j["fs_hz"] = c.fs_hz;
  j["seed"] = c.seed;
  j["snr_hat"] = c.snr_hat == SnrHatMode::nominal ? "nominal" : "baseline";
  j["band"] = {c.band_lo, c.band_hi};
  j["emd_threshold"] = c.emd_threshold;
  j["support_threshold"] = c.support_threshold;
  j["emd_stride"] = c.emd_stride;
  j["workers"] = c.workers;
  j["write_runs"] = c.write_runs;
  j["output_dir"] = c.output_dir.string();
  return j;
}

// FNV-1a over the resolved configuration minus execution-only fields
// (workers, output_dir), so reruns elsewhere share the hash.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = config_to_json(c);
  j.erase("workers");
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace skf
