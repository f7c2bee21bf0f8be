#pragma once

// File formats.
//
// Lead field (binary, little-endian):
//   "LFLD" | u32 version = 1 | u32 m | u32 n |
//   gain m*n f64 row-major | sensor positions m*3 f64 | source positions n*3 f64
//
// Series (CSV + sidecar JSON with the same stem):
//   t_seconds,ch_0,...,ch_{m-1}          {"fs_hz": f, "noise_var": [...]}
// Source activity uses the same layout with src_ columns and {"fs_hz": f}.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "skf/errors.hpp"
#include "skf/model.hpp"

namespace skf {

inline constexpr std::array<char, 4> kLeadFieldMagic = {'L', 'F', 'L', 'D'};
inline constexpr std::uint32_t kLeadFieldVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void spill(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_lead_field(const LeadField& lf) {
  const auto m = static_cast<std::uint32_t>(lf.sensors());
  const auto n = static_cast<std::uint32_t>(lf.sources());
  std::string out(kLeadFieldMagic.begin(), kLeadFieldMagic.end());
  detail::put_u32(out, kLeadFieldVersion);
  detail::put_u32(out, m);
  detail::put_u32(out, n);
  for (Index i = 0; i < lf.sensors(); ++i)
    for (Index k = 0; k < lf.sources(); ++k) detail::put_f64(out, lf.gain()(i, k));
  for (Index i = 0; i < lf.sensors(); ++i)
    for (Index c = 0; c < 3; ++c) detail::put_f64(out, lf.sensor_positions()(i, c));
  for (Index k = 0; k < lf.sources(); ++k)
    for (Index c = 0; c < 3; ++c) detail::put_f64(out, lf.source_positions()(k, c));
  return out;
}

inline LeadField decode_lead_field(std::string_view bytes) {
  constexpr std::size_t header = 16;
  if (bytes.size() < header) {
    std::ostringstream os;
    os << "truncated lead-field header: expected " << header << " bytes, got " << bytes.size();
    throw ParseError(os.str());
  }
  if (std::memcmp(bytes.data(), kLeadFieldMagic.data(), 4) != 0) throw ParseError("bad lead-field magic, expected LFLD");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kLeadFieldVersion) {
    std::ostringstream os;
    os << "unsupported lead-field version " << version << ", expected " << kLeadFieldVersion;
    throw ParseError(os.str());
  }
  const std::uint64_t m = detail::get_u32(p + 8);
  const std::uint64_t n = detail::get_u32(p + 12);
  const std::uint64_t expected = header + 8 * (m * n + 3 * m + 3 * n);
  if (bytes.size() != expected) {
    std::ostringstream os;
    os << (bytes.size() < expected ? "truncated" : "oversized") << " lead-field payload: expected " << expected
       << " bytes, got " << bytes.size();
    throw ParseError(os.str());
  }
  const unsigned char* cur = p + header;
  auto next = [&](const char* section, std::uint64_t idx) {
    const double v = detail::get_f64(cur);
    cur += 8;
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite value in lead-field " << section << " at entry " << idx;
      throw ParseError(os.str());
    }
    return v;
  };
  Matrix gain(static_cast<Index>(m), static_cast<Index>(n));
  for (Index i = 0; i < gain.rows(); ++i)
    for (Index k = 0; k < gain.cols(); ++k) gain(i, k) = next("gain", static_cast<std::uint64_t>(i * gain.cols() + k));
  Positions sensors(static_cast<Index>(m), 3);
  for (Index i = 0; i < sensors.rows(); ++i)
    for (Index c = 0; c < 3; ++c) sensors(i, c) = next("sensor_positions", static_cast<std::uint64_t>(3 * i + c));
  Positions sources(static_cast<Index>(n), 3);
  for (Index k = 0; k < sources.rows(); ++k)
    for (Index c = 0; c < 3; ++c) sources(k, c) = next("source_positions", static_cast<std::uint64_t>(3 * k + c));
  return LeadField(std::move(gain), std::move(sensors), std::move(sources));
}

inline void write_lead_field(const std::filesystem::path& path, const LeadField& lf) {
  detail::spill(path, encode_lead_field(lf));
}

inline LeadField read_lead_field(const std::filesystem::path& path) { return decode_lead_field(detail::slurp(path)); }

// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

struct TimedTable {
  Vector times;
  Matrix values;
};

inline std::string encode_table_csv(std::string_view prefix, const Vector& times, const Matrix& values) {
  std::string out = "t_seconds";
  for (Index c = 0; c < values.cols(); ++c) {
    out += ',';
    out += prefix;
    out += std::to_string(c);
  }
  out += '\n';
  for (Index t = 0; t < values.rows(); ++t) {
    out += format_double(times(t));
    for (Index c = 0; c < values.cols(); ++c) {
      out += ',';
      out += format_double(values(t, c));
    }
    out += '\n';
  }
  return out;
}

inline TimedTable decode_table_csv(std::string_view text, std::string_view prefix) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    pos = end + 1;
  }
  if (lines.empty()) throw ParseError("empty CSV");

  auto split = [](std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return fields;
  };

  const auto header = split(lines.front());
  if (header.front() != "t_seconds") throw ParseError("CSV header must start with t_seconds");
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string want = std::string(prefix) + std::to_string(c - 1);
    if (header[c] != want)
      throw ParseError("CSV header column " + std::to_string(c) + " is '" + std::string(header[c]) + "', expected '" +
                       want + "'");
  }
  const auto cols = static_cast<Index>(header.size() - 1);
  TimedTable table{Vector(static_cast<Index>(lines.size() - 1)), Matrix(static_cast<Index>(lines.size() - 1), cols)};
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split(lines[r]);
    if (fields.size() != header.size())
      throw ParseError("CSV row " + std::to_string(r) + " has " + std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      const auto f = fields[c];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
        throw ParseError("CSV row " + std::to_string(r) + " column " + std::to_string(c) + ": cannot parse '" +
                         std::string(f) + "'");
      if (!std::isfinite(v))
        throw ParseError("CSV row " + std::to_string(r) + " column " + std::to_string(c) + ": non-finite value");
      if (c == 0) table.times(static_cast<Index>(r - 1)) = v;
      else table.values(static_cast<Index>(r - 1), static_cast<Index>(c - 1)) = v;
    }
  }
  return table;
}

inline Vector sample_times(Index samples, double fs) {
  Vector t(samples);
  for (Index i = 0; i < samples; ++i) t(i) = static_cast<double>(i) / fs;
  return t;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

inline nlohmann::json read_sidecar(const std::filesystem::path& csv) {
  const auto path = sidecar_path(csv);
  try {
    return nlohmann::json::parse(detail::slurp(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("sidecar " + path.string() + ": " + e.what());
  }
}

inline double sidecar_fs(const nlohmann::json& meta) {
  if (!meta.contains("fs_hz") || !meta["fs_hz"].is_number()) throw ParseError("sidecar is missing numeric fs_hz");
  return meta["fs_hz"].get<double>();
}

inline void write_series(const std::filesystem::path& csv, const MeasurementSeries& y) {
  detail::spill(csv, encode_table_csv("ch_", sample_times(y.samples(), y.sampling_frequency()), y.data()));
  nlohmann::json meta;
  meta["fs_hz"] = y.sampling_frequency();
  const Vector var = y.noise_covariance().matrix().diagonal();
  meta["noise_var"] = std::vector<double>(var.data(), var.data() + var.size());
  detail::spill(sidecar_path(csv), meta.dump(2) + "\n");
}

inline MeasurementSeries read_series(const std::filesystem::path& csv) {
  TimedTable table = decode_table_csv(detail::slurp(csv), "ch_");
  const nlohmann::json meta = read_sidecar(csv);
  const double fs = sidecar_fs(meta);
  if (!meta.contains("noise_var") || !meta["noise_var"].is_array()) throw ParseError("sidecar is missing noise_var");
  const auto var = meta["noise_var"].get<std::vector<double>>();
  if (static_cast<Index>(var.size()) != table.values.cols())
    throw ParseError("sidecar noise_var has " + std::to_string(var.size()) + " entries, series has " +
                     std::to_string(table.values.cols()) + " channels");
  const Vector diag = Eigen::Map<const Vector>(var.data(), static_cast<Index>(var.size()));
  return MeasurementSeries(std::move(table.values), fs, SpdMatrix::diagonal(diag));
}

inline void write_activity(const std::filesystem::path& csv, const SourceActivity& a) {
  detail::spill(csv, encode_table_csv("src_", sample_times(a.amplitudes.rows(), a.sampling_frequency), a.amplitudes));
  nlohmann::json meta;
  meta["fs_hz"] = a.sampling_frequency;
  detail::spill(sidecar_path(csv), meta.dump(2) + "\n");
}

inline SourceActivity read_activity(const std::filesystem::path& csv) {
  TimedTable table = decode_table_csv(detail::slurp(csv), "src_");
  return SourceActivity{std::move(table.values), sidecar_fs(read_sidecar(csv))};
}

}  // namespace skf
