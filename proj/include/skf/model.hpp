#pragma once

// Forward-model containers, the toy dipole lead field, noiseless projection
// and additive sensor noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "skf/errors.hpp"
#include "skf/matalg.hpp"

namespace skf {

// One xyz row per sensor or source, in meters.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3>;

class LeadField {
public:
  LeadField() = default;

  LeadField(Matrix gain, Positions sensor_positions, Positions source_positions)
      : gain_(std::move(gain)), sensors_(std::move(sensor_positions)), sources_(std::move(source_positions)) {
    if (gain_.rows() < 2 || gain_.cols() < 1) {
      std::ostringstream os;
      os << "lead field needs m >= 2 sensors and n >= 1 sources, got " << gain_.rows() << "x" << gain_.cols();
      throw PreconditionError(os.str());
    }
    if (sensors_.rows() != gain_.rows() || sources_.rows() != gain_.cols())
      throw PreconditionError("lead field position arrays do not match the gain shape");
    if (!gain_.allFinite() || !sensors_.allFinite() || !sources_.allFinite())
      throw DomainError("lead field has non-finite entries");
    if (gain_.norm() == 0.0) throw DomainError("lead field gain is identically zero");
  }

  const Matrix& gain() const noexcept { return gain_; }
  const Positions& sensor_positions() const noexcept { return sensors_; }
  const Positions& source_positions() const noexcept { return sources_; }
  Index sensors() const noexcept { return gain_.rows(); }
  Index sources() const noexcept { return gain_.cols(); }

private:
  Matrix gain_;
  Positions sensors_;
  Positions sources_;
};

class MeasurementSeries {
public:
  MeasurementSeries() = default;

  MeasurementSeries(Matrix data, double sampling_frequency, SpdMatrix noise_covariance)
      : data_(std::move(data)), fs_(sampling_frequency), noise_(std::move(noise_covariance)) {
    if (data_.rows() < 3) {
      std::ostringstream os;
      os << "measurement series needs T >= 3 samples, got " << data_.rows();
      throw PreconditionError(os.str());
    }
    if (!(fs_ > 0.0) || !std::isfinite(fs_)) throw DomainError("sampling frequency must be positive");
    if (noise_.dim() != data_.cols()) throw PreconditionError("noise covariance does not match channel count");
  }

  const Matrix& data() const noexcept { return data_; }
  double sampling_frequency() const noexcept { return fs_; }
  double dt() const noexcept { return 1.0 / fs_; }
  const SpdMatrix& noise_covariance() const noexcept { return noise_; }
  Index samples() const noexcept { return data_.rows(); }
  Index channels() const noexcept { return data_.cols(); }

private:
  Matrix data_;
  double fs_ = 1.0;
  SpdMatrix noise_;
};

struct SourceActivity {
  Matrix amplitudes;  // T x n
  double sampling_frequency = 1.0;
};

struct SphereGeometry {
  double sensor_radius = 0.1;     // m, sensors on this sphere
  double source_radius = 0.08;    // m, sources strictly inside this ball
  double source_min_z = -0.02;    // m, sources below this plane are not sampled
  double sensor_min_z = 0.0;      // m, cap: sensors cover z >= sensor_min_z
};

// Potential of unit dipoles with fixed orientations in an infinite homogeneous
// conductor: gain(i, k) = (r_i - p_k) . d_k / (4 pi sigma |r_i - p_k|^3).
inline LeadField dipole_lead_field(const Positions& sensors, const Positions& sources, const Positions& orientations,
                                   double conductivity) {
  if (!(conductivity > 0.0)) throw DomainError("conductivity must be positive");
  if (orientations.rows() != sources.rows()) throw PreconditionError("one orientation per source required");
  const double scale = 1.0 / (4.0 * std::numbers::pi * conductivity);
  Matrix gain(sensors.rows(), sources.rows());
  for (Index i = 0; i < sensors.rows(); ++i) {
    for (Index k = 0; k < sources.rows(); ++k) {
      const Eigen::RowVector3d d = sensors.row(i) - sources.row(k);
      const double dist = d.norm();
      if (dist < 1e-12) {
        std::ostringstream os;
        os << "source " << k << " coincides with sensor " << i;
        throw DomainError(os.str());
      }
      gain(i, k) = scale * d.dot(orientations.row(k)) / (dist * dist * dist);
    }
  }
  return LeadField(std::move(gain), sensors, sources);
}

// Radial orientation; sources at the origin point along +z.
inline Positions radial_orientations(const Positions& sources) {
  Positions o(sources.rows(), 3);
  for (Index k = 0; k < sources.rows(); ++k) {
    const double r = sources.row(k).norm();
    if (r < 1e-9) o.row(k) << 0.0, 0.0, 1.0;
    else o.row(k) = sources.row(k) / r;
  }
  return o;
}

// Deterministic Fibonacci spiral over the spherical cap z >= sensor_min_z.
inline Positions cap_sensors(Index m, const SphereGeometry& g) {
  Positions s(m, 3);
  const double zmin = std::clamp(g.sensor_min_z / g.sensor_radius, -1.0, 1.0);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (Index i = 0; i < m; ++i) {
    const double z = 1.0 - (1.0 - zmin) * (static_cast<double>(i) + 0.5) / static_cast<double>(m);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    s.row(i) << g.sensor_radius * rho * std::cos(phi), g.sensor_radius * rho * std::sin(phi), g.sensor_radius * z;
  }
  return s;
}

inline Positions sample_sources(Index n, const SphereGeometry& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-g.source_radius, g.source_radius);
  Positions p(n, 3);
  Index k = 0;
  while (k < n) {
    const Eigen::RowVector3d c(u(rng), u(rng), u(rng));
    if (c.norm() < g.source_radius && c(2) >= g.source_min_z) p.row(k++) = c;
  }
  return p;
}

inline LeadField toy_lead_field(Index n_sources, Index m_sensors, const SphereGeometry& geometry,
                                double conductivity, std::uint64_t seed) {
  if (n_sources < 1 || m_sensors < 2) throw PreconditionError("toy lead field needs n >= 1 and m >= 2");
  if (!(geometry.source_radius < geometry.sensor_radius))
    throw DomainError("sources must lie strictly inside the sensor sphere");
  const Positions sensors = cap_sensors(m_sensors, geometry);
  const Positions sources = sample_sources(n_sources, geometry, seed);
  return dipole_lead_field(sensors, sources, radial_orientations(sources), conductivity);
}

inline MeasurementSeries project(const SourceActivity& activity, const LeadField& lf) {
  if (activity.amplitudes.cols() != lf.sources()) {
    std::ostringstream os;
    os << "activity has " << activity.amplitudes.cols() << " sources, lead field has " << lf.sources();
    throw PreconditionError(os.str());
  }
  Matrix data = activity.amplitudes * lf.gain().transpose();
  return MeasurementSeries(std::move(data), activity.sampling_frequency,
                           SpdMatrix(Matrix::Zero(lf.sensors(), lf.sensors())));
}

inline double rms(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

// Noise std per channel is 10^(-snr_db/20) * rms(data), rms taken over all
// samples and channels. The injected variance is added to the recorded
// noise covariance.
inline MeasurementSeries add_noise(const MeasurementSeries& y, double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) throw DomainError("snr_db must be finite");
  const double signal = rms(y.data());
  if (signal == 0.0) throw DomainError("cannot set an SNR on an all-zero signal");
  const double sigma = std::pow(10.0, -snr_db / 20.0) * signal;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix data = y.data();
  for (Index t = 0; t < data.rows(); ++t)
    for (Index c = 0; c < data.cols(); ++c) data(t, c) += normal(rng);
  Matrix cov = y.noise_covariance().matrix();
  cov.diagonal().array() += sigma * sigma;
  return MeasurementSeries(std::move(data), y.sampling_frequency(), SpdMatrix(std::move(cov)));
}

}  // namespace skf
