#pragma once

// Sensitivity-weighted prior variances and the decibel-parametrized process
// noise shared by both filters.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "skf/errors.hpp"
#include "skf/matalg.hpp"
#include "skf/model.hpp"

namespace skf {

inline constexpr double kDefaultRhoDb = 44.0;

struct SensitivityPrior {
  Vector theta;  // prior variance per source
  double snr_hat = 0.0;
};

struct ProcessNoiseSpec {
  double rho_db = kDefaultRhoDb;
  double q = 0.0;
  double sampling_frequency = 0.0;
};

struct ChangeRateVariances {
  double q_x = 0.0;
  double q_v = 0.0;
};

// theta_k = Tr(R0) (snr_hat - 1) / |L_k|^2, where L_k is column k of the gain
// (one fixed-orientation dipole per source).
inline SensitivityPrior sensitivity_theta(const Matrix& gain, const Matrix& r0, double snr_hat) {
  if (!(snr_hat > 1.0)) {
    std::ostringstream os;
    os << "snr_hat must exceed 1, got " << snr_hat;
    throw DomainError(os.str());
  }
  const double trace = r0.trace();
  if (!(trace > 0.0)) throw DomainError("noise covariance trace must be positive");
  Vector theta(gain.cols());
  for (Index k = 0; k < gain.cols(); ++k) {
    const double sens = gain.col(k).squaredNorm();
    if (!(sens > 0.0)) {
      std::ostringstream os;
      os << "source " << k << " has zero sensitivity";
      throw DomainError(os.str());
    }
    theta(k) = trace * (snr_hat - 1.0) / sens;
  }
  return {std::move(theta), snr_hat};
}

inline SensitivityPrior sensitivity_theta(const LeadField& lf, const SpdMatrix& r0, double snr_hat) {
  if (r0.dim() != lf.sensors()) throw PreconditionError("noise covariance does not match sensor count");
  return sensitivity_theta(lf.gain(), r0.matrix(), snr_hat);
}

inline Index default_baseline_samples(Index samples) { return std::max<Index>(10, samples / 10); }

// Total data power over noise power estimated from the leading baseline
// window (first B samples, assumed activity-free).
inline double estimate_snr_hat(const MeasurementSeries& y, std::optional<Index> baseline = std::nullopt) {
  const Index b = baseline.value_or(default_baseline_samples(y.samples()));
  if (b < 1 || b > y.samples()) throw PreconditionError("baseline window exceeds the series");
  const double total = y.data().squaredNorm() / static_cast<double>(y.samples());
  const double noise = y.data().topRows(b).squaredNorm() / static_cast<double>(b);
  if (!(noise > 0.0)) throw DomainError("baseline window has zero power, cannot estimate SNR");
  return total / noise;
}

// q = 10^(rho/20) / (|L|_F^2 f)
inline ProcessNoiseSpec process_variance(const Matrix& gain, double rho_db, double fs) {
  if (!(fs > 0.0)) throw DomainError("sampling frequency must be positive");
  const double norm2 = gain.squaredNorm();
  if (!(norm2 > 0.0)) throw DomainError("lead field norm must be positive");
  return {rho_db, std::pow(10.0, rho_db / 20.0) / (norm2 * fs), fs};
}

inline ProcessNoiseSpec process_variance(const LeadField& lf, double rho_db, double fs) {
  return process_variance(lf.gain(), rho_db, fs);
}

// Q = 2q/3 I for the state and dt^2 C = 2q/3 I for the rate, so that
// dt^2 q_v + 2 q_x = 2q.
inline ChangeRateVariances split_cr_variances(const ProcessNoiseSpec& spec, double dt) {
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  const double share = 2.0 * spec.q / 3.0;
  return {share, share / (dt * dt)};
}

}  // namespace skf
