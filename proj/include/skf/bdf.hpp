#pragma once

// Backward differentiation formulas turned into pseudo-measurements of the
// rate: f_t = sum_k alpha_k y_{t-k} / dt ~ L v_t.

#include <sstream>
#include <vector>

#include "skf/errors.hpp"
#include "skf/matalg.hpp"
#include "skf/model.hpp"

namespace skf {

inline constexpr int kMaxBdfOrder = 3;

struct BdfSpec {
  int order = 2;
  std::vector<double> coefficients;  // alpha_0 multiplies y_t, alpha_1 y_{t-1}, ...
  double noise_scale = 0.0;          // R_v = noise_scale * R
};

inline std::vector<double> bdf_coefficients(int order) {
  switch (order) {
    case 1: return {1.0, -1.0};
    case 2: return {1.5, -2.0, 0.5};
    case 3: return {11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0};
    default: {
      std::ostringstream os;
      os << "unsupported BDF order " << order << " (supported: 1..3)";
      throw DomainError(os.str());
    }
  }
}

// noise_scale = sum alpha_k^2 / dt^2; 6.5 / dt^2 for order 2.
inline BdfSpec make_bdf(int order, double dt) {
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  BdfSpec spec{order, bdf_coefficients(order), 0.0};
  double sum_sq = 0.0;
  for (double a : spec.coefficients) sum_sq += a * a;
  spec.noise_scale = sum_sq / (dt * dt);
  return spec;
}

// Rows 0..order-1 have no history and are left at zero.
inline Matrix bdf_rate(const Matrix& data, double dt, int order) {
  const auto alpha = bdf_coefficients(order);
  if (data.rows() < order + 1) {
    std::ostringstream os;
    os << "BDF order " << order << " needs at least " << order + 1 << " samples, got " << data.rows();
    throw PreconditionError(os.str());
  }
  Matrix f = Matrix::Zero(data.rows(), data.cols());
  for (Index t = order; t < data.rows(); ++t) {
    for (int k = 0; k <= order; ++k) f.row(t) += alpha[static_cast<std::size_t>(k)] * data.row(t - k);
    f.row(t) /= dt;
  }
  return f;
}

inline Matrix bdf_modified_series(const MeasurementSeries& y, int order) { return bdf_rate(y.data(), y.dt(), order); }

}  // namespace skf
