#pragma once

// sLORETA, the random-walk Standardized Kalman filter and the change-rate
// Standardized Kalman filter with BDF rate pseudo-measurements.
//
// Every estimator accepts a batch of series that share one noise covariance.
// The covariance recursion does not depend on the data, so it is computed
// once per batch and only the means are propagated per series.

#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skf/bdf.hpp"
#include "skf/errors.hpp"
#include "skf/matalg.hpp"
#include "skf/model.hpp"
#include "skf/tuning.hpp"

namespace skf {

enum class Method { sloreta, rw_skf, cr_skf };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::sloreta: return "sloreta";
    case Method::rw_skf: return "rw_skf";
    case Method::cr_skf: return "cr_skf";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "sloreta") return Method::sloreta;
  if (s == "rw_skf") return Method::rw_skf;
  if (s == "cr_skf") return Method::cr_skf;
  return std::nullopt;
}

enum class EvolutionKind { random_walk, change_rate };

struct EvolutionSpec {
  EvolutionKind kind = EvolutionKind::random_walk;
  double q_x = 0.0;
  double q_v = 0.0;  // unused for random_walk
  double dt = 0.0;

  static EvolutionSpec random_walk(double q, double dt) { return {EvolutionKind::random_walk, q, 0.0, dt}; }
  static EvolutionSpec change_rate(const ChangeRateVariances& v, double dt) {
    return {EvolutionKind::change_rate, v.q_x, v.q_v, dt};
  }
};

struct PhaseTimings {
  double predict_s = 0.0;
  double update_s = 0.0;
  double standardize_s = 0.0;
};

struct StandardizedEstimate {
  Matrix z;         // T x n standardized amplitudes
  Matrix raw_mean;  // T x n posterior means
  Method method = Method::sloreta;
  std::vector<int> degenerate;  // per step: entries clamped to zero
  PhaseTimings timings;         // shared by every series of a batch
};

struct CovarianceStep {
  std::size_t step;
  const Matrix& predicted;
  const Matrix& posterior;
};

struct SkfOptions {
  // With P0 = Diag(theta, theta / dt^2) the x-marginal variance grows like
  // theta t^2 in the null space of L, so the marginal becomes very
  // ill-conditioned (cond ~ 1e11 after 100 steps) and the attainable root
  // residual sits near 1e-9.
  RootOptions root{1e-8, 100};
  // predict the change-rate covariance block-wise instead of A P A^T
  bool block_predict = true;
  // extra multiplier on the BDF rate-channel noise covariance
  double rate_noise_multiplier = 1.0;
  std::function<void(const CovarianceStep&)> observer;
};

// Diag entries of the standardization product below this are treated as
// degenerate; the matching z entry is clamped to zero.
inline constexpr double kDegenerateDiag = 1e-14;

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void check_batch(std::span<const MeasurementSeries> ys, const Matrix& gain) {
  if (ys.empty()) throw PreconditionError("empty batch");
  const auto& first = ys.front();
  for (const auto& y : ys) {
    if (y.channels() != gain.rows()) {
      std::ostringstream os;
      os << "series has " << y.channels() << " channels, lead field has " << gain.rows();
      throw PreconditionError(os.str());
    }
    if (y.samples() != first.samples() || y.sampling_frequency() != first.sampling_frequency())
      throw PreconditionError("batch series differ in length or sampling frequency");
    if (y.noise_covariance().matrix() != first.noise_covariance().matrix())
      throw PreconditionError("batch series must share one noise covariance");
  }
}

inline void check_prior(const SensitivityPrior& prior, Index n) {
  if (prior.theta.size() != n) throw PreconditionError("prior length does not match source count");
  if (!(prior.theta.array() > 0.0).all()) throw DomainError("prior variances must be positive");
}

// Observations of one time step, one column per series.
inline Matrix gather_rows(std::span<const Matrix> data, Index t) {
  Matrix obs(data.front().cols(), static_cast<Index>(data.size()));
  for (std::size_t b = 0; b < data.size(); ++b) obs.col(static_cast<Index>(b)) = data[b].row(t).transpose();
  return obs;
}

// Standardized output z_j = (Z x)_j / sqrt(D_j), clamped where D_j is degenerate.
inline int emit_z(const Vector& diag, const Matrix& zx, std::vector<StandardizedEstimate>& out, Index t) {
  int degenerate = 0;
  for (Index j = 0; j < diag.size(); ++j) {
    const bool bad = !(diag(j) >= kDegenerateDiag);
    if (bad) ++degenerate;
    const double w = bad ? 0.0 : 1.0 / std::sqrt(diag(j));
    for (std::size_t b = 0; b < out.size(); ++b) out[b].z(t, j) = w * zx(j, static_cast<Index>(b));
  }
  return degenerate;
}

struct FilterProblem {
  const Matrix& gain;   // m x n
  const Matrix& noise;  // m x m
  const Vector& theta;  // n
  double dt;
};

// Random-walk SKF on raw matrices: A = I, Q = q I, P0 = diag(theta), x0 = 0.
inline std::vector<StandardizedEstimate> run_random_walk(const FilterProblem& pb, double q, std::span<const Matrix> data,
                                                         const SkfOptions& opts) {
  const Matrix& l = pb.gain;
  const Index n = l.cols();
  const Index t_len = data.front().rows();
  const auto batch = static_cast<Index>(data.size());

  std::vector<StandardizedEstimate> out(data.size());
  for (auto& e : out) {
    e.z = Matrix::Zero(t_len, n);
    e.raw_mean = Matrix::Zero(t_len, n);
    e.method = Method::rw_skf;
    e.degenerate.assign(static_cast<std::size_t>(t_len), 0);
  }
  PhaseTimings timings;
  Matrix x = Matrix::Zero(n, batch);
  Matrix p = pb.theta.asDiagonal();

  for (Index t = 0; t < t_len; ++t) {
    try {
      auto t0 = Clock::now();
      p.diagonal().array() += q;
      timings.predict_s += seconds_since(t0);

      t0 = Clock::now();
      const DenmanBeavers roots = denman_beavers(p, opts.root, RootTarget::sqrt);
      timings.standardize_s += seconds_since(t0);

      t0 = Clock::now();
      const Matrix plt = p * l.transpose();
      Matrix s = l * plt + pb.noise;
      symmetrize(s);
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() != Eigen::Success) throw DomainError("innovation covariance is not positive definite");
      const Matrix innovation = gather_rows(data, t) - l * x;
      const Matrix gain_t = llt.solve(plt.transpose()).transpose();  // K = P L^T S^-1
      x += gain_t * innovation;
      Matrix p_post = p - gain_t * plt.transpose();
      symmetrize(p_post);
      timings.update_s += seconds_since(t0);
      if (opts.observer) opts.observer(CovarianceStep{static_cast<std::size_t>(t), p, p_post});

      // P^{-1/2} K S^{1/2} = P^{1/2} L^T G^{-T}, with S = G G^T
      t0 = Clock::now();
      const Matrix mt = llt.matrixL().solve(l * roots.sqrt);  // (P^{1/2} L^T G^{-T})^T
      const Vector diag = mt.colwise().squaredNorm().transpose();
      const Matrix zx = roots.inv_sqrt * x;
      const int bad = emit_z(diag, zx, out, t);
      for (std::size_t b = 0; b < out.size(); ++b) {
        out[b].raw_mean.row(t) = x.col(static_cast<Index>(b)).transpose();
        out[b].degenerate[static_cast<std::size_t>(t)] = bad;
      }
      timings.standardize_s += seconds_since(t0);
      p = std::move(p_post);
    } catch (const StepError&) {
      throw;
    } catch (const Error& e) {
      throw StepError(std::string(e.what()) + " at step " + std::to_string(t), static_cast<std::size_t>(t));
    }
  }
  for (auto& e : out) e.timings = timings;
  return out;
}

// Change-rate SKF with stacked state [x; v], H = diag(L, L) and the BDF rate
// pseudo-measurement. Steps before the BDF history is available emit zeros.
inline std::vector<StandardizedEstimate> run_change_rate(const FilterProblem& pb, const EvolutionSpec& evo,
                                                         const BdfSpec& bdf, std::span<const Matrix> data,
                                                         const SkfOptions& opts) {
  const Matrix& l = pb.gain;
  const Index n = l.cols();
  const Index m = l.rows();
  const Index t_len = data.front().rows();
  const auto batch = static_cast<Index>(data.size());
  const double dt = pb.dt;

  if (t_len < bdf.order + 1) {
    std::ostringstream os;
    os << "change-rate filter with BDF order " << bdf.order << " needs at least " << bdf.order + 1
       << " samples, got " << t_len;
    throw PreconditionError(os.str());
  }

  std::vector<Matrix> rates;
  rates.reserve(data.size());
  for (const auto& d : data) rates.push_back(bdf_rate(d, dt, bdf.order));

  std::vector<StandardizedEstimate> out(data.size());
  for (auto& e : out) {
    e.z = Matrix::Zero(t_len, n);
    e.raw_mean = Matrix::Zero(t_len, n);
    e.method = Method::cr_skf;
    e.degenerate.assign(static_cast<std::size_t>(t_len), 0);
  }
  PhaseTimings timings;

  Matrix r_big = Matrix::Zero(2 * m, 2 * m);
  r_big.topLeftCorner(m, m) = pb.noise;
  r_big.bottomRightCorner(m, m) = bdf.noise_scale * opts.rate_noise_multiplier * pb.noise;

  Matrix x = Matrix::Zero(2 * n, batch);
  Matrix p = Matrix::Zero(2 * n, 2 * n);
  p.diagonal().head(n) = pb.theta;
  p.diagonal().tail(n) = pb.theta / (dt * dt);

  for (Index t = bdf.order; t < t_len; ++t) {
    try {
      auto t0 = Clock::now();
      x.topRows(n) += dt * x.bottomRows(n);
      if (opts.block_predict) {
        // [[A, C^T], [C, B]] -> [[A + dt (C + C^T) + dt^2 B, .], [C + dt B, B]]
        const Matrix c = p.bottomLeftCorner(n, n);
        const Matrix b = p.bottomRightCorner(n, n);
        p.topLeftCorner(n, n) += dt * (c + c.transpose()) + (dt * dt) * b;
        p.bottomLeftCorner(n, n) = c + dt * b;
        p.topRightCorner(n, n) = p.bottomLeftCorner(n, n).transpose();
      } else {
        Matrix a = Matrix::Identity(2 * n, 2 * n);
        a.topRightCorner(n, n).diagonal().setConstant(dt);
        p = (a * p * a.transpose()).eval();
      }
      p.diagonal().head(n).array() += evo.q_x;
      p.diagonal().tail(n).array() += evo.q_v;
      symmetrize(p);
      timings.predict_s += seconds_since(t0);

      t0 = Clock::now();
      const DenmanBeavers roots = denman_beavers(p, opts.root, RootTarget::sqrt);
      const DenmanBeavers marginal = denman_beavers(p.topLeftCorner(n, n), opts.root, RootTarget::sqrt);
      timings.standardize_s += seconds_since(t0);

      t0 = Clock::now();
      Matrix pht(2 * n, 2 * m);  // P H^T
      pht.leftCols(m) = p.leftCols(n) * l.transpose();
      pht.rightCols(m) = p.rightCols(n) * l.transpose();
      Matrix s(2 * m, 2 * m);
      s.topRows(m) = l * pht.topRows(n);
      s.bottomRows(m) = l * pht.bottomRows(n);
      s += r_big;
      symmetrize(s);
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() != Eigen::Success) throw DomainError("innovation covariance is not positive definite");

      Matrix obs(2 * m, batch);
      obs.topRows(m) = gather_rows(data, t);
      obs.bottomRows(m) = gather_rows(rates, t);
      obs.topRows(m) -= l * x.topRows(n);
      obs.bottomRows(m) -= l * x.bottomRows(n);
      const Matrix gain_t = llt.solve(pht.transpose()).transpose();
      x += gain_t * obs;
      Matrix p_post = p - gain_t * pht.transpose();
      symmetrize(p_post);
      timings.update_s += seconds_since(t0);
      if (opts.observer) opts.observer(CovarianceStep{static_cast<std::size_t>(t), p, p_post});

      // Rows of E P^{1/2} H^T G^{-T}; only the x-marginal rows are needed.
      t0 = Clock::now();
      Matrix yht(2 * m, n);  // (E P^{1/2} H^T)^T
      yht.topRows(m) = l * roots.sqrt.topLeftCorner(n, n);
      yht.bottomRows(m) = l * roots.sqrt.bottomLeftCorner(n, n);
      const Matrix mt = llt.matrixL().solve(yht);
      const Vector diag = mt.colwise().squaredNorm().transpose();
      const Matrix zx = marginal.inv_sqrt * x.topRows(n);
      const int bad = emit_z(diag, zx, out, t);
      for (std::size_t b = 0; b < out.size(); ++b) {
        out[b].raw_mean.row(t) = x.col(static_cast<Index>(b)).head(n).transpose();
        out[b].degenerate[static_cast<std::size_t>(t)] = bad;
      }
      timings.standardize_s += seconds_since(t0);
      p = std::move(p_post);
    } catch (const StepError&) {
      throw;
    } catch (const Error& e) {
      throw StepError(std::string(e.what()) + " at step " + std::to_string(t), static_cast<std::size_t>(t));
    }
  }
  for (auto& e : out) e.timings = timings;
  return out;
}

inline std::vector<Matrix> batch_data(std::span<const MeasurementSeries> ys) {
  std::vector<Matrix> data;
  data.reserve(ys.size());
  for (const auto& y : ys) data.push_back(y.data());
  return data;
}

}  // namespace detail

// Standardization weight of one filter step,
//   W = Diag(E P^{-1/2} K S K^T P^{-1/2} E^T)^{-1/2} Sigma^{-1/2},
// where E = I and Sigma = P for the plain state, and E = [I, O] with Sigma the
// x-marginal block for the stacked change-rate state. The diagonal comes from
// row norms of P^{-1/2} K G (S = G G^T); the full product is never formed.
inline Matrix standardize_step(const Matrix& p_pred, Index marginal_dim, const Matrix& k, const SpdMatrix& s,
                               const RootOptions& root = {}) {
  if (k.rows() != p_pred.rows() || k.cols() != s.dim()) throw PreconditionError("standardize_step: shape mismatch");
  const auto full = detail::denman_beavers(p_pred, root, detail::RootTarget::inv_sqrt);
  Eigen::LLT<Matrix> llt(s.matrix());
  if (llt.info() != Eigen::Success) throw DomainError("standardize_step: S is not positive definite");
  const Matrix g = llt.matrixL();
  const Matrix rows = full.inv_sqrt.topRows(marginal_dim) * k * g;
  const Vector diag = rows.rowwise().squaredNorm();
  Matrix sigma_inv_sqrt;
  if (marginal_dim == p_pred.rows()) {
    sigma_inv_sqrt = full.inv_sqrt;
  } else {
    sigma_inv_sqrt = detail::denman_beavers(p_pred.topLeftCorner(marginal_dim, marginal_dim), root,
                                            detail::RootTarget::inv_sqrt)
                         .inv_sqrt;
  }
  for (Index j = 0; j < diag.size(); ++j) {
    if (!(diag(j) > 0.0)) {
      std::ostringstream os;
      os << "standardization diagonal entry " << j << " is not positive (" << diag(j) << ")";
      throw DegeneracyError(os.str(), static_cast<std::size_t>(j));
    }
  }
  return diag.cwiseSqrt().cwiseInverse().asDiagonal() * sigma_inv_sqrt;
}

inline Matrix standardize_step(const SpdMatrix& p_pred, const Matrix& k, const SpdMatrix& s,
                               const RootOptions& root = {}) {
  return standardize_step(p_pred.matrix(), p_pred.dim(), k, s, root);
}

inline Matrix standardize_step(const BlockSpdMatrix& p_pred, const Matrix& k, const SpdMatrix& s,
                               const RootOptions& root = {}) {
  return standardize_step(p_pred.assemble(), p_pred.block_dim(), k, s, root);
}

// sLORETA with a per-source prior Theta:
//   x = Theta L^T (L Theta L^T + R)^{-1} y
//   z = Diag(Theta L^T (L Theta L^T + R)^{-1} L)^{-1/2} Theta^{-1/2} x
// The Theta^{-1/2} factor makes z the SKF standardization of a single step
// with P = Theta; for scalar theta it only rescales z by a constant.
inline std::vector<StandardizedEstimate> sloreta(std::span<const MeasurementSeries> ys, const LeadField& lf,
                                                 const SensitivityPrior& prior) {
  detail::check_batch(ys, lf.gain());
  detail::check_prior(prior, lf.sources());
  const Matrix& l = lf.gain();
  const Vector& theta = prior.theta;
  Matrix g = l * theta.asDiagonal() * l.transpose() + ys.front().noise_covariance().matrix();
  symmetrize(g);
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success) throw DomainError("sLORETA: L Theta L^T + R is not positive definite");
  const Matrix ginv_l = llt.solve(l);  // m x n
  Vector weight(l.cols());
  for (Index j = 0; j < l.cols(); ++j) {
    const double res = theta(j) * l.col(j).dot(ginv_l.col(j));
    if (!(res > 0.0)) {
      std::ostringstream os;
      os << "sLORETA resolution diagonal entry " << j << " is not positive (" << res << ")";
      throw DegeneracyError(os.str(), static_cast<std::size_t>(j));
    }
    weight(j) = 1.0 / std::sqrt(res * theta(j));
  }
  const Matrix op = theta.asDiagonal() * ginv_l.transpose();  // n x m
  std::vector<StandardizedEstimate> out;
  out.reserve(ys.size());
  for (const auto& y : ys) {
    StandardizedEstimate e;
    e.method = Method::sloreta;
    e.raw_mean = y.data() * op.transpose();
    e.z = e.raw_mean * weight.asDiagonal();
    e.degenerate.assign(static_cast<std::size_t>(y.samples()), 0);
    out.push_back(std::move(e));
  }
  return out;
}

inline StandardizedEstimate sloreta(const MeasurementSeries& y, const LeadField& lf, const SensitivityPrior& prior) {
  return sloreta(std::span<const MeasurementSeries>(&y, 1), lf, prior).front();
}

inline std::vector<StandardizedEstimate> rw_skf(std::span<const MeasurementSeries> ys, const LeadField& lf,
                                                const SensitivityPrior& prior, const EvolutionSpec& evo,
                                                const SkfOptions& opts = {}) {
  if (evo.kind != EvolutionKind::random_walk) throw PreconditionError("rw_skf requires a random-walk evolution");
  if (!(evo.q_x >= 0.0)) throw DomainError("process variance must be non-negative");
  detail::check_batch(ys, lf.gain());
  detail::check_prior(prior, lf.sources());
  const Matrix noise = ys.front().noise_covariance().matrix();
  const auto data = detail::batch_data(ys);
  return detail::run_random_walk({lf.gain(), noise, prior.theta, ys.front().dt()}, evo.q_x, data, opts);
}

inline StandardizedEstimate rw_skf(const MeasurementSeries& y, const LeadField& lf, const SensitivityPrior& prior,
                                   const EvolutionSpec& evo, const SkfOptions& opts = {}) {
  return rw_skf(std::span<const MeasurementSeries>(&y, 1), lf, prior, evo, opts).front();
}

inline std::vector<StandardizedEstimate> cr_skf(std::span<const MeasurementSeries> ys, const LeadField& lf,
                                                const SensitivityPrior& prior, const EvolutionSpec& evo,
                                                const BdfSpec& bdf, const SkfOptions& opts = {}) {
  if (evo.kind != EvolutionKind::change_rate) throw PreconditionError("cr_skf requires a change-rate evolution");
  if (!(evo.q_x > 0.0) || !(evo.q_v > 0.0)) throw DomainError("change-rate variances must be positive");
  bdf_coefficients(bdf.order);
  detail::check_batch(ys, lf.gain());
  detail::check_prior(prior, lf.sources());
  const Matrix noise = ys.front().noise_covariance().matrix();
  const auto data = detail::batch_data(ys);
  return detail::run_change_rate({lf.gain(), noise, prior.theta, ys.front().dt()}, evo, bdf, data, opts);
}

inline StandardizedEstimate cr_skf(const MeasurementSeries& y, const LeadField& lf, const SensitivityPrior& prior,
                                   const EvolutionSpec& evo, const BdfSpec& bdf, const SkfOptions& opts = {}) {
  return cr_skf(std::span<const MeasurementSeries>(&y, 1), lf, prior, evo, bdf, opts).front();
}

// Scalar tracking used by the BDF-order experiment: unit gain, random-walk
// filter for bdf_order == 0, change-rate filter with the matching BDF
// otherwise. Returns the posterior mean of the tracked value.
inline Vector track_scalar(const Vector& observations, double dt, double noise_var, double q, double theta0,
                           int bdf_order, const SkfOptions& opts = {}) {
  const Matrix gain = Matrix::Ones(1, 1);
  const Matrix noise = Matrix::Constant(1, 1, noise_var);
  const Vector theta = Vector::Constant(1, theta0);
  const std::vector<Matrix> data{Matrix(observations)};
  const detail::FilterProblem pb{gain, noise, theta, dt};
  if (bdf_order == 0) return detail::run_random_walk(pb, q, data, opts).front().raw_mean.col(0);
  const auto split = split_cr_variances({0.0, q, 1.0 / dt}, dt);
  return detail::run_change_rate(pb, EvolutionSpec::change_rate(split, dt), make_bdf(bdf_order, dt), data, opts)
      .front()
      .raw_mean.col(0);
}

}  // namespace skf
