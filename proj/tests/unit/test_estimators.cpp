#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "skf/estimators.hpp"
#include "skf/simulate.hpp"

using namespace skf;

namespace {

Matrix eig_power(const Matrix& x, double power) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (x + x.transpose()));
  return es.eigenvectors() * es.eigenvalues().array().pow(power).matrix().asDiagonal() * es.eigenvectors().transpose();
}

Matrix random_matrix(Index r, Index c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix a(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) a(i, j) = normal(rng);
  return a;
}

LeadField random_lead_field(Index m, Index n, unsigned seed) {
  return LeadField(random_matrix(m, n, seed), Positions::Zero(m, 3), Positions::Zero(n, 3));
}

// Textbook Kalman filter with explicit inverses and the full standardization
// product W = Diag(E P^-1/2 K S K^T P^-1/2 E^T)^-1/2 Sigma^-1/2.
struct Reference {
  Matrix z, mean;
};

Reference reference_filter(const Matrix& a, const Matrix& q, const Matrix& h, const Matrix& r, const Matrix& p0,
                           const Matrix& obs, Index marginal, Index first_step) {
  const Index t_len = obs.rows();
  const Index dim = a.rows();
  Reference out{Matrix::Zero(t_len, marginal), Matrix::Zero(t_len, marginal)};
  Vector x = Vector::Zero(dim);
  Matrix p = p0;
  for (Index t = first_step; t < t_len; ++t) {
    x = a * x;
    p = a * p * a.transpose() + q;
    const Matrix s = h * p * h.transpose() + r;
    const Matrix k = p * h.transpose() * s.inverse();
    x = x + k * (obs.row(t).transpose() - h * x);
    const Matrix pis = eig_power(p, -0.5);
    const Matrix prod = (pis * k * s * k.transpose() * pis).topLeftCorner(marginal, marginal);
    const Vector d = prod.diagonal().array().rsqrt();
    const Matrix w = d.asDiagonal() * eig_power(p.topLeftCorner(marginal, marginal), -0.5);
    out.z.row(t) = (w * x.head(marginal)).transpose();
    out.mean.row(t) = x.head(marginal).transpose();
    p = p - k * s * k.transpose();
  }
  return out;
}

struct Fixture {
  LeadField lf;
  MeasurementSeries y;
  SensitivityPrior prior;
};

Fixture small_problem(unsigned seed, Index m = 5, Index n = 7, Index t_len = 12, double fs = 10.0) {
  LeadField lf = random_lead_field(m, n, seed);
  Matrix data = random_matrix(t_len, m, seed + 100);
  Matrix r = random_matrix(m, m, seed + 200);
  r = 0.2 * r * r.transpose() + 0.5 * Matrix::Identity(m, m);
  MeasurementSeries y(std::move(data), fs, SpdMatrix(r));
  SensitivityPrior prior = sensitivity_theta(lf, y.noise_covariance(), 5.0);
  return {std::move(lf), std::move(y), std::move(prior)};
}

}  // namespace

TEST(RwSkf, ScalarExampleHalfGain) {
  // P = 1, R = 1, q = 0: K = 1/2, x = y/2, W = sqrt(2), z = y / sqrt(2)
  const LeadField lf(Matrix::Identity(2, 1) + Matrix::Constant(2, 1, 0.0), Positions::Zero(2, 3), Positions::Zero(1, 3));
  Matrix data(3, 2);
  data << 1.0, 0.0, 0.0, 0.0, 0.0, 0.0;
  const MeasurementSeries y(data, 1.0, SpdMatrix::identity(2));
  const SensitivityPrior prior{Vector::Ones(1), 2.0};
  const auto est = rw_skf(y, lf, prior, EvolutionSpec::random_walk(0.0, 1.0));
  EXPECT_NEAR(est.raw_mean(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(est.z(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(RwSkf, MatchesDenseReference) {
  const auto f = small_problem(1);
  const double q = 0.3;
  const auto est = rw_skf(f.y, f.lf, f.prior, EvolutionSpec::random_walk(q, f.y.dt()));
  const Index n = f.lf.sources();
  const auto ref = reference_filter(Matrix::Identity(n, n), q * Matrix::Identity(n, n), f.lf.gain(),
                                    f.y.noise_covariance().matrix(), Matrix(f.prior.theta.asDiagonal()), f.y.data(),
                                    n, 0);
  EXPECT_LT((est.raw_mean - ref.mean).norm() / ref.mean.norm(), 1e-10);
  EXPECT_LT((est.z - ref.z).norm() / ref.z.norm(), 1e-8);
}

TEST(CrSkf, MatchesDenseReference) {
  for (int order : {1, 2, 3}) {
    const auto f = small_problem(2 + static_cast<unsigned>(order));
    const Index n = f.lf.sources();
    const Index m = f.lf.sensors();
    const double dt = f.y.dt();
    const ChangeRateVariances v = split_cr_variances(process_variance(f.lf, 10.0, f.y.sampling_frequency()), dt);
    const BdfSpec bdf = make_bdf(order, dt);
    const auto est = cr_skf(f.y, f.lf, f.prior, EvolutionSpec::change_rate(v, dt), bdf);

    Matrix a = Matrix::Identity(2 * n, 2 * n);
    a.topRightCorner(n, n) = dt * Matrix::Identity(n, n);
    Matrix q = Matrix::Zero(2 * n, 2 * n);
    q.diagonal().head(n).setConstant(v.q_x);
    q.diagonal().tail(n).setConstant(v.q_v);
    Matrix h = Matrix::Zero(2 * m, 2 * n);
    h.topLeftCorner(m, n) = f.lf.gain();
    h.bottomRightCorner(m, n) = f.lf.gain();
    Matrix r = Matrix::Zero(2 * m, 2 * m);
    r.topLeftCorner(m, m) = f.y.noise_covariance().matrix();
    r.bottomRightCorner(m, m) = bdf.noise_scale * f.y.noise_covariance().matrix();
    Matrix p0 = Matrix::Zero(2 * n, 2 * n);
    p0.diagonal().head(n) = f.prior.theta;
    p0.diagonal().tail(n) = f.prior.theta / (dt * dt);
    // naive BDF rate, written out from the coefficients
    const auto alpha = bdf_coefficients(order);
    Matrix obs = Matrix::Zero(f.y.samples(), 2 * m);
    obs.leftCols(m) = f.y.data();
    for (Index t = order; t < f.y.samples(); ++t)
      for (int k = 0; k <= order; ++k) obs.row(t).tail(m) += alpha[static_cast<std::size_t>(k)] * f.y.data().row(t - k) / dt;

    const auto ref = reference_filter(a, q, h, r, p0, obs, n, order);
    EXPECT_LT((est.raw_mean - ref.mean).norm() / ref.mean.norm(), 1e-9) << "order " << order;
    EXPECT_LT((est.z - ref.z).norm() / ref.z.norm(), 1e-7) << "order " << order;
    for (Index t = 0; t < order; ++t) EXPECT_EQ(est.z.row(t).norm(), 0.0);
  }
}

TEST(CrSkf, DensePredictMatchesBlockPredict) {
  const auto f = small_problem(9);
  const double dt = f.y.dt();
  const auto v = split_cr_variances(process_variance(f.lf, 20.0, f.y.sampling_frequency()), dt);
  SkfOptions dense;
  dense.block_predict = false;
  const auto a = cr_skf(f.y, f.lf, f.prior, EvolutionSpec::change_rate(v, dt), make_bdf(2, dt));
  const auto b = cr_skf(f.y, f.lf, f.prior, EvolutionSpec::change_rate(v, dt), make_bdf(2, dt), dense);
  EXPECT_LT((a.z - b.z).norm() / a.z.norm(), 1e-10);
}

TEST(Skf, BatchEqualsIndividualRuns) {
  const auto f = small_problem(4);
  Matrix other = random_matrix(f.y.samples(), f.y.channels(), 77);
  const std::vector<MeasurementSeries> batch{f.y, MeasurementSeries(other, f.y.sampling_frequency(), f.y.noise_covariance())};
  const auto evo = EvolutionSpec::random_walk(0.1, f.y.dt());
  const auto together = rw_skf(batch, f.lf, f.prior, evo);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto alone = rw_skf(batch[b], f.lf, f.prior, evo);
    EXPECT_LT((together[b].z - alone.z).norm(), 1e-12);
  }
  const double dt = f.y.dt();
  const auto cr_evo = EvolutionSpec::change_rate(split_cr_variances(process_variance(f.lf, 20.0, 10.0), dt), dt);
  const auto cr_together = cr_skf(batch, f.lf, f.prior, cr_evo, make_bdf(2, dt));
  const auto cr_alone = cr_skf(batch[1], f.lf, f.prior, cr_evo, make_bdf(2, dt));
  EXPECT_LT((cr_together[1].z - cr_alone.z).norm(), 1e-12);
}

TEST(Skf, CovarianceStaysSymmetricPositiveAndContracts) {
  const auto f = small_problem(5, 6, 10, 30);
  SkfOptions opts;
  int checked = 0;
  opts.observer = [&](const CovarianceStep& c) {
    EXPECT_LT(symmetry_defect(c.posterior), 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(c.posterior);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    // posterior <= predicted in the Loewner order
    Eigen::SelfAdjointEigenSolver<Matrix> diff(c.predicted - c.posterior);
    EXPECT_GT(diff.eigenvalues().minCoeff(), -1e-9 * c.predicted.norm());
    ++checked;
  };
  const double dt = f.y.dt();
  rw_skf(f.y, f.lf, f.prior, EvolutionSpec::random_walk(0.5, dt), opts);
  cr_skf(f.y, f.lf, f.prior, EvolutionSpec::change_rate(split_cr_variances(process_variance(f.lf, 20.0, 10.0), dt), dt),
         make_bdf(2, dt), opts);
  EXPECT_EQ(checked, 30 + 28);
}

TEST(StandardizeStep, MatchesDenseFormula) {
  const Index n = 6, m = 4;
  Matrix pr = random_matrix(n, n, 3);
  pr = pr * pr.transpose() + Matrix::Identity(n, n);
  const Matrix l = random_matrix(m, n, 4);
  const Matrix r = Matrix::Identity(m, m);
  const Matrix s = l * pr * l.transpose() + r;
  const Matrix k = pr * l.transpose() * s.inverse();
  const Matrix w = standardize_step(SpdMatrix(pr), k, SpdMatrix(s));
  const Matrix pis = eig_power(pr, -0.5);
  const Vector d = (pis * k * s * k.transpose() * pis).diagonal().array().rsqrt();
  const Matrix ref = d.asDiagonal() * pis;
  EXPECT_LT((w - ref).norm() / ref.norm(), 1e-9);
}

TEST(StandardizeStep, BlockMarginalMatchesDenseFormula) {
  const Index n = 3, m = 4;
  Matrix pr = random_matrix(2 * n, 2 * n, 8);
  pr = pr * pr.transpose() + Matrix::Identity(2 * n, 2 * n);
  Matrix h = Matrix::Zero(m, 2 * n);
  h.leftCols(n) = random_matrix(m, n, 9);
  const Matrix s = h * pr * h.transpose() + Matrix::Identity(m, m);
  const Matrix k = pr * h.transpose() * s.inverse();
  const Matrix w = standardize_step(BlockSpdMatrix::split(pr, n), k, SpdMatrix(s));
  const Matrix pis = eig_power(pr, -0.5);
  const Vector d = (pis * k * s * k.transpose() * pis).topLeftCorner(n, n).diagonal().array().rsqrt();
  const Matrix ref = d.asDiagonal() * eig_power(pr.topLeftCorner(n, n), -0.5);
  EXPECT_LT((w - ref).norm() / ref.norm(), 1e-9);
}

TEST(StandardizeStep, ZeroGainIsDegenerate) {
  const Matrix k = Matrix::Zero(3, 2);
  EXPECT_THROW(standardize_step(SpdMatrix::identity(3), k, SpdMatrix::identity(2)), DegeneracyError);
  EXPECT_THROW(standardize_step(SpdMatrix::identity(3), Matrix::Zero(2, 2), SpdMatrix::identity(2)), PreconditionError);
}

TEST(Sloreta, NoiselessSingleSourcesLocalizeExactly) {
  const LeadField lf = toy_lead_field(120, 24, SphereGeometry{}, 0.33, 21);
  const SpdMatrix r = SpdMatrix(1e-3 * Matrix::Identity(24, 24) * lf.gain().squaredNorm() / 24.0 / 120.0);
  const SensitivityPrior prior = sensitivity_theta(lf, r, 10.0);
  int hits = 0;
  for (Index k = 0; k < lf.sources(); ++k) {
    Matrix data(3, 24);
    for (Index t = 0; t < 3; ++t) data.row(t) = lf.gain().col(k).transpose();
    const auto est = sloreta(MeasurementSeries(data, 100.0, r), lf, prior);
    Index peak = 0;
    est.z.row(1).cwiseAbs().maxCoeff(&peak);
    hits += peak == k ? 1 : 0;
  }
  EXPECT_EQ(hits, lf.sources());
}

TEST(Sloreta, MatchesDenseFormula) {
  const auto f = small_problem(12);
  const auto est = sloreta(f.y, f.lf, f.prior);
  const Matrix l = f.lf.gain();
  const Matrix th = f.prior.theta.asDiagonal();
  const Matrix op = th * l.transpose() * (l * th * l.transpose() + f.y.noise_covariance().matrix()).inverse();
  const Vector d = (op * l).diagonal();
  for (Index t = 0; t < f.y.samples(); ++t) {
    const Vector x = op * f.y.data().row(t).transpose();
    for (Index j = 0; j < x.size(); ++j)
      EXPECT_NEAR(est.z(t, j), x(j) / std::sqrt(d(j) * f.prior.theta(j)), 1e-9 * (1.0 + std::abs(est.z(t, j))));
  }
}

TEST(Estimators, PreconditionsAreEnforced) {
  const auto f = small_problem(6);
  const double dt = f.y.dt();
  const auto cr = EvolutionSpec::change_rate({1.0, 1.0}, dt);
  EXPECT_THROW(rw_skf(f.y, f.lf, f.prior, cr), PreconditionError);
  EXPECT_THROW(cr_skf(f.y, f.lf, f.prior, EvolutionSpec::random_walk(1.0, dt), make_bdf(2, dt)), PreconditionError);
  BdfSpec bad = make_bdf(2, dt);
  bad.order = 4;
  EXPECT_THROW(cr_skf(f.y, f.lf, f.prior, cr, bad), DomainError);
  EXPECT_THROW(make_bdf(0, dt), DomainError);
  const MeasurementSeries short_y(Matrix::Ones(3, f.y.channels()), 10.0, f.y.noise_covariance());
  EXPECT_THROW(cr_skf(short_y, f.lf, f.prior, cr, make_bdf(3, dt)), PreconditionError);
  SensitivityPrior wrong{Vector::Ones(2), 5.0};
  EXPECT_THROW(sloreta(f.y, f.lf, wrong), PreconditionError);
  EXPECT_THROW(rw_skf(f.y, random_lead_field(f.y.channels() + 1, 7, 1), f.prior, EvolutionSpec::random_walk(1.0, dt)),
               PreconditionError);
}

TEST(TrackScalar, BdfOrderImprovesFastTrack) {
  // under-tuned process noise on a fast, smooth path: the rate channel helps
  double err[3] = {0, 0, 0};
  for (unsigned seed = 0; seed < 10; ++seed) {
    const Toy1dTrack tr = toy_1d_track(Toy1dKind::sinusoids, 400, 0.05, seed);
    for (int order = 0; order < 3; ++order) {
      const Vector est = track_scalar(tr.observations, tr.dt, 0.0025, 0.007, 1.0, order);
      err[order] += (est - tr.truth).tail(350).norm();
    }
  }
  EXPECT_LT(err[1], err[0]);
  EXPECT_LT(err[2], err[1]);
}
