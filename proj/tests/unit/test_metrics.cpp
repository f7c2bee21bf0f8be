#include <gtest/gtest.h>

#include <random>

#include "../common/oracles.hpp"
#include "skf/metrics.hpp"

using namespace skf;

namespace {

Positions random_points(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Positions p(n, 3);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < 3; ++k) p(i, k) = u(rng);
  return p;
}

SourceDistribution dist(std::vector<double> w, const Positions& p) {
  return {Eigen::Map<Vector>(w.data(), static_cast<Index>(w.size())), p};
}

}  // namespace

TEST(LocalizationError, PointEstimateAtTruthIsZero) {
  Positions p(3, 3);
  p << 0, 0, 0, 1, 2, 3, -1, 0, 0.5;
  const auto d = dist({0.0, 4.0, 0.0}, p);
  EXPECT_EQ(localization_error(d, p.row(1), LocalizationMode::peak), 0.0);
  EXPECT_EQ(localization_error(d, p.row(1), LocalizationMode::mass_centre), 0.0);
}

TEST(LocalizationError, SymmetricPairHasCentreAtOrigin) {
  Positions p(2, 3);
  p << 1, 0, 0, -1, 0, 0;
  EXPECT_NEAR(localization_error(dist({2.0, 2.0}, p), Eigen::RowVector3d::Zero(), LocalizationMode::mass_centre), 0.0,
              1e-15);
}

TEST(LocalizationError, MatchesNaiveArithmetic) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Positions p = random_points(12, rng);
    std::vector<double> w(12, 0.0);
    for (int k = 0; k < 4; ++k) w[static_cast<std::size_t>(rng() % 12)] = u(rng) - 0.5;  // signed, sparse
    if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) w[0] = 1.0;
    const Eigen::RowVector3d truth(u(rng), u(rng), u(rng));
    double sx = 0, sy = 0, sz = 0, total = 0, best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double a = std::fabs(w[i]);
      sx += a * p(static_cast<Index>(i), 0);
      sy += a * p(static_cast<Index>(i), 1);
      sz += a * p(static_cast<Index>(i), 2);
      total += a;
      if (a > best) best = a, arg = i;
    }
    const double mc = std::sqrt(std::pow(sx / total - truth(0), 2) + std::pow(sy / total - truth(1), 2) +
                                std::pow(sz / total - truth(2), 2));
    const double pk = (p.row(static_cast<Index>(arg)) - truth).norm();
    EXPECT_NEAR(localization_error(dist(w, p), truth, LocalizationMode::mass_centre), mc, 1e-12);
    EXPECT_NEAR(localization_error(dist(w, p), truth, LocalizationMode::peak), pk, 1e-12);
  }
}

TEST(LocalizationError, InvariantUnderWeightScaling) {
  std::mt19937_64 rng(9);
  const Positions p = random_points(8, rng);
  const std::vector<double> w{0.1, 0.5, 0.0, 0.3, 0.9, 0.2, 0.0, 0.4};
  std::vector<double> w3;
  for (double v : w) w3.push_back(3.7 * v);
  const Eigen::RowVector3d t(0.1, 0.2, 0.3);
  for (auto mode : {LocalizationMode::peak, LocalizationMode::mass_centre})
    EXPECT_NEAR(localization_error(dist(w, p), t, mode), localization_error(dist(w3, p), t, mode), 1e-14);
}

TEST(LocalizationError, AllZeroWeightsAreUndefined) {
  Positions p = Positions::Zero(2, 3);
  EXPECT_THROW(localization_error(dist({0.0, 0.0}, p), Eigen::RowVector3d::Zero()), UndefinedMetricError);
  EXPECT_THROW(localization_error({Vector(), Positions(0, 3)}, Eigen::RowVector3d::Zero()), PreconditionError);
}

TEST(Emd, IdentityAndSingleTransport) {
  std::mt19937_64 rng(1);
  const Positions p = random_points(5, rng);
  const auto d = dist({0.2, 0.1, 0.4, 0.2, 0.1}, p);
  EXPECT_NEAR(earth_movers_distance(d, d, 0.0), 0.0, 1e-15);

  Positions a(1, 3), b(1, 3);
  a << 0, 0, 0;
  b << 3, 4, 0;
  EXPECT_NEAR(earth_movers_distance(dist({2.0}, a), dist({5.0}, b), 0.0), 5.0, 1e-14);
}

TEST(Emd, MatchesVertexEnumerationOnSmallFixtures) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n1 = 1 + static_cast<Index>(rng() % 4), n2 = 1 + static_cast<Index>(rng() % 4);
    const Positions pa = random_points(n1, rng), pb = random_points(n2, rng);
    std::vector<double> wa, wb;
    for (Index i = 0; i < n1; ++i) wa.push_back(u(rng));
    for (Index j = 0; j < n2; ++j) wb.push_back(u(rng));
    const double emd = earth_movers_distance(dist(wa, pa), dist(wb, pb), 0.0);
    const MassPoints ma = normalized_mass(dist(wa, pa), 0.0), mb = normalized_mass(dist(wb, pb), 0.0);
    const double ref = oracle::transport_by_vertices(ma.mass, mb.mass, euclidean_costs(ma.at, mb.at));
    EXPECT_NEAR(emd, ref, 1e-9) << "fixture " << rep;
  }
}

TEST(Emd, MatchesGridBruteForceOnThreePointFixtures) {
  std::mt19937_64 rng(33);
  constexpr int units = 40;
  for (int rep = 0; rep < 15; ++rep) {
    const auto ua = oracle::random_units(3, units, rng), ub = oracle::random_units(3, units, rng);
    const Positions pa = random_points(3, rng), pb = random_points(3, rng);
    std::vector<double> wa(ua.begin(), ua.end()), wb(ub.begin(), ub.end());
    const double emd = earth_movers_distance(dist(wa, pa), dist(wb, pb), 0.0);
    std::vector<Eigen::RowVector3d> va, vb;
    for (Index i = 0; i < 3; ++i) va.emplace_back(pa.row(i)), vb.emplace_back(pb.row(i));
    EXPECT_NEAR(emd, oracle::transport_by_grid(ua, ub, units, euclidean_costs(va, vb)), 1e-12);
  }
}

TEST(Emd, CollinearPointsMatchCdfDistance) {
  // on a line W1 is the integral of |F_p - F_q|
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    const Index na = 60 + rep * 20, nb = 150 - rep * 10;
    Positions pa = Positions::Zero(na, 3), pb = Positions::Zero(nb, 3);
    std::vector<double> wa, wb;
    std::vector<std::pair<double, double>> events;  // (x, signed normalized mass)
    double ta = 0, tb = 0;
    for (Index i = 0; i < na; ++i) pa(i, 0) = u(rng), wa.push_back(u(rng)), ta += wa.back();
    for (Index j = 0; j < nb; ++j) pb(j, 0) = 0.3 + u(rng), wb.push_back(u(rng)), tb += wb.back();
    for (Index i = 0; i < na; ++i) events.emplace_back(pa(i, 0), wa[static_cast<std::size_t>(i)] / ta);
    for (Index j = 0; j < nb; ++j) events.emplace_back(pb(j, 0), -wb[static_cast<std::size_t>(j)] / tb);
    std::sort(events.begin(), events.end());
    double cdf = 0.0, ref = 0.0;
    for (std::size_t k = 0; k + 1 < events.size(); ++k) {
      cdf += events[k].second;
      ref += std::fabs(cdf) * (events[k + 1].first - events[k].first);
    }
    EXPECT_NEAR(earth_movers_distance(dist(wa, pa), dist(wb, pb), 0.0), ref, 1e-9) << "rep " << rep;
  }
}

TEST(Emd, SymmetricAndTriangle) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<SourceDistribution> d;
    for (int k = 0; k < 3; ++k) {
      const Index n = 1 + static_cast<Index>(rng() % 4);
      std::vector<double> w;
      for (Index i = 0; i < n; ++i) w.push_back(u(rng));
      d.push_back(dist(w, random_points(n, rng)));
    }
    const double ab = earth_movers_distance(d[0], d[1], 0.0), ba = earth_movers_distance(d[1], d[0], 0.0);
    const double bc = earth_movers_distance(d[1], d[2], 0.0), ac = earth_movers_distance(d[0], d[2], 0.0);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ac, ab + bc + 1e-9);
  }
}

TEST(Emd, ScalesWithPositions) {
  std::mt19937_64 rng(55);
  const Positions pa = random_points(4, rng), pb = random_points(3, rng);
  const auto a = dist({0.3, 0.2, 0.4, 0.1}, pa), b = dist({0.5, 0.25, 0.25}, pb);
  const double base = earth_movers_distance(a, b, 0.0);
  SourceDistribution a2 = a, b2 = b;
  a2.positions *= 2.5;
  b2.positions *= 2.5;
  EXPECT_NEAR(earth_movers_distance(a2, b2, 0.0), 2.5 * base, 1e-12);
}

TEST(Emd, ThresholdDropsSmallWeights) {
  Positions p(3, 3);
  p << 0, 0, 0, 1, 0, 0, 10, 0, 0;
  const auto a = dist({1.0, 0.0, 0.005}, p);  // last point below 1% of the peak
  const auto b = dist({0.0, 1.0, 0.0}, p);
  EXPECT_NEAR(earth_movers_distance(a, b, 0.01), 1.0, 1e-14);
  EXPECT_GT(earth_movers_distance(a, b, 0.0), 1.0);
  EXPECT_THROW(earth_movers_distance(a, b, 1.0), DomainError);
}

TEST(Emd, ZeroMassIsUndefined) {
  Positions p = Positions::Zero(2, 3);
  EXPECT_THROW(earth_movers_distance(dist({0.0, 0.0}, p), dist({1.0, 0.0}, p)), UndefinedMetricError);
}

TEST(RoiMeanTrack, Fixtures) {
  Matrix z(3, 4);
  z << 1, -2, 3, 0, -4, 5, 6, 0, 0, 0, -1, 2;
  const Vector single = roi_mean_track(z, {1});
  EXPECT_EQ(single, Vector((Vector(3) << 2, 5, 0).finished()));
  const Vector pair = roi_mean_track(z, {0, 2});
  EXPECT_EQ(pair, Vector((Vector(3) << 2, 5, 0.5).finished()));
  EXPECT_EQ(roi_mean_track(Matrix::Zero(5, 3), {0, 1, 2}), Vector::Zero(5));
  EXPECT_THROW(roi_mean_track(z, {}), PreconditionError);
  EXPECT_THROW(roi_mean_track(z, {4}), PreconditionError);
}

TEST(QuantileBand, IdenticalRunsGiveZeroWidth) {
  TrackEnsemble e;
  const Vector track = (Vector(4) << 1, 3, 2, 5).finished();
  for (int i = 0; i < 5; ++i) e.runs.push_back(track);
  const auto b = quantile_band(e, 0.025, 0.975);
  EXPECT_TRUE(b.lower.isApprox(track));
  EXPECT_TRUE(b.upper.isApprox(track));
  EXPECT_TRUE(b.mean.isApprox(track));
}

TEST(QuantileBand, OrderStatisticsOfOneToTwentyFive) {
  TrackEnsemble e;
  for (int v = 25; v >= 1; --v) {
    e.runs.push_back(Vector::Constant(2, v));
    e.labels.push_back("seed" + std::to_string(v));
  }
  const auto b = quantile_band(e, 0.025, 0.975);
  // h = 24 * 0.025 = 0.6 -> 1 + 0.6; h = 24 * 0.975 = 23.4 -> 24 + 0.4
  EXPECT_NEAR(b.lower(0), 1.6, 1e-12);
  EXPECT_NEAR(b.upper(0), 24.4, 1e-12);
  EXPECT_NEAR(b.mean(1), 13.0, 1e-12);
}

TEST(QuantileBand, EnclosesMeanOfSymmetricEnsembles) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  TrackEnsemble e;
  const Vector base = Vector::LinSpaced(30, 0.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    Vector r = base;
    for (Index t = 0; t < r.size(); ++t) r(t) += 0.1 * n(rng);
    e.runs.push_back(r);
    e.runs.push_back(2 * base - r);  // mirrored partner
  }
  const auto b = quantile_band(e, 0.1, 0.9);
  EXPECT_TRUE(((b.upper - b.lower).array() >= 0).all());
  EXPECT_TRUE(((b.mean - b.lower).array() >= 0).all());
  EXPECT_TRUE(((b.upper - b.mean).array() >= 0).all());
}

TEST(QuantileBand, Preconditions) {
  TrackEnsemble e;
  e.runs.push_back(Vector::Zero(3));
  EXPECT_THROW(quantile_band(e), PreconditionError);
  e.runs.push_back(Vector::Zero(4));
  EXPECT_THROW(quantile_band(e), PreconditionError);
  e.runs.back() = Vector::Zero(3);
  EXPECT_THROW(quantile_band(e, 0.6, 0.4), DomainError);
  e.labels = {"only one"};
  EXPECT_THROW(quantile_band(e), PreconditionError);
}
