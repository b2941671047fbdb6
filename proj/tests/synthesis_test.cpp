#include "test_util.hpp"

#include <Eigen/SVD>

using namespace gdc;
using gdc::test::small_synthesis;

TEST(Topics, RowsOnSimplex) {
  Matrix z = sample_topics(3, 2, 0.5, 1);
  ASSERT_EQ(z.rows(), 3);
  for (long i = 0; i < 3; ++i) {
    EXPECT_NEAR(z.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(z.row(i).minCoeff(), 0.0);
  }
}

TEST(Topics, LargeConcentrationNearUniform) {
  Matrix z = sample_topics(50, 4, 100.0, 2);
  EXPECT_LT((z.array() - 0.25).abs().maxCoeff(), 0.15);
}

TEST(Topics, SymmetricMeans) {
  Matrix z = sample_topics(10000, 5, 0.5, 3);
  Eigen::RowVectorXd mean = z.colwise().mean();
  for (long k = 0; k < 5; ++k) EXPECT_NEAR(mean[k], 0.2, 0.01);
}

TEST(HomophilousGraph, ZeroBudgetIsEmpty) {
  Matrix z = sample_topics(20, 3, 0.5, 1);
  EXPECT_EQ(build_homophilous_graph(z, 0, 1).num_edges(), 0u);
}

TEST(HomophilousGraph, ExactBudgetAndDeterminism) {
  Matrix z = sample_topics(200, 4, 0.5, 4);
  Graph a = build_homophilous_graph(z, 600, 9);
  Graph b = build_homophilous_graph(z, 600, 9);
  EXPECT_EQ(a.num_edges(), 600u);
  EXPECT_EQ(a.edges(), b.edges());
}

TEST(HomophilousGraph, InfeasibleBudget) {
  Matrix z = sample_topics(5, 2, 0.5, 1);
  EXPECT_THROW(build_homophilous_graph(z, 11, 1), GenerationError);
}

TEST(HomophilousGraph, SeparatedClustersMostlyIntraCluster) {
  for (std::int64_t seed = 0; seed < 10; ++seed) {
    Matrix z = Matrix::Zero(100, 2);
    for (int i = 0; i < 100; ++i) z(i, i < 50 ? 0 : 1) = 1.0;
    Graph g = build_homophilous_graph(z, 100, seed);
    size_t intra = 0;
    for (auto [a, b] : g.edges()) intra += (a < 50) == (b < 50);
    EXPECT_GE(static_cast<double>(intra), 0.8 * static_cast<double>(g.num_edges())) << "seed " << seed;
  }
}

TEST(Features, IdentityLiftReproducesTopics) {
  Matrix z = sample_topics(30, 3, 0.5, 5);
  Matrix loading = Matrix::Zero(3, 7);
  loading.leftCols(3).setIdentity();
  Matrix x = lift_features(z, loading, 0.0, 5);
  EXPECT_EQ(Matrix(x.leftCols(3)), z);
  EXPECT_EQ(x.rightCols(4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Features, NonNegative) {
  Matrix z = sample_topics(200, 5, 0.5, 6);
  Matrix x = generate_features(z, 20, 6, 0.5);
  EXPECT_GE(x.minCoeff(), 0.0);
}

TEST(Features, NoiselessRankEqualsTopicCount) {
  Matrix z = sample_topics(100, 6, 0.5, 7);
  Matrix x = generate_features(z, 30, 7, 0.0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (long i = 0; i < s.size(); ++i) rank += s[i] > 1e-9 * s[0];
  EXPECT_EQ(rank, 6);
}

TEST(Treatments, KappaZeroIgnoresNeighbors) {
  Matrix z = sample_topics(80, 4, 0.5, 8);
  Graph g1 = build_homophilous_graph(z, 200, 8);
  Graph g2 = build_homophilous_graph(z, 200, 99);
  auto a = assign_treatments(z, g1, 0.0, 5.0, 8);
  auto b = assign_treatments(z, g2, 0.0, 5.0, 8);
  EXPECT_EQ(a.propensities, b.propensities);
}

TEST(Treatments, ZeroScaleGivesHalf) {
  Matrix z = sample_topics(50, 4, 0.5, 9);
  Graph g = build_homophilous_graph(z, 100, 9);
  auto a = assign_treatments(z, g, 2.0, 0.0, 9);
  for (long i = 0; i < a.propensities.size(); ++i) EXPECT_EQ(a.propensities[i], 0.5);
}

TEST(Treatments, KappaShiftsPropensities) {
  Matrix z = sample_topics(300, 5, 0.5, 10);
  Graph g = build_homophilous_graph(z, 900, 10);
  auto a = assign_treatments(z, g, 2.0, 5.0, 10);
  auto b = assign_treatments(z, g, 0.0, 5.0, 10);
  EXPECT_GT((a.propensities - b.propensities).cwiseAbs().mean(), 0.0);
}

TEST(Treatments, ImbalanceGrowsWithScale) {
  double prev = -1.0;
  for (double s : {0.0, 2.0, 5.0}) {
    double dev = 0.0;
    for (std::int64_t seed = 0; seed < 10; ++seed) {
      auto cfg = small_synthesis(300, seed);
      Matrix z = sample_topics(cfg.n_units, cfg.n_topics, cfg.dirichlet_alpha, seed);
      Graph g = build_homophilous_graph(z, cfg.edge_budget, seed);
      auto a = assign_treatments(z, g, 1.0, s, seed);
      // expected treated fraction; realized Bernoulli draws add noise larger than the effect
      dev += std::abs(a.propensities.mean() - 0.5);
    }
    EXPECT_GT(dev, prev) << "scale " << s;
    prev = dev;
  }
}

TEST(Outcomes, NullEffect) {
  auto cfg = small_synthesis();
  cfg.outcome_noise_std = 0.0;
  cfg.treatment_effect_base = 0.0;
  Matrix z = sample_topics(cfg.n_units, cfg.n_topics, cfg.dirichlet_alpha, cfg.seed);
  Graph g = build_homophilous_graph(z, cfg.edge_budget, cfg.seed);
  auto t = assign_treatments(z, g, cfg.kappa, cfg.treatment_scale, cfg.seed).treatments;
  auto draw = generate_outcomes(z, g, t, cfg);
  EXPECT_EQ(draw.truth.y0, draw.truth.y1);
  EXPECT_EQ(draw.truth.tau.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Outcomes, TauInvariantToNoiseAndKappa) {
  auto base = synthesize(small_synthesis(150, 4, 1.0));
  auto cfg = small_synthesis(150, 4, 2.0);
  cfg.outcome_noise_std = 3.0;
  auto other = synthesize(cfg);
  EXPECT_LT((base.truth.tau - other.truth.tau).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Outcomes, FactualMatchesPotentials) {
  auto b = synthesize(small_synthesis());
  for (int i = 0; i < b.dataset.num_units(); ++i) {
    const double expect = b.dataset.treatments[static_cast<size_t>(i)] ? b.truth.y1[i] : b.truth.y0[i];
    EXPECT_EQ(b.dataset.outcomes[i], expect);
  }
  double ate = 0.0;
  for (int i = 0; i < b.dataset.num_units(); ++i) ate += b.truth.y1[i] - b.truth.y0[i];
  EXPECT_NEAR(ate / b.dataset.num_units(), b.truth.tau.mean(), 1e-12);
}

TEST(Synthesize, BitIdenticalForSameSeed) {
  SynthesisConfig cfg;
  cfg.kappa = 2.0;
  cfg.seed = 7;
  auto a = synthesize(cfg);
  auto b = synthesize(cfg);
  EXPECT_EQ(a.dataset.graph.edges(), b.dataset.graph.edges());
  EXPECT_EQ(a.dataset.features, b.dataset.features);
  EXPECT_EQ(a.dataset.treatments, b.dataset.treatments);
  EXPECT_EQ(a.dataset.outcomes, b.dataset.outcomes);
  EXPECT_EQ(a.truth.tau, b.truth.tau);
  EXPECT_EQ(a.dataset.num_units(), 1000);
  EXPECT_EQ(a.dataset.num_features(), 50);
}

TEST(Synthesize, BothGroupsAcrossSeedsAndKappas) {
  for (double kappa : {0.5, 1.0, 2.0})
    for (std::int64_t seed = 0; seed < 10; ++seed) {
      SynthesisConfig cfg;
      cfg.kappa = kappa;
      cfg.seed = seed;
      auto b = synthesize(cfg);
      int treated = 0;
      for (int t : b.dataset.treatments) treated += t;
      EXPECT_GT(treated, 0);
      EXPECT_LT(treated, cfg.n_units);
    }
}

TEST(Synthesize, NeighborTreatmentsCorrelated) {
  double same = 0.0, baseline = 0.0;
  for (std::int64_t seed = 0; seed < 10; ++seed) {
    SynthesisConfig cfg;
    cfg.kappa = 2.0;
    cfg.seed = seed;
    cfg.n_units = 400;
    cfg.edge_budget = 2000;
    auto b = synthesize(cfg);
    const auto& t = b.dataset.treatments;
    auto frac_same = [&](const std::vector<int>& labels) {
      double s = 0.0;
      for (auto [i, j] : b.dataset.graph.edges()) s += labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)];
      return s / static_cast<double>(b.dataset.graph.num_edges());
    };
    same += frac_same(t);
    auto shuffled = t;
    Rng rng = make_rng(seed, 77);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    baseline += frac_same(shuffled);
  }
  EXPECT_GT(same, baseline);
}

TEST(Synthesize, RejectsBadConfig) {
  SynthesisConfig cfg;
  cfg.n_topics = 60;
  EXPECT_THROW(synthesize(cfg), ArgumentError);
  cfg = SynthesisConfig{};
  cfg.kappa = -1;
  EXPECT_THROW(synthesize(cfg), ArgumentError);
}
