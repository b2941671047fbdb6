#pragma once

// Semi-synthetic networked benchmark generator.
//
// Units carry Dirichlet topic mixtures. Edges are drawn with a topic-similarity
// bias, features are a noisy linear lift of topics, and both the treatment
// propensity and the outcomes depend on a unit's own topics plus the mean
// topics of its neighbors scaled by kappa.

#include "gdc/graph.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_set>

namespace gdc {

struct SynthesisConfig {
  int n_units = 1000;
  int n_features = 50;
  int n_topics = 10;
  double dirichlet_alpha = 0.5;
  long edge_budget = 5000;
  double kappa = 1.0;
  double treatment_scale = 5.0;
  double outcome_noise_std = 1.0;
  double treatment_effect_base = 4.0;
  double feature_noise_std = 0.1;
  std::int64_t seed = 0;

  void validate() const {
    if (n_units <= 0 || n_features <= 0 || n_topics <= 0) throw ArgumentError("synthesis sizes must be positive");
    if (n_topics > n_features) throw ArgumentError("n_topics must not exceed n_features");
    if (!(dirichlet_alpha > 0.0)) throw ArgumentError("dirichlet_alpha must be positive");
    if (edge_budget < 0) throw ArgumentError("edge_budget must be non-negative");
    const long max_edges = static_cast<long>(n_units) * (n_units - 1) / 2;
    if (edge_budget > max_edges) {
      throw ArgumentError("edge_budget " + std::to_string(edge_budget) + " exceeds " + std::to_string(max_edges) +
                          " possible edges");
    }
    if (kappa < 0.0) throw ArgumentError("kappa must be non-negative");
    if (outcome_noise_std < 0.0 || feature_noise_std < 0.0) throw ArgumentError("noise std must be non-negative");
  }
};

struct SynthesizedBundle {
  ObservationalDataset dataset;
  GroundTruth truth;
  Vector propensities;
  Matrix topics;
};

namespace synth_detail {

enum Stream : std::uint64_t {
  kTopics = 11,
  kGraph = 12,
  kLoading = 13,
  kFeatureNoise = 14,
  kTreatmentWeights = 15,
  kTreatmentDraw = 16,
  kOutcomeWeights = 17,
  kOutcomeNoise = 18,
};

inline Vector unit_vector(int dim, Rng& rng) {
  Vector w(dim);
  for (int k = 0; k < dim; ++k) w[k] = standard_normal(rng);
  const double norm = w.norm();
  return norm > 0.0 ? Vector(w / norm) : Vector(Vector::Unit(dim, 0));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace synth_detail

inline Matrix sample_topics(int n, int n_topics, double alpha, std::int64_t seed) {
  if (n <= 0 || n_topics <= 0) throw ArgumentError("sample_topics needs positive sizes");
  if (!(alpha > 0.0)) throw ArgumentError("dirichlet alpha must be positive");
  Rng rng = make_rng(seed, synth_detail::kTopics);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Matrix topics(n, n_topics);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    do {
      for (int k = 0; k < n_topics; ++k) topics(i, k) = gamma(rng);
      total = topics.row(i).sum();
    } while (!(total > 0.0));
    topics.row(i) /= total;
  }
  return topics;
}

// Mean topic vector of each unit's neighbors; isolated units use their own.
inline Matrix neighbor_mean_topics(const Matrix& topics, const Graph& graph) {
  Matrix nu(topics.rows(), topics.cols());
  for (int i = 0; i < graph.num_nodes(); ++i) {
    const auto& nbrs = graph.neighbors(i);
    if (nbrs.empty()) {
      nu.row(i) = topics.row(i);
      continue;
    }
    nu.row(i).setZero();
    for (int j : nbrs) nu.row(i) += topics.row(j);
    nu.row(i) /= static_cast<double>(nbrs.size());
  }
  return nu;
}

struct HomophilyOptions {
  double target_acceptance = 0.05;  // mean acceptance probability over random pairs
  double beta_max = 20.0;
  int pilot_pairs = 4000;
  long proposals_per_edge = 1000;
};

// Rejection sampler: a uniformly proposed pair (i, j) is accepted with
// probability exp(-beta * |theta_i - theta_j|_1). beta is calibrated on a pilot
// sample so that the mean acceptance over random pairs equals the target.
inline Graph build_homophilous_graph(const Matrix& topics, long edge_budget, std::int64_t seed,
                                     const HomophilyOptions& opt = {}) {
  const auto n = static_cast<int>(topics.rows());
  if (n <= 0) throw ArgumentError("no units to connect");
  const long max_edges = static_cast<long>(n) * (n - 1) / 2;
  if (edge_budget < 0 || edge_budget > max_edges) {
    throw GenerationError("edge budget " + std::to_string(edge_budget) + " infeasible for " + std::to_string(n) +
                          " units; use a budget of at most " + std::to_string(max_edges));
  }
  if (edge_budget == 0) return Graph(n, {});

  Rng rng = make_rng(seed, synth_detail::kGraph);
  auto draw_pair = [&]() {
    const int i = static_cast<int>(uniform01(rng) * n);
    int j = static_cast<int>(uniform01(rng) * (n - 1));
    if (j >= i) ++j;
    return Edge{i, j};
  };
  auto distance = [&](int i, int j) { return (topics.row(i) - topics.row(j)).cwiseAbs().sum(); };

  std::vector<double> pilot(static_cast<size_t>(opt.pilot_pairs));
  for (auto& d : pilot) {
    auto [i, j] = draw_pair();
    d = distance(i, j);
  }
  auto mean_acceptance = [&](double beta) {
    double s = 0.0;
    for (double d : pilot) s += std::exp(-beta * d);
    return s / static_cast<double>(pilot.size());
  };
  double beta = opt.beta_max;
  if (mean_acceptance(opt.beta_max) < opt.target_acceptance) {
    double lo = 0.0;
    double hi = opt.beta_max;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_acceptance(mid) > opt.target_acceptance ? lo : hi) = mid;
    }
    beta = 0.5 * (lo + hi);
  }

  std::unordered_set<std::uint64_t> seen;
  std::vector<Edge> edges;
  edges.reserve(static_cast<size_t>(edge_budget));
  const long max_proposals = std::max<long>(100000, opt.proposals_per_edge * edge_budget);
  for (long proposal = 0; static_cast<long>(edges.size()) < edge_budget; ++proposal) {
    if (proposal >= max_proposals) {
      throw GenerationError("accepted only " + std::to_string(edges.size()) + " of " + std::to_string(edge_budget) +
                            " edges after " + std::to_string(max_proposals) +
                            " proposals; try a smaller edge budget");
    }
    auto [i, j] = draw_pair();
    const double u = uniform01(rng);
    if (u >= std::exp(-beta * distance(i, j))) continue;
    const auto lo = static_cast<std::uint64_t>(std::min(i, j));
    const auto hi = static_cast<std::uint64_t>(std::max(i, j));
    if (seen.insert(lo * static_cast<std::uint64_t>(n) + hi).second) edges.emplace_back(i, j);
  }
  return Graph(n, edges);
}

// Non-negative topic-to-word loading matrix drawn from the seed.
inline Matrix draw_feature_loading(int n_topics, int n_features, std::int64_t seed) {
  Rng rng = make_rng(seed, synth_detail::kLoading);
  Matrix m(n_topics, n_features);
  for (int r = 0; r < n_topics; ++r)
    for (int c = 0; c < n_features; ++c) m(r, c) = uniform01(rng);
  return m;
}

inline Matrix lift_features(const Matrix& topics, const Matrix& loading, double noise_std, std::int64_t seed) {
  if (loading.rows() != topics.cols()) throw ArgumentError("loading rows must equal topic count");
  Rng rng = make_rng(seed, synth_detail::kFeatureNoise);
  Matrix x = topics * loading;
  if (noise_std > 0.0) {
    for (long i = 0; i < x.rows(); ++i)
      for (long k = 0; k < x.cols(); ++k) x(i, k) += noise_std * standard_normal(rng);
  }
  return x.cwiseMax(0.0);
}

inline Matrix generate_features(const Matrix& topics, int n_features, std::int64_t seed, double noise_std = 0.1) {
  if (n_features < topics.cols()) throw ArgumentError("feature count must be at least the topic count");
  return lift_features(topics, draw_feature_loading(static_cast<int>(topics.cols()), n_features, seed), noise_std,
                       seed);
}

struct TreatmentAssignment {
  std::vector<int> treatments;
  Vector propensities;
};

inline TreatmentAssignment assign_treatments(const Matrix& topics, const Graph& graph, double kappa, double scale,
                                             std::int64_t seed, std::uint64_t attempt = 0) {
  const auto n = static_cast<int>(topics.rows());
  Rng wrng = make_rng(seed, synth_detail::kTreatmentWeights);
  const Vector w = synth_detail::unit_vector(static_cast<int>(topics.cols()), wrng);
  const Eigen::RowVectorXd mean = topics.colwise().mean();
  const Matrix nu = neighbor_mean_topics(topics, graph);

  Rng rng = make_rng(seed, synth_detail::kTreatmentDraw + 100 * attempt);
  TreatmentAssignment out;
  out.treatments.resize(static_cast<size_t>(n));
  out.propensities.resize(n);
  for (int i = 0; i < n; ++i) {
    const double own = (topics.row(i) - mean).dot(w.transpose());
    const double network = (nu.row(i) - mean).dot(w.transpose());
    const double p = synth_detail::sigmoid(scale * own + kappa * scale * network);
    out.propensities[i] = p;
    out.treatments[static_cast<size_t>(i)] = uniform01(rng) < p ? 1 : 0;
  }
  return out;
}

struct OutcomeDraw {
  GroundTruth truth;
  Vector factual;
};

inline constexpr double kOutcomeTopicScale = 10.0;

inline OutcomeDraw generate_outcomes(const Matrix& topics, const Graph& graph, const std::vector<int>& treatments,
                                     const SynthesisConfig& config) {
  const auto n = static_cast<int>(topics.rows());
  Rng wrng = make_rng(config.seed, synth_detail::kOutcomeWeights);
  const Vector w_y = synth_detail::unit_vector(static_cast<int>(topics.cols()), wrng);
  const Vector w_tau = synth_detail::unit_vector(static_cast<int>(topics.cols()), wrng);
  const Matrix nu = neighbor_mean_topics(topics, graph);

  Rng rng = make_rng(config.seed, synth_detail::kOutcomeNoise);
  Vector y0(n), y1(n), factual(n);
  const double c0 = kOutcomeTopicScale;
  for (int i = 0; i < n; ++i) {
    const double base = c0 * topics.row(i).dot(w_y.transpose()) + config.kappa * c0 * nu.row(i).dot(w_y.transpose());
    const double effect = config.treatment_effect_base * (1.0 + topics.row(i).dot(w_tau.transpose()));
    const double noise = config.outcome_noise_std * standard_normal(rng);
    y0[i] = base + noise;
    y1[i] = base + effect + noise;
  }
  for (int i = 0; i < n; ++i) factual[i] = treatments[static_cast<size_t>(i)] == 1 ? y1[i] : y0[i];
  OutcomeDraw out;
  out.truth = GroundTruth::from_potentials(std::move(y0), std::move(y1));
  out.factual = std::move(factual);
  return out;
}

inline SynthesizedBundle synthesize(const SynthesisConfig& config) {
  config.validate();
  SynthesizedBundle b;
  b.topics = sample_topics(config.n_units, config.n_topics, config.dirichlet_alpha, config.seed);
  Graph graph = build_homophilous_graph(b.topics, config.edge_budget, config.seed);
  Matrix features = generate_features(b.topics, config.n_features, config.seed, config.feature_noise_std);

  TreatmentAssignment assignment;
  constexpr int kMaxAttempts = 32;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxAttempts) throw GenerationError("could not draw both treatment groups; check treatment_scale");
    assignment = assign_treatments(b.topics, graph, config.kappa, config.treatment_scale, config.seed,
                                   static_cast<std::uint64_t>(attempt));
    int treated = 0;
    for (int t : assignment.treatments) treated += t;
    if (treated > 0 && treated < config.n_units) break;
  }
  OutcomeDraw outcomes = generate_outcomes(b.topics, graph, assignment.treatments, config);

  b.dataset.graph = std::move(graph);
  b.dataset.features = std::move(features);
  b.dataset.treatments = std::move(assignment.treatments);
  b.dataset.outcomes = std::move(outcomes.factual);
  b.truth = std::move(outcomes.truth);
  b.propensities = std::move(assignment.propensities);
  b.dataset.validate();
  return b;
}

}  // namespace gdc
