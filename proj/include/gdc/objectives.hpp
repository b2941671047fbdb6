#pragma once

// Training objective: factual prediction error plus weighted adjustment
// balancing, confounder-to-treatment classification and counterfactual
// confounder mapping terms.

#include "gdc/autodiff.hpp"
#include "gdc/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

namespace gdc {

struct LossWeights {
  double adjustment = 1e-4;
  double confounder = 0.01;
  double cf_confounder = 1.0;

  void validate() const {
    for (double w : {adjustment, confounder, cf_confounder})
      if (!std::isfinite(w) || w < 0.0) throw ArgumentError("loss weights must be finite and non-negative");
  }
};

struct LossBreakdown {
  double prediction = 0.0;
  double adjustment = 0.0;
  double confounder = 0.0;
  double cf_confounder = 0.0;
  double total = 0.0;
};

inline LossBreakdown total_loss(double prediction, double adjustment, double confounder, double cf_confounder,
                                const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {
      {"prediction", prediction}, {"adjustment", adjustment}, {"confounder", confounder}, {"cf_confounder", cf_confounder}};
  for (auto [name, v] : parts)
    if (std::isnan(v)) throw NumericError(std::string("loss component ") + name + " is NaN");
  LossBreakdown b{prediction, adjustment, confounder, cf_confounder, 0.0};
  b.total = prediction + w.adjustment * adjustment + w.confounder * confounder + w.cf_confounder * cf_confounder;
  return b;
}

// Seeded uniform subsample (sorted) when `rows` exceeds `limit`.
inline Index subsample(const Index& rows, int limit, std::int64_t seed) {
  if (static_cast<int>(rows.size()) <= limit) return rows;
  Index pool = rows;
  Rng rng = make_rng(seed, 0x5a3bu);
  for (int i = 0; i < limit; ++i) {
    const int j = i + static_cast<int>(uniform01(rng) * static_cast<double>(pool.size() - static_cast<size_t>(i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(limit));
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct TreatmentGroups {
  Index control;
  Index treated;
};

inline TreatmentGroups split_by_treatment(const std::vector<int>& t, const Index& rows) {
  TreatmentGroups g;
  for (int r : rows) (t[static_cast<size_t>(r)] ? g.treated : g.control).push_back(r);
  if (g.control.empty() || g.treated.empty()) {
    throw ArgumentError("training split contains a single treatment group; resplit with another seed");
  }
  return g;
}

namespace ad {

inline Var adjustment_loss(Var e_a, const std::vector<int>& t, const Index& rows, const SinkhornConfig& cfg,
                           std::int64_t seed = 0, const Matrix* frozen_plan = nullptr, Matrix* plan_out = nullptr) {
  TreatmentGroups g = split_by_treatment(t, rows);
  Var control = gather_rows(e_a, subsample(g.control, cfg.max_points_per_group, seed));
  Var treated = gather_rows(e_a, subsample(g.treated, cfg.max_points_per_group, seed + 1));
  return sinkhorn_distance(control, treated, cfg, frozen_plan, plan_out);
}

inline Var prediction_loss(Var y_hat, Var y, const Index& rows) { return mse_rows(y_hat, y, rows); }

inline Var confounder_loss(Var t_prob, const std::vector<int>& t, const Index& rows) {
  return binary_cross_entropy(t_prob, t, rows);
}

inline Index rows_with_opposite(const std::vector<bool>& has_opp, const Index& rows) {
  Index valid;
  for (int r : rows)
    if (has_opp[static_cast<size_t>(r)]) valid.push_back(r);
  return valid;
}

// MSE between the mapped and aggregated counterfactual confounders over rows
// that have at least one opposite-treatment neighbor. `target` is used as
// given; detach it beforehand to stop gradients into the aggregation path.
inline Var cf_confounder_loss(Var mapped, Var target, const std::vector<bool>& has_opp, const Index& rows) {
  const Index valid = rows_with_opposite(has_opp, rows);
  if (valid.empty()) std::cerr << "warning: no training unit has an opposite-treatment neighbor\n";
  return mse_rows(mapped, target, valid);
}

}  // namespace ad

// ---- value-level API -----------------------------------------------------------

inline double prediction_loss(const Vector& y_hat, const Vector& y, const Index& rows) {
  ad::Tape tape;
  return ad::prediction_loss(tape.constant(Matrix(y_hat)), tape.constant(Matrix(y)), rows).scalar();
}

inline double confounder_loss(const Vector& t_prob, const std::vector<int>& t, const Index& rows) {
  ad::Tape tape;
  return ad::confounder_loss(tape.constant(Matrix(t_prob)), t, rows).scalar();
}

inline double cf_confounder_loss(const Matrix& mapped, const Matrix& target, const std::vector<bool>& has_opp,
                                 const Index& rows) {
  ad::Tape tape;
  return ad::cf_confounder_loss(tape.constant(mapped), tape.constant(target), has_opp, rows).scalar();
}

inline double adjustment_loss(const Matrix& e_a, const std::vector<int>& t, const Index& rows,
                              const SinkhornConfig& cfg, std::int64_t seed = 0) {
  ad::Tape tape;
  return ad::adjustment_loss(tape.constant(e_a), t, rows, cfg, seed).scalar();
}

}  // namespace gdc
