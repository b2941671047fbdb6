#pragma once

// Full-batch training, causal metrics, ablation variants, loss-weight sweeps
// and replication summaries.

#include "gdc/model.hpp"
#include "gdc/objectives.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <tuple>

namespace gdc {

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.01;
  double weight_decay = 1e-4;
  LossWeights weights;
  std::int64_t seed = 0;
  Variant variant = Variant::full;
  SinkhornConfig sinkhorn;
  // When false, the mapping loss also pulls the aggregated target toward g.
  bool cf_target_stop_gradient = true;

  void validate() const {
    if (epochs < 1) throw ArgumentError("epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
    if (weight_decay < 0.0) throw ArgumentError("weight_decay must be non-negative");
    weights.validate();
    sinkhorn.validate();
  }

  LossWeights effective_weights() const {
    LossWeights w = weights;
    if (variant == Variant::adjustment_only) w.confounder = w.cf_confounder = 0.0;
    return w;
  }
};

// ---- objective ------------------------------------------------------------------

// Values that are held constant while differentiating: the transport plan and,
// under stop-gradient, the counterfactual-confounder target. Recording them at
// one point and replaying them elsewhere yields the surrogate objective whose
// exact gradient the tape computes.
struct FrozenTerms {
  Matrix plan;
  Matrix cf_target;
};

struct Objective {
  ad::Forward forward;
  ad::Var prediction, adjustment, confounder, cf_confounder, total;
};

inline Objective build_objective(ad::Var x, const ModelParamsT<ad::Var>& p, const GraphContext& ctx, ad::Var y,
                                 const Index& rows, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                 std::int64_t sinkhorn_seed, FrozenTerms* record = nullptr,
                                 const FrozenTerms* replay = nullptr) {
  ad::Tape& tape = *x.tape;
  Objective o;
  o.forward = ad::forward(x, p, ctx, mcfg, tcfg.variant);
  const LossWeights w = tcfg.effective_weights();

  o.prediction = ad::prediction_loss(o.forward.y_f, y, rows);
  o.adjustment = ad::adjustment_loss(o.forward.E_a, ctx.treatments, rows, tcfg.sinkhorn, sinkhorn_seed,
                                     replay ? &replay->plan : nullptr, record ? &record->plan : nullptr);
  if (o.forward.confounder_channel) {
    o.confounder = ad::confounder_loss(o.forward.t_prob, ctx.treatments, rows);
    ad::Var target = o.forward.E_cf;
    if (tcfg.cf_target_stop_gradient) {
      if (record) record->cf_target = target.value();
      target = replay ? tape.constant(replay->cf_target) : ad::detach(target);
    }
    o.cf_confounder = ad::cf_confounder_loss(o.forward.E_cf_hat, target, ctx.has_opp, rows);
  } else {
    o.confounder = tape.constant(Matrix::Zero(1, 1));
    o.cf_confounder = tape.constant(Matrix::Zero(1, 1));
  }
  o.total = ad::add(ad::add(o.prediction, ad::scale(o.adjustment, w.adjustment)),
                    ad::add(ad::scale(o.confounder, w.confounder), ad::scale(o.cf_confounder, w.cf_confounder)));
  return o;
}

inline LossBreakdown breakdown(const Objective& o, const LossWeights& w) {
  return total_loss(o.prediction.scalar(), o.adjustment.scalar(), o.confounder.scalar(), o.cf_confounder.scalar(),
                    w);
}

// Loss value and gradients of every trainable parameter at `params`.
struct ObjectiveEvaluation {
  LossBreakdown loss;
  std::map<std::string, Matrix> gradients;
};

inline ObjectiveEvaluation evaluate_objective(const ObservationalDataset& ds, const GraphContext& ctx,
                                              const ModelParams& params, const Vector& y, const Index& rows,
                                              const ModelConfig& mcfg, const TrainConfig& tcfg,
                                              std::int64_t sinkhorn_seed, bool with_gradients,
                                              FrozenTerms* record = nullptr, const FrozenTerms* replay = nullptr) {
  ad::Tape tape;
  std::map<std::string, ad::Var> handles;
  auto vars = map_params<ad::Var>(params, [&](const std::string& name, const Matrix& m, ParamKind) {
    const bool trainable = with_gradients && param_active(name, tcfg.variant);
    ad::Var v = trainable ? tape.parameter(m) : tape.constant(m);
    if (trainable) handles.emplace(name, v);
    return v;
  });
  Objective o = build_objective(tape.constant(ds.features), vars, ctx, tape.constant(Matrix(y)), rows, mcfg, tcfg,
                                sinkhorn_seed, record, replay);
  ObjectiveEvaluation ev;
  ev.loss = breakdown(o, tcfg.effective_weights());
  if (with_gradients) {
    tape.backward(o.total);
    for (auto& [name, v] : handles) ev.gradients.emplace(name, v.grad());
  }
  return ev;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst_entry;
  long entries = 0;
};

// Central differences of the total loss against the tape gradient for every
// trainable entry. The transport plan and stop-gradient target are recorded
// once at `params` and replayed at every perturbed point. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradientCheck finite_difference_check(const ObservationalDataset& ds, const ModelParams& params,
                                             const Vector& y, const Index& rows, const ModelConfig& mcfg,
                                             const TrainConfig& tcfg, double step = 1e-5, double floor = 1e-8,
                                             std::int64_t sinkhorn_seed = 0) {
  GraphContext ctx(ds.graph, ds.treatments);
  FrozenTerms frozen;
  evaluate_objective(ds, ctx, params, y, rows, mcfg, tcfg, sinkhorn_seed, false, &frozen);
  const auto analytic = evaluate_objective(ds, ctx, params, y, rows, mcfg, tcfg, sinkhorn_seed, true, nullptr, &frozen);

  GradientCheck out;
  ModelParams probe = params;
  for_each_param(probe, [&](const std::string& name, Matrix& m, ParamKind) {
    auto it = analytic.gradients.find(name);
    if (it == analytic.gradients.end()) return;
    for (long r = 0; r < m.rows(); ++r)
      for (long c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + step;
        const double up =
            evaluate_objective(ds, ctx, probe, y, rows, mcfg, tcfg, sinkhorn_seed, false, nullptr, &frozen).loss.total;
        m(r, c) = saved - step;
        const double down =
            evaluate_objective(ds, ctx, probe, y, rows, mcfg, tcfg, sinkhorn_seed, false, nullptr, &frozen).loss.total;
        m(r, c) = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = it->second(r, c);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        ++out.entries;
        if (rel > out.max_relative_error) {
          out.max_relative_error = rel;
          out.worst_entry = name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
        }
      }
  });
  return out;
}

// ---- optimizer -------------------------------------------------------------------

// Adam with decoupled weight decay on weight matrices (bias vectors are not decayed).
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void begin_step() { ++step_; }

  void update(const std::string& name, Matrix& param, const Matrix& grad, ParamKind kind) {
    auto [it, inserted] = state_.try_emplace(name);
    State& s = it->second;
    if (inserted) {
      s.m = Matrix::Zero(param.rows(), param.cols());
      s.v = Matrix::Zero(param.rows(), param.cols());
    }
    s.m = beta1_ * s.m + (1.0 - beta1_) * grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, step_);
    const double c2 = 1.0 - std::pow(beta2_, step_);
    const Matrix m_hat = s.m / c1;
    const Matrix v_hat = s.v / c2;
    if (kind == ParamKind::weight && decay_ > 0.0) param -= lr_ * decay_ * param;
    param.array() -= lr_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }

 private:
  struct State {
    Matrix m, v;
  };
  double lr_, decay_, beta1_, beta2_, eps_;
  int step_ = 0;
  std::map<std::string, State> state_;
};

// ---- training ------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double val_prediction = 0.0;
  double seconds = 0.0;
};

struct TrainedModel {
  ModelParams params;
  ModelConfig model;
  TrainConfig train;
  double y_mean = 0.0;
  double y_scale = 1.0;
  std::vector<LossBreakdown> history;
};

struct OutcomeScaling {
  double mean = 0.0;
  double scale = 1.0;
};

inline OutcomeScaling fit_scaling(const Vector& y, const Index& rows) {
  if (rows.empty()) throw ArgumentError("cannot standardize outcomes over an empty split");
  OutcomeScaling s;
  for (int r : rows) s.mean += y[r];
  s.mean /= static_cast<double>(rows.size());
  double var = 0.0;
  for (int r : rows) var += (y[r] - s.mean) * (y[r] - s.mean);
  var /= static_cast<double>(rows.size());
  s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainedModel train(const ObservationalDataset& ds, const SplitIndex& split, const ModelConfig& mcfg,
                          const TrainConfig& tcfg, const EpochCallback& on_epoch = {}) {
  ds.validate();
  mcfg.validate();
  tcfg.validate();
  split_by_treatment(ds.treatments, split.train);

  TrainedModel model;
  model.model = mcfg;
  model.train = tcfg;
  model.params = init_params(mcfg, ds.num_features(), tcfg.seed);
  const OutcomeScaling scaling = fit_scaling(ds.outcomes, split.train);
  model.y_mean = scaling.mean;
  model.y_scale = scaling.scale;
  const Matrix y = ((ds.outcomes.array() - scaling.mean) / scaling.scale).matrix();

  GraphContext ctx(ds.graph, ds.treatments);
  const LossWeights weights = tcfg.effective_weights();
  AdamW opt(tcfg.learning_rate, tcfg.weight_decay);
  model.history.reserve(static_cast<size_t>(tcfg.epochs));

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    ad::Tape tape;
    std::vector<std::tuple<Matrix*, ad::Var, ParamKind, std::string>> trainable;
    auto vars = map_params<ad::Var>(model.params, [&](const std::string& name, const Matrix& m, ParamKind kind) {
      if (!param_active(name, tcfg.variant)) return tape.constant(m);
      ad::Var v = tape.parameter(m);
      trainable.emplace_back(nullptr, v, kind, name);
      return v;
    });
    for_each_param(model.params, [&](const std::string& name, Matrix& m, ParamKind) {
      for (auto& entry : trainable)
        if (std::get<3>(entry) == name) std::get<0>(entry) = &m;
    });

    const std::int64_t sinkhorn_seed = static_cast<std::int64_t>(derive_seed(static_cast<std::uint64_t>(tcfg.seed),
                                                                              static_cast<std::uint64_t>(epoch)));
    Objective o = build_objective(tape.constant(ds.features), vars, ctx, tape.constant(y), split.train, mcfg, tcfg,
                                  sinkhorn_seed);
    LossBreakdown loss;
    try {
      loss = breakdown(o, weights);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(loss.total)) {
      throw NumericError("epoch " + std::to_string(epoch) + ": non-finite loss (prediction " +
                         std::to_string(loss.prediction) + ", adjustment " + std::to_string(loss.adjustment) +
                         ", confounder " + std::to_string(loss.confounder) + ", cf_confounder " +
                         std::to_string(loss.cf_confounder) + ")");
    }
    tape.backward(o.total);
    opt.begin_step();
    for (auto& [param, var, kind, name] : trainable) opt.update(name, *param, var.grad(), kind);

    model.history.push_back(loss);
    if (on_epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.loss = loss;
      if (!split.val.empty()) rec.val_prediction = ad::prediction_loss(o.forward.y_f, tape.constant(y), split.val).scalar();
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      on_epoch(rec);
    }
  }
  return model;
}

// Forward pass in original outcome units.
inline ForwardOutputs predict(const TrainedModel& model, const ObservationalDataset& ds) {
  ForwardOutputs out = forward(ds, model.params, model.model, model.train.variant);
  out.y_f_hat = (out.y_f_hat.array() * model.y_scale + model.y_mean).matrix();
  out.y_cf_hat = (out.y_cf_hat.array() * model.y_scale + model.y_mean).matrix();
  return out;
}

inline Vector estimate_ite(const TrainedModel& model, const ObservationalDataset& ds) {
  return predict_ite(predict(model, ds), ds.treatments);
}

// ---- metrics --------------------------------------------------------------------------

inline double pehe_sqrt(const Vector& tau_hat, const Vector& tau, const Index& rows) {
  if (rows.empty()) throw ArgumentError("pehe_sqrt over an empty index set");
  double s = 0.0;
  for (int r : rows) s += (tau_hat[r] - tau[r]) * (tau_hat[r] - tau[r]);
  return std::sqrt(s / static_cast<double>(rows.size()));
}

inline double ate_error(const Vector& tau_hat, const Vector& tau, const Index& rows) {
  if (rows.empty()) throw ArgumentError("ate_error over an empty index set");
  double a = 0.0, b = 0.0;
  for (int r : rows) {
    a += tau_hat[r];
    b += tau[r];
  }
  return std::abs(a - b) / static_cast<double>(rows.size());
}

struct MetricsReport {
  double pehe_sqrt = 0.0;
  double ate_error = 0.0;
  std::string split;
  std::int64_t seed = 0;
  std::string variant;
  std::optional<double> kappa;
};

inline std::vector<MetricsReport> evaluate_estimate(const Vector& tau_hat, const GroundTruth& truth,
                                                    const SplitIndex& split, std::int64_t seed,
                                                    const std::string& variant, std::optional<double> kappa) {
  std::vector<MetricsReport> out;
  for (auto [name, rows] : {std::pair<const char*, const Index*>{"train", &split.train}, {"test", &split.test}}) {
    MetricsReport r;
    r.pehe_sqrt = pehe_sqrt(tau_hat, truth.tau, *rows);
    r.ate_error = ate_error(tau_hat, truth.tau, *rows);
    r.split = name;
    r.seed = seed;
    r.variant = variant;
    r.kappa = kappa;
    out.push_back(r);
  }
  return out;
}

inline std::vector<MetricsReport> evaluate(const TrainedModel& model, const ObservationalDataset& ds,
                                           const std::optional<GroundTruth>& truth, const SplitIndex& split,
                                           std::optional<double> kappa = std::nullopt) {
  if (!truth) throw ValidationError("evaluation requires ground-truth potential outcomes");
  return evaluate_estimate(estimate_ite(model, ds), *truth, split, model.train.seed, to_string(model.train.variant),
                           kappa);
}

inline std::vector<MetricsReport> run_variant(const ObservationalDataset& ds, const GroundTruth& truth,
                                              const SplitIndex& split, const ModelConfig& mcfg,
                                              const TrainConfig& tcfg, std::optional<double> kappa = std::nullopt) {
  TrainedModel model = train(ds, split, mcfg, tcfg);
  return evaluate(model, ds, truth, split, kappa);
}

// ---- sweep ------------------------------------------------------------------------------

struct SweepGrid {
  std::vector<double> adjustment{1e-5, 1e-4, 1e-3, 1e-2};
  std::vector<double> confounder{1e-3, 1e-2, 1e-1};
  std::vector<double> cf_confounder{0.1, 1.0, 10.0};

  size_t size() const { return adjustment.size() * confounder.size() * cf_confounder.size(); }
};

struct SweepRow {
  LossWeights weights;
  MetricsReport train;
  MetricsReport test;
};

inline std::vector<SweepRow> sweep(const ObservationalDataset& ds, const GroundTruth& truth, const SplitIndex& split,
                                   const ModelConfig& mcfg, const TrainConfig& base, const SweepGrid& grid,
                                   std::optional<double> kappa = std::nullopt,
                                   const std::function<void(const SweepRow&)>& on_row = {}) {
  if (grid.size() == 0) throw ArgumentError("sweep grid is empty");
  std::vector<SweepRow> rows;
  for (double w1 : grid.adjustment)
    for (double w2 : grid.confounder)
      for (double w3 : grid.cf_confounder) {
        TrainConfig cfg = base;
        cfg.weights = {w1, w2, w3};
        auto reports = run_variant(ds, truth, split, mcfg, cfg, kappa);
        rows.push_back({cfg.weights, reports[0], reports[1]});
        if (on_row) on_row(rows.back());
      }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.test.pehe_sqrt < b.test.pehe_sqrt; });
  return rows;
}

// ---- replication summaries ---------------------------------------------------------------

struct SummaryRow {
  std::string variant;
  std::optional<double> kappa;
  std::string split;
  int count = 0;
  double pehe_mean = 0.0, pehe_std = 0.0;
  double ate_mean = 0.0, ate_std = 0.0;
};

inline std::pair<double, double> mean_and_sample_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

inline std::vector<SummaryRow> aggregate_replications(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ArgumentError("no reports to aggregate");
  using Key = std::tuple<std::string, bool, double, std::string>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : reports) {
    auto& g = groups[Key{r.variant, r.kappa.has_value(), r.kappa.value_or(0.0), r.split}];
    g.first.push_back(r.pehe_sqrt);
    g.second.push_back(r.ate_error);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    SummaryRow row;
    row.variant = std::get<0>(key);
    if (std::get<1>(key)) row.kappa = std::get<2>(key);
    row.split = std::get<3>(key);
    row.count = static_cast<int>(values.first.size());
    std::tie(row.pehe_mean, row.pehe_std) = mean_and_sample_std(values.first);
    std::tie(row.ate_mean, row.ate_std) = mean_and_sample_std(values.second);
    out.push_back(row);
  }
  return out;
}

}  // namespace gdc
