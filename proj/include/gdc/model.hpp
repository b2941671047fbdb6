#pragma once

// The graph disentangle network: feature mask, adjustment attention stack,
// treatment-restricted confounder aggregators, counterfactual mapping and
// T-learner outcome heads.

#include "gdc/attention.hpp"
#include "gdc/autodiff.hpp"
#include "gdc/graph.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace gdc {

enum class Nonlinearity { elu, relu, tanh, sigmoid };
enum class Variant { full, no_disentangle, adjustment_only };

inline std::string to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::elu: return "elu";
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::tanh: return "tanh";
    case Nonlinearity::sigmoid: return "sigmoid";
  }
  return "elu";
}

inline Nonlinearity parse_nonlinearity(std::string_view s) {
  if (s == "elu") return Nonlinearity::elu;
  if (s == "relu") return Nonlinearity::relu;
  if (s == "tanh") return Nonlinearity::tanh;
  if (s == "sigmoid") return Nonlinearity::sigmoid;
  throw ArgumentError("unknown nonlinearity '" + std::string(s) + "'");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_disentangle: return "no_disentangle";
    case Variant::adjustment_only: return "adjustment_only";
  }
  return "full";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "full") return Variant::full;
  if (s == "no_disentangle") return Variant::no_disentangle;
  if (s == "adjustment_only") return Variant::adjustment_only;
  throw ArgumentError("unknown variant '" + std::string(s) + "'");
}

struct ModelConfig {
  int hidden_dim = 256;
  int mask_hidden = 64;
  int adjustment_layers = 2;
  Nonlinearity nonlinearity = Nonlinearity::elu;
  int head_hidden = 64;
  double attention_leak = 0.2;
  // When false the opposite-treatment aggregator gets its own weight matrix.
  bool tie_cf_weights = true;

  void validate() const {
    if (hidden_dim <= 0 || mask_hidden <= 0 || adjustment_layers <= 0 || head_hidden <= 0)
      throw ArgumentError("model dimensions must be positive");
    if (!(attention_leak > 0.0 && attention_leak < 1.0)) throw ArgumentError("attention_leak must lie in (0, 1)");
  }
};

// ---- parameter groups --------------------------------------------------------
//
// Each group is templated on its storage so the same layout serves plain
// matrices (checkpoints, optimizer state) and tape variables (training).

enum class ParamKind { weight, bias };

template <class T>
struct MaskParamsT {
  T W1, b1, W2, b2;
};

template <class T>
struct MlpT {
  T W1, b1, W2, b2;
};

template <class T>
struct AggregatorParamsT {
  std::vector<T> W_a;    // layer 0: K x d, then d x d
  std::vector<T> W_att;  // per layer, 2d x 1
  T W_c;                 // K x d
  std::optional<T> W_cf; // present only when weights are untied
  T P;                   // K x d residual projection
};

template <class T>
struct HeadParamsT {
  MlpT<T> f1, f0, clf, g;
};

template <class T>
struct ModelParamsT {
  MaskParamsT<T> mask;
  AggregatorParamsT<T> agg;
  HeadParamsT<T> heads;
};

using MaskParams = MaskParamsT<Matrix>;
using Mlp = MlpT<Matrix>;
using AggregatorParams = AggregatorParamsT<Matrix>;
using HeadParams = HeadParamsT<Matrix>;
using ModelParams = ModelParamsT<Matrix>;

// Maps every parameter through fn(name, value, kind), preserving layout.
template <class U, class T, class Fn>
MlpT<U> map_params(const MlpT<T>& p, const std::string& prefix, Fn&& fn) {
  return {fn(prefix + ".W1", p.W1, ParamKind::weight), fn(prefix + ".b1", p.b1, ParamKind::bias),
          fn(prefix + ".W2", p.W2, ParamKind::weight), fn(prefix + ".b2", p.b2, ParamKind::bias)};
}

template <class U, class T, class Fn>
ModelParamsT<U> map_params(const ModelParamsT<T>& p, Fn&& fn) {
  ModelParamsT<U> out;
  out.mask = {fn("mask.W1", p.mask.W1, ParamKind::weight), fn("mask.b1", p.mask.b1, ParamKind::bias),
              fn("mask.W2", p.mask.W2, ParamKind::weight), fn("mask.b2", p.mask.b2, ParamKind::bias)};
  for (size_t l = 0; l < p.agg.W_a.size(); ++l) {
    out.agg.W_a.push_back(fn("agg.W_a." + std::to_string(l), p.agg.W_a[l], ParamKind::weight));
    out.agg.W_att.push_back(fn("agg.W_att." + std::to_string(l), p.agg.W_att[l], ParamKind::weight));
  }
  out.agg.W_c = fn("agg.W_c", p.agg.W_c, ParamKind::weight);
  if (p.agg.W_cf) out.agg.W_cf = fn("agg.W_cf", *p.agg.W_cf, ParamKind::weight);
  out.agg.P = fn("agg.P", p.agg.P, ParamKind::weight);
  out.heads.f1 = map_params<U>(p.heads.f1, "head.f1", fn);
  out.heads.f0 = map_params<U>(p.heads.f0, "head.f0", fn);
  out.heads.clf = map_params<U>(p.heads.clf, "head.clf", fn);
  out.heads.g = map_params<U>(p.heads.g, "head.g", fn);
  return out;
}

// Calls fn(name, value&, kind) on every parameter in checkpoint order.
template <class T, class Fn>
void for_each_param(ModelParamsT<T>& p, Fn&& fn) {
  auto mlp = [&](MlpT<T>& m, const std::string& prefix) {
    fn(prefix + ".W1", m.W1, ParamKind::weight);
    fn(prefix + ".b1", m.b1, ParamKind::bias);
    fn(prefix + ".W2", m.W2, ParamKind::weight);
    fn(prefix + ".b2", m.b2, ParamKind::bias);
  };
  fn(std::string("mask.W1"), p.mask.W1, ParamKind::weight);
  fn(std::string("mask.b1"), p.mask.b1, ParamKind::bias);
  fn(std::string("mask.W2"), p.mask.W2, ParamKind::weight);
  fn(std::string("mask.b2"), p.mask.b2, ParamKind::bias);
  for (size_t l = 0; l < p.agg.W_a.size(); ++l) {
    fn("agg.W_a." + std::to_string(l), p.agg.W_a[l], ParamKind::weight);
    fn("agg.W_att." + std::to_string(l), p.agg.W_att[l], ParamKind::weight);
  }
  fn(std::string("agg.W_c"), p.agg.W_c, ParamKind::weight);
  if (p.agg.W_cf) fn(std::string("agg.W_cf"), *p.agg.W_cf, ParamKind::weight);
  fn(std::string("agg.P"), p.agg.P, ParamKind::weight);
  mlp(p.heads.f1, "head.f1");
  mlp(p.heads.f0, "head.f0");
  mlp(p.heads.clf, "head.clf");
  mlp(p.heads.g, "head.g");
}

// Whether a parameter takes part in training for the given variant.
inline bool param_active(const std::string& name, Variant variant) {
  auto starts = [&](std::string_view prefix) { return name.rfind(prefix, 0) == 0; };
  switch (variant) {
    case Variant::full: return true;
    case Variant::no_disentangle: return !starts("mask.");
    case Variant::adjustment_only:
      return !(starts("agg.W_c") || starts("agg.P") || starts("head.clf.") || starts("head.g."));
  }
  return true;
}

inline Matrix uniform_fan_in(long rows, long cols, long fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
  return m;
}

inline ModelParams init_params(const ModelConfig& cfg, int num_features, std::int64_t seed) {
  cfg.validate();
  if (num_features < 1) throw ArgumentError("need at least one feature");
  Rng rng = make_rng(seed, 0x1a17u);
  const long K = num_features, D = cfg.mask_hidden, d = cfg.hidden_dim, h = cfg.head_hidden;
  auto mlp = [&](long in, long out) {
    Mlp m;
    m.W1 = uniform_fan_in(in, h, in, rng);
    m.b1 = uniform_fan_in(1, h, in, rng);
    m.W2 = uniform_fan_in(h, out, h, rng);
    m.b2 = uniform_fan_in(1, out, h, rng);
    return m;
  };
  ModelParams p;
  p.mask.W1 = uniform_fan_in(K, D, K, rng);
  p.mask.b1 = uniform_fan_in(1, D, K, rng);
  p.mask.W2 = uniform_fan_in(D, K, D, rng);
  p.mask.b2 = uniform_fan_in(1, K, D, rng);
  for (int l = 0; l < cfg.adjustment_layers; ++l) {
    const long in = l == 0 ? K : d;
    p.agg.W_a.push_back(uniform_fan_in(in, d, in, rng));
    p.agg.W_att.push_back(uniform_fan_in(2 * d, 1, 2 * d, rng));
  }
  p.agg.W_c = uniform_fan_in(K, d, K, rng);
  if (!cfg.tie_cf_weights) p.agg.W_cf = uniform_fan_in(K, d, K, rng);
  p.agg.P = uniform_fan_in(K, d, K, rng);
  p.heads.f1 = mlp(d, 1);
  p.heads.f0 = mlp(d, 1);
  p.heads.clf = mlp(d, 1);
  p.heads.g = mlp(K + d, d);
  return p;
}

// ---- graph context -----------------------------------------------------------

// Precomputed neighborhoods for one dataset. Tape closures hold references
// into this object, so it must outlive every tape built from it.
struct GraphContext {
  PairList pairs;
  PairSubset full;
  PairSubset same;
  PairSubset opposite;
  std::vector<int> treatments;
  std::vector<bool> has_opp;

  GraphContext(const Graph& graph, const std::vector<int>& t)
      : pairs(neighborhood_pairs(graph)),
        full(all_pairs(pairs)),
        same(same_treatment_pairs(pairs, t)),
        opposite(opposite_treatment_pairs(pairs, t)),
        treatments(t) {
    if (static_cast<int>(t.size()) != graph.num_nodes()) throw ValidationError("treatments length mismatch");
    has_opp.resize(t.size());
    for (size_t i = 0; i < t.size(); ++i) has_opp[i] = opposite.offsets[i + 1] > opposite.offsets[i];
  }
  GraphContext(const GraphContext&) = delete;
  GraphContext& operator=(const GraphContext&) = delete;
};

// ---- tape-level building blocks ---------------------------------------------

namespace ad {

inline Var activate(Var x, Nonlinearity n) {
  switch (n) {
    case Nonlinearity::elu: return elu(x);
    case Nonlinearity::relu: return relu(x);
    case Nonlinearity::tanh: return tanh(x);
    case Nonlinearity::sigmoid: return sigmoid(x);
  }
  return x;
}

inline Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

inline Var mlp(Var x, const MlpT<Var>& m) { return linear(elu(linear(x, m.W1, m.b1)), m.W2, m.b2); }

struct Disentangled {
  Var X_a, X_c, mask_c;
};

inline Disentangled disentangle(Var x, const MaskParamsT<Var>& p) {
  if (x.cols() != p.W1.rows()) {
    throw ValidationError("feature width " + std::to_string(x.cols()) + " does not match mask input " +
                          std::to_string(p.W1.rows()));
  }
  Var z = linear(relu(linear(x, p.W1, p.b1)), p.W2, p.b2);
  Var mask_c = sigmoid(z);
  return {hadamard(sigmoid(neg(z)), x), hadamard(mask_c, x), mask_c};
}

struct Adjustment {
  Var E_a;
  Var final_logits;
};

inline Adjustment aggregate_adjustment(Var x_a, const AggregatorParamsT<Var>& p, const GraphContext& ctx,
                                       const ModelConfig& cfg) {
  Var h = x_a;
  Var logits;
  for (size_t l = 0; l < p.W_a.size(); ++l) {
    Var lin = matmul(h, p.W_a[l]);
    logits = attention_logits(lin, p.W_att[l], ctx.pairs, cfg.attention_leak);
    h = activate(attention_aggregate(logits, lin, ctx.pairs, ctx.full), cfg.nonlinearity);
  }
  return {h, logits};
}

struct Confounder {
  Var E_c, E_cf;
};

inline Confounder aggregate_confounder(Var x_c, Var logits, Var w_c, Var w_cf, const GraphContext& ctx,
                                       const ModelConfig& cfg) {
  Var same_in = matmul(x_c, w_c);
  Var opp_in = w_cf.id == w_c.id ? same_in : matmul(x_c, w_cf);
  Var e_c = activate(attention_aggregate(logits, same_in, ctx.pairs, ctx.same), cfg.nonlinearity);
  Var e_cf = mask_rows(activate(attention_aggregate(logits, opp_in, ctx.pairs, ctx.opposite), cfg.nonlinearity),
                       ctx.has_opp);
  return {e_c, e_cf};
}

inline Var map_counterfactual(Var x_c, Var e_a, const MlpT<Var>& g) { return mlp(hcat(x_c, e_a), g); }

struct Forward {
  Var X_a, X_c, mask_c;
  Var E_a, E_c, E_cf, E_cf_hat, XcP;
  Var H_f, H_cf;
  Var y_f, y_cf, t_prob;
  Var final_logits;
  bool confounder_channel = true;
};

inline Forward forward(Var x, const ModelParamsT<Var>& p, const GraphContext& ctx, const ModelConfig& cfg,
                       Variant variant) {
  Tape& tape = *x.tape;
  Forward out;
  if (variant == Variant::no_disentangle) {
    out.X_a = x;
    out.X_c = x;
    out.mask_c = tape.constant(Matrix::Ones(x.rows(), x.cols()));
  } else {
    Disentangled dis = disentangle(x, p.mask);
    out.X_a = dis.X_a;
    out.X_c = dis.X_c;
    out.mask_c = dis.mask_c;
  }
  Adjustment adj = aggregate_adjustment(out.X_a, p.agg, ctx, cfg);
  out.E_a = adj.E_a;
  out.final_logits = adj.final_logits;

  if (variant == Variant::adjustment_only) {
    out.confounder_channel = false;
    out.H_f = out.E_a;
    out.H_cf = out.E_a;
    out.t_prob = tape.constant(Matrix::Constant(x.rows(), 1, 0.5));
  } else {
    Confounder conf = aggregate_confounder(out.X_c, adj.final_logits, p.agg.W_c, p.agg.W_cf.value_or(p.agg.W_c), ctx,
                                           cfg);
    out.E_c = conf.E_c;
    out.E_cf = conf.E_cf;
    out.E_cf_hat = map_counterfactual(out.X_c, out.E_a, p.heads.g);
    out.XcP = matmul(out.X_c, p.agg.P);
    out.H_f = add(add(out.E_a, out.E_c), out.XcP);
    out.H_cf = add(add(out.E_a, out.E_cf_hat), out.XcP);
    out.t_prob = sigmoid(mlp(out.E_c, p.heads.clf));
  }
  const auto& t = ctx.treatments;
  out.y_f = select_rows(t, mlp(out.H_f, p.heads.f1), mlp(out.H_f, p.heads.f0));
  out.y_cf = select_rows(t, mlp(out.H_cf, p.heads.f0), mlp(out.H_cf, p.heads.f1));
  return out;
}

}  // namespace ad

// ---- value-level API ----------------------------------------------------------

inline ModelParamsT<ad::Var> lift(ad::Tape& tape, const ModelParams& p,
                                  const std::function<bool(const std::string&)>& trainable = {}) {
  return map_params<ad::Var>(p, [&](const std::string& name, const Matrix& m, ParamKind) {
    return trainable && trainable(name) ? tape.parameter(m) : tape.constant(m);
  });
}

struct DisentangledFeatures {
  Matrix X_a;
  Matrix X_c;
  Matrix mask_c;
};

inline DisentangledFeatures disentangle(const Matrix& x, const MaskParams& p) {
  ad::Tape tape;
  auto vars = MaskParamsT<ad::Var>{tape.constant(p.W1), tape.constant(p.b1), tape.constant(p.W2),
                                   tape.constant(p.b2)};
  auto d = ad::disentangle(tape.constant(x), vars);
  return {d.X_a.value(), d.X_c.value(), d.mask_c.value()};
}

struct AttentionScores {
  PairList pairs;
  Matrix logits;               // one per pair
  std::vector<double> weights; // softmax over each node's full neighborhood, pair order
};

inline AttentionScores attention_scores(const Matrix& h_in, const Graph& graph, const Matrix& w_att, double leak) {
  AttentionScores s;
  s.pairs = neighborhood_pairs(graph);
  ad::Tape tape;
  s.logits = ad::attention_logits(tape.constant(h_in), tape.constant(w_att), s.pairs, leak).value();
  s.weights = restricted_softmax(s.logits, all_pairs(s.pairs));
  return s;
}

struct AdjustmentResult {
  Matrix E_a;
  Matrix final_logits;
};

inline AdjustmentResult aggregate_adjustment(const Matrix& x_a, const Graph& graph, const AggregatorParams& p,
                                             const ModelConfig& cfg) {
  GraphContext ctx(graph, std::vector<int>(static_cast<size_t>(graph.num_nodes()), 0));
  ad::Tape tape;
  AggregatorParamsT<ad::Var> vars;
  for (size_t l = 0; l < p.W_a.size(); ++l) {
    vars.W_a.push_back(tape.constant(p.W_a[l]));
    vars.W_att.push_back(tape.constant(p.W_att[l]));
  }
  auto r = ad::aggregate_adjustment(tape.constant(x_a), vars, ctx, cfg);
  return {r.E_a.value(), r.final_logits.value()};
}

struct ConfounderResult {
  Matrix E_c;
  Matrix E_cf;
  std::vector<bool> has_opp;
};

// `final_logits` must come from the adjustment stack run on the same graph.
inline ConfounderResult aggregate_confounder(const Matrix& x_c, const Graph& graph, const std::vector<int>& t,
                                             const Matrix& final_logits, const Matrix& w_c, const ModelConfig& cfg) {
  GraphContext ctx(graph, t);
  ad::Tape tape;
  ad::Var w = tape.constant(w_c);
  auto r = ad::aggregate_confounder(tape.constant(x_c), tape.constant(final_logits), w, w, ctx, cfg);
  return {r.E_c.value(), r.E_cf.value(), ctx.has_opp};
}

inline Matrix map_counterfactual(const Matrix& x_c, const Matrix& e_a, const Mlp& g) {
  ad::Tape tape;
  MlpT<ad::Var> gv{tape.constant(g.W1), tape.constant(g.b1), tape.constant(g.W2), tape.constant(g.b2)};
  return ad::map_counterfactual(tape.constant(x_c), tape.constant(e_a), gv).value();
}

struct ForwardOutputs {
  Matrix X_a, X_c;
  Matrix E_a, E_c, E_cf, E_cf_hat, XcP;
  std::vector<bool> has_opp;
  Matrix H_f, H_cf;
  Vector y_f_hat, y_cf_hat, t_prob;
};

inline ForwardOutputs collect(const ad::Forward& f, const GraphContext& ctx) {
  ForwardOutputs o;
  o.X_a = f.X_a.value();
  o.X_c = f.X_c.value();
  o.E_a = f.E_a.value();
  const long n = o.E_a.rows(), d = o.E_a.cols();
  if (f.confounder_channel) {
    o.E_c = f.E_c.value();
    o.E_cf = f.E_cf.value();
    o.E_cf_hat = f.E_cf_hat.value();
    o.XcP = f.XcP.value();
  } else {
    o.E_c = o.E_cf = o.E_cf_hat = o.XcP = Matrix::Zero(n, d);
  }
  o.has_opp = ctx.has_opp;
  o.H_f = f.H_f.value();
  o.H_cf = f.H_cf.value();
  o.y_f_hat = f.y_f.value().col(0);
  o.y_cf_hat = f.y_cf.value().col(0);
  o.t_prob = f.t_prob.value().col(0);
  return o;
}

inline ForwardOutputs forward(const ObservationalDataset& ds, const ModelParams& p, const ModelConfig& cfg,
                              Variant variant = Variant::full) {
  GraphContext ctx(ds.graph, ds.treatments);
  ad::Tape tape;
  auto vars = lift(tape, p);
  auto f = ad::forward(tape.constant(ds.features), vars, ctx, cfg, variant);
  return collect(f, ctx);
}

inline Vector predict_ite(const Vector& y_f_hat, const Vector& y_cf_hat, const std::vector<int>& t) {
  if (y_f_hat.size() != y_cf_hat.size() || y_f_hat.size() != static_cast<long>(t.size()))
    throw ValidationError("predict_ite: length mismatch");
  Vector tau(y_f_hat.size());
  for (long i = 0; i < tau.size(); ++i)
    tau[i] = t[static_cast<size_t>(i)] == 1 ? y_f_hat[i] - y_cf_hat[i] : y_cf_hat[i] - y_f_hat[i];
  return tau;
}

inline Vector predict_ite(const ForwardOutputs& o, const std::vector<int>& t) {
  return predict_ite(o.y_f_hat, o.y_cf_hat, t);
}

}  // namespace gdc
