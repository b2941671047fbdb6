#pragma once

// Neighborhood attention over an explicit list of (target, source) pairs.
//
// Pairs are grouped by target node. A PairSubset selects, per target, a subset
// of those pairs; softmax is taken over the selected logits only, so the same
// logits can drive the full, same-treatment and opposite-treatment
// aggregations.

#include "gdc/autodiff.hpp"
#include "gdc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gdc {

struct PairList {
  std::vector<int> target;
  std::vector<int> source;
  std::vector<int> offsets;  // pairs of node i live in [offsets[i], offsets[i+1])

  int num_nodes() const { return static_cast<int>(offsets.size()) - 1; }
  int size() const { return static_cast<int>(target.size()); }
};

struct PairSubset {
  std::vector<int> offsets;  // per node, into `pairs`
  std::vector<int> pairs;    // indices into the PairList
};

// Neighborhood of every node plus the node itself, sources in ascending order.
inline PairList neighborhood_pairs(const Graph& graph) {
  PairList list;
  const int n = graph.num_nodes();
  list.offsets.reserve(static_cast<size_t>(n) + 1);
  list.offsets.push_back(0);
  for (int i = 0; i < n; ++i) {
    std::vector<int> sources = graph.neighbors(i);
    sources.insert(std::upper_bound(sources.begin(), sources.end(), i), i);
    for (int j : sources) {
      list.target.push_back(i);
      list.source.push_back(j);
    }
    list.offsets.push_back(list.size());
  }
  return list;
}

template <class Keep>
PairSubset select_pairs(const PairList& list, Keep keep) {
  PairSubset sub;
  sub.offsets.reserve(list.offsets.size());
  sub.offsets.push_back(0);
  for (int i = 0; i < list.num_nodes(); ++i) {
    for (int p = list.offsets[static_cast<size_t>(i)]; p < list.offsets[static_cast<size_t>(i) + 1]; ++p)
      if (keep(list.target[static_cast<size_t>(p)], list.source[static_cast<size_t>(p)])) sub.pairs.push_back(p);
    sub.offsets.push_back(static_cast<int>(sub.pairs.size()));
  }
  return sub;
}

inline PairSubset all_pairs(const PairList& list) {
  return select_pairs(list, [](int, int) { return true; });
}

// Same-treatment neighbors including the node itself.
inline PairSubset same_treatment_pairs(const PairList& list, const std::vector<int>& t) {
  return select_pairs(list, [&](int i, int j) { return t[static_cast<size_t>(i)] == t[static_cast<size_t>(j)]; });
}

// Opposite-treatment neighbors; never contains the node itself.
inline PairSubset opposite_treatment_pairs(const PairList& list, const std::vector<int>& t) {
  return select_pairs(list, [&](int i, int j) { return t[static_cast<size_t>(i)] != t[static_cast<size_t>(j)]; });
}

inline double leaky_relu(double x, double leak) { return x > 0.0 ? x : leak * x; }

// Softmax weights of the logits restricted to each node's subset; returned in
// the order of subset.pairs. Empty subsets contribute nothing.
inline std::vector<double> restricted_softmax(const Matrix& logits, const PairSubset& subset) {
  std::vector<double> w(subset.pairs.size());
  for (size_t i = 0; i + 1 < subset.offsets.size(); ++i) {
    const int lo = subset.offsets[i], hi = subset.offsets[i + 1];
    if (lo == hi) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (int q = lo; q < hi; ++q) mx = std::max(mx, logits(subset.pairs[static_cast<size_t>(q)], 0));
    double z = 0.0;
    for (int q = lo; q < hi; ++q) {
      w[static_cast<size_t>(q)] = std::exp(logits(subset.pairs[static_cast<size_t>(q)], 0) - mx);
      z += w[static_cast<size_t>(q)];
    }
    for (int q = lo; q < hi; ++q) w[static_cast<size_t>(q)] /= z;
  }
  return w;
}

namespace ad {

// e_p = LeakyReLU(att . [h_target || h_source]) for every pair p; att is 2d x 1.
// `pairs` must outlive the tape.
inline Var attention_logits(Var h, Var att, const PairList& pairs, double leak) {
  const long d = h.cols();
  if (att.rows() != 2 * d || att.cols() != 1) throw ValidationError("attention vector must be 2d x 1");
  const Vector s_target = h.value() * att.value().topRows(d);
  const Vector s_source = h.value() * att.value().bottomRows(d);
  const int np = pairs.size();
  Matrix raw(np, 1), out(np, 1);
  for (int p = 0; p < np; ++p) {
    raw(p, 0) = s_target[pairs.target[static_cast<size_t>(p)]] + s_source[pairs.source[static_cast<size_t>(p)]];
    out(p, 0) = leaky_relu(raw(p, 0), leak);
  }
  const int ih = h.id, ia = att.id;
  return h.tape->record(std::move(out), {h, att}, [ih, ia, &pairs, leak, raw = std::move(raw), d](Tape& t,
                                                                                               const Matrix& g) {
    const long n = t.value(ih).rows();
    Vector g_target = Vector::Zero(n), g_source = Vector::Zero(n);
    for (int p = 0; p < pairs.size(); ++p) {
      const double gr = g(p, 0) * (raw(p, 0) > 0.0 ? 1.0 : leak);
      g_target[pairs.target[static_cast<size_t>(p)]] += gr;
      g_source[pairs.source[static_cast<size_t>(p)]] += gr;
    }
    const Matrix& hv = t.value(ih);
    const Matrix& av = t.value(ia);
    if (t.requires_grad(ih)) {
      t.accumulate(ih, g_target * av.topRows(d).transpose() + g_source * av.bottomRows(d).transpose());
    }
    if (t.requires_grad(ia)) {
      Matrix ga(2 * d, 1);
      ga.topRows(d) = hv.transpose() * g_target;
      ga.bottomRows(d) = hv.transpose() * g_source;
      t.accumulate(ia, ga);
    }
  });
}

// out_i = sum over subset pairs p of node i of softmax_p(e) * values[source_p].
// Nodes with an empty subset get a zero row. `pairs` and `subset` are held by
// reference until the tape is destroyed.
inline Var attention_aggregate(Var logits, Var values, const PairList& pairs, const PairSubset& subset) {
  if (logits.rows() != pairs.size()) throw ValidationError("logit count does not match pair list");
  std::vector<double> w = restricted_softmax(logits.value(), subset);
  const Matrix& v = values.value();
  Matrix out = Matrix::Zero(pairs.num_nodes(), v.cols());
  for (int i = 0; i < pairs.num_nodes(); ++i) {
    for (int q = subset.offsets[static_cast<size_t>(i)]; q < subset.offsets[static_cast<size_t>(i) + 1]; ++q) {
      const int p = subset.pairs[static_cast<size_t>(q)];
      out.row(i) += w[static_cast<size_t>(q)] * v.row(pairs.source[static_cast<size_t>(p)]);
    }
  }
  const int il = logits.id, iv = values.id;
  return logits.tape->record(std::move(out), {logits, values}, [il, iv, &pairs, &subset, w = std::move(w)](
                                                                   Tape& t, const Matrix& g) {
    const Matrix& v = t.value(iv);
    Matrix* gv = t.grad_slot(iv);
    Matrix* gl = t.grad_slot(il);
    for (int i = 0; i < pairs.num_nodes(); ++i) {
      const int lo = subset.offsets[static_cast<size_t>(i)], hi = subset.offsets[static_cast<size_t>(i) + 1];
      if (lo == hi) continue;
      double weighted = 0.0;
      thread_local std::vector<double> dots;
      dots.resize(static_cast<size_t>(hi - lo));
      for (int q = lo; q < hi; ++q) {
        const int src = pairs.source[static_cast<size_t>(subset.pairs[static_cast<size_t>(q)])];
        const double wq = w[static_cast<size_t>(q)];
        if (gv) gv->row(src) += wq * g.row(i);
        const double dot = g.row(i).dot(v.row(src));
        dots[static_cast<size_t>(q - lo)] = dot;
        weighted += wq * dot;
      }
      if (gl) {
        for (int q = lo; q < hi; ++q) {
          const int p = subset.pairs[static_cast<size_t>(q)];
          (*gl)(p, 0) += w[static_cast<size_t>(q)] * (dots[static_cast<size_t>(q - lo)] - weighted);
        }
      }
    }
  });
}

}  // namespace ad
}  // namespace gdc
