#pragma once

// Deterministic two-axis principal-component projection of learned embeddings.

#include "gdc/model.hpp"

#include <Eigen/Eigenvalues>

namespace gdc {

struct Projection2D {
  Eigen::RowVectorXd mean;
  Matrix axes;  // d x 2, columns are unit principal axes
};

// Axes are the top two eigenvectors of the covariance, each signed so that its
// first non-negligible loading is positive.
inline Projection2D fit_projection(const Matrix& points) {
  if (points.rows() < 1) throw ArgumentError("cannot fit a projection on zero points");
  Projection2D p;
  p.mean = points.colwise().mean();
  const Matrix centered = points.rowwise() - p.mean;
  const Matrix cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(points.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("eigen decomposition failed");
  const long d = points.cols();
  p.axes = Matrix::Zero(d, 2);
  for (long k = 0; k < std::min<long>(2, d); ++k) {
    Vector axis = solver.eigenvectors().col(d - 1 - k);
    for (long i = 0; i < d; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0.0) axis = -axis;
        break;
      }
    }
    p.axes.col(k) = axis;
  }
  return p;
}

inline Matrix apply_projection(const Projection2D& p, const Matrix& points) {
  return (points.rowwise() - p.mean) * p.axes;
}

struct EmbeddingProjection {
  Matrix xy;  // rows x 2
  std::vector<std::string> kind;
  std::vector<int> treatment;
};

// Stacks E_c (treated units after control units), the rows of E_cf that have an
// opposite-treatment neighbor, and E_a, then projects onto a common 2-D plane.
// `treatment` is the unit's observed treatment for every kind.
inline EmbeddingProjection project_embeddings(const ForwardOutputs& out, const std::vector<int>& treatments) {
  const long n = out.E_a.rows();
  if (static_cast<long>(treatments.size()) != n) throw ValidationError("treatment count does not match embeddings");
  std::vector<std::pair<const Matrix*, long>> rows;
  EmbeddingProjection p;
  auto push = [&](const Matrix& m, long i, const char* kind) {
    rows.emplace_back(&m, i);
    p.kind.emplace_back(kind);
    p.treatment.push_back(treatments[static_cast<size_t>(i)]);
  };
  for (int group : {0, 1})
    for (long i = 0; i < n; ++i)
      if (treatments[static_cast<size_t>(i)] == group) push(out.E_c, i, "confounder");
  for (long i = 0; i < n; ++i)
    if (out.has_opp[static_cast<size_t>(i)]) push(out.E_cf, i, "cf_confounder");
  for (long i = 0; i < n; ++i) push(out.E_a, i, "adjustment");

  Matrix stacked(static_cast<long>(rows.size()), out.E_a.cols());
  for (size_t r = 0; r < rows.size(); ++r) stacked.row(static_cast<long>(r)) = rows[r].first->row(rows[r].second);
  p.xy = apply_projection(fit_projection(stacked), stacked);
  return p;
}

// Distance between the 2-D centroids of the t=0 and t=1 rows of one kind.
inline double centroid_separation(const EmbeddingProjection& p, const std::string& kind) {
  Eigen::RowVector2d c[2] = {Eigen::RowVector2d::Zero(), Eigen::RowVector2d::Zero()};
  long count[2] = {0, 0};
  for (size_t r = 0; r < p.kind.size(); ++r) {
    if (p.kind[r] != kind) continue;
    const int t = p.treatment[r];
    c[t] += p.xy.row(static_cast<long>(r));
    ++count[t];
  }
  if (count[0] == 0 || count[1] == 0) throw ArgumentError("both treatment groups needed for " + kind);
  return (c[0] / static_cast<double>(count[0]) - c[1] / static_cast<double>(count[1])).norm();
}

}  // namespace gdc
