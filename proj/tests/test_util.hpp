#pragma once

#include "gdc/gdc.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

namespace gdc::test {

inline Matrix random_matrix(long rows, long cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = scale * standard_normal(rng);
  return m;
}

// Erdos-Renyi graph with edge probability p.
inline Graph random_graph(int n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (uniform01(rng) < p) edges.emplace_back(i, j);
  return Graph(n, edges);
}

inline std::vector<int> random_treatments(int n, Rng& rng) {
  std::vector<int> t(static_cast<size_t>(n));
  for (auto& v : t) v = uniform01(rng) < 0.5 ? 1 : 0;
  t[0] = 0;
  t[1] = 1;
  return t;
}

inline ModelConfig tiny_model(int d = 4) {
  ModelConfig c;
  c.hidden_dim = d;
  c.mask_hidden = d;
  c.head_hidden = d;
  return c;
}

inline SynthesisConfig small_synthesis(int n = 120, std::int64_t seed = 1, double kappa = 1.0) {
  SynthesisConfig c;
  c.n_units = n;
  c.n_features = 12;
  c.n_topics = 4;
  c.edge_budget = 3 * n;
  c.kappa = kappa;
  c.seed = seed;
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 counter(std::random_device{}());
    path_ = fs::temp_directory_path() / ("gdc_test_" + std::to_string(counter()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace gdc::test
