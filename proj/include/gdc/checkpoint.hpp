#pragma once

// Parameter checkpoints: an ordered list of named real matrices.
//
//   gdc-checkpoint 1
//   <name> <rows> <cols>
//   <row-major values, one matrix row per line>
//   ...
//
// Values use the shortest decimal form that parses back to the same double,
// so save/load is bit-exact. Scalar settings are stored as 1x1 "meta.*" entries.

#include "gdc/dataset_io.hpp"
#include "gdc/training.hpp"

#include <fstream>
#include <sstream>

namespace gdc {

using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

inline constexpr const char* kCheckpointMagic = "gdc-checkpoint";

inline void save_named_matrices(const fs::path& path, const NamedMatrices& entries) {
  csv::Writer w(path);
  auto& out = w.stream();
  out << kCheckpointMagic << " 1\n";
  for (const auto& [name, m] : entries) {
    if (name.find_first_of(" \t\n") != std::string::npos) throw ArgumentError("matrix name contains whitespace");
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (long r = 0; r < m.rows(); ++r) {
      for (long c = 0; c < m.cols(); ++c) out << (c ? " " : "") << csv::format_real(m(r, c));
      out << '\n';
    }
  }
  w.close();
}

inline NamedMatrices load_named_matrices(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic || version != 1) throw ValidationError(path.string() + " is not a gdc checkpoint");
  NamedMatrices entries;
  std::string name;
  long rows = 0, cols = 0;
  while (in >> name >> rows >> cols) {
    if (rows < 0 || cols < 0) throw ValidationError("checkpoint entry " + name + " has a negative shape");
    Matrix m(rows, cols);
    std::string token;
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) {
        if (!(in >> token)) throw ValidationError("checkpoint entry " + name + " is truncated");
        m(r, c) = csv::parse_real(token, path, static_cast<size_t>(r));
      }
    entries.emplace_back(name, std::move(m));
  }
  if (!in.eof()) throw ValidationError("malformed checkpoint header in " + path.string());
  return entries;
}

namespace checkpoint_detail {

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace checkpoint_detail

inline NamedMatrices to_named_matrices(const TrainedModel& model) {
  using checkpoint_detail::scalar;
  NamedMatrices out;
  const auto& mc = model.model;
  out.emplace_back("meta.hidden_dim", scalar(mc.hidden_dim));
  out.emplace_back("meta.mask_hidden", scalar(mc.mask_hidden));
  out.emplace_back("meta.adjustment_layers", scalar(mc.adjustment_layers));
  out.emplace_back("meta.nonlinearity", scalar(static_cast<int>(mc.nonlinearity)));
  out.emplace_back("meta.head_hidden", scalar(mc.head_hidden));
  out.emplace_back("meta.attention_leak", scalar(mc.attention_leak));
  out.emplace_back("meta.tie_cf_weights", scalar(mc.tie_cf_weights ? 1 : 0));
  out.emplace_back("meta.variant", scalar(static_cast<int>(model.train.variant)));
  out.emplace_back("meta.seed", scalar(static_cast<double>(model.train.seed)));
  out.emplace_back("meta.y_mean", scalar(model.y_mean));
  out.emplace_back("meta.y_scale", scalar(model.y_scale));
  ModelParams params = model.params;
  for_each_param(params, [&](const std::string& name, Matrix& m, ParamKind) { out.emplace_back(name, m); });
  return out;
}

inline TrainedModel from_named_matrices(const NamedMatrices& entries) {
  std::map<std::string, const Matrix*> by_name;
  for (const auto& [name, m] : entries) by_name[name] = &m;
  auto get = [&](const std::string& name) -> const Matrix& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("checkpoint is missing " + name);
    return *it->second;
  };
  auto meta = [&](const std::string& name) { return get("meta." + name)(0, 0); };

  TrainedModel model;
  auto& mc = model.model;
  mc.hidden_dim = static_cast<int>(meta("hidden_dim"));
  mc.mask_hidden = static_cast<int>(meta("mask_hidden"));
  mc.adjustment_layers = static_cast<int>(meta("adjustment_layers"));
  mc.nonlinearity = static_cast<Nonlinearity>(static_cast<int>(meta("nonlinearity")));
  mc.head_hidden = static_cast<int>(meta("head_hidden"));
  mc.attention_leak = meta("attention_leak");
  mc.tie_cf_weights = meta("tie_cf_weights") != 0.0;
  model.train.variant = static_cast<Variant>(static_cast<int>(meta("variant")));
  model.train.seed = static_cast<std::int64_t>(meta("seed"));
  model.y_mean = meta("y_mean");
  model.y_scale = meta("y_scale");

  const auto k = static_cast<int>(get("mask.W1").rows());
  model.params = init_params(mc, k, 0);
  for_each_param(model.params, [&](const std::string& name, Matrix& m, ParamKind) {
    const Matrix& stored = get(name);
    if (stored.rows() != m.rows() || stored.cols() != m.cols())
      throw ValidationError("checkpoint entry " + name + " has an unexpected shape");
    m = stored;
  });
  return model;
}

inline void save_checkpoint(const TrainedModel& model, const fs::path& path) {
  save_named_matrices(path, to_named_matrices(model));
}

inline TrainedModel load_checkpoint(const fs::path& path) { return from_named_matrices(load_named_matrices(path)); }

}  // namespace gdc
