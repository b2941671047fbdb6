#pragma once

// Experiment configuration file: flat `key = value` lines grouped under
// `[section]` headers. Every key is optional; `#` and `;` start comments.

#include "gdc/dataset_io.hpp"
#include "gdc/synthesis.hpp"
#include "gdc/training.hpp"

#include <fstream>
#include <sstream>

namespace gdc {

struct ExperimentConfig {
  SynthesisConfig synthesis;
  ModelConfig model;
  TrainConfig train;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  std::vector<double> kappas{0.5, 1.0, 2.0};
  int replications = 10;
  std::string output_dir = "runs";
  SweepGrid sweep;

  void validate() const {
    synthesis.validate();
    model.validate();
    train.validate();
    if (replications < 1) throw ArgumentError("replications must be at least 1");
    if (kappas.empty()) throw ArgumentError("kappas must not be empty");
    for (double k : kappas)
      if (k < 0.0) throw ArgumentError("kappas must be non-negative");
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ArgumentError(key + ": '" + v + "' is not a number");
  return out;
}

inline long to_int(const std::string& key, const std::string& v) {
  long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ArgumentError(key + ": '" + v + "' is not an integer");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ArgumentError(key + ": '" + v + "' is not a boolean");
}

inline std::vector<double> to_reals(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_real(key, item));
  }
  if (out.empty()) throw ArgumentError(key + ": expected a comma-separated list");
  return out;
}

inline std::string join(const std::vector<double>& xs) {
  std::string s;
  for (double x : xs) s += (s.empty() ? "" : ", ") + csv::format_real(x);
  return s;
}

}  // namespace config_detail

inline void apply_setting(ExperimentConfig& c, const std::string& section, const std::string& key,
                          const std::string& v) {
  using namespace config_detail;
  const std::string full = section + "." + key;
  auto& s = c.synthesis;
  auto& m = c.model;
  auto& t = c.train;
  if (section == "synthesis") {
    if (key == "n_units") s.n_units = static_cast<int>(to_int(full, v));
    else if (key == "n_features") s.n_features = static_cast<int>(to_int(full, v));
    else if (key == "n_topics") s.n_topics = static_cast<int>(to_int(full, v));
    else if (key == "dirichlet_alpha") s.dirichlet_alpha = to_real(full, v);
    else if (key == "edge_budget") s.edge_budget = to_int(full, v);
    else if (key == "kappa") s.kappa = to_real(full, v);
    else if (key == "treatment_scale") s.treatment_scale = to_real(full, v);
    else if (key == "outcome_noise_std") s.outcome_noise_std = to_real(full, v);
    else if (key == "treatment_effect_base") s.treatment_effect_base = to_real(full, v);
    else if (key == "feature_noise_std") s.feature_noise_std = to_real(full, v);
    else if (key == "seed") s.seed = to_int(full, v);
    else throw ArgumentError("unknown setting " + full);
  } else if (section == "model") {
    if (key == "hidden_dim") m.hidden_dim = static_cast<int>(to_int(full, v));
    else if (key == "mask_hidden") m.mask_hidden = static_cast<int>(to_int(full, v));
    else if (key == "adjustment_layers") m.adjustment_layers = static_cast<int>(to_int(full, v));
    else if (key == "nonlinearity") m.nonlinearity = parse_nonlinearity(v);
    else if (key == "head_hidden") m.head_hidden = static_cast<int>(to_int(full, v));
    else if (key == "attention_leak") m.attention_leak = to_real(full, v);
    else if (key == "tie_cf_weights") m.tie_cf_weights = to_bool(full, v);
    else throw ArgumentError("unknown setting " + full);
  } else if (section == "train") {
    if (key == "epochs") t.epochs = static_cast<int>(to_int(full, v));
    else if (key == "learning_rate") t.learning_rate = to_real(full, v);
    else if (key == "weight_decay") t.weight_decay = to_real(full, v);
    else if (key == "w1") t.weights.adjustment = to_real(full, v);
    else if (key == "w2") t.weights.confounder = to_real(full, v);
    else if (key == "w3") t.weights.cf_confounder = to_real(full, v);
    else if (key == "seed") t.seed = to_int(full, v);
    else if (key == "variant") t.variant = parse_variant(v);
    else if (key == "cf_target_stop_gradient") t.cf_target_stop_gradient = to_bool(full, v);
    else if (key == "split") {
      auto r = to_reals(full, v);
      if (r.size() != 3) throw ArgumentError(full + ": expected three ratios");
      c.split_ratios = {r[0], r[1], r[2]};
    } else throw ArgumentError("unknown setting " + full);
  } else if (section == "sinkhorn") {
    if (key == "epsilon") t.sinkhorn.epsilon = to_real(full, v);
    else if (key == "max_iters") t.sinkhorn.max_iters = static_cast<int>(to_int(full, v));
    else if (key == "convergence_tol") t.sinkhorn.convergence_tol = to_real(full, v);
    else if (key == "max_points_per_group") t.sinkhorn.max_points_per_group = static_cast<int>(to_int(full, v));
    else throw ArgumentError("unknown setting " + full);
  } else if (section == "experiment") {
    if (key == "kappas") c.kappas = to_reals(full, v);
    else if (key == "replications") c.replications = static_cast<int>(to_int(full, v));
    else if (key == "output_dir") c.output_dir = v;
    else throw ArgumentError("unknown setting " + full);
  } else if (section == "sweep") {
    if (key == "w1") c.sweep.adjustment = to_reals(full, v);
    else if (key == "w2") c.sweep.confounder = to_reals(full, v);
    else if (key == "w3") c.sweep.cf_confounder = to_reals(full, v);
    else throw ArgumentError("unknown setting " + full);
  } else {
    throw ArgumentError("unknown section [" + section + "]");
  }
}

inline ExperimentConfig parse_config(std::istream& in) {
  using config_detail::trim;
  ExperimentConfig c;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find_first_of("#;"); pos != std::string::npos) line.erase(pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ArgumentError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArgumentError("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ArgumentError("config line " + std::to_string(lineno) + ": setting outside a section");
    apply_setting(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in);
}

// Writes every setting, defaults included.
inline std::string serialize_config(const ExperimentConfig& c) {
  using csv::format_real;
  using config_detail::join;
  std::ostringstream o;
  const auto& s = c.synthesis;
  o << "[synthesis]\n"
    << "n_units = " << s.n_units << "\n"
    << "n_features = " << s.n_features << "\n"
    << "n_topics = " << s.n_topics << "\n"
    << "dirichlet_alpha = " << format_real(s.dirichlet_alpha) << "\n"
    << "edge_budget = " << s.edge_budget << "\n"
    << "kappa = " << format_real(s.kappa) << "\n"
    << "treatment_scale = " << format_real(s.treatment_scale) << "\n"
    << "outcome_noise_std = " << format_real(s.outcome_noise_std) << "\n"
    << "treatment_effect_base = " << format_real(s.treatment_effect_base) << "\n"
    << "feature_noise_std = " << format_real(s.feature_noise_std) << "\n"
    << "seed = " << s.seed << "\n\n";
  const auto& m = c.model;
  o << "[model]\n"
    << "hidden_dim = " << m.hidden_dim << "\n"
    << "mask_hidden = " << m.mask_hidden << "\n"
    << "adjustment_layers = " << m.adjustment_layers << "\n"
    << "nonlinearity = " << to_string(m.nonlinearity) << "\n"
    << "head_hidden = " << m.head_hidden << "\n"
    << "attention_leak = " << format_real(m.attention_leak) << "\n"
    << "tie_cf_weights = " << (m.tie_cf_weights ? "true" : "false") << "\n\n";
  const auto& t = c.train;
  o << "[train]\n"
    << "epochs = " << t.epochs << "\n"
    << "learning_rate = " << format_real(t.learning_rate) << "\n"
    << "weight_decay = " << format_real(t.weight_decay) << "\n"
    << "w1 = " << format_real(t.weights.adjustment) << "\n"
    << "w2 = " << format_real(t.weights.confounder) << "\n"
    << "w3 = " << format_real(t.weights.cf_confounder) << "\n"
    << "seed = " << t.seed << "\n"
    << "variant = " << to_string(t.variant) << "\n"
    << "cf_target_stop_gradient = " << (t.cf_target_stop_gradient ? "true" : "false") << "\n"
    << "split = " << join({c.split_ratios[0], c.split_ratios[1], c.split_ratios[2]}) << "\n\n";
  o << "[sinkhorn]\n"
    << "epsilon = " << format_real(t.sinkhorn.epsilon) << "\n"
    << "max_iters = " << t.sinkhorn.max_iters << "\n"
    << "convergence_tol = " << format_real(t.sinkhorn.convergence_tol) << "\n"
    << "max_points_per_group = " << t.sinkhorn.max_points_per_group << "\n\n";
  o << "[experiment]\n"
    << "kappas = " << join(c.kappas) << "\n"
    << "replications = " << c.replications << "\n"
    << "output_dir = " << c.output_dir << "\n\n";
  o << "[sweep]\n"
    << "w1 = " << join(c.sweep.adjustment) << "\n"
    << "w2 = " << join(c.sweep.confounder) << "\n"
    << "w3 = " << join(c.sweep.cf_confounder) << "\n";
  return o.str();
}

}  // namespace gdc
