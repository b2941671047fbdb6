#pragma once

// Command-line front end. `gdc::cli::run` parses arguments, dispatches to one
// subcommand and maps errors onto exit codes (1 validation, 2 IO).

#include "gdc/checkpoint.hpp"
#include "gdc/config.hpp"
#include "gdc/dataset_io.hpp"
#include "gdc/projection.hpp"
#include "gdc/synthesis.hpp"
#include "gdc/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <glob.h>

#include <iomanip>
#include <iostream>

namespace gdc::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2 };

struct CommonOptions {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out;
  std::string variant;
  std::optional<double> kappa;
};

inline ExperimentConfig load_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

inline std::string kappa_label(double k) { return csv::format_real(k); }

// ---- metrics files -------------------------------------------------------------------

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["variant"] = r.variant;
  j["kappa"] = r.kappa ? nlohmann::json(*r.kappa) : nlohmann::json(nullptr);
  j["seed"] = r.seed;
  j["split"] = r.split;
  j["pehe_sqrt"] = r.pehe_sqrt;
  j["ate_error"] = r.ate_error;
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.variant = j.at("variant").get<std::string>();
  if (!j.at("kappa").is_null()) r.kappa = j.at("kappa").get<double>();
  r.seed = j.at("seed").get<std::int64_t>();
  r.split = j.at("split").get<std::string>();
  r.pehe_sqrt = j.at("pehe_sqrt").get<double>();
  r.ate_error = j.at("ate_error").get<double>();
  return r;
}

inline void write_metrics(const std::vector<MetricsReport>& reports, const fs::path& dir) {
  csv::Writer jl(dir / "metrics.jsonl");
  for (const auto& r : reports) jl.stream() << to_json(r).dump() << '\n';
  jl.close();
  csv::Writer c(dir / "metrics.csv");
  c.stream() << "variant,kappa,seed,split,pehe_sqrt,ate_error\n";
  for (const auto& r : reports) {
    c.stream() << r.variant << ',' << (r.kappa ? csv::format_real(*r.kappa) : "") << ',' << r.seed << ',' << r.split
               << ',' << csv::format_real(r.pehe_sqrt) << ',' << csv::format_real(r.ate_error) << '\n';
  }
  c.close();
}

inline std::vector<MetricsReport> read_metrics_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MetricsReport> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(report_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---- helpers -------------------------------------------------------------------------

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

inline std::optional<double> bundle_kappa(const LoadedBundle& b, std::optional<double> flag) {
  if (flag) return flag;
  if (auto it = b.meta.find("kappa"); it != b.meta.end()) return config_detail::to_real("meta.kappa", it->second);
  return std::nullopt;
}

inline TrainConfig train_config(const ExperimentConfig& cfg, const CommonOptions& opt) {
  TrainConfig t = cfg.train;
  if (opt.seed) t.seed = *opt.seed;
  if (!opt.variant.empty()) t.variant = parse_variant(opt.variant);
  return t;
}

inline std::vector<fs::path> expand_patterns(const std::vector<std::string>& patterns) {
  std::vector<fs::path> files;
  auto add = [&](const fs::path& p) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().filename() == "metrics.jsonl") files.push_back(e.path());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    }
  };
  for (const auto& pattern : patterns) {
    glob_t g{};
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
      for (size_t i = 0; i < g.gl_pathc; ++i) add(g.gl_pathv[i]);
    ::globfree(&g);
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

// "w1=a,b;w2=c;w3=d,e" replaces the named axes of the grid.
inline void apply_grid_spec(const std::string& spec, SweepGrid& grid) {
  std::istringstream in(spec);
  std::string part;
  while (std::getline(in, part, ';')) {
    part = config_detail::trim(part);
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ArgumentError("grid entry '" + part + "' is not axis=values");
    const std::string axis = config_detail::trim(part.substr(0, eq));
    auto values = config_detail::to_reals("grid." + axis, part.substr(eq + 1));
    if (axis == "w1") grid.adjustment = values;
    else if (axis == "w2") grid.confounder = values;
    else if (axis == "w3") grid.cf_confounder = values;
    else throw ArgumentError("unknown grid axis " + axis);
  }
}

// ---- subcommands ---------------------------------------------------------------------

inline int cmd_synth(const CommonOptions& opt, std::ostream& log) {
  ExperimentConfig cfg = load_or_default(opt.config);
  const fs::path root = opt.out.empty() ? fs::path(cfg.output_dir) : fs::path(opt.out);
  const std::int64_t base = opt.seed.value_or(cfg.synthesis.seed);
  const std::vector<double> kappas = opt.kappa ? std::vector<double>{*opt.kappa} : cfg.kappas;
  ensure_dir(root);
  {
    csv::Writer w(root / "config.ini");
    w.stream() << serialize_config(cfg);
    w.close();
  }
  for (double kappa : kappas) {
    for (int rep = 0; rep < cfg.replications; ++rep) {
      SynthesisConfig sc = cfg.synthesis;
      sc.kappa = kappa;
      sc.seed = base + rep;
      SynthesizedBundle b = synthesize(sc);
      const fs::path dir = root / ("kappa_" + kappa_label(kappa)) / ("rep_" + std::to_string(rep));
      save_dataset(b.dataset, b.truth, dir, {},
                   {{"kappa", kappa_label(kappa)}, {"replication", std::to_string(rep)}, {"seed", std::to_string(sc.seed)}});
      csv::write_column(dir / "propensities.csv", "p", b.propensities);
      csv::write_matrix(dir / "topics.csv", b.topics, "z");
      log << dir.string() << ": " << b.dataset.num_units() << " units, " << b.dataset.graph.num_edges() << " edges\n";
    }
  }
  return kOk;
}

inline int cmd_train(const std::string& bundle_path, const CommonOptions& opt, std::ostream& log) {
  ExperimentConfig cfg = load_or_default(opt.config);
  LoadedBundle b = load_dataset(bundle_path);
  const TrainConfig tcfg = train_config(cfg, opt);
  const fs::path out = opt.out.empty() ? fs::path(bundle_path) / to_string(tcfg.variant) : fs::path(opt.out);
  ensure_dir(out);
  const SplitIndex split = split_units(b.dataset.num_units(), cfg.split_ratios, tcfg.seed);

  csv::Writer train_log(out / "train_log.jsonl");
  TrainedModel model = train(b.dataset, split, cfg.model, tcfg, [&](const EpochRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["total"] = r.loss.total;
    j["prediction"] = r.loss.prediction;
    j["adjustment"] = r.loss.adjustment;
    j["confounder"] = r.loss.confounder;
    j["cf_confounder"] = r.loss.cf_confounder;
    j["val_prediction"] = r.val_prediction;
    j["wall_seconds"] = r.seconds;
    train_log.stream() << j.dump() << '\n';
  });
  train_log.close();
  save_checkpoint(model, out / "checkpoint.txt");

  if (!b.truth) {
    log << "bundle has no potential outcomes; metrics skipped\n";
    return kOk;
  }
  auto reports = evaluate(model, b.dataset, b.truth, split, bundle_kappa(b, opt.kappa));
  write_metrics(reports, out);
  for (const auto& r : reports)
    log << r.variant << ' ' << r.split << " pehe_sqrt " << r.pehe_sqrt << " ate_error " << r.ate_error << '\n';
  return kOk;
}

inline int cmd_eval(const std::string& checkpoint, const std::string& bundle_path, const CommonOptions& opt,
                    std::ostream& log) {
  ExperimentConfig cfg = load_or_default(opt.config);
  TrainedModel model = load_checkpoint(checkpoint);
  LoadedBundle b = load_dataset(bundle_path);
  if (model.params.mask.W1.rows() != b.dataset.num_features())
    throw ValidationError("checkpoint expects " + std::to_string(model.params.mask.W1.rows()) + " features, bundle has " +
                          std::to_string(b.dataset.num_features()));
  const std::int64_t split_seed = opt.seed.value_or(model.train.seed);
  const SplitIndex split = split_units(b.dataset.num_units(), cfg.split_ratios, split_seed);
  const fs::path out = opt.out.empty() ? fs::path(checkpoint).parent_path() / "eval" : fs::path(opt.out);
  ensure_dir(out);
  auto reports = evaluate(model, b.dataset, b.truth, split, bundle_kappa(b, opt.kappa));
  write_metrics(reports, out);
  for (const auto& r : reports)
    log << r.variant << ' ' << r.split << " pehe_sqrt " << r.pehe_sqrt << " ate_error " << r.ate_error << '\n';
  return kOk;
}

inline int cmd_sweep(const std::string& bundle_path, const std::string& grid_spec, const CommonOptions& opt,
                     std::ostream& log) {
  ExperimentConfig cfg = load_or_default(opt.config);
  SweepGrid grid = cfg.sweep;
  apply_grid_spec(grid_spec, grid);
  LoadedBundle b = load_dataset(bundle_path);
  if (!b.truth) throw ValidationError("sweep requires potential outcomes in " + bundle_path);
  const TrainConfig tcfg = train_config(cfg, opt);
  const fs::path out = opt.out.empty() ? fs::path(bundle_path) / "sweep" : fs::path(opt.out);
  ensure_dir(out);
  const SplitIndex split = split_units(b.dataset.num_units(), cfg.split_ratios, tcfg.seed);

  size_t done = 0;
  auto rows = sweep(b.dataset, *b.truth, split, cfg.model, tcfg, grid, bundle_kappa(b, opt.kappa),
                    [&](const SweepRow& r) {
                      log << "[" << ++done << "/" << grid.size() << "] w1=" << r.weights.adjustment
                          << " w2=" << r.weights.confounder << " w3=" << r.weights.cf_confounder
                          << " test pehe_sqrt " << r.test.pehe_sqrt << '\n';
                    });

  using csv::format_real;
  csv::Writer w(out / "sweep.csv");
  w.stream() << "w1,w2,w3,train_pehe_sqrt,train_ate_error,test_pehe_sqrt,test_ate_error\n";
  for (const auto& r : rows) {
    w.stream() << format_real(r.weights.adjustment) << ',' << format_real(r.weights.confounder) << ','
               << format_real(r.weights.cf_confounder) << ',' << format_real(r.train.pehe_sqrt) << ','
               << format_real(r.train.ate_error) << ',' << format_real(r.test.pehe_sqrt) << ','
               << format_real(r.test.ate_error) << '\n';
  }
  w.close();

  const auto& best = rows.front();
  std::ostringstream footer;
  footer << "rows " << rows.size() << "\n"
         << "best w1=" << format_real(best.weights.adjustment) << " w2=" << format_real(best.weights.confounder)
         << " w3=" << format_real(best.weights.cf_confounder) << " test_pehe_sqrt=" << format_real(best.test.pehe_sqrt)
         << " test_ate_error=" << format_real(best.test.ate_error) << "\n";
  csv::Writer s(out / "sweep_summary.txt");
  s.stream() << footer.str();
  s.close();
  log << footer.str();
  return kOk;
}

inline std::string render_summary_table(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> splits, variants;
  std::vector<std::optional<double>> kappas;
  auto add_unique = [](auto& v, const auto& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& r : rows) {
    add_unique(splits, r.split);
    add_unique(variants, r.variant);
    add_unique(kappas, r.kappa);
  }
  std::sort(kappas.begin(), kappas.end(), [](const auto& a, const auto& b) {
    return a && b ? *a < *b : static_cast<bool>(a) > static_cast<bool>(b);
  });
  auto rank = [](const std::string& v) {
    for (int i = 0; i < 3; ++i)
      if (v == to_string(static_cast<Variant>(i))) return i;
    return 3;
  };
  std::stable_sort(variants.begin(), variants.end(),
                   [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
  std::sort(splits.begin(), splits.end());
  auto cell = [](double mean, double sd) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(3) << mean << " ± " << sd;
    return o.str();
  };
  std::ostringstream o;
  for (const auto& split : splits) {
    o << "split: " << split << "\n";
    o << std::left << std::setw(18) << "variant";
    for (const auto& k : kappas) {
      const std::string label = k ? "k=" + kappa_label(*k) : "k=n/a";
      o << " | " << std::setw(17) << (label + " sqrt_pehe") << " | " << std::setw(17) << (label + " ate_err");
    }
    o << "\n";
    for (const auto& v : variants) {
      o << std::left << std::setw(18) << v;
      for (const auto& k : kappas) {
        auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& r) {
          return r.split == split && r.variant == v && r.kappa == k;
        });
        if (it == rows.end()) {
          o << " | " << std::setw(17) << "-" << " | " << std::setw(17) << "-";
        } else {
          // setw counts bytes; pad the two-byte "±" by one.
          o << " | " << std::setw(18) << cell(it->pehe_mean, it->pehe_std) << " | " << std::setw(18)
            << cell(it->ate_mean, it->ate_std);
        }
      }
      o << "\n";
    }
    o << "\n";
  }
  return o.str();
}

inline int cmd_report(const std::vector<std::string>& patterns, const CommonOptions& opt, std::ostream& log) {
  const auto files = expand_patterns(patterns);
  if (files.empty()) throw ArgumentError("no metrics files match the given patterns");
  std::vector<MetricsReport> reports;
  for (const auto& f : files) {
    auto part = read_metrics_jsonl(f);
    reports.insert(reports.end(), part.begin(), part.end());
  }
  const auto rows = aggregate_replications(reports);
  const fs::path out = opt.out.empty() ? fs::path(".") : fs::path(opt.out);
  ensure_dir(out);

  using csv::format_real;
  csv::Writer w(out / "summary.csv");
  w.stream() << "variant,kappa,split,count,pehe_sqrt_mean,pehe_sqrt_std,ate_error_mean,ate_error_std\n";
  for (const auto& r : rows) {
    w.stream() << r.variant << ',' << (r.kappa ? format_real(*r.kappa) : "") << ',' << r.split << ',' << r.count << ','
               << format_real(r.pehe_mean) << ',' << format_real(r.pehe_std) << ',' << format_real(r.ate_mean) << ','
               << format_real(r.ate_std) << '\n';
  }
  w.close();
  const std::string table = render_summary_table(rows);
  csv::Writer t(out / "summary.txt");
  t.stream() << table;
  t.close();
  log << files.size() << " metrics files, " << reports.size() << " reports\n" << table;
  return kOk;
}

inline int cmd_project(const std::string& checkpoint, const std::string& bundle_path, const CommonOptions& opt,
                       std::ostream& log) {
  TrainedModel model = load_checkpoint(checkpoint);
  LoadedBundle b = load_dataset(bundle_path);
  if (model.params.mask.W1.rows() != b.dataset.num_features())
    throw ValidationError("checkpoint expects " + std::to_string(model.params.mask.W1.rows()) + " features, bundle has " +
                          std::to_string(b.dataset.num_features()));
  const fs::path out = opt.out.empty() ? fs::path(checkpoint).parent_path() / "projection.csv" : fs::path(opt.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());

  const EmbeddingProjection p = project_embeddings(predict(model, b.dataset), b.dataset.treatments);
  csv::Writer w(out);
  w.stream() << "x,y,embedding_kind,treatment\n";
  for (long r = 0; r < p.xy.rows(); ++r) {
    w.stream() << csv::format_real(p.xy(r, 0)) << ',' << csv::format_real(p.xy(r, 1)) << ','
               << p.kind[static_cast<size_t>(r)] << ',' << p.treatment[static_cast<size_t>(r)] << '\n';
  }
  w.close();
  log << out.string() << ": " << p.xy.rows() << " rows; centroid separation adjustment "
      << centroid_separation(p, "adjustment") << ", confounder " << centroid_separation(p, "confounder") << '\n';
  return kOk;
}

// ---- entry point ---------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Treatment-effect estimation on networked observational data"};
  app.require_subcommand(1);
  CommonOptions opt;
  std::int64_t seed = 0;
  double kappa = 0.0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "experiment config file");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", opt.out, "output location");
    sub->add_option("--variant", opt.variant, "full | no_disentangle | adjustment_only");
    sub->add_option("--kappa", kappa, "confounding strength");
  };

  std::string bundle, checkpoint, grid;
  std::vector<std::string> patterns;

  auto* synth = app.add_subcommand("synth", "write synthetic bundles for every kappa and replication");
  common(synth);
  auto* train_cmd = app.add_subcommand("train", "train one model on a bundle");
  common(train_cmd);
  train_cmd->add_option("bundle", bundle, "bundle directory")->required();
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a bundle");
  common(eval);
  eval->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("bundle", bundle, "bundle directory")->required();
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over loss weights");
  common(sweep_cmd);
  sweep_cmd->add_option("bundle", bundle, "bundle directory")->required();
  sweep_cmd->add_option("--grid", grid, "axis overrides, e.g. \"w1=1e-4;w2=0.01;w3=1\"");
  auto* report = app.add_subcommand("report", "aggregate metrics files");
  common(report);
  report->add_option("patterns", patterns, "metrics files, directories or glob patterns")->required();
  auto* project = app.add_subcommand("project", "2-D projection of learned embeddings");
  common(project);
  project->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  project->add_option("bundle", bundle, "bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? kOk : kValidation;
  }

  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--kappa")) opt.kappa = kappa;
  }
  if (opt.kappa && *opt.kappa < 0.0) {
    err << "error: --kappa must be non-negative\n";
    return kValidation;
  }

  try {
    if (synth->parsed()) return cmd_synth(opt, log);
    if (train_cmd->parsed()) return cmd_train(bundle, opt, log);
    if (eval->parsed()) return cmd_eval(checkpoint, bundle, opt, log);
    if (sweep_cmd->parsed()) return cmd_sweep(bundle, grid, opt, log);
    if (report->parsed()) return cmd_report(patterns, opt, log);
    if (project->parsed()) return cmd_project(checkpoint, bundle, opt, log);
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}

inline int run(const std::vector<std::string>& args, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"gdc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), log, err);
}

}  // namespace gdc::cli
