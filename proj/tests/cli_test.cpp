#include "test_util.hpp"

#include "gdc/cli.hpp"

#include <sstream>

using namespace gdc;
using gdc::test::read_file;
using gdc::test::TempDir;
using gdc::test::write_file;

namespace {

constexpr const char* kSmallConfig = R"([synthesis]
n_units = 60
n_features = 8
n_topics = 3
edge_budget = 180
[model]
hidden_dim = 6
mask_hidden = 4
head_hidden = 4
[train]
epochs = 3
[experiment]
kappas = 0.5, 1, 2
replications = 2
)";

int run_quiet(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream log, err;
  const int code = cli::run(args, log, err);
  if (err_text) *err_text = err.str();
  return code;
}

int count_lines(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

struct Workspace {
  TempDir dir;
  fs::path config;
  fs::path root;

  explicit Workspace(const std::string& extra = "") {
    config = dir / "exp.ini";
    root = dir / "runs";
    write_file(config, std::string(kSmallConfig) + extra);
  }

  fs::path bundle(const std::string& kappa = "2", int rep = 0) const {
    return root / ("kappa_" + kappa) / ("rep_" + std::to_string(rep));
  }
};

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  ExperimentConfig c;
  const std::string text = serialize_config(c);
  EXPECT_EQ(serialize_config(parse_config_string(text)), text);
}

TEST(Config, ParsesAndRoundTripsOverrides) {
  auto c = parse_config_string(std::string(kSmallConfig) + "[sweep]\nw1 = 0.5\n[sinkhorn]\nepsilon = 0.2 # comment\n");
  EXPECT_EQ(c.synthesis.n_units, 60);
  EXPECT_EQ(c.replications, 2);
  EXPECT_EQ(c.kappas, (std::vector<double>{0.5, 1, 2}));
  EXPECT_EQ(c.sweep.adjustment, std::vector<double>{0.5});
  EXPECT_EQ(c.train.sinkhorn.epsilon, 0.2);
  auto again = parse_config_string(serialize_config(c));
  EXPECT_EQ(serialize_config(again), serialize_config(c));
}

TEST(Config, RejectsUnknownAndMalformed) {
  EXPECT_THROW(parse_config_string("[train]\nepoch = 3\n"), ArgumentError);
  EXPECT_THROW(parse_config_string("[nope]\nx = 1\n"), ArgumentError);
  EXPECT_THROW(parse_config_string("epochs = 3\n"), ArgumentError);
  EXPECT_THROW(parse_config_string("[train]\nepochs = three\n"), ArgumentError);
  EXPECT_THROW(parse_config_string("[train]\nepochs = 0\n"), ArgumentError);
  EXPECT_THROW(load_config("/nonexistent/exp.ini"), IoError);
}

TEST(GridSpec, OverridesAxes) {
  SweepGrid g;
  cli::apply_grid_spec("w1=1e-4; w3=1,2", g);
  EXPECT_EQ(g.adjustment, std::vector<double>{1e-4});
  EXPECT_EQ(g.confounder.size(), 3u);
  EXPECT_EQ(g.cf_confounder, (std::vector<double>{1, 2}));
  EXPECT_THROW(cli::apply_grid_spec("w4=1", g), ArgumentError);
}

TEST(Cli, SynthWritesEveryKappaAndReplication) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string()}), 0);
  int bundles = 0;
  for (const auto& e : fs::recursive_directory_iterator(ws.root))
    if (e.is_directory() && e.path().filename().string().rfind("rep_", 0) == 0) ++bundles;
  EXPECT_EQ(bundles, 6);
  EXPECT_TRUE(fs::exists(ws.root / "config.ini"));
  for (const char* f : {"features.csv", "edges.csv", "treatments.csv", "outcomes.csv", "potential.csv", "meta.csv",
                        "propensities.csv", "topics.csv"})
    EXPECT_TRUE(fs::exists(ws.bundle("0.5", 1) / f)) << f;
  auto loaded = load_dataset(ws.bundle("1", 0));
  EXPECT_EQ(loaded.dataset.num_units(), 60);
  EXPECT_TRUE(loaded.truth.has_value());
}

TEST(Cli, SynthSingleKappaOverride) {
  Workspace ws("[experiment]\nreplications = 1\n");
  // Repeated section: later values win.
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "1.5"}), 0);
  EXPECT_TRUE(fs::exists(ws.bundle("1.5", 0)));
  EXPECT_FALSE(fs::exists(ws.bundle("1.5", 1)));
  EXPECT_FALSE(fs::exists(ws.bundle("2", 0)));
}

TEST(Cli, SynthIsByteIdenticalOnRerun) {
  Workspace ws;
  const fs::path other = ws.dir / "again";
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", other.string(), "--kappa", "2"}), 0);
  for (const char* f : {"features.csv", "edges.csv", "treatments.csv", "outcomes.csv", "potential.csv"})
    EXPECT_EQ(read_file(ws.bundle() / f), read_file(other / "kappa_2" / "rep_0" / f)) << f;
}

TEST(Cli, TrainWritesArtifacts) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  ASSERT_EQ(run_quiet({"train", ws.bundle().string(), "--config", ws.config.string(), "--seed", "4"}), 0);
  const fs::path out = ws.bundle() / "full";
  EXPECT_EQ(count_lines(out / "train_log.jsonl"), 3);
  EXPECT_TRUE(fs::exists(out / "checkpoint.txt"));
  auto reports = cli::read_metrics_jsonl(out / "metrics.jsonl");
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].variant, "full");
  EXPECT_EQ(reports[0].seed, 4);
  ASSERT_TRUE(reports[0].kappa.has_value());
  EXPECT_EQ(*reports[0].kappa, 2.0);
  EXPECT_EQ(read_file(out / "metrics.csv").substr(0, 44), "variant,kappa,seed,split,pehe_sqrt,ate_error");
}

TEST(Cli, TrainVariantAndEvalAgree) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  const fs::path out = ws.dir / "nd";
  ASSERT_EQ(run_quiet({"train", ws.bundle().string(), "--config", ws.config.string(), "--variant", "no_disentangle",
                       "--out", out.string()}),
            0);
  auto trained = cli::read_metrics_jsonl(out / "metrics.jsonl");
  EXPECT_EQ(trained[0].variant, "no_disentangle");
  ASSERT_EQ(run_quiet({"eval", (out / "checkpoint.txt").string(), ws.bundle().string(), "--config",
                       ws.config.string()}),
            0);
  auto evaluated = cli::read_metrics_jsonl(out / "eval" / "metrics.jsonl");
  ASSERT_EQ(evaluated.size(), 2u);
  EXPECT_EQ(evaluated[1].pehe_sqrt, trained[1].pehe_sqrt);
  EXPECT_EQ(evaluated[1].ate_error, trained[1].ate_error);
}

TEST(Cli, TrainRerunGivesIdenticalMetrics) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  const fs::path a = ws.dir / "a", b = ws.dir / "b";
  ASSERT_EQ(run_quiet({"train", ws.bundle().string(), "--config", ws.config.string(), "--out", a.string()}), 0);
  ASSERT_EQ(run_quiet({"train", ws.bundle().string(), "--config", ws.config.string(), "--out", b.string()}), 0);
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a / "checkpoint.txt"), read_file(b / "checkpoint.txt"));
}

TEST(Cli, CorruptedBundleFails) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  std::string features = read_file(ws.bundle() / "features.csv");
  features.replace(features.rfind(','), 1, ",nan,");
  write_file(ws.bundle() / "features.csv", features);
  std::string err;
  EXPECT_NE(run_quiet({"train", ws.bundle().string(), "--config", ws.config.string()}, &err), 0);
  EXPECT_FALSE(err.empty());
}

TEST(Cli, ExitCodes) {
  Workspace ws;
  EXPECT_EQ(run_quiet({"train", (ws.dir / "missing").string()}), cli::kIo);
  EXPECT_EQ(run_quiet({"synth", "--config", (ws.dir / "missing.ini").string()}), cli::kIo);
  EXPECT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  EXPECT_EQ(run_quiet({"train", ws.bundle().string(), "--variant", "bogus"}), cli::kValidation);
  EXPECT_EQ(run_quiet({"synth", "--kappa", "-1"}), cli::kValidation);
  EXPECT_EQ(run_quiet({"frobnicate"}), cli::kValidation);
  EXPECT_EQ(run_quiet({"--help"}), cli::kOk);
}

TEST(Cli, ReportAggregatesReplications) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  for (int rep = 0; rep < 2; ++rep)
    ASSERT_EQ(run_quiet({"train", ws.bundle("2", rep).string(), "--config", ws.config.string()}), 0);
  const fs::path out = ws.dir / "report";
  ASSERT_EQ(run_quiet({"report", ws.root.string(), "--out", out.string()}), 0);
  auto table = csv::read(out / "summary.csv");
  ASSERT_EQ(table.rows.size(), 2u);  // train and test
  EXPECT_EQ(table.rows[0][0], "full");
  EXPECT_EQ(table.rows[0][3], "2");
  const std::string text = read_file(out / "summary.txt");
  EXPECT_NE(text.find("±"), std::string::npos);
  EXPECT_NE(text.find("k=2"), std::string::npos);
}

TEST(Cli, ReportSingleRunHasZeroStd) {
  std::vector<MetricsReport> reports{{0.7, 0.1, "test", 3, "full", 1.0}};
  auto rows = aggregate_replications(reports);
  EXPECT_EQ(rows[0].pehe_std, 0.0);
  const std::string table = cli::render_summary_table(rows);
  EXPECT_NE(table.find("0.700 ± 0.000"), std::string::npos);
}

TEST(Cli, ReportWithoutMatchesFails) {
  TempDir dir;
  EXPECT_NE(run_quiet({"report", (dir / "nothing*.jsonl").string(), "--out", (dir / "r").string()}), 0);
}

TEST(Cli, SweepSingletonGrid) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  ASSERT_EQ(run_quiet({"sweep", ws.bundle().string(), "--config", ws.config.string(), "--grid", "w1=1e-4;w2=0.01;w3=1"}),
            0);
  const fs::path out = ws.bundle() / "sweep";
  EXPECT_EQ(count_lines(out / "sweep.csv"), 2);
  const std::string summary = read_file(out / "sweep_summary.txt");
  EXPECT_NE(summary.find("rows 1"), std::string::npos);
  EXPECT_NE(summary.find("best w1=" + csv::format_real(1e-4) + " w2=0.01 w3=1 "), std::string::npos);
}

TEST(Cli, ProjectWritesOneRowPerEmbedding) {
  Workspace ws;
  ASSERT_EQ(run_quiet({"synth", "--config", ws.config.string(), "--out", ws.root.string(), "--kappa", "2"}), 0);
  ASSERT_EQ(run_quiet({"train", ws.bundle().string(), "--config", ws.config.string()}), 0);
  const fs::path ckpt = ws.bundle() / "full" / "checkpoint.txt";
  ASSERT_EQ(run_quiet({"project", ckpt.string(), ws.bundle().string()}), 0);
  auto table = csv::read(ws.bundle() / "full" / "projection.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"x", "y", "embedding_kind", "treatment"}));

  auto model = load_checkpoint(ckpt);
  auto ds = load_dataset(ws.bundle()).dataset;
  auto out = predict(model, ds);
  long with_opp = 0;
  for (bool b : out.has_opp) with_opp += b ? 1 : 0;
  EXPECT_EQ(static_cast<long>(table.rows.size()), 2 * 60 + with_opp);
}
