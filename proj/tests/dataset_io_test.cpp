#include "test_util.hpp"

#include <unistd.h>

using namespace gdc;
using gdc::test::TempDir;
using gdc::test::write_file;

namespace {

ObservationalDataset four_node() {
  ObservationalDataset ds;
  ds.graph = Graph(4, {{0, 1}, {1, 2}});
  ds.features = (Matrix(4, 3) << 0.1, 0.2, 0.3, 1.0 / 3.0, 0, 5, 1e-17, 2.5, -1, 7, 8, 9).finished();
  ds.treatments = {0, 1, 1, 0};
  ds.outcomes = (Vector(4) << 1.5, -2.25, 3.0 / 7.0, 0).finished();
  return ds;
}

void write_minimal_bundle(const fs::path& dir) {
  write_file(dir / "edges.csv", "src,dst\n0,1\n1,2\n");
  write_file(dir / "features.csv", "f0,f1,f2\n1,0,0\n0,1,0\n0,0,1\n1,1,1\n");
  write_file(dir / "treatments.csv", "t\n0\n1\n1\n0\n");
  write_file(dir / "outcomes.csv", "y\n1\n2\n3\n4\n");
}

}  // namespace

TEST(DatasetIo, LoadsMinimalBundle) {
  TempDir dir;
  write_minimal_bundle(dir.path());
  auto b = load_dataset(dir.path());
  const std::vector<std::vector<int>> expected{{1}, {0, 2}, {1}, {}};
  EXPECT_EQ(b.dataset.graph.neighbor_lists(), expected);
  EXPECT_EQ(b.dataset.num_features(), 3);
  EXPECT_FALSE(b.truth.has_value());
}

TEST(DatasetIo, NonBinaryTreatmentRejected) {
  TempDir dir;
  write_minimal_bundle(dir.path());
  write_file(dir / "treatments.csv", "t\n0\n2\n1\n0\n");
  EXPECT_THROW(load_dataset(dir.path()), ValidationError);
}

TEST(DatasetIo, MissingFileNamed) {
  TempDir dir;
  write_minimal_bundle(dir.path());
  fs::remove(dir / "outcomes.csv");
  try {
    load_dataset(dir.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("outcomes.csv"), std::string::npos);
  }
}

TEST(DatasetIo, DimensionMismatchReportsCounts) {
  TempDir dir;
  write_minimal_bundle(dir.path());
  write_file(dir / "outcomes.csv", "y\n1\n2\n3\n");
  try {
    load_dataset(dir.path());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("outcomes 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4 nodes"), std::string::npos) << msg;
  }
}

TEST(DatasetIo, CorruptValueNamesFileAndRow) {
  TempDir dir;
  write_minimal_bundle(dir.path());
  write_file(dir / "features.csv", "f0,f1,f2\n1,0,0\n0,abc,0\n0,0,1\n1,1,1\n");
  try {
    load_dataset(dir.path());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("features.csv"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, RoundTripIsExact) {
  TempDir dir;
  auto ds = four_node();
  auto truth = GroundTruth::from_potentials((Vector(4) << 0.1, 0.2, 0.3, 1e300).finished(),
                                            (Vector(4) << 1.0 / 3.0, -0.0, 2.0, -5e-310).finished());
  save_dataset(ds, truth, dir.path());
  auto b = load_dataset(dir.path());
  EXPECT_EQ(b.dataset.graph.edges(), ds.graph.edges());
  EXPECT_EQ(b.dataset.features, ds.features);
  EXPECT_EQ(b.dataset.treatments, ds.treatments);
  EXPECT_EQ(b.dataset.outcomes, ds.outcomes);
  ASSERT_TRUE(b.truth);
  EXPECT_EQ(b.truth->tau, truth.tau);
  EXPECT_EQ(b.truth->y0, truth.y0);
}

TEST(DatasetIo, EdgeSetPreservedRegardlessOfOrder) {
  TempDir dir;
  write_minimal_bundle(dir.path());
  write_file(dir / "edges.csv", "src,dst\n2,1\n1,0\n0,1\n");
  auto b = load_dataset(dir.path());
  EXPECT_EQ(b.dataset.graph.edges(), (std::vector<Edge>{{0, 1}, {1, 2}}));
}

TEST(DatasetIo, ExternalIdsPersisted) {
  auto remapped = remap_edges({{"alice", "bob"}, {"bob", "carol"}, {"dave", "alice"}});
  EXPECT_EQ(remapped.external_ids, (std::vector<std::string>{"alice", "bob", "carol", "dave"}));
  EXPECT_EQ(remapped.edges, (std::vector<Edge>{{0, 1}, {1, 2}, {3, 0}}));

  TempDir dir;
  auto ds = four_node();
  save_dataset(ds, std::nullopt, dir.path(), remapped.external_ids, {{"kappa", "2"}});
  auto b = load_dataset(dir.path());
  EXPECT_EQ(b.external_ids, remapped.external_ids);
  EXPECT_EQ(b.meta.at("kappa"), "2");
}

TEST(DatasetIo, UnwritableDirectoryIsIoError) {
  if (::geteuid() == 0) {
    // root ignores permission bits; use a path whose parent is a regular file instead
    TempDir dir;
    write_file(dir / "blocker", "x");
    EXPECT_THROW(save_dataset(four_node(), std::nullopt, dir / "blocker" / "bundle"), IoError);
    return;
  }
  TempDir dir;
  fs::permissions(dir.path(), fs::perms::owner_read | fs::perms::owner_exec);
  EXPECT_THROW(save_dataset(four_node(), std::nullopt, dir / "bundle"), IoError);
  fs::permissions(dir.path(), fs::perms::owner_all);
}

TEST(Csv, FormatRealRoundTrips) {
  Rng rng = make_rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double v = standard_normal(rng) * std::pow(10.0, static_cast<int>(uniform01(rng) * 40) - 20);
    EXPECT_EQ(csv::parse_real(csv::format_real(v), "mem", 0), v);
  }
}
