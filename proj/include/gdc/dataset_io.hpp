#pragma once

// CSV bundle format for observational datasets.
//
//   edges.csv       src,dst
//   features.csv    f0,...,f{K-1}   (one row per unit)
//   treatments.csv  t
//   outcomes.csv    y
//   potential.csv   y0,y1           (optional, ground truth)
//   idmap.csv       internal,external (optional)
//   meta.csv        key,value       (optional, free-form provenance)

#include "gdc/graph.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gdc {

namespace fs = std::filesystem;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    size_t start = cell.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? std::string() : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ValidationError(path.filename().string() + " line " + std::to_string(table.rows.size() + 2) +
                            ": expected " + std::to_string(table.header.size()) + " columns, got " +
                            std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ValidationError(path.filename().string() + " is empty");
  return table;
}

inline double parse_real(const std::string& s, const fs::path& file, size_t row) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError(file.filename().string() + " row " + std::to_string(row + 1) + ": '" + s +
                          "' is not a real number");
  }
  return v;
}

inline long parse_int(const std::string& s, const fs::path& file, size_t row) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError(file.filename().string() + " row " + std::to_string(row + 1) + ": '" + s +
                          "' is not an integer");
  }
  return v;
}

// Shortest text that parses back to the identical double.
inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void expect_header(const CsvTable& t, const std::vector<std::string>& cols, const fs::path& file) {
  if (t.header != cols) {
    std::string want;
    for (const auto& c : cols) want += (want.empty() ? "" : ",") + c;
    throw ValidationError(file.filename().string() + ": expected header '" + want + "'");
  }
}

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  std::ofstream& stream() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

inline void write_matrix(const fs::path& path, const Matrix& m, const std::string& prefix) {
  Writer w(path);
  auto& out = w.stream();
  for (long c = 0; c < m.cols(); ++c) out << (c ? "," : "") << prefix << c;
  out << '\n';
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_real(m(r, c));
    out << '\n';
  }
  w.close();
}

inline Matrix read_matrix(const fs::path& path, const std::string& prefix) {
  CsvTable t = read(path);
  for (size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c] != prefix + std::to_string(c)) {
      throw ValidationError(path.filename().string() + ": column " + std::to_string(c) + " should be " + prefix +
                            std::to_string(c));
    }
  }
  Matrix m(static_cast<long>(t.rows.size()), static_cast<long>(t.header.size()));
  for (size_t r = 0; r < t.rows.size(); ++r)
    for (size_t c = 0; c < t.header.size(); ++c)
      m(static_cast<long>(r), static_cast<long>(c)) = parse_real(t.rows[r][c], path, r);
  return m;
}

inline void write_column(const fs::path& path, const std::string& name, const Vector& v) {
  Writer w(path);
  w.stream() << name << '\n';
  for (long i = 0; i < v.size(); ++i) w.stream() << format_real(v[i]) << '\n';
  w.close();
}

inline Vector read_column(const fs::path& path, const std::string& name) {
  CsvTable t = read(path);
  expect_header(t, {name}, path);
  Vector v(static_cast<long>(t.rows.size()));
  for (size_t r = 0; r < t.rows.size(); ++r) v[static_cast<long>(r)] = parse_real(t.rows[r][0], path, r);
  return v;
}

}  // namespace csv

struct LoadedBundle {
  ObservationalDataset dataset;
  std::optional<GroundTruth> truth;
  std::vector<std::string> external_ids;  // empty unless idmap.csv exists
  std::map<std::string, std::string> meta;
};

inline LoadedBundle load_dataset(const fs::path& dir) {
  const auto require = [&](const char* name) {
    fs::path p = dir / name;
    if (!fs::exists(p)) throw IoError("bundle " + dir.string() + " is missing " + name);
    return p;
  };
  LoadedBundle bundle;
  auto& ds = bundle.dataset;

  ds.features = csv::read_matrix(require("features.csv"), "f");
  const auto n = static_cast<int>(ds.features.rows());

  fs::path tpath = require("treatments.csv");
  CsvTable tt = csv::read(tpath);
  csv::expect_header(tt, {"t"}, tpath);
  for (size_t r = 0; r < tt.rows.size(); ++r) {
    const long t = csv::parse_int(tt.rows[r][0], tpath, r);
    if (t != 0 && t != 1) {
      throw ValidationError("treatments.csv row " + std::to_string(r + 1) + ": treatment " + std::to_string(t) +
                            " is not binary");
    }
    ds.treatments.push_back(static_cast<int>(t));
  }
  ds.outcomes = csv::read_column(require("outcomes.csv"), "y");

  fs::path epath = require("edges.csv");
  CsvTable et = csv::read(epath);
  csv::expect_header(et, {"src", "dst"}, epath);
  std::vector<Edge> edges;
  edges.reserve(et.rows.size());
  for (size_t r = 0; r < et.rows.size(); ++r) {
    edges.emplace_back(static_cast<int>(csv::parse_int(et.rows[r][0], epath, r)),
                       static_cast<int>(csv::parse_int(et.rows[r][1], epath, r)));
  }
  if (n <= 0) throw ValidationError("features.csv has no rows");
  ds.graph = Graph(n, edges);
  ds.validate();

  if (fs::path p = dir / "potential.csv"; fs::exists(p)) {
    CsvTable pt = csv::read(p);
    csv::expect_header(pt, {"y0", "y1"}, p);
    if (static_cast<int>(pt.rows.size()) != n) {
      throw ValidationError("potential.csv has " + std::to_string(pt.rows.size()) + " rows, expected " +
                            std::to_string(n));
    }
    Vector y0(n), y1(n);
    for (size_t r = 0; r < pt.rows.size(); ++r) {
      y0[static_cast<long>(r)] = csv::parse_real(pt.rows[r][0], p, r);
      y1[static_cast<long>(r)] = csv::parse_real(pt.rows[r][1], p, r);
    }
    bundle.truth = GroundTruth::from_potentials(std::move(y0), std::move(y1));
  }
  if (fs::path p = dir / "idmap.csv"; fs::exists(p)) {
    CsvTable it = csv::read(p);
    csv::expect_header(it, {"internal", "external"}, p);
    bundle.external_ids.assign(static_cast<size_t>(n), {});
    for (size_t r = 0; r < it.rows.size(); ++r) {
      const long id = csv::parse_int(it.rows[r][0], p, r);
      if (id < 0 || id >= n) throw ValidationError("idmap.csv row " + std::to_string(r + 1) + ": id out of range");
      bundle.external_ids[static_cast<size_t>(id)] = it.rows[r][1];
    }
  }
  if (fs::path p = dir / "meta.csv"; fs::exists(p)) {
    CsvTable mt = csv::read(p);
    csv::expect_header(mt, {"key", "value"}, p);
    for (auto& row : mt.rows) bundle.meta[row[0]] = row[1];
  }
  return bundle;
}

inline void save_dataset(const ObservationalDataset& ds, const std::optional<GroundTruth>& truth, const fs::path& dir,
                         const std::vector<std::string>& external_ids = {},
                         const std::map<std::string, std::string>& meta = {}) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  {
    csv::Writer w(dir / "edges.csv");
    w.stream() << "src,dst\n";
    for (auto [a, b] : ds.graph.edges()) w.stream() << a << ',' << b << '\n';
    w.close();
  }
  csv::write_matrix(dir / "features.csv", ds.features, "f");
  {
    csv::Writer w(dir / "treatments.csv");
    w.stream() << "t\n";
    for (int t : ds.treatments) w.stream() << t << '\n';
    w.close();
  }
  csv::write_column(dir / "outcomes.csv", "y", ds.outcomes);
  if (truth) {
    csv::Writer w(dir / "potential.csv");
    w.stream() << "y0,y1\n";
    for (long i = 0; i < truth->y0.size(); ++i)
      w.stream() << csv::format_real(truth->y0[i]) << ',' << csv::format_real(truth->y1[i]) << '\n';
    w.close();
  }
  if (!external_ids.empty()) {
    csv::Writer w(dir / "idmap.csv");
    w.stream() << "internal,external\n";
    for (size_t i = 0; i < external_ids.size(); ++i) w.stream() << i << ',' << external_ids[i] << '\n';
    w.close();
  }
  if (!meta.empty()) {
    csv::Writer w(dir / "meta.csv");
    w.stream() << "key,value\n";
    for (const auto& [k, v] : meta) w.stream() << k << ',' << v << '\n';
    w.close();
  }
}

// Maps arbitrary external node labels onto contiguous ids in first-seen order.
struct RemappedEdges {
  std::vector<Edge> edges;
  std::vector<std::string> external_ids;
};

inline RemappedEdges remap_edges(const std::vector<std::pair<std::string, std::string>>& labeled) {
  RemappedEdges out;
  std::map<std::string, int> ids;
  auto id_of = [&](const std::string& label) {
    auto [it, inserted] = ids.emplace(label, static_cast<int>(out.external_ids.size()));
    if (inserted) out.external_ids.push_back(label);
    return it->second;
  };
  for (const auto& [a, b] : labeled) {
    const int ia = id_of(a);
    const int ib = id_of(b);
    out.edges.emplace_back(ia, ib);
  }
  return out;
}

}  // namespace gdc
