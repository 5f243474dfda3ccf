#include "spit/harness/io.hpp"

#include <fstream>

#include "spit/error.hpp"

namespace spit::harness {

namespace {

nlohmann::json columns_to_json(const Matrix<double>& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    nlohmann::json col = nlohmann::json::array();
    for (Eigen::Index d = 0; d < m.rows(); ++d) col.push_back(m(d, k));
    out.push_back(std::move(col));
  }
  return out;
}

Matrix<double> columns_from_json(const nlohmann::json& j, int rows, int cols, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != cols) throw Error(std::string("bad shape for ") + what);
  Matrix<double> m(rows, cols);
  for (int k = 0; k < cols; ++k) {
    const auto& col = j[static_cast<std::size_t>(k)];
    if (!col.is_array() || static_cast<int>(col.size()) != rows) throw Error(std::string("bad shape for ") + what);
    for (int d = 0; d < rows; ++d) m(d, k) = col[static_cast<std::size_t>(d)].get<double>();
  }
  return m;
}

}  // namespace

nlohmann::json state_to_json(const DynamicsState<double>& ds) {
  const auto& b = ds.packing.basis().matrix();
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < b.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < b.cols(); ++c) row.push_back(b(r, c));
    rows.push_back(std::move(row));
  }
  return {{"format_version", kStateFormatVersion},
          {"n", ds.packing.dim()},
          {"N", ds.packing.size()},
          {"x", columns_to_json(ds.packing.positions())},
          {"B", rows},
          {"v", columns_to_json(ds.v)}};
}

DynamicsState<double> state_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != kStateFormatVersion) throw Error("unsupported state format version");
  const int n = j.at("n").get<int>();
  const int count = j.at("N").get<int>();
  if (n < 1 || count < 1) throw Error("state dimensions must be positive");
  const Matrix<double> x = columns_from_json(j.at("x"), n, count, "x");
  Matrix<double> b = columns_from_json(j.at("B"), n, n, "B").transpose();
  PackingState<double> packing(x, LatticeBasis<double>(b));
  auto ds = make_dynamics_state(packing, 1.0, 1.0, 0.0);
  if (j.contains("v")) ds.v = gauge_project(columns_from_json(j.at("v"), n, count, "v"));
  return ds;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

void write_state(const std::filesystem::path& path, const DynamicsState<double>& ds) {
  write_json(path, state_to_json(ds));
}

DynamicsState<double> read_state(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open state file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed state file " + path.string() + ": " + e.what());
  }
  return state_from_json(j);
}

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path.string().c_str(), "w");
  if (!file_) throw Error("cannot open " + path.string() + " for writing");
  std::fprintf(file_, "%s\n", kCsvHeader);
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(file_);
}

void CsvWriter::write(const TrajectoryRow<double>& row) {
  std::fprintf(file_, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%s\n", row.step, row.energy, row.barrier,
               row.kinetic, row.min_slack, row.lambda2, row.dt, row.backtracked, row.nudged ? 1 : 0,
               std::string(to_string(row.projection)).c_str());
}

}  // namespace spit::harness
