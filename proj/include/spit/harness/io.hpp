#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "spit/dynamics.hpp"
#include "spit/trajectory.hpp"

namespace spit::harness {

inline constexpr int kStateFormatVersion = 1;

/// {"format_version": 1, "n": n, "N": N, "x": [[...] per sphere],
///  "B": [[...] per row], "v": [[...] per sphere]}. Columns of B are the
/// lattice generators.
nlohmann::json state_to_json(const DynamicsState<double>& ds);
DynamicsState<double> state_from_json(const nlohmann::json& j);

void write_state(const std::filesystem::path& path, const DynamicsState<double>& ds);
DynamicsState<double> read_state(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Shortest round-trip decimal form ("%.17g").
std::string format_real(double value);

/// Trajectory CSV with the fixed column order
/// step,E,U,kinetic,min_slack,lambda2,dt,backtracked,nudged,projection.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void write(const TrajectoryRow<double>& row);

 private:
  std::FILE* file_ = nullptr;
};

inline constexpr const char* kCsvHeader = "step,E,U,kinetic,min_slack,lambda2,dt,backtracked,nudged,projection";

}  // namespace spit::harness
