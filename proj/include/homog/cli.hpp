#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "homog/harness.hpp"

namespace homog::cli {

inline constexpr const char* kCommands[] = {"solve",         "corrector",      "homogenize",
                                            "error-functional", "converge",   "diagnose-caccioppoli",
                                            "diagnose-meyers",  "validate-field"};

/// Parsed TOML as canonical JSON (object keys sorted).
nlohmann::json load_config(const std::string& path);
nlohmann::json parse_config(const std::string& toml_text, const std::string& source_name = "config");

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct GridSpec {
  int nx = 65;
  double T = 0.25;
  double c_par = 0.5;
  double epsilon = 1.0;
};

struct DiagnoseSpec {
  std::vector<double> radii{1.0 / 16, 1.0 / 8};
  SpacePoint center{0.5, 0.5};
  std::optional<double> t_top;
  int samples = 4;
  bool energy = true;
  std::vector<double> deltas{0.05, 0.1, 0.2, 0.5};
  bool refine = false;
};

/// Every table is parsed regardless of the subcommand, so unknown keys are
/// rejected uniformly.
struct RunConfig {
  StudyConfig study;  // field, profiles, epsilons, cell and error-functional options, seed
  GridSpec grid;
  int samples = 1;            // study.samples; >= 2 runs an ensemble
  int rve_L = 8;
  int rve_samples = 8;
  double shift = 0.0;         // solve: lambda_shift
  int store_stride = 1;       // solve
  std::vector<double> ef_epsilons;
  int validate_samples = 4096;
  DiagnoseSpec diagnose;
};

RunConfig parse_run_config(const nlohmann::json& config);

/// Solve/diagnose grid on the unit box: nx nodes per axis, dt <= c_par h^2,
/// with nt - 1 a multiple of `stride`.
SpaceTimeGrid explicit_grid(const RunConfig& config, int stride = 1, int nx_override = 0);

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::pair<std::string, std::string>> columns;  // name, description
  std::vector<std::vector<Cell>> rows;
};

struct Result {
  std::string name;
  nlohmann::json json;
  Table table;
};

struct Provenance {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Deterministic serializations: the CSV starts with a provenance comment
/// line, then the header; the sidecar documents the columns.
std::string render_csv(const Result& result, const Provenance& prov);
std::string render_csv_sidecar(const Result& result, const Provenance& prov);
std::string render_json(const Result& result, const Provenance& prov);

/// Runs a subcommand on a parsed configuration.
Result run_command(const std::string& command, const RunConfig& config);

/// Full entry point: argv parsing, config loading, dispatch, emission. Errors
/// are written to `err` as one JSON object.
/// Exit codes: 0 success, 2 config or constraint error, 3 numeric failure, 4 io error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace homog::cli
