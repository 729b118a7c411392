#pragma once

// File formats of the command-line tool: CSV batches, the JSON state document,
// plot-data export (CSV + sidecar .meta.json) and scenario configs.
//
// Doubles are written in shortest round-trip form; non-finite values become the
// strings "inf", "-inf", "nan" and "-nan" in JSON documents.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ridge_relay/linear_estimator.hpp"
#include "ridge_relay/model_core.hpp"
#include "ridge_relay/sim_harness.hpp"

namespace ridge_relay {

inline constexpr const char* kStateSchema = "ridge-relay-state/1";

// ---------------------------------------------------------------------- CSV

struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;  // rows x header.size()
};

/// Numeric table with a mandatory header row. Empty or non-numeric cells,
/// ragged rows and duplicate column names throw CsvError.
CsvTable parse_csv(const std::string& text, const std::string& source = "<input>");
CsvTable read_csv(const std::filesystem::path& path);

/// Splits off the response column; every other column is a covariate.
Batch batch_from_table(const CsvTable& table, const std::string& response, Family family, int t);

/// Covariate columns only; `response`, when present in the table, is dropped.
std::pair<std::vector<std::string>, Eigen::MatrixXd> design_from_table(
    const CsvTable& table, const std::optional<std::string>& response);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

// -------------------------------------------------------------------- state

nlohmann::json encode_double(double value);
/// Accepts numbers and the non-finite spellings; throws StateError otherwise.
double decode_double(const nlohmann::json& node);

nlohmann::json to_json(const CoefficientVector& vector);
nlohmann::json to_json(const SelectionReport& report);
nlohmann::json to_json(const EstimatorState& state);

CoefficientVector coefficients_from_json(const nlohmann::json& node);
SelectionReport selection_from_json(const nlohmann::json& node);
/// Throws StateError on schema mismatch or broken invariants.
EstimatorState state_from_json(const nlohmann::json& node);

std::string serialize_state(const EstimatorState& state);
EstimatorState parse_state(const std::string& text);

/// temp file + fsync + rename in the target directory.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

void write_state(const std::filesystem::path& path, const EstimatorState& state);
EstimatorState read_state(const std::filesystem::path& path);

/// Advisory lock on `<state>.lock`, held for the object's lifetime. Throws
/// LockError when another process holds it.
class StateLock {
public:
    explicit StateLock(const std::filesystem::path& state_path);
    ~StateLock();
    StateLock(const StateLock&) = delete;
    StateLock& operator=(const StateLock&) = delete;

private:
    int fd_ = -1;
};

/// Test hook: raises SIGKILL when RIDGE_RELAY_KILL_POINT equals `point`.
void maybe_kill_at(const char* point);

// ---------------------------------------------------------------- plot data

struct PlotDataset {
    std::string name;
    std::vector<std::pair<std::string, std::vector<double>>> columns;
    std::map<std::string, std::string> metadata;

    void add_column(std::string column, std::vector<double> values);
    std::size_t rows() const { return columns.empty() ? 0 : columns.front().second.size(); }
    /// Throws ValidationError on ragged series or duplicate names.
    void validate() const;
    std::string to_csv() const;
    std::string metadata_json() const;
};

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.meta.json`.
void write_plot_dataset(const std::filesystem::path& dir, const PlotDataset& dataset);

/// Long format: one row per (t, tracked coordinate) with the 5/50/95% quantiles.
PlotDataset quantile_dataset(const TrajectoryResult& result);
/// t plus one mean-loss column per trajectory.
PlotDataset mse_dataset(const std::string& name, const std::vector<const TrajectoryResult*>& results);
PlotDataset cv_curve_dataset(const std::string& name, const SelectionReport& report);
PlotDataset moment_dataset(const std::string& name, const MomentReport& report);

// ----------------------------------------------------------------- scenario

/// Optional "preset" (study1_paper, study1_reduced, study2_paper, study2_reduced,
/// study2_paper_empty, study2_reduced_empty) followed by field overrides.
ScenarioConfig scenario_from_json(const nlohmann::json& node);
nlohmann::json to_json(const ScenarioConfig& config);
ScenarioConfig read_scenario(const std::filesystem::path& path);

}  // namespace ridge_relay
