#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanefusion/evaluation.hpp"
#include "lanefusion/fusion_graph.hpp"
#include "lanefusion/simulator.hpp"

namespace lanefusion {

/// Raised for malformed log/report files; carries the offending location.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- scenario configuration files ---------------------------------------

nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);

struct ScenarioFile {
  ScenarioConfig scenario;
  nlohmann::json pipeline_overrides;  // the file's optional "pipeline" object
};

/// Loads a scenario JSON file; the optional top-level "pipeline" object
/// is returned verbatim for merging into the pipeline defaults.
ScenarioFile load_scenario_file(const std::filesystem::path& path);

// --- frame logs (one JSON record per line) -------------------------------

void write_frame_log(std::ostream& os, const std::vector<SensorFrame>& frames);

/// Parses a frame log; schema violations raise IoError naming the line.
std::vector<SensorFrame> read_frame_log(std::istream& is);

void write_ground_truth(std::ostream& os, const GroundTruthMap& map);
GroundTruthMap read_ground_truth(std::istream& is);

// --- lane snapshots -------------------------------------------------------

void write_lane_snapshot_line(std::ostream& os, std::size_t frame_index, double t,
                              const FrameResult& result);

// --- graph debugging dump -------------------------------------------------

/// Line-oriented dump: one vertex, edge or switch variable per line
/// (kind, ids, pose, upper information triangle).
void dump_graph(std::ostream& os, const FusionGraph& g);

// --- evaluation reports -----------------------------------------------------

/// Stable column order for CI diffing:
/// distance_m,lane_class,n,mean_m,sigma_m,rmse_m
void write_deviation_csv(std::ostream& os, const DeviationTable& table);

nlohmann::json summary_to_json(const DeviationTable& table, std::size_t frames,
                               std::size_t rejected_measurements);
nlohmann::json runtime_to_json(const RuntimeStats& stats);

std::string format_double(double v);  // shortest round-trip representation

}  // namespace lanefusion
