#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "lanefusion/clothoid.hpp"
#include "lanefusion/config.hpp"
#include "lanefusion/simulator.hpp"

namespace lanefusion {

/// Streaming first/second moments of one (distance, lane class) cell.
struct DeviationCell {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;     // sum of squared deviations from the mean
  double sumsq = 0.0;  // sum of squared samples (exact RMSE)

  void push(double v);
  static DeviationCell merged(const DeviationCell& a, const DeviationCell& b);
  double sigma() const;  // population standard deviation
  double rmse() const;
};

struct LaneDeviation {
  std::size_t boundary = 0;  // matched true boundary index
  bool ego = false;
  std::vector<std::optional<double>> dev;  // per sample distance
};

struct FrameDeviations {
  std::vector<LaneDeviation> lanes;
  std::size_t unmatched = 0;
};

/// Lateral deviation of every estimated lane clothoid against the local
/// ground-truth boundaries, sampled every sample_step_m up to
/// max_distance_m. Lanes are matched to the nearest boundary at x = 0
/// (gate match_gate_m); the two boundaries bracketing the vehicle are
/// the ego class, everything else adjacent.
FrameDeviations frame_deviations(const std::vector<Clothoid>& lanes,
                                 const std::vector<LocalBoundary>& truth,
                                 const EvaluationConfig& cfg);

class DeviationTable {
 public:
  explicit DeviationTable(const EvaluationConfig& cfg);

  void add(const FrameDeviations& frame);
  void merge(const DeviationTable& other);

  const std::vector<double>& distances() const { return distances_; }
  const DeviationCell& cell(std::size_t distance_index, bool ego) const;
  std::size_t unmatched_lanes() const { return unmatched_; }

 private:
  std::vector<double> distances_;
  std::vector<DeviationCell> ego_;
  std::vector<DeviationCell> adjacent_;
  std::size_t unmatched_ = 0;
};

struct RuntimeStats {
  std::vector<double> per_frame_ms;
  double median_ms() const;
  double mean_ms() const;
  double p90_ms() const;
  double max_ms() const;
};

class Pipeline;
struct FrameResult;

/// Wall-clock duration of one full pipeline step, in milliseconds.
double measure_frame_runtime(Pipeline& pipeline, const SensorFrame& frame,
                             FrameResult* result = nullptr);

}  // namespace lanefusion
