#include "lanefusion/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lanefusion/pipeline.hpp"

namespace lanefusion {

void DeviationCell::push(double v) {
  ++n;
  const double d = v - mean;
  mean += d / static_cast<double>(n);
  m2 += d * (v - mean);
  sumsq += v * v;
}

DeviationCell DeviationCell::merged(const DeviationCell& a, const DeviationCell& b) {
  if (a.n == 0) return b;
  if (b.n == 0) return a;
  DeviationCell out;
  out.n = a.n + b.n;
  const double d = b.mean - a.mean;
  out.mean = a.mean + d * static_cast<double>(b.n) / static_cast<double>(out.n);
  out.m2 = a.m2 + b.m2 +
           d * d * static_cast<double>(a.n) * static_cast<double>(b.n) /
               static_cast<double>(out.n);
  out.sumsq = a.sumsq + b.sumsq;
  return out;
}

double DeviationCell::sigma() const {
  return n == 0 ? 0.0 : std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
}

double DeviationCell::rmse() const {
  return n == 0 ? 0.0 : std::sqrt(sumsq / static_cast<double>(n));
}

FrameDeviations frame_deviations(const std::vector<Clothoid>& lanes,
                                 const std::vector<LocalBoundary>& truth,
                                 const EvaluationConfig& cfg) {
  FrameDeviations out;

  std::vector<std::optional<double>> truth_y0(truth.size());
  for (std::size_t b = 0; b < truth.size(); ++b) {
    truth_y0[b] = boundary_lateral_at(truth[b], 0.0);
  }

  // Ego class: the two boundaries bracketing the vehicle (y = 0).
  std::optional<std::size_t> below, above;
  for (std::size_t b = 0; b < truth.size(); ++b) {
    if (!truth_y0[b]) continue;
    if (*truth_y0[b] <= 0.0 && (!below || *truth_y0[b] > *truth_y0[*below])) {
      below = b;
    }
    if (*truth_y0[b] > 0.0 && (!above || *truth_y0[b] < *truth_y0[*above])) {
      above = b;
    }
  }

  std::vector<double> distances;
  for (double d = 0.0; d <= cfg.max_distance_m + 1e-9; d += cfg.sample_step_m) {
    distances.push_back(d);
  }

  for (const Clothoid& lane : lanes) {
    double best = cfg.match_gate_m;
    std::optional<std::size_t> match;
    for (std::size_t b = 0; b < truth.size(); ++b) {
      if (!truth_y0[b]) continue;
      const double d = std::abs(lane.y0 - *truth_y0[b]);
      if (d < best) {
        best = d;
        match = b;
      }
    }
    if (!match) {
      ++out.unmatched;
      continue;
    }
    LaneDeviation dev;
    dev.boundary = *match;
    dev.ego = (below && *match == *below) || (above && *match == *above);
    dev.dev.resize(distances.size());
    for (std::size_t k = 0; k < distances.size(); ++k) {
      const double x = distances[k];
      if (x < lane.x_min || x > lane.x_max) {
        continue;
      }
      const auto y_true = boundary_lateral_at(truth[*match], x);
      if (!y_true) {
        continue;
      }
      dev.dev[k] = clothoid_eval(lane, x) - *y_true;
    }
    out.lanes.push_back(std::move(dev));
  }
  return out;
}

DeviationTable::DeviationTable(const EvaluationConfig& cfg) {
  for (double d = 0.0; d <= cfg.max_distance_m + 1e-9; d += cfg.sample_step_m) {
    distances_.push_back(d);
  }
  ego_.resize(distances_.size());
  adjacent_.resize(distances_.size());
}

void DeviationTable::add(const FrameDeviations& frame) {
  unmatched_ += frame.unmatched;
  for (const LaneDeviation& lane : frame.lanes) {
    auto& cells = lane.ego ? ego_ : adjacent_;
    const std::size_t k_max = std::min(lane.dev.size(), cells.size());
    for (std::size_t k = 0; k < k_max; ++k) {
      if (lane.dev[k]) {
        cells[k].push(*lane.dev[k]);
      }
    }
  }
}

void DeviationTable::merge(const DeviationTable& other) {
  if (other.distances_.size() != distances_.size()) {
    throw std::invalid_argument("DeviationTable::merge: incompatible grids");
  }
  for (std::size_t k = 0; k < distances_.size(); ++k) {
    ego_[k] = DeviationCell::merged(ego_[k], other.ego_[k]);
    adjacent_[k] = DeviationCell::merged(adjacent_[k], other.adjacent_[k]);
  }
  unmatched_ += other.unmatched_;
}

const DeviationCell& DeviationTable::cell(std::size_t distance_index, bool ego) const {
  return ego ? ego_.at(distance_index) : adjacent_.at(distance_index);
}

static double percentile(std::vector<double> v, double q) {
  if (v.empty()) {
    return 0.0;
  }
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double RuntimeStats::median_ms() const { return percentile(per_frame_ms, 0.5); }

double RuntimeStats::mean_ms() const {
  if (per_frame_ms.empty()) return 0.0;
  double s = 0.0;
  for (double v : per_frame_ms) s += v;
  return s / static_cast<double>(per_frame_ms.size());
}

double RuntimeStats::p90_ms() const { return percentile(per_frame_ms, 0.9); }

double RuntimeStats::max_ms() const {
  return per_frame_ms.empty() ? 0.0 : *std::max_element(per_frame_ms.begin(), per_frame_ms.end());
}

double measure_frame_runtime(Pipeline& pipeline, const SensorFrame& frame, FrameResult* result) {
  const auto t0 = std::chrono::steady_clock::now();
  FrameResult r = pipeline.process_frame(frame);
  const auto t1 = std::chrono::steady_clock::now();
  if (result) {
    *result = std::move(r);
  }
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace lanefusion
