#include "lanefusion/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace lanefusion {

namespace {

constexpr double kSampleStep = 1.0;       // ground-truth polyline spacing
constexpr double kEvalWindowBack = 20.0;  // local clip window
constexpr double kEvalWindowAhead = 150.0;

// Reported covariances are floored at these nominal values: a sensor
// claims finite uncertainty even in zero-noise simulations, and fusion
// rejects singular covariances by contract.
constexpr double kMinReportedPosSigma = 0.02;
constexpr double kMinReportedHeadingSigma = 0.005;
constexpr double kMinReportedClothoidSigma[4] = {0.02, 0.001, 5e-6, 1e-7};

/// Piecewise-clothoid road centerline. Heading is analytic per segment;
/// positions are integrated with Simpson's rule on a fine grid.
class RoadCourse {
 public:
  explicit RoadCourse(const std::vector<RoadSegmentConfig>& segments) {
    double s0 = 0.0;
    double th = 0.0;
    for (const RoadSegmentConfig& seg : segments) {
      seg_start_.push_back(s0);
      seg_theta_.push_back(th);
      segs_.push_back(seg);
      th += seg.c0 * seg.length_m + 0.5 * seg.c1 * seg.length_m * seg.length_m;
      s0 += seg.length_m;
    }
    length_ = s0;

    const int n = static_cast<int>(std::ceil(length_ / step_)) + 1;
    xs_.resize(n);
    ys_.resize(n);
    xs_[0] = 0.0;
    ys_[0] = 0.0;
    for (int i = 1; i < n; ++i) {
      const double a = (i - 1) * step_;
      const double b = std::min(i * step_, length_);
      const double h = b - a;
      const double t0 = heading(a);
      const double tm = heading(0.5 * (a + b));
      const double t1 = heading(b);
      xs_[i] = xs_[i - 1] + h / 6.0 * (std::cos(t0) + 4.0 * std::cos(tm) + std::cos(t1));
      ys_[i] = ys_[i - 1] + h / 6.0 * (std::sin(t0) + 4.0 * std::sin(tm) + std::sin(t1));
    }
  }

  double length() const { return length_; }

  double heading(double s) const {
    const std::size_t k = segment_of(s);
    const double u = s - seg_start_[k];
    return seg_theta_[k] + segs_[k].c0 * u + 0.5 * segs_[k].c1 * u * u;
  }

  double curvature(double s) const {
    const std::size_t k = segment_of(s);
    return segs_[k].c0 + segs_[k].c1 * (s - seg_start_[k]);
  }

  Pose2 center_pose(double s) const {
    s = std::clamp(s, 0.0, length_);
    const int i = static_cast<int>(s / step_);
    const double a = i * step_;
    const double h = s - a;
    double x = xs_[i];
    double y = ys_[i];
    if (h > 0.0) {
      const double t0 = heading(a);
      const double tm = heading(a + 0.5 * h);
      const double t1 = heading(s);
      x += h / 6.0 * (std::cos(t0) + 4.0 * std::cos(tm) + std::cos(t1));
      y += h / 6.0 * (std::sin(t0) + 4.0 * std::sin(tm) + std::sin(t1));
    }
    return {x, y, heading(s)};  // heading left unnormalized for continuity
  }

  /// Global pose of a point at lateral offset from the centerline;
  /// dlat_ds tilts the heading for laterally moving traffic.
  Pose2 offset_pose(double s, double lateral, double dlat_ds = 0.0) const {
    const Pose2 c = center_pose(s);
    return {c.x - std::sin(c.theta) * lateral, c.y + std::cos(c.theta) * lateral,
            c.theta + std::atan(dlat_ds)};
  }

 private:
  std::size_t segment_of(double s) const {
    std::size_t k = segs_.size() - 1;
    while (k > 0 && s < seg_start_[k]) {
      --k;
    }
    return k;
  }

  std::vector<RoadSegmentConfig> segs_;
  std::vector<double> seg_start_;
  std::vector<double> seg_theta_;
  std::vector<double> xs_, ys_;
  double length_ = 0.0;
  double step_ = 0.5;
};

double boundary_offset(const LaneLayoutConfig& lanes, int boundary) {
  return (boundary - 0.5 * lanes.count) * lanes.width_m;
}

double lane_center_offset(const LaneLayoutConfig& lanes, int lane) {
  return (lane + 0.5 - 0.5 * lanes.count) * lanes.width_m;
}

struct SimObject {
  std::int64_t id = 0;
  double s0 = 0.0;      // arc position at t = 0
  double speed = 0.0;
  int lane = 0;
  double driver_offset = 0.0;
  bool scripted = false;
  double spawn_time = 0.0;  // s0 is the position at spawn_time
  const LaneChangeEvent* change = nullptr;
};

double object_lateral(const SimObject& o, const LaneLayoutConfig& lanes, double t,
                      double* dlat_dt) {
  const double from = lane_center_offset(lanes, o.lane);
  *dlat_dt = 0.0;
  double lat = from;
  if (o.change && t >= o.change->time_s) {
    const double to = lane_center_offset(lanes, o.change->to_lane);
    const double u = (t - o.change->time_s) / o.change->duration_s;
    if (u >= 1.0) {
      lat = to;
    } else {
      const double blend = 0.5 * (1.0 - std::cos(M_PI * u));
      lat = from + (to - from) * blend;
      *dlat_dt = (to - from) * 0.5 * M_PI * std::sin(M_PI * u) / o.change->duration_s;
    }
  }
  return lat + o.driver_offset;
}

bool in_dropout(const std::vector<DropoutSpan>& spans, int boundary, double s) {
  for (const DropoutSpan& d : spans) {
    if (d.boundary == boundary && s >= d.s_begin && s <= d.s_end) {
      return true;
    }
  }
  return false;
}

}  // namespace

void validate_scenario(const ScenarioConfig& cfg) {
  if (cfg.road.empty()) {
    throw ConfigError("scenario.road: at least one segment required");
  }
  double road_len = 0.0;
  for (const RoadSegmentConfig& seg : cfg.road) {
    if (!(seg.length_m > 0.0)) {
      throw ConfigError("scenario.road: segment length must be > 0");
    }
    road_len += seg.length_m;
  }
  if (cfg.lanes.count < 1) {
    throw ConfigError("scenario.lanes.count must be >= 1");
  }
  if (!(cfg.lanes.width_m > 0.0)) {
    throw ConfigError("scenario.lanes.width_m must be > 0");
  }
  if (cfg.lanes.ego_lane < 0 || cfg.lanes.ego_lane >= cfg.lanes.count) {
    throw ConfigError("scenario.lanes.ego_lane out of range");
  }
  if (!(cfg.frame_rate_hz > 0.0) || !(cfg.duration_s > 0.0)) {
    throw ConfigError("scenario.frame_rate_hz and duration_s must be > 0");
  }
  if (!(cfg.ego.speed_mps >= 0.0)) {
    throw ConfigError("scenario.ego.speed_mps must be >= 0");
  }
  if (cfg.smc.enabled &&
      (cfg.smc.detection_range_m <= 0.0 || cfg.smc.detection_range_m > 90.0)) {
    throw ConfigError("scenario.smc.detection_range_m must be in (0, 90]");
  }
  if (cfg.hrc.enabled && cfg.hrc.max_range_m > 130.0) {
    throw ConfigError("scenario.hrc.max_range_m must be <= 130");
  }
  if (cfg.hrc.outlier_rate < 0.0 || cfg.hrc.outlier_rate > 1.0) {
    throw ConfigError("scenario.hrc.outlier_rate must be in [0, 1]");
  }
  for (const DropoutSpan& d : cfg.hrc.dropout_spans) {
    if (d.boundary < 0 || d.boundary > cfg.lanes.count) {
      throw ConfigError("scenario.hrc.dropout_spans: boundary index out of range");
    }
    if (!(d.s_begin < d.s_end)) {
      throw ConfigError("scenario.hrc.dropout_spans: requires s_begin < s_end");
    }
  }
  if (cfg.traffic.count < 0 ||
      cfg.traffic.count < static_cast<int>(cfg.traffic.objects.size())) {
    throw ConfigError("scenario.traffic.count must cover the explicit object list");
  }
  for (const ExplicitObjectConfig& o : cfg.traffic.objects) {
    if (o.lane < 0 || o.lane >= cfg.lanes.count) {
      throw ConfigError("scenario.traffic.objects: lane out of range");
    }
  }
  for (const LaneChangeEvent& ev : cfg.traffic.lane_changes) {
    if (ev.to_lane < 0 || ev.to_lane >= cfg.lanes.count) {
      throw ConfigError("scenario.traffic.lane_changes: to_lane out of range");
    }
    if (!(ev.duration_s > 0.0)) {
      throw ConfigError("scenario.traffic.lane_changes: duration must be > 0");
    }
    const bool known = std::any_of(cfg.traffic.objects.begin(), cfg.traffic.objects.end(),
                                   [&](const ExplicitObjectConfig& o) { return o.id == ev.object_id; });
    if (!known) {
      throw ConfigError("scenario.traffic.lane_changes: unknown object id");
    }
  }
  const double needed = cfg.ego.speed_mps * cfg.duration_s + kEvalWindowAhead;
  if (needed > road_len) {
    throw ConfigError("scenario.road too short for the drive: needs " + std::to_string(needed) +
                      " m, has " + std::to_string(road_len) + " m");
  }
}

std::vector<LocalBoundary> ground_truth_local(const GroundTruthMap& map, const Pose2& ego_pose) {
  std::vector<LocalBoundary> out;
  const double c = std::cos(ego_pose.theta);
  const double s = std::sin(ego_pose.theta);
  for (const BoundaryCurve& b : map.boundaries) {
    LocalBoundary lb;
    lb.offset = b.offset;
    for (std::size_t i = 0; i < b.x.size(); ++i) {
      const double dx = b.x[i] - ego_pose.x;
      const double dy = b.y[i] - ego_pose.y;
      const double lx = c * dx + s * dy;
      if (lx < -kEvalWindowBack || lx > kEvalWindowAhead) {
        continue;
      }
      lb.s.push_back(b.s[i]);
      lb.x.push_back(lx);
      lb.y.push_back(-s * dx + c * dy);
      lb.theta.push_back(normalize_angle(b.theta[i] - ego_pose.theta));
    }
    out.push_back(std::move(lb));
  }
  return out;
}

namespace {

std::optional<std::pair<std::size_t, double>> bracket(const LocalBoundary& b, double x) {
  if (b.x.size() < 2 || x < b.x.front() || x > b.x.back()) {
    return std::nullopt;
  }
  const auto it = std::lower_bound(b.x.begin(), b.x.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - b.x.begin());
  if (hi == 0) {
    hi = 1;
  }
  const std::size_t lo = hi - 1;
  const double span = b.x[hi] - b.x[lo];
  const double u = span > 0.0 ? (x - b.x[lo]) / span : 0.0;
  return std::make_pair(lo, u);
}

}  // namespace

std::optional<double> boundary_lateral_at(const LocalBoundary& b, double x) {
  const auto br = bracket(b, x);
  if (!br) {
    return std::nullopt;
  }
  const auto [lo, u] = *br;
  return b.y[lo] + u * (b.y[lo + 1] - b.y[lo]);
}

std::optional<double> boundary_arc_at(const LocalBoundary& b, double x) {
  const auto br = bracket(b, x);
  if (!br) {
    return std::nullopt;
  }
  const auto [lo, u] = *br;
  return b.s[lo] + u * (b.s[lo + 1] - b.s[lo]);
}

namespace {

double local_heading_at(const LocalBoundary& b, double x) {
  const auto br = bracket(b, x);
  if (!br) {
    return 0.0;
  }
  const auto [lo, u] = *br;
  return b.theta[lo] + u * normalize_angle(b.theta[lo + 1] - b.theta[lo]);
}

}  // namespace

Scenario generate(const ScenarioConfig& cfg) {
  validate_scenario(cfg);

  const RoadCourse road(cfg.road);
  const double dt = 1.0 / cfg.frame_rate_hz;
  const int frame_count = static_cast<int>(std::llround(cfg.duration_s * cfg.frame_rate_hz));

  Scenario sc;
  sc.truth.lane_count = cfg.lanes.count;
  sc.truth.lane_width = cfg.lanes.width_m;
  sc.truth.ego_lane = cfg.lanes.ego_lane;
  for (int bidx = 0; bidx <= cfg.lanes.count; ++bidx) {
    BoundaryCurve b;
    b.offset = boundary_offset(cfg.lanes, bidx);
    for (double s = 0.0; s <= road.length() + 1e-9; s += kSampleStep) {
      const Pose2 p = road.offset_pose(s, b.offset);
      b.s.push_back(s);
      b.x.push_back(p.x);
      b.y.push_back(p.y);
      b.theta.push_back(p.theta);
    }
    sc.truth.boundaries.push_back(std::move(b));
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double ego_center = lane_center_offset(cfg.lanes, cfg.lanes.ego_lane);
  const double wander_w =
      cfg.ego.wander_period_s > 0.0 ? 2.0 * M_PI / cfg.ego.wander_period_s : 0.0;

  // Traffic setup: explicit objects first, then seeded auto objects.
  std::vector<SimObject> objects;
  std::int64_t next_auto_id = 1000;
  auto spawn_auto = [&](double t_now, double s_ego_now) {
    SimObject o;
    o.id = next_auto_id++;
    o.lane = static_cast<int>(unit(rng) * cfg.lanes.count);
    o.lane = std::min(o.lane, cfg.lanes.count - 1);
    o.s0 = s_ego_now + cfg.traffic.spawn_min_ahead_m +
           unit(rng) * (cfg.traffic.spawn_max_ahead_m - cfg.traffic.spawn_min_ahead_m);
    o.speed = cfg.traffic.speed_min_mps +
              unit(rng) * (cfg.traffic.speed_max_mps - cfg.traffic.speed_min_mps);
    o.driver_offset = gauss(rng) * cfg.traffic.driver_lateral_sigma_m;
    o.scripted = false;
    o.spawn_time = t_now;
    return o;
  };
  for (const ExplicitObjectConfig& oc : cfg.traffic.objects) {
    SimObject o;
    o.id = oc.id;
    o.lane = oc.lane;
    o.s0 = oc.ahead_m;
    o.speed = oc.speed_mps;
    o.driver_offset = oc.driver_offset_m ? *oc.driver_offset_m
                                          : gauss(rng) * cfg.traffic.driver_lateral_sigma_m;
    o.scripted = true;
    o.spawn_time = 0.0;
    for (const LaneChangeEvent& ev : cfg.traffic.lane_changes) {
      if (ev.object_id == oc.id) {
        o.change = &ev;
      }
    }
    objects.push_back(o);
  }
  for (int i = static_cast<int>(objects.size()); i < cfg.traffic.count; ++i) {
    objects.push_back(spawn_auto(0.0, 0.0));
  }

  Pose2 prev_ego{};
  for (int k = 0; k < frame_count; ++k) {
    const double t = k * dt;
    const double s_ego = cfg.ego.speed_mps * t;

    const double wander = cfg.ego.wander_amplitude_m * std::sin(wander_w * t);
    const double dwander_dt = cfg.ego.wander_amplitude_m * wander_w * std::cos(wander_w * t);
    const double dwander_ds =
        cfg.ego.speed_mps > 0.1 ? dwander_dt / cfg.ego.speed_mps : 0.0;
    const Pose2 ego = road.offset_pose(s_ego, ego_center + wander, dwander_ds);
    sc.truth.ego_trajectory.push_back(
        Pose2{ego.x, ego.y, normalize_angle(ego.theta)});
    sc.truth.ego_s.push_back(s_ego);

    SensorFrame frame;
    frame.t = t;

    // Control: invert the unicycle model from the true relative pose.
    if (k == 0) {
      frame.control = ControlVector{0.0, cfg.ego.speed_mps, dt};
    } else {
      const Pose2 rel = pose_between(prev_ego, ego);
      const double yaw_rate = normalize_angle(rel.theta) / dt;
      double speed;
      if (std::abs(yaw_rate) < 1e-9) {
        speed = rel.x / dt;
      } else {
        speed = rel.x * yaw_rate / std::sin(yaw_rate * dt);
      }
      frame.control.yaw_rate = yaw_rate + gauss(rng) * cfg.odometry_noise.yaw_rate_sigma_radps;
      frame.control.speed =
          std::max(0.0, speed + gauss(rng) * cfg.odometry_noise.speed_sigma_mps);
      frame.control.dt = dt;
    }
    prev_ego = ego;

    const std::vector<LocalBoundary> local = ground_truth_local(sc.truth, ego);

    if (cfg.smc.enabled) {
      SmcLaneReport smc;
      smc.detection_range_m = cfg.smc.detection_range_m;
      smc.sigma_y0 = std::max(cfg.smc.sigma_y0, kMinReportedClothoidSigma[0]);
      smc.sigma_theta0 = std::max(cfg.smc.sigma_theta0, kMinReportedClothoidSigma[1]);
      smc.sigma_c0 = std::max(cfg.smc.sigma_c0, kMinReportedClothoidSigma[2]);
      smc.sigma_c1 = std::max(cfg.smc.sigma_c1, kMinReportedClothoidSigma[3]);
      smc.confidence = cfg.smc.confidence;
      const int sides[2] = {cfg.lanes.ego_lane + 1, cfg.lanes.ego_lane};  // left, right
      for (int sidx = 0; sidx < 2; ++sidx) {
        const LocalBoundary& b = local[static_cast<std::size_t>(sides[sidx])];
        // Lost markings suppress the whole side when they cover a
        // substantial part of the measurement window.
        double dropped = 0.0;
        for (double x = 0.0; x <= cfg.smc.detection_range_m; x += 2.0) {
          const auto arc = boundary_arc_at(b, x);
          if (arc && in_dropout(cfg.hrc.dropout_spans, sides[sidx], *arc)) {
            dropped += 2.0;
          }
        }
        if (dropped > 0.25 * cfg.smc.detection_range_m) {
          continue;
        }
        Eigen::Matrix4d xtx = Eigen::Matrix4d::Zero();
        Eigen::Vector4d xty = Eigen::Vector4d::Zero();
        int samples = 0;
        for (double x = 0.0; x <= cfg.smc.detection_range_m; x += 2.0) {
          const auto y = boundary_lateral_at(b, x);
          if (!y) {
            continue;
          }
          const Eigen::Vector4d phi(1.0, x, 0.5 * x * x, x * x * x / 6.0);
          xtx += phi * phi.transpose();
          xty += phi * *y;
          ++samples;
        }
        if (samples < 8) {
          continue;
        }
        const Eigen::Vector4d beta = xtx.ldlt().solve(xty);
        const double y0 = beta(0) + gauss(rng) * cfg.smc.sigma_y0;
        const double th0 = beta(1) + gauss(rng) * cfg.smc.sigma_theta0;
        const double c0 = beta(2) + gauss(rng) * cfg.smc.sigma_c0;
        const double c1 = beta(3) + gauss(rng) * cfg.smc.sigma_c1;
        Clothoid cl;
        cl.y0 = y0;
        cl.theta0 = std::clamp(th0, -kClothoidMaxHeading, kClothoidMaxHeading);
        cl.c0 = c0;
        cl.c1 = c1;
        cl.x_min = 0.0;
        cl.x_max = cfg.smc.detection_range_m;
        (sidx == 0 ? smc.left : smc.right) = cl;
      }
      if (smc.left || smc.right) {
        frame.smc = smc;
      }
    }

    if (cfg.hrc.enabled) {
      HrcFeatureReport hrc;
      hrc.max_range_m = cfg.hrc.max_range_m;
      for (int bidx = 0; bidx <= cfg.lanes.count; ++bidx) {
        const LocalBoundary& b = local[static_cast<std::size_t>(bidx)];
        for (double x = cfg.hrc.min_range_m; x <= cfg.hrc.max_range_m + 1e-9;
             x += cfg.hrc.sample_spacing_m) {
          const auto y = boundary_lateral_at(b, x);
          if (!y || std::abs(*y) > cfg.hrc.lateral_limit_m) {
            continue;
          }
          const auto arc = boundary_arc_at(b, x);
          if (arc && in_dropout(cfg.hrc.dropout_spans, bidx, *arc)) {
            continue;
          }
          const double sigma = cfg.hrc.sigma_base_m + cfg.hrc.sigma_per_m * x;
          LaneFeature f;
          f.pose.x = x + gauss(rng) * sigma;
          f.pose.y = *y + gauss(rng) * sigma;
          f.pose.theta = local_heading_at(b, x) + gauss(rng) * cfg.hrc.sigma_theta_rad;
          if (cfg.hrc.outlier_rate > 0.0 && unit(rng) < cfg.hrc.outlier_rate) {
            const double mag = cfg.hrc.outlier_min_m +
                               unit(rng) * (cfg.hrc.outlier_max_m - cfg.hrc.outlier_min_m);
            f.pose.y += unit(rng) < 0.5 ? mag : -mag;
          }
          f.confidence = cfg.hrc.confidence;
          const double rep_pos = std::max(sigma, kMinReportedPosSigma);
          const double rep_th = std::max(cfg.hrc.sigma_theta_rad, kMinReportedHeadingSigma);
          f.covariance = Mat3::Zero();
          f.covariance(0, 0) = f.covariance(1, 1) = rep_pos * rep_pos;
          f.covariance(2, 2) = rep_th * rep_th;
          hrc.features.push_back(f);
        }
      }
      frame.hrc = hrc;
    }

    // Traffic: report, then respawn what left the sensing window.
    for (SimObject& o : objects) {
      const double s_obj = o.s0 + o.speed * (t - o.spawn_time);
      double dlat_dt = 0.0;
      const double lat = object_lateral(o, cfg.lanes, t, &dlat_dt);
      const double dlat_ds = o.speed > 0.1 ? dlat_dt / o.speed : 0.0;
      if (s_obj > road.length()) {
        continue;
      }
      const Pose2 global = road.offset_pose(s_obj, lat, dlat_ds);
      const Pose2 rel = pose_between(ego, Pose2{global.x, global.y, normalize_angle(global.theta)});
      if (rel.x <= 0.0 || rel.x > cfg.traffic.report_range_m) {
        continue;
      }
      TrackedObject obj;
      obj.id = o.id;
      obj.pose.x = rel.x + gauss(rng) * cfg.traffic.pos_sigma_m;
      obj.pose.y = rel.y + gauss(rng) * cfg.traffic.pos_sigma_m;
      obj.pose.theta =
          normalize_angle(rel.theta + gauss(rng) * cfg.traffic.heading_sigma_rad);
      obj.velocity = o.speed + gauss(rng) * cfg.traffic.velocity_sigma_mps;
      const double rep_pos = std::max(cfg.traffic.pos_sigma_m, kMinReportedPosSigma);
      const double rep_th = std::max(cfg.traffic.heading_sigma_rad, kMinReportedHeadingSigma);
      obj.covariance = Mat3::Zero();
      obj.covariance(0, 0) = obj.covariance(1, 1) = rep_pos * rep_pos;
      obj.covariance(2, 2) = rep_th * rep_th;
      obj.confirmed = true;
      frame.objects.push_back(obj);
    }
    if (cfg.traffic.maintain_count) {
      for (SimObject& o : objects) {
        if (o.scripted) {
          continue;
        }
        const double s_obj = o.s0 + o.speed * (t - o.spawn_time);
        const double rel_s = s_obj - s_ego;
        if (rel_s < -20.0 || rel_s > cfg.traffic.report_range_m + 20.0 ||
            s_obj > road.length()) {
          o = spawn_auto(t, s_ego);
        }
      }
    }

    sc.frames.push_back(std::move(frame));
  }
  return sc;
}

}  // namespace lanefusion
