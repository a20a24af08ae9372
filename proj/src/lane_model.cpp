#include "lanefusion/lane_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

namespace lanefusion {

namespace {

double base_eval(const BaseClothoid& b, double x) {
  return b.theta0 * x + 0.5 * b.c0 * x * x + b.c1 * x * x * x / 6.0;
}

double median(std::vector<double> v) {
  if (v.empty()) {
    return 0.0;
  }
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    return 0.5 * (v[mid - 1] + hi);
  }
  return hi;
}

}  // namespace

std::optional<BaseClothoid> fit_base_clothoid(std::span<const LaneFeature> features,
                                              const LaneModelConfig& cfg, std::string* why) {
  const std::size_t n = features.size();
  if (static_cast<int>(n) < cfg.min_fit_features) {
    if (why) *why = "too few features";
    return std::nullopt;
  }
  double x_lo = features[0].pose.x;
  double x_hi = x_lo;
  for (const LaneFeature& f : features) {
    x_lo = std::min(x_lo, f.pose.x);
    x_hi = std::max(x_hi, f.pose.x);
  }
  if (x_hi - x_lo < cfg.min_fit_span_m) {
    if (why) *why = "x-span too short";
    return std::nullopt;
  }

  std::vector<std::size_t> inliers(n);
  for (std::size_t i = 0; i < n; ++i) {
    inliers[i] = i;
  }
  std::vector<std::size_t> outliers;
  const std::size_t max_removed =
      static_cast<std::size_t>(cfg.max_trim_fraction * static_cast<double>(n));

  Vec3 beta = Vec3::Zero();
  Mat3 xtwx_inv = Mat3::Identity();
  double weighted_res_var = 0.0;
  for (int pass = 0; pass <= cfg.max_trim_iterations; ++pass) {
    if (static_cast<int>(inliers.size()) < cfg.min_fit_features) {
      if (why) *why = "trimming left too few features";
      return std::nullopt;
    }
    Mat3 xtwx = Mat3::Zero();
    Vec3 xtwy = Vec3::Zero();
    double wsum = 0.0;
    for (std::size_t i : inliers) {
      const double x = features[i].pose.x;
      const double w = std::max(features[i].confidence, cfg.min_feature_weight);
      const Vec3 phi(1.0, x, 0.5 * x * x);
      xtwx += w * phi * phi.transpose();
      xtwy += w * phi * features[i].pose.theta;
      wsum += w;
    }
    Eigen::LDLT<Mat3> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success) {
      if (why) *why = "degenerate design matrix";
      return std::nullopt;
    }
    beta = ldlt.solve(xtwy);
    xtwx_inv = ldlt.solve(Mat3::Identity());

    std::vector<double> res(inliers.size());
    double wrss = 0.0;
    for (std::size_t k = 0; k < inliers.size(); ++k) {
      const LaneFeature& f = features[inliers[k]];
      const Vec3 phi(1.0, f.pose.x, 0.5 * f.pose.x * f.pose.x);
      res[k] = f.pose.theta - phi.dot(beta);
      wrss += std::max(f.confidence, cfg.min_feature_weight) * res[k] * res[k];
    }
    const double dof = std::max(1.0, static_cast<double>(inliers.size()) - 3.0);
    weighted_res_var = wrss / wsum * static_cast<double>(inliers.size()) / dof;

    if (pass == cfg.max_trim_iterations) {
      break;
    }
    const double med = median(res);
    std::vector<double> absdev(res.size());
    for (std::size_t k = 0; k < res.size(); ++k) {
      absdev[k] = std::abs(res[k] - med);
    }
    const double scale = 1.4826 * median(absdev);
    if (scale < 1e-12) {
      break;
    }
    std::vector<std::size_t> keep;
    std::vector<std::size_t> flagged;
    keep.reserve(inliers.size());
    for (std::size_t k = 0; k < inliers.size(); ++k) {
      if (std::abs(res[k] - med) > cfg.trim_threshold * scale) {
        flagged.push_back(inliers[k]);
      } else {
        keep.push_back(inliers[k]);
      }
    }
    if (flagged.empty()) {
      break;
    }
    if (outliers.size() + flagged.size() > max_removed) {
      if (why) *why = "outlier trim would remove more than half of the features";
      return std::nullopt;
    }
    outliers.insert(outliers.end(), flagged.begin(), flagged.end());
    inliers.swap(keep);
  }

  BaseClothoid out;
  out.theta0 = beta(0);
  out.c0 = beta(1);
  out.c1 = beta(2);
  out.param_covariance = std::max(weighted_res_var, 1e-16) * xtwx_inv;
  out.inliers = std::move(inliers);
  std::sort(outliers.begin(), outliers.end());
  out.outliers = std::move(outliers);
  return out;
}

FeatureGrouping group_features(std::span<const LaneFeature> features, const BaseClothoid& base,
                               std::span<const TrackedLane> previous,
                               const LaneModelConfig& cfg) {
  FeatureGrouping out;
  const double gate = cfg.lateral_gate_fraction * cfg.assumed_lane_width_m;

  struct Candidate {
    std::optional<std::uint64_t> lane_id;
    double y0;
    std::size_t group_index;
  };
  std::vector<Candidate> candidates;
  for (const TrackedLane& lane : previous) {
    candidates.push_back({lane.id, lane.state(0), out.groups.size()});
    out.groups.push_back(FeatureGroup{lane.id, lane.state(0), {}});
  }
  // Deterministic tie-break: candidates closer to the vehicle win.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return std::abs(a.y0) < std::abs(b.y0);
                   });

  std::vector<std::size_t> unassigned;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const LaneFeature& f = features[i];
    double best = gate;
    const Candidate* hit = nullptr;
    for (const Candidate& c : candidates) {
      const double d = std::abs(f.pose.y - (c.y0 + base_eval(base, f.pose.x)));
      if (d < best) {
        best = d;
        hit = &c;
      }
    }
    if (hit) {
      out.groups[hit->group_index].members.push_back(i);
    } else {
      unassigned.push_back(i);
    }
  }

  // Project leftover near-range features onto the y-axis along the base
  // course and cluster them to seed lanes that have no predecessor.
  struct Projected {
    double offset;
    std::size_t index;
  };
  std::vector<Projected> projected;
  for (std::size_t i : unassigned) {
    const LaneFeature& f = features[i];
    if (f.pose.x < cfg.near_range_m && f.confidence >= cfg.cluster_min_confidence) {
      projected.push_back({f.pose.y - base_eval(base, f.pose.x), i});
    }
  }
  std::stable_sort(projected.begin(), projected.end(),
                   [](const Projected& a, const Projected& b) { return a.offset < b.offset; });

  std::vector<double> seeds;
  std::size_t begin = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k <= projected.size(); ++k) {
    const bool flush =
        k == projected.size() ||
        (k > begin &&
         std::abs(projected[k].offset - sum / static_cast<double>(k - begin)) > cfg.cluster_radius_m);
    if (flush) {
      if (k - begin >= static_cast<std::size_t>(cfg.min_cluster_size)) {
        seeds.push_back(sum / static_cast<double>(k - begin));
      }
      begin = k;
      sum = 0.0;
    }
    if (k < projected.size()) {
      sum += projected[k].offset;
    }
  }

  std::vector<Candidate> new_candidates;
  for (double seed : seeds) {
    new_candidates.push_back({std::nullopt, seed, out.groups.size()});
    out.groups.push_back(FeatureGroup{std::nullopt, seed, {}});
  }
  std::stable_sort(new_candidates.begin(), new_candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return std::abs(a.y0) < std::abs(b.y0);
                   });

  for (std::size_t i : unassigned) {
    const LaneFeature& f = features[i];
    double best = gate;
    const Candidate* hit = nullptr;
    for (const Candidate& c : new_candidates) {
      const double d = std::abs(f.pose.y - (c.y0 + base_eval(base, f.pose.x)));
      if (d < best) {
        best = d;
        hit = &c;
      }
    }
    if (hit) {
      out.groups[hit->group_index].members.push_back(i);
    } else {
      out.ungrouped.push_back(i);
    }
  }

  std::erase_if(out.groups, [](const FeatureGroup& g) { return g.members.empty(); });
  return out;
}

std::vector<LaneOffsetFit> fit_lane_offsets(std::span<const LaneFeature> features,
                                            const FeatureGrouping& grouping,
                                            const BaseClothoid& base,
                                            const LaneModelConfig& cfg) {
  std::vector<LaneOffsetFit> out;
  for (const FeatureGroup& g : grouping.groups) {
    if (static_cast<int>(g.members.size()) < cfg.min_fit_features) {
      continue;
    }
    double wsum = 0.0;
    double wysum = 0.0;
    for (std::size_t i : g.members) {
      const LaneFeature& f = features[i];
      const double w = std::max(f.confidence, cfg.min_feature_weight);
      wsum += w;
      wysum += w * (f.pose.y - base_eval(base, f.pose.x));
    }
    const double y0 = wysum / wsum;
    double wrss = 0.0;
    double w2sum = 0.0;
    for (std::size_t i : g.members) {
      const LaneFeature& f = features[i];
      const double w = std::max(f.confidence, cfg.min_feature_weight);
      const double r = f.pose.y - base_eval(base, f.pose.x) - y0;
      wrss += w * r * r;
      w2sum += w * w;
    }
    const double nn = static_cast<double>(g.members.size());
    const double s2 = wrss / wsum * nn / std::max(1.0, nn - 1.0);
    out.push_back(LaneOffsetFit{g.lane_id, y0, g.members.size(),
                                std::max(s2 * w2sum / (wsum * wsum), 1e-8)});
  }
  return out;
}

namespace {

Eigen::Matrix4d process_noise(double dt, const LaneModelConfig& cfg) {
  // Sigmas are given per 0.1 s reference frame; scale variance with dt.
  const double k = std::max(dt, 1e-3) / 0.1;
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  q(0, 0) = cfg.process_sigma_y0_m * cfg.process_sigma_y0_m * k;
  q(1, 1) = cfg.process_sigma_theta0_rad * cfg.process_sigma_theta0_rad * k;
  q(2, 2) = cfg.process_sigma_c0 * cfg.process_sigma_c0 * k;
  q(3, 3) = cfg.process_sigma_c1 * cfg.process_sigma_c1 * k;
  return q;
}

void merge_close_lanes(std::vector<TrackedLane>& lanes, const LaneModelConfig& cfg) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t a = 0; a < lanes.size() && !changed; ++a) {
      for (std::size_t b = a + 1; b < lanes.size() && !changed; ++b) {
        if (std::abs(lanes[a].state(0) - lanes[b].state(0)) < cfg.merge_gate_m) {
          // Keep the older track; ties resolve to the earlier id.
          const bool keep_a = lanes[a].age != lanes[b].age ? lanes[a].age > lanes[b].age
                                                           : lanes[a].id < lanes[b].id;
          lanes.erase(lanes.begin() + static_cast<std::ptrdiff_t>(keep_a ? b : a));
          changed = true;
        }
      }
    }
  }
}

}  // namespace

std::vector<TrackedLane> coast_tracked_lanes(std::vector<TrackedLane> lanes, double dt,
                                             const LaneModelConfig& cfg) {
  const Eigen::Matrix4d q = process_noise(dt, cfg);
  std::vector<TrackedLane> out;
  for (TrackedLane lane : lanes) {
    lane.covariance += q;
    lane.support = 0;
    lane.unsupported += 1;
    lane.age += 1;
    if (lane.unsupported < cfg.expire_after_frames) {
      out.push_back(lane);
    }
  }
  return out;
}

std::vector<TrackedLane> update_tracked_lanes(std::vector<TrackedLane> lanes,
                                              const BaseClothoid& base,
                                              const std::vector<LaneOffsetFit>& offsets,
                                              double dt, const LaneModelConfig& cfg,
                                              std::uint64_t& next_lane_id) {
  const Eigen::Matrix4d q = process_noise(dt, cfg);
  for (TrackedLane& lane : lanes) {
    lane.covariance += q;  // random-walk transition
  }

  Eigen::Matrix4d r = Eigen::Matrix4d::Zero();
  r(0, 0) = 1.0;  // per-offset, set below
  r.block<3, 3>(1, 1) = base.param_covariance;
  for (int i = 1; i < 4; ++i) {
    r(i, i) = std::max(r(i, i), 1e-12);
  }

  std::set<std::uint64_t> matched;
  std::vector<const LaneOffsetFit*> spawn_candidates;
  for (const LaneOffsetFit& off : offsets) {
    TrackedLane* lane = nullptr;
    if (off.lane_id) {
      for (TrackedLane& l : lanes) {
        if (l.id == *off.lane_id) {
          lane = &l;
          break;
        }
      }
    }
    if (!lane) {
      spawn_candidates.push_back(&off);
      continue;
    }
    const Eigen::Vector4d z(off.y0, base.theta0, base.c0, base.c1);
    r(0, 0) = std::max(off.variance, 1e-8);
    const Eigen::Matrix4d s = lane->covariance + r;
    const Eigen::Matrix4d k = lane->covariance * s.inverse();
    lane->state += k * (z - lane->state);
    lane->covariance = (Eigen::Matrix4d::Identity() - k) * lane->covariance;
    lane->covariance = 0.5 * (lane->covariance + lane->covariance.transpose());
    lane->support = static_cast<int>(off.support);
    lane->unsupported = 0;
    matched.insert(lane->id);
  }

  for (TrackedLane& lane : lanes) {
    if (!matched.count(lane.id)) {
      lane.support = 0;
      lane.unsupported += 1;
    }
    lane.age += 1;
  }

  for (const LaneOffsetFit* off : spawn_candidates) {
    bool clear = true;
    for (const TrackedLane& lane : lanes) {
      if (std::abs(lane.state(0) - off->y0) < cfg.spawn_gate_m) {
        clear = false;
        break;
      }
    }
    if (!clear) {
      continue;
    }
    TrackedLane lane;
    lane.id = next_lane_id++;
    lane.state = Eigen::Vector4d(off->y0, base.theta0, base.c0, base.c1);
    lane.covariance = Eigen::Matrix4d::Zero();
    lane.covariance(0, 0) = cfg.init_sigma_y0_m * cfg.init_sigma_y0_m;
    lane.covariance(1, 1) = cfg.init_sigma_theta0_rad * cfg.init_sigma_theta0_rad;
    lane.covariance(2, 2) = cfg.init_sigma_c0 * cfg.init_sigma_c0;
    lane.covariance(3, 3) = cfg.init_sigma_c1 * cfg.init_sigma_c1;
    lane.age = 1;
    lane.support = static_cast<int>(off->support);
    lane.unsupported = 0;
    lanes.push_back(lane);
  }

  std::erase_if(lanes, [&](const TrackedLane& l) { return l.unsupported >= cfg.expire_after_frames; });
  merge_close_lanes(lanes, cfg);
  std::stable_sort(lanes.begin(), lanes.end(),
                   [](const TrackedLane& a, const TrackedLane& b) { return a.id < b.id; });
  return lanes;
}

std::vector<Clothoid> lanes_snapshot(std::span<const TrackedLane> lanes,
                                     const LaneModelConfig& cfg) {
  std::vector<Clothoid> out;
  out.reserve(lanes.size());
  for (const TrackedLane& lane : lanes) {
    Clothoid c;
    c.y0 = lane.state(0);
    c.theta0 = std::clamp(lane.state(1), -kClothoidMaxHeading, kClothoidMaxHeading);
    c.c0 = lane.state(2);
    c.c1 = lane.state(3);
    c.x_min = 0.0;
    c.x_max = cfg.horizon_m;
    out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Clothoid& a, const Clothoid& b) { return a.y0 > b.y0; });
  return out;
}

}  // namespace lanefusion
