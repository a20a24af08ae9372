#include <doctest.h>

#include <cmath>
#include <random>

#include "lanefusion/lane_model.hpp"

using namespace lanefusion;

namespace {

LaneFeature feat(double x, double y, double theta, double conf = 1.0) {
  LaneFeature f;
  f.pose = {x, y, theta};
  f.confidence = conf;
  f.covariance = Mat3::Identity() * 0.01;
  return f;
}

std::vector<LaneFeature> heading_samples(double theta0, double c0, double c1, int n,
                                         double x_max) {
  std::vector<LaneFeature> out;
  for (int i = 0; i < n; ++i) {
    const double x = x_max * static_cast<double>(i) / (n - 1);
    out.push_back(feat(x, 0.0, theta0 + c0 * x + 0.5 * c1 * x * x));
  }
  return out;
}

}  // namespace

TEST_CASE("fit_base_clothoid recovers exact noiseless parameters") {
  const LaneModelConfig cfg;
  const auto fit = fit_base_clothoid(heading_samples(0.01, 1e-4, 0.0, 40, 100.0), cfg);
  REQUIRE(fit.has_value());
  CHECK(std::abs(fit->theta0 - 0.01) < 1e-9);
  CHECK(std::abs(fit->c0 - 1e-4) < 1e-9);
  CHECK(std::abs(fit->c1) < 1e-9);
  CHECK(fit->outliers.empty());
  CHECK(fit->inliers.size() == 40);

  const auto fit2 = fit_base_clothoid(heading_samples(-0.02, 5e-4, 1e-5, 60, 120.0), cfg);
  REQUIRE(fit2.has_value());
  CHECK(std::abs(fit2->theta0 + 0.02) < 1e-9);
  CHECK(std::abs(fit2->c0 - 5e-4) < 1e-9);
  CHECK(std::abs(fit2->c1 - 1e-5) < 1e-9);
}

TEST_CASE("fit_base_clothoid flags gross outliers and stays near truth") {
  const LaneModelConfig cfg;
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 0.005);
  const double c0_true = 2e-4;
  std::vector<LaneFeature> features;
  for (int i = 0; i < 80; ++i) {
    const double x = 130.0 * static_cast<double>(i) / 79.0;
    features.push_back(feat(x, 0.0, 0.005 + c0_true * x + g(rng)));
  }
  for (int i = 0; i < 20; ++i) {
    const double x = 130.0 * static_cast<double>(i) / 19.0;
    features.push_back(feat(x, 0.0, 0.005 + c0_true * x + 0.3));
  }
  const auto fit = fit_base_clothoid(features, cfg);
  REQUIRE(fit.has_value());
  // every gross outlier (indices 80..99) flagged
  std::size_t flagged = 0;
  for (std::size_t idx : fit->outliers) {
    if (idx >= 80) ++flagged;
  }
  CHECK(flagged == 20);
  const double se_c0 = std::sqrt(fit->param_covariance(1, 1));
  CHECK(std::abs(fit->c0 - c0_true) < 3.0 * se_c0);
}

TEST_CASE("fit_base_clothoid error paths") {
  const LaneModelConfig cfg;
  std::string why;

  CHECK_FALSE(fit_base_clothoid(std::vector<LaneFeature>{}, cfg, &why).has_value());

  std::vector<LaneFeature> two{feat(0, 0, 0), feat(50, 0, 0)};
  CHECK_FALSE(fit_base_clothoid(two, cfg, &why).has_value());

  // plenty of features but only 10 m of span
  std::vector<LaneFeature> short_span;
  for (int i = 0; i < 10; ++i) short_span.push_back(feat(i, 0, 0));
  CHECK_FALSE(fit_base_clothoid(short_span, cfg, &why).has_value());
  CHECK(why == "x-span too short");
}

TEST_CASE("fit_base_clothoid never trims more than half of the input") {
  const LaneModelConfig cfg;
  // two equally strong populations: trimming one would cross 50%
  std::vector<LaneFeature> features;
  for (int i = 0; i < 30; ++i) {
    const double x = 100.0 * static_cast<double>(i) / 29.0;
    features.push_back(feat(x, 0.0, 0.0));
    features.push_back(feat(x, 0.0, 0.4));
  }
  std::string why;
  const auto fit = fit_base_clothoid(features, cfg, &why);
  if (!fit) {
    CHECK(why == "outlier trim would remove more than half of the features");
  } else {
    CHECK(fit->outliers.size() <= features.size() / 2);
  }
}

TEST_CASE("group_features first frame clusters two marking rows") {
  const LaneModelConfig cfg;
  BaseClothoid base;  // zero course
  std::vector<LaneFeature> features;
  for (int i = 0; i < 8; ++i) {
    features.push_back(feat(5.0 * i, 1.75, 0.0));
    features.push_back(feat(5.0 * i, -1.75, 0.0));
  }
  const FeatureGrouping grouping = group_features(features, base, {}, cfg);
  REQUIRE(grouping.groups.size() == 2);
  CHECK(grouping.groups[0].members.size() == 8);
  CHECK(grouping.groups[1].members.size() == 8);
  CHECK(grouping.ungrouped.empty());
  CHECK_FALSE(grouping.groups[0].lane_id.has_value());
}

TEST_CASE("group_features assigns to previous lanes and leaves distant features ungrouped") {
  const LaneModelConfig cfg;
  BaseClothoid base;
  std::vector<TrackedLane> previous(2);
  previous[0].id = 1;
  previous[0].state << 1.75, 0, 0, 0;
  previous[1].id = 2;
  previous[1].state << -1.75, 0, 0, 0;

  std::vector<LaneFeature> features;
  features.push_back(feat(10.0, 1.8, 0.0));    // lane 1
  features.push_back(feat(20.0, -1.7, 0.0));   // lane 2
  features.push_back(feat(50.0, 1.6, 0.0));    // lane 1 (far range still matches)
  features.push_back(feat(15.0, 5.0, 0.0));    // 3+ m from every candidate

  const FeatureGrouping grouping = group_features(features, base, previous, cfg);
  REQUIRE(grouping.groups.size() == 2);
  CHECK(grouping.groups[0].lane_id == 1);
  CHECK(grouping.groups[0].members == std::vector<std::size_t>{0, 2});
  CHECK(grouping.groups[1].lane_id == 2);
  CHECK(grouping.groups[1].members == std::vector<std::size_t>{1});
  REQUIRE(grouping.ungrouped.size() == 1);
  CHECK(grouping.ungrouped[0] == 3);
}

TEST_CASE("group_features tie-break prefers the candidate closer to the vehicle") {
  const LaneModelConfig cfg;
  BaseClothoid base;
  std::vector<TrackedLane> previous(2);
  previous[0].id = 1;
  previous[0].state << 0.5, 0, 0, 0;
  previous[1].id = 2;
  previous[1].state << 1.5, 0, 0, 0;

  std::vector<LaneFeature> features{feat(10.0, 1.0, 0.0)};  // exactly between
  const FeatureGrouping grouping = group_features(features, base, previous, cfg);
  REQUIRE(grouping.groups.size() == 1);
  CHECK(grouping.groups[0].lane_id == 1);  // |0.5| < |1.5|
}

TEST_CASE("grouping is a partition") {
  const LaneModelConfig cfg;
  BaseClothoid base;
  base.theta0 = 0.005;
  base.c0 = 2e-4;
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TrackedLane> previous(1);
  previous[0].id = 5;
  previous[0].state << 1.75, 0.005, 2e-4, 0;

  std::vector<LaneFeature> features;
  for (int i = 0; i < 120; ++i) {
    features.push_back(feat(130.0 * u(rng), 8.0 * (u(rng) - 0.5),
                            0.005 + 2e-4 * 100.0 * u(rng)));
  }
  const FeatureGrouping grouping = group_features(features, base, previous, cfg);
  std::vector<int> seen(features.size(), 0);
  for (const FeatureGroup& g : grouping.groups) {
    for (std::size_t idx : g.members) seen[idx] += 1;
  }
  for (std::size_t idx : grouping.ungrouped) seen[idx] += 1;
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("fit_lane_offsets noiseless and weighted behavior") {
  const LaneModelConfig cfg;
  BaseClothoid base;
  base.theta0 = 0.01;
  base.c0 = 1e-4;

  std::vector<LaneFeature> features;
  FeatureGrouping grouping;
  FeatureGroup group;
  group.lane_id = 9;
  for (int i = 0; i < 10; ++i) {
    const double x = 10.0 * i;
    features.push_back(feat(x, 1.75 + 0.01 * x + 0.5e-4 * x * x, 0.0));
    group.members.push_back(i);
  }
  grouping.groups.push_back(group);
  const auto offsets = fit_lane_offsets(features, grouping, base, cfg);
  REQUIRE(offsets.size() == 1);
  CHECK(std::abs(offsets[0].y0 - 1.75) < 1e-9);
  CHECK(offsets[0].lane_id == 9);
  CHECK(offsets[0].support == 10);

  // doubling one feature's weight pulls the offset toward it
  std::vector<LaneFeature> two{feat(10.0, 1.0, 0.0, 0.5), feat(20.0, 2.0, 0.0, 1.0)};
  FeatureGrouping g2;
  g2.groups.push_back(FeatureGroup{std::nullopt, 0.0, {0, 1}});
  g2.groups[0].members = {0, 1};
  LaneModelConfig cfg3 = cfg;
  cfg3.min_fit_features = 2;
  BaseClothoid flat;
  const auto off2 = fit_lane_offsets(two, g2, flat, cfg3);
  REQUIRE(off2.size() == 1);
  CHECK(off2[0].y0 == doctest::Approx((0.5 * 1.0 + 1.0 * 2.0) / 1.5));
}

TEST_CASE("fit_lane_offsets drops undersized groups and bounds the noise error") {
  const LaneModelConfig cfg;
  BaseClothoid base;
  FeatureGrouping grouping;
  grouping.groups.push_back(FeatureGroup{std::nullopt, 0.0, {0, 1}});
  std::vector<LaneFeature> features{feat(0, 0, 0), feat(10, 0, 0)};
  CHECK(fit_lane_offsets(features, grouping, base, cfg).empty());

  std::mt19937_64 rng(47);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<LaneFeature> noisy;
  FeatureGrouping gp;
  gp.groups.push_back(FeatureGroup{std::nullopt, 0.0, {}});
  for (int i = 0; i < 30; ++i) {
    noisy.push_back(feat(4.0 * i, 1.75 + g(rng), 0.0));
    gp.groups[0].members.push_back(i);
  }
  const auto off = fit_lane_offsets(noisy, gp, base, cfg);
  REQUIRE(off.size() == 1);
  CHECK(std::abs(off[0].y0 - 1.75) < 3.0 * 0.1 / std::sqrt(30.0));
}

TEST_CASE("update_tracked_lanes converges, expires and stays ordered") {
  const LaneModelConfig cfg;
  std::uint64_t next_id = 1;
  std::vector<TrackedLane> lanes;
  BaseClothoid base;
  base.theta0 = 0.002;
  base.param_covariance = Mat3::Identity() * 1e-6;

  std::vector<LaneOffsetFit> offsets;
  offsets.push_back(LaneOffsetFit{std::nullopt, 1.75, 12, 1e-4});
  offsets.push_back(LaneOffsetFit{std::nullopt, -1.75, 12, 1e-4});
  lanes = update_tracked_lanes(lanes, base, offsets, 0.1, cfg, next_id);
  REQUIRE(lanes.size() == 2);

  double prev_trace = 1e9;
  for (int frame = 0; frame < 30; ++frame) {
    std::vector<LaneOffsetFit> matched;
    matched.push_back(LaneOffsetFit{lanes[0].id, 1.75, 12, 1e-4});
    matched.push_back(LaneOffsetFit{lanes[1].id, -1.75, 12, 1e-4});
    lanes = update_tracked_lanes(lanes, base, matched, 0.1, cfg, next_id);
    const double trace = lanes[0].covariance.trace();
    CHECK(trace <= prev_trace + 1e-12);
    prev_trace = trace;
  }
  CHECK(lanes[0].state(0) == doctest::Approx(1.75).epsilon(1e-6));
  CHECK(lanes[0].state(1) == doctest::Approx(0.002).epsilon(1e-3));

  // lanes stay laterally ordered across updates
  CHECK(lanes[0].state(0) > lanes[1].state(0));

  // lane 2 loses support: expires after expire_after_frames
  for (int frame = 0; frame < cfg.expire_after_frames; ++frame) {
    std::vector<LaneOffsetFit> only_first{LaneOffsetFit{lanes[0].id, 1.75, 12, 1e-4}};
    lanes = update_tracked_lanes(lanes, base, only_first, 0.1, cfg, next_id);
  }
  REQUIRE(lanes.size() == 1);
  CHECK(lanes[0].state(0) == doctest::Approx(1.75).epsilon(1e-6));
}

TEST_CASE("update_tracked_lanes spawn gate and merge rule") {
  const LaneModelConfig cfg;
  std::uint64_t next_id = 1;
  std::vector<TrackedLane> lanes;
  BaseClothoid base;
  base.param_covariance = Mat3::Identity() * 1e-6;

  std::vector<LaneOffsetFit> offsets{LaneOffsetFit{std::nullopt, 1.75, 5, 1e-4}};
  lanes = update_tracked_lanes(lanes, base, offsets, 0.1, cfg, next_id);
  REQUIRE(lanes.size() == 1);

  // a new offset 1 m away is inside the spawn gate: ignored
  std::vector<LaneOffsetFit> near{LaneOffsetFit{std::nullopt, 2.75, 5, 1e-4}};
  lanes = update_tracked_lanes(lanes, base, near, 0.1, cfg, next_id);
  CHECK(lanes.size() == 1);

  // 3.5 m away is fine
  std::vector<LaneOffsetFit> far{LaneOffsetFit{std::nullopt, 5.25, 5, 1e-4}};
  lanes = update_tracked_lanes(lanes, base, far, 0.1, cfg, next_id);
  CHECK(lanes.size() == 2);
}

TEST_CASE("degenerate Kalman fixed point") {
  LaneModelConfig cfg;
  cfg.process_sigma_y0_m = 0.0;
  cfg.process_sigma_theta0_rad = 0.0;
  cfg.process_sigma_c0 = 0.0;
  cfg.process_sigma_c1 = 0.0;
  std::uint64_t next_id = 1;
  std::vector<TrackedLane> lanes;
  BaseClothoid base;
  base.param_covariance = Mat3::Zero();

  std::vector<LaneOffsetFit> offsets{LaneOffsetFit{std::nullopt, 1.75, 5, 0.0}};
  lanes = update_tracked_lanes(lanes, base, offsets, 0.1, cfg, next_id);
  REQUIRE(lanes.size() == 1);
  const Eigen::Vector4d s0 = lanes[0].state;
  for (int i = 0; i < 5; ++i) {
    std::vector<LaneOffsetFit> same{LaneOffsetFit{lanes[0].id, 1.75, 5, 0.0}};
    lanes = update_tracked_lanes(lanes, base, same, 0.1, cfg, next_id);
  }
  CHECK((lanes[0].state - s0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lanes_snapshot ordering and projection") {
  const LaneModelConfig cfg;
  std::vector<TrackedLane> lanes(3);
  lanes[0].id = 1;
  lanes[0].state << -1.75, 0.001, 1e-4, 1e-6;
  lanes[1].id = 2;
  lanes[1].state << 5.25, 0.001, 1e-4, 1e-6;
  lanes[2].id = 3;
  lanes[2].state << 1.75, 0.001, 1e-4, 1e-6;

  const auto snap = lanes_snapshot(lanes, cfg);
  REQUIRE(snap.size() == 3);
  CHECK(snap[0].y0 == doctest::Approx(5.25));
  CHECK(snap[1].y0 == doctest::Approx(1.75));
  CHECK(snap[2].y0 == doctest::Approx(-1.75));
  CHECK(snap[0].theta0 == doctest::Approx(0.001));
  CHECK(snap[0].c0 == doctest::Approx(1e-4));
  CHECK(snap[0].x_min == 0.0);
  CHECK(snap[0].x_max == doctest::Approx(cfg.horizon_m));

  CHECK(lanes_snapshot({}, cfg).empty());
}
