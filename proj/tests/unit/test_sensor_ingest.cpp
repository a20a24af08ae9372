#include <doctest.h>

#include <cmath>

#include "lanefusion/sensor_ingest.hpp"

using namespace lanefusion;

namespace {

SmcLaneReport straight_report(double width, double range) {
  SmcLaneReport r;
  r.left = make_clothoid(width / 2.0, 0.0, 0.0, 0.0, 0.0, range);
  r.right = make_clothoid(-width / 2.0, 0.0, 0.0, 0.0, 0.0, range);
  r.detection_range_m = range;
  r.sigma_y0 = 0.05;
  r.sigma_theta0 = 0.002;
  r.sigma_c0 = 1e-5;
  r.sigma_c1 = 2e-7;
  r.confidence = 0.9;
  return r;
}

}  // namespace

TEST_CASE("sample_smc_features straight lane") {
  const IngestConfig cfg;
  const auto feats = sample_smc_features(straight_report(3.5, 20.0), cfg);
  REQUIRE(feats.size() == 22);  // 11 per side at x = 0,2,...,20
  int left = 0, right = 0;
  for (const LaneFeature& f : feats) {
    CHECK(std::fmod(f.pose.x, 2.0) == doctest::Approx(0.0));
    CHECK(f.pose.theta == doctest::Approx(0.0));
    CHECK(f.confidence == doctest::Approx(0.9));
    if (f.pose.y > 0) {
      CHECK(f.pose.y == doctest::Approx(1.75));
      ++left;
    } else {
      CHECK(f.pose.y == doctest::Approx(-1.75));
      ++right;
    }
  }
  CHECK(left == 11);
  CHECK(right == 11);
}

TEST_CASE("sample_smc_features spacing is exactly 2 m") {
  const IngestConfig cfg;
  SmcLaneReport r = straight_report(3.5, 31.0);
  r.right.reset();
  const auto feats = sample_smc_features(r, cfg);
  REQUIRE(feats.size() >= 2);
  for (std::size_t i = 1; i < feats.size(); ++i) {
    CHECK(feats[i].pose.x - feats[i - 1].pose.x == doctest::Approx(2.0));
  }
}

TEST_CASE("sample_smc_features degenerate range and invalid clothoid") {
  const IngestConfig cfg;
  SmcLaneReport r = straight_report(3.5, 20.0);
  r.detection_range_m = 0.0;
  CHECK(sample_smc_features(r, cfg).empty());

  SmcLaneReport r2;
  r2.detection_range_m = 20.0;
  CHECK(sample_smc_features(r2, cfg).empty());  // no clothoids at all
}

TEST_CASE("sample_smc_features heading follows the curvature") {
  const IngestConfig cfg;
  SmcLaneReport r;
  r.left = make_clothoid(1.75, 0.0, 1e-3, 0.0, 0.0, 60.0);
  r.detection_range_m = 60.0;
  r.confidence = 1.0;
  const auto feats = sample_smc_features(r, cfg);
  const auto at10 = std::find_if(feats.begin(), feats.end(),
                                 [](const LaneFeature& f) { return f.pose.x == 10.0; });
  REQUIRE(at10 != feats.end());
  CHECK(at10->pose.theta == doctest::Approx(0.01));
}

TEST_CASE("sample_smc_features covariance grows with distance") {
  const IngestConfig cfg;
  const auto feats = sample_smc_features(straight_report(3.5, 80.0), cfg);
  const LaneFeature* near = nullptr;
  const LaneFeature* far = nullptr;
  for (const LaneFeature& f : feats) {
    if (f.pose.y > 0 && f.pose.x == 0.0) near = &f;
    if (f.pose.y > 0 && f.pose.x == 80.0) far = &f;
  }
  REQUIRE(near);
  REQUIRE(far);
  // y variance at x=0 is just sigma_y0^2; at 80 m the heading and
  // curvature sigmas dominate
  CHECK(near->covariance(1, 1) == doctest::Approx(0.0025));
  CHECK(far->covariance(1, 1) > 4.0 * near->covariance(1, 1));
  CHECK(near->covariance(0, 0) ==
        doctest::Approx(cfg.smc_longitudinal_sigma_m * cfg.smc_longitudinal_sigma_m));
  // propagated covariance must be usable as an information matrix
  CHECK(invert_covariance(far->covariance).has_value());
}

TEST_CASE("ingest_hrc_features clips, validates and counts") {
  HrcFeatureReport r;
  r.max_range_m = 130.0;

  LaneFeature good;
  good.pose = {50.0, 1.75, 0.0};
  good.confidence = 0.8;
  good.covariance = Mat3::Identity() * 0.01;

  LaneFeature beyond = good;
  beyond.pose.x = 135.0;

  LaneFeature bad = good;
  bad.covariance(0, 1) = 5.0;  // not symmetric-PSD

  for (int i = 0; i < 9; ++i) {
    r.features.push_back(good);
  }
  r.features.push_back(bad);
  r.features.push_back(beyond);

  const HrcIngestResult res = ingest_hrc_features(r);
  CHECK(res.features.size() == 9);
  CHECK(res.dropped == 1);
  CHECK(res.clipped == 1);
  CHECK(res.features.front().pose.x == doctest::Approx(50.0));
}

TEST_CASE("object_to_features straight ahead") {
  const IngestConfig cfg;
  TrackedObject o;
  o.pose = {50.0, 0.0, 0.0};
  o.covariance = Mat3::Identity() * 0.09;
  o.confirmed = true;

  const auto pair = object_to_features(o, 3.5, cfg);
  REQUIRE(pair.has_value());
  CHECK(pair->first.pose.x == doctest::Approx(50.0));
  CHECK(pair->first.pose.y == doctest::Approx(1.75));
  CHECK(pair->first.pose.theta == doctest::Approx(0.0));
  CHECK(pair->second.pose.x == doctest::Approx(50.0));
  CHECK(pair->second.pose.y == doctest::Approx(-1.75));
  CHECK(pair->first.confidence == doctest::Approx(cfg.object_feature_confidence));
  // driver offset variance added laterally
  CHECK(pair->first.covariance(1, 1) ==
        doctest::Approx(0.09 + cfg.driver_lateral_sigma_m * cfg.driver_lateral_sigma_m));
}

TEST_CASE("object_to_features rotated heading") {
  const IngestConfig cfg;
  TrackedObject o;
  o.pose = {50.0, 0.0, 0.1};
  const auto pair = object_to_features(o, 3.5, cfg);
  REQUIRE(pair.has_value());
  CHECK(pair->first.pose.x == doctest::Approx(50.0 - 1.75 * std::sin(0.1)));
  CHECK(pair->first.pose.y == doctest::Approx(1.75 * std::cos(0.1)));
  CHECK(pair->first.pose.theta == doctest::Approx(0.1));
  CHECK(pair->second.pose.x == doctest::Approx(50.0 + 1.75 * std::sin(0.1)));
}

TEST_CASE("object_to_features geometry invariants") {
  const IngestConfig cfg;
  TrackedObject o;
  o.pose = {37.0, -2.4, 0.07};
  const double w = 3.2;
  const auto pair = object_to_features(o, w, cfg);
  REQUIRE(pair.has_value());
  CHECK(std::abs(0.5 * (pair->first.pose.x + pair->second.pose.x) - o.pose.x) < 1e-12);
  CHECK(std::abs(0.5 * (pair->first.pose.y + pair->second.pose.y) - o.pose.y) < 1e-12);
  const double sep = std::hypot(pair->first.pose.x - pair->second.pose.x,
                                pair->first.pose.y - pair->second.pose.y);
  CHECK(sep == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("object_to_features rejects objects behind the ego vehicle") {
  const IngestConfig cfg;
  TrackedObject o;
  o.pose = {-3.0, 0.0, 0.0};
  CHECK_FALSE(object_to_features(o, 3.5, cfg).has_value());
}

TEST_CASE("current_lane_width") {
  const IngestConfig cfg;
  CHECK(current_lane_width(std::nullopt, cfg) == doctest::Approx(3.5));

  SmcLaneReport r = straight_report(3.6, 60.0);
  CHECK(current_lane_width(r, cfg) == doctest::Approx(3.6));

  SmcLaneReport wide = straight_report(6.0, 60.0);  // implausible
  CHECK(current_lane_width(wide, cfg) == doctest::Approx(3.5));

  SmcLaneReport one_side = straight_report(3.6, 60.0);
  one_side.left.reset();
  CHECK(current_lane_width(one_side, cfg) == doctest::Approx(3.5));
}
