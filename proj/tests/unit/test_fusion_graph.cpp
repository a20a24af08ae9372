#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "lanefusion/fusion_graph.hpp"
#include "support/oracle.hpp"

using namespace lanefusion;

namespace {

LaneFeature feat(double x, double y, double theta = 0.0, double sigma = 0.1,
                 double confidence = 0.8) {
  LaneFeature f;
  f.pose = {x, y, theta};
  f.confidence = confidence;
  f.covariance = Mat3::Zero();
  f.covariance(0, 0) = f.covariance(1, 1) = sigma * sigma;
  f.covariance(2, 2) = 0.02 * 0.02;
  return f;
}

std::size_t count_kind(const FusionGraph& g, EdgeKind k) {
  std::size_t n = 0;
  for (const Edge& e : g.edges()) {
    if (e.kind == k) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("advance_odometry shifts vertices and prunes behind") {
  FusionGraph g{PipelineConfig{}};
  g.add_measurement(EdgeKind::kHrcMeas, feat(10.0, 1.75));
  g.add_measurement(EdgeKind::kHrcMeas, feat(2.0, 1.75));
  CHECK(g.feature_count() == 2);

  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});  // dx = 3
  bool found_7 = false;
  for (const auto& [id, v] : g.vertices()) {
    if (v.kind == VertexKind::kFeature) {
      found_7 = found_7 || std::abs(v.pose.x - 7.0) < 1e-12;
      CHECK(v.pose.x >= -5.0);
    }
  }
  CHECK(found_7);
  CHECK(g.feature_count() == 2);  // 2 -> -1, still inside the window

  // 80 m/s for 0.1 s: the feature at -1 falls to -9 and is pruned
  g.advance_odometry(ControlVector{0.0, 80.0, 0.1});
  CHECK(g.feature_count() == 1);
  for (const auto& [id, v] : g.vertices()) {
    if (v.kind == VertexKind::kFeature) {
      CHECK(v.pose.x == doctest::Approx(-1.0));
    }
  }
}

TEST_CASE("advance_odometry at standstill keeps poses and adds an identity edge") {
  FusionGraph g{PipelineConfig{}};
  g.add_measurement(EdgeKind::kSmcMeas, feat(10.0, 1.75));
  const Pose2 before = g.vertices().begin()->second.pose;
  g.advance_odometry(ControlVector{0.0, 0.0, 0.1});
  const Pose2 after = g.vertices().begin()->second.pose;
  CHECK(before.x == doctest::Approx(after.x));
  CHECK(before.y == doctest::Approx(after.y));
  REQUIRE(count_kind(g, EdgeKind::kOdometry) == 1);
  for (const Edge& e : g.edges()) {
    if (e.kind == EdgeKind::kOdometry) {
      CHECK(e.measurement.x == doctest::Approx(0.0));
      CHECK(e.measurement.theta == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("associate gates") {
  FusionGraph g{PipelineConfig{}};
  CHECK_FALSE(g.associate(feat(10.0, 1.75)).has_value());

  const auto id = g.add_measurement(EdgeKind::kSmcMeas, feat(10.0, 1.75));
  REQUIRE(id.has_value());

  // close in position and heading: associated
  const auto hit = g.associate(feat(10.1, 1.80));
  REQUIRE(hit.has_value());
  CHECK(*hit == *id);

  // 2 m lateral: outside the Euclidean gate
  CHECK_FALSE(g.associate(feat(10.0, 3.75)).has_value());

  // heading off by 25 degrees: outside the heading gate
  CHECK_FALSE(g.associate(feat(10.0, 1.75, 25.0 * M_PI / 180.0)).has_value());

  // tiny covariances make the Mahalanobis gate fail even at 30 cm
  FusionGraph g2{PipelineConfig{}};
  g2.add_measurement(EdgeKind::kSmcMeas, feat(10.0, 1.75, 0.0, 0.01));
  CHECK_FALSE(g2.associate(feat(10.0, 2.05, 0.0, 0.01)).has_value());
}

TEST_CASE("add_measurement associates or inserts") {
  FusionGraph g{PipelineConfig{}};
  const auto a = g.add_measurement(EdgeKind::kSmcMeas, feat(10.0, 1.75));
  REQUIRE(a.has_value());
  CHECK(g.feature_count() == 1);
  CHECK(g.edges().size() == 1);

  const auto b = g.add_measurement(EdgeKind::kSmcMeas, feat(10.05, 1.78));
  REQUIRE(b.has_value());
  CHECK(*a == *b);
  CHECK(g.feature_count() == 1);
  CHECK(g.edges().size() == 2);

  // SMC and HRC measuring the same marking share the fused vertex
  const auto c = g.add_measurement(EdgeKind::kHrcMeas, feat(9.95, 1.73));
  REQUIRE(c.has_value());
  CHECK(*c == *a);
  CHECK(count_kind(g, EdgeKind::kSmcMeas) == 2);
  CHECK(count_kind(g, EdgeKind::kHrcMeas) == 1);

  // confidence saturates upward on every association
  const double conf = g.vertices().at(*a).confidence;
  CHECK(conf > 0.8);
  CHECK(conf <= 1.0);
}

TEST_CASE("add_measurement rejects non-invertible covariance with a diagnostic") {
  FusionGraph g{PipelineConfig{}};
  LaneFeature f = feat(10.0, 1.75);
  f.covariance = Mat3::Zero();  // PSD but singular
  CHECK_FALSE(g.add_measurement(EdgeKind::kHrcMeas, f).has_value());
  CHECK(g.rejected_measurements() == 1);
  CHECK(g.feature_count() == 0);
}

TEST_CASE("object measurements build width, smoothing and switch structure") {
  FusionGraph g{PipelineConfig{}};
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});

  const auto first = g.add_object_measurement(7, feat(50.0, 1.75, 0.0, 0.3, 0.5),
                                              feat(50.0, -1.75, 0.0, 0.3, 0.5), 3.5, true);
  REQUIRE(first.has_value());
  CHECK(g.feature_count() == 2);
  CHECK(count_kind(g, EdgeKind::kObjMeas) == 2);
  CHECK(count_kind(g, EdgeKind::kWidth) == 1);
  CHECK(count_kind(g, EdgeKind::kSmoothing) == 0);
  CHECK(g.switches().empty());

  // next frame, same object 3 m closer after the ego moved
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});
  const auto second = g.add_object_measurement(7, feat(49.5, 1.75, 0.0, 0.3, 0.5),
                                               feat(49.5, -1.75, 0.0, 0.3, 0.5), 3.5, true);
  REQUIRE(second.has_value());
  CHECK(count_kind(g, EdgeKind::kSmoothing) == 2);
  CHECK(g.switches().size() == 2);
  CHECK(count_kind(g, EdgeKind::kWidth) == 2);

  // all smoothing edges carry a switch, leave x unconstrained and link
  // the same side across the two time steps
  for (const Edge& e : g.edges()) {
    if (e.kind == EdgeKind::kSmoothing) {
      CHECK(e.switch_id.has_value());
      CHECK(e.information(0, 0) == 0.0);
      const double y_from = g.vertices().at(e.from).pose.y;
      const double y_to = g.vertices().at(e.to).pose.y;
      CHECK(y_from * y_to > 0.0);  // both left or both right of the object path
      CHECK(g.vertices().at(e.from).frame_added + 1 == g.vertices().at(e.to).frame_added);
    } else {
      CHECK_FALSE(e.switch_id.has_value());
    }
  }
  for (const auto& [id, sw] : g.switches()) {
    CHECK(sw.value == doctest::Approx(1.0));
  }
}

TEST_CASE("width edge separation and measurement") {
  FusionGraph g{PipelineConfig{}};
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});
  g.add_object_measurement(1, feat(40.0, 1.6, 0.0, 0.3, 0.5), feat(40.0, -1.9, 0.0, 0.3, 0.5),
                           3.5, false);
  for (const Edge& e : g.edges()) {
    if (e.kind == EdgeKind::kWidth) {
      CHECK(e.measurement.y == doctest::Approx(3.5));
      CHECK(e.measurement.x == doctest::Approx(0.0));
      CHECK(e.information(0, 0) == 0.0);
      CHECK(e.information(1, 1) > 0.0);
    }
  }
}

TEST_CASE("object track gap restarts the smoothing chain") {
  FusionGraph g{PipelineConfig{}};
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});
  g.add_object_measurement(3, feat(50.0, 1.75, 0.0, 0.3, 0.5), feat(50.0, -1.75, 0.0, 0.3, 0.5),
                           3.5, true);
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});
  // object not seen this frame
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});
  g.add_object_measurement(3, feat(44.0, 1.75, 0.0, 0.3, 0.5), feat(44.0, -1.75, 0.0, 0.3, 0.5),
                           3.5, true);
  CHECK(count_kind(g, EdgeKind::kSmoothing) == 0);
  CHECK(g.switches().empty());
}

TEST_CASE("pose window stays bounded") {
  PipelineConfig cfg;
  cfg.graph.pose_window = 5;
  FusionGraph g{cfg};
  for (int i = 0; i < 30; ++i) {
    g.advance_odometry(ControlVector{0.0, 10.0, 0.1});
    g.add_measurement(EdgeKind::kHrcMeas, feat(12.0, 1.75));
  }
  CHECK(g.pose_chain().size() <= 6);
  // no orphaned past poses
  for (std::size_t k = 0; k + 1 < g.pose_chain().size(); ++k) {
    bool has_meas = false;
    for (const Edge& e : g.edges()) {
      if (is_measurement_kind(e.kind) && e.from == g.pose_chain()[k]) {
        has_meas = true;
      }
    }
    CHECK(has_meas);
  }
}

TEST_CASE("pure yaw odometry step leaves width and smoothing structure untouched") {
  FusionGraph g{PipelineConfig{}};
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});
  g.add_object_measurement(9, feat(50.0, 1.75, 0.0, 0.3, 0.5), feat(50.0, -1.75, 0.0, 0.3, 0.5),
                           3.5, true);
  g.advance_odometry(ControlVector{0.0, 30.0, 0.1});
  g.add_object_measurement(9, feat(49.5, 1.75, 0.0, 0.3, 0.5), feat(49.5, -1.75, 0.0, 0.3, 0.5),
                           3.5, true);

  auto structure = [&]() {
    std::multiset<std::pair<VertexId, VertexId>> s;
    for (const Edge& e : g.edges()) {
      if (e.kind == EdgeKind::kWidth || e.kind == EdgeKind::kSmoothing) {
        s.insert({e.from, e.to});
      }
    }
    return s;
  };
  const auto before = structure();
  const auto switches_before = g.switches().size();

  // ego lane change: lateral + yaw motion, no feature leaves the window
  g.advance_odometry(ControlVector{0.3, 30.0, 0.1});
  CHECK(structure() == before);
  CHECK(g.switches().size() == switches_before);
}

TEST_CASE("mid-chain orphan poses are bridged with composed odometry") {
  // P1 measures a feature, P2 measures nothing, P3 is current. After an
  // advance P2 must disappear while the odometry chain stays connected
  // through a composed bridge edge.
  PipelineConfig cfg;
  std::vector<Vertex> vertices(4);
  vertices[0] = Vertex{1, VertexKind::kEgoPose, Pose2{-6, 0, 0}, 0, Mat3::Identity(), 0};
  vertices[1] = Vertex{2, VertexKind::kEgoPose, Pose2{-3, 0.1, 0.02}, 0, Mat3::Identity(), 1};
  vertices[2] = Vertex{3, VertexKind::kEgoPose, Pose2{}, 0, Mat3::Identity(), 2};
  vertices[3] = Vertex{4, VertexKind::kFeature, Pose2{10, 1.75, 0}, 0.8, Mat3::Identity() * 0.01, 0};
  std::vector<Edge> edges;
  Edge o1;
  o1.kind = EdgeKind::kOdometry;
  o1.from = 1;
  o1.to = 2;
  o1.measurement = pose_between(vertices[0].pose, vertices[1].pose);
  o1.information = Mat3::Identity() * 100.0;
  Edge o2 = o1;
  o2.from = 2;
  o2.to = 3;
  o2.measurement = pose_between(vertices[1].pose, vertices[2].pose);
  Edge m;
  m.kind = EdgeKind::kSmcMeas;
  m.from = 1;
  m.to = 4;
  m.measurement = pose_between(vertices[0].pose, vertices[3].pose);
  m.information = Mat3::Identity() * 25.0;
  edges = {o1, o2, m};
  FusionGraph g = FusionGraph::from_snapshot(cfg, vertices, {1, 2, 3}, edges, {});

  const Pose2 expected_bridge = pose_compose(o1.measurement, o2.measurement);
  g.advance_odometry(ControlVector{0.0, 10.0, 0.1});

  CHECK(g.pose_chain().size() == 3);  // P1, P3, new current
  CHECK(g.vertices().count(2) == 0);
  bool bridged = false;
  for (const Edge& e : g.edges()) {
    if (e.kind == EdgeKind::kOdometry && e.from == 1 && e.to == 3) {
      bridged = true;
      CHECK(e.measurement.x == doctest::Approx(expected_bridge.x));
      CHECK(e.measurement.y == doctest::Approx(expected_bridge.y));
      CHECK(e.measurement.theta == doctest::Approx(expected_bridge.theta));
      // composed information is weaker than either original edge
      CHECK(e.information(0, 0) < 100.0);
      CHECK(e.information(0, 0) > 0.0);
      CHECK(is_covariance_psd(*invert_covariance(e.information, 1e15)));
    }
  }
  CHECK(bridged);
  // the solvable chain survives
  CHECK(g.objective() >= 0.0);
}

TEST_CASE("objective zero residual and single edge") {
  FusionGraph g{PipelineConfig{}};
  const auto id = g.add_measurement(EdgeKind::kSmcMeas, feat(10.0, 1.75));
  REQUIRE(id.has_value());
  CHECK(g.objective() == doctest::Approx(0.0));  // vertex initialized at the measurement

  // displace the vertex: objective becomes r^T Omega r
  g.set_vertex_pose(*id, Pose2{10.0, 1.85, 0.0});
  const Edge& e = g.edges().front();
  const Vec3 r(0.0, -0.1, 0.0);
  CHECK(g.objective() == doctest::Approx(r.dot(e.information * r)));
}

TEST_CASE("objective matches the brute-force oracle on random graphs") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    FusionGraph g = lanefusion::testing::random_small_graph(rng);
    const auto st = lanefusion::testing::oracle_state_from_graph(g);
    const double oracle = lanefusion::testing::oracle_objective(g, st);
    CHECK(g.objective() == doctest::Approx(oracle).epsilon(1e-10));
    CHECK(g.objective() >= 0.0);
  }
}
