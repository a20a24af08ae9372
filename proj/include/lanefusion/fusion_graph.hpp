#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "lanefusion/config.hpp"
#include "lanefusion/feature.hpp"

namespace lanefusion {

using VertexId = std::uint64_t;
using SwitchId = std::uint64_t;

enum class VertexKind { kEgoPose, kFeature };

enum class EdgeKind {
  kOdometry,
  kSmcMeas,
  kHrcMeas,
  kObjMeas,
  kWidth,
  kSmoothing,
  kSwitchPrior,  // synthesized per switch variable, never stored as an Edge
};

const char* edge_kind_name(EdgeKind k);
bool is_measurement_kind(EdgeKind k);

struct Vertex {
  VertexId id = 0;
  VertexKind kind = VertexKind::kFeature;
  Pose2 pose;
  // feature bookkeeping
  double confidence = 0.0;
  Mat3 covariance = Mat3::Identity();  // fused measurement covariance (association gate)
  std::uint64_t frame_added = 0;
};

/// Constraint between one or two vertices: desired relative pose z and
/// information matrix. Smoothing edges additionally reference the switch
/// variable scaling their residual.
struct Edge {
  EdgeKind kind = EdgeKind::kOdometry;
  VertexId from = 0;
  VertexId to = 0;
  Pose2 measurement;
  Mat3 information = Mat3::Identity();
  std::optional<SwitchId> switch_id;
};

struct SwitchVariable {
  double value = 1.0;               // clamped to [0,1] after every solver update
  double prior_information = 1.0;   // Omega_s of the (1-s)^2 prior
};

/// Sliding-window fusion graph: ego pose chain plus lane-feature vertices,
/// all expressed in the current vehicle frame, connected by typed
/// constraint edges. Single writer; frames are built strictly in the
/// order odometry -> SMC -> HRC -> objects.
class FusionGraph {
 public:
  explicit FusionGraph(const PipelineConfig& cfg);

  /// Rebuilds a graph from its parts (dump tooling, synthetic test
  /// graphs). Validates referential integrity and kind constraints.
  static FusionGraph from_snapshot(const PipelineConfig& cfg, std::vector<Vertex> vertices,
                                   std::vector<VertexId> pose_chain, std::vector<Edge> edges,
                                   std::map<SwitchId, SwitchVariable> switches);

  /// Starts a new time step: transforms every vertex into the new vehicle
  /// frame, prunes features behind the vehicle, drops disconnected poses,
  /// enforces the pose window and inserts the odometry edge.
  void advance_odometry(const ControlVector& u);

  /// Nearest existing feature vertex passing the Mahalanobis, Euclidean
  /// and heading gates, or nullopt.
  std::optional<VertexId> associate(const LaneFeature& f) const;

  /// Associate-or-insert plus a measurement edge from the current pose.
  /// Returns nullopt (and counts the rejection) when the feature is
  /// malformed or its covariance cannot be inverted.
  std::optional<VertexId> add_measurement(EdgeKind source, const LaneFeature& f);

  /// Left/right object features with their width edge; adds smoothing
  /// edges with fresh switch variables when the same object contributed
  /// features in the directly preceding frame.
  std::optional<std::pair<VertexId, VertexId>> add_object_measurement(std::int64_t object_id,
                                                                      const LaneFeature& left,
                                                                      const LaneFeature& right,
                                                                      double lane_width_m,
                                                                      bool width_from_smc);

  /// J(V): sum over all constraints, smoothing residuals scaled by their
  /// switch value, plus the switch priors. Non-negative by construction.
  double objective() const;

  // --- accessors -----------------------------------------------------
  const std::map<VertexId, Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::map<SwitchId, SwitchVariable>& switches() const { return switches_; }
  const std::vector<VertexId>& pose_chain() const { return pose_chain_; }
  VertexId current_pose_id() const { return pose_chain_.back(); }
  std::uint64_t frame_index() const { return frame_index_; }
  std::size_t rejected_measurements() const { return rejected_measurements_; }
  std::size_t feature_count() const;

  // --- solver hooks ---------------------------------------------------
  void set_vertex_pose(VertexId id, const Pose2& p);
  void set_switch_value(SwitchId id, double v);  // clamps to [0,1]

 private:
  VertexId new_vertex_id() { return next_vertex_id_++; }
  VertexId insert_feature_vertex(const LaneFeature& f);
  void remove_vertices(const std::vector<VertexId>& ids);
  void drop_disconnected();  // orphan poses (with bridging) and features
  bool has_measurement_edge(VertexId pose_id) const;

  GraphConfig graph_cfg_;
  AssociationConfig assoc_cfg_;
  OdometryNoiseConfig odo_cfg_;
  SmoothingConfig smo_cfg_;
  WidthEdgeConfig width_cfg_;
  FusionGraph() = default;  // used by from_snapshot

  std::map<VertexId, Vertex> vertices_;
  std::vector<Edge> edges_;
  std::map<SwitchId, SwitchVariable> switches_;
  std::vector<VertexId> pose_chain_;  // oldest first; back() is current

  struct ObjectRecord {
    VertexId left = 0;
    VertexId right = 0;
    std::uint64_t frame = 0;
  };
  std::map<std::int64_t, ObjectRecord> object_track_;

  VertexId next_vertex_id_ = 1;
  SwitchId next_switch_id_ = 1;
  std::uint64_t frame_index_ = 0;
  std::size_t rejected_measurements_ = 0;
};

/// Objective of an edge set under explicit states; shared by
/// FusionGraph::objective and the solver's step control.
double edge_objective(const Edge& e, const Pose2& from, const Pose2& to, double switch_value);

}  // namespace lanefusion
