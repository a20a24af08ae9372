#include "lanefusion/fusion_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace lanefusion {

const char* edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::kOdometry: return "odometry";
    case EdgeKind::kSmcMeas: return "smc_meas";
    case EdgeKind::kHrcMeas: return "hrc_meas";
    case EdgeKind::kObjMeas: return "obj_meas";
    case EdgeKind::kWidth: return "width";
    case EdgeKind::kSmoothing: return "smoothing";
    case EdgeKind::kSwitchPrior: return "switch_prior";
  }
  return "?";
}

bool is_measurement_kind(EdgeKind k) {
  return k == EdgeKind::kSmcMeas || k == EdgeKind::kHrcMeas || k == EdgeKind::kObjMeas;
}

double edge_objective(const Edge& e, const Pose2& from, const Pose2& to, double switch_value) {
  Vec3 r = pose_residual(e.measurement, pose_between(from, to));
  if (e.kind == EdgeKind::kSmoothing) {
    r *= switch_value;
  }
  return r.dot(e.information * r);
}

FusionGraph::FusionGraph(const PipelineConfig& cfg)
    : graph_cfg_(cfg.graph),
      assoc_cfg_(cfg.association),
      odo_cfg_(cfg.odometry),
      smo_cfg_(cfg.smoothing),
      width_cfg_(cfg.width) {
  Vertex v;
  v.id = new_vertex_id();
  v.kind = VertexKind::kEgoPose;
  v.pose = Pose2{};
  pose_chain_.push_back(v.id);
  vertices_.emplace(v.id, v);
}

FusionGraph FusionGraph::from_snapshot(const PipelineConfig& cfg, std::vector<Vertex> vertices,
                                       std::vector<VertexId> pose_chain, std::vector<Edge> edges,
                                       std::map<SwitchId, SwitchVariable> switches) {
  FusionGraph g;
  g.graph_cfg_ = cfg.graph;
  g.assoc_cfg_ = cfg.association;
  g.odo_cfg_ = cfg.odometry;
  g.smo_cfg_ = cfg.smoothing;
  g.width_cfg_ = cfg.width;
  if (pose_chain.empty()) {
    throw std::invalid_argument("from_snapshot: pose chain must not be empty");
  }
  for (Vertex& v : vertices) {
    if (!g.vertices_.emplace(v.id, v).second) {
      throw std::invalid_argument("from_snapshot: duplicate vertex id");
    }
    g.next_vertex_id_ = std::max(g.next_vertex_id_, v.id + 1);
  }
  for (VertexId id : pose_chain) {
    const auto it = g.vertices_.find(id);
    if (it == g.vertices_.end() || it->second.kind != VertexKind::kEgoPose) {
      throw std::invalid_argument("from_snapshot: pose chain references a non-pose vertex");
    }
  }
  for (const auto& [id, sw] : switches) {
    g.next_switch_id_ = std::max(g.next_switch_id_, id + 1);
  }
  g.switches_ = std::move(switches);
  for (const Edge& e : edges) {
    if (!g.vertices_.count(e.from) || !g.vertices_.count(e.to)) {
      throw std::invalid_argument("from_snapshot: edge references unknown vertex");
    }
    if ((e.kind == EdgeKind::kSmoothing) != e.switch_id.has_value()) {
      throw std::invalid_argument("from_snapshot: switch ids belong to smoothing edges only");
    }
    if (e.switch_id && !g.switches_.count(*e.switch_id)) {
      throw std::invalid_argument("from_snapshot: edge references unknown switch");
    }
  }
  g.edges_ = std::move(edges);
  g.pose_chain_ = std::move(pose_chain);
  return g;
}

std::size_t FusionGraph::feature_count() const {
  return vertices_.size() - pose_chain_.size();
}

bool FusionGraph::has_measurement_edge(VertexId pose_id) const {
  for (const Edge& e : edges_) {
    if (is_measurement_kind(e.kind) && e.from == pose_id) {
      return true;
    }
  }
  return false;
}

void FusionGraph::remove_vertices(const std::vector<VertexId>& ids) {
  if (ids.empty()) {
    return;
  }
  const std::set<VertexId> gone(ids.begin(), ids.end());
  std::set<SwitchId> dead_switches;
  std::vector<Edge> kept;
  kept.reserve(edges_.size());
  for (const Edge& e : edges_) {
    if (gone.count(e.from) || gone.count(e.to)) {
      if (e.switch_id) {
        dead_switches.insert(*e.switch_id);
      }
      continue;
    }
    kept.push_back(e);
  }
  edges_.swap(kept);
  for (SwitchId s : dead_switches) {
    switches_.erase(s);
  }
  for (VertexId id : ids) {
    vertices_.erase(id);
  }
  std::erase_if(pose_chain_, [&](VertexId id) { return gone.count(id) > 0; });
  for (auto it = object_track_.begin(); it != object_track_.end();) {
    if (gone.count(it->second.left) || gone.count(it->second.right)) {
      it = object_track_.erase(it);
    } else {
      ++it;
    }
  }
}

void FusionGraph::drop_disconnected() {
  bool changed = true;
  while (changed) {
    changed = false;

    // Features must keep at least one measurement edge.
    std::set<VertexId> measured;
    for (const Edge& e : edges_) {
      if (is_measurement_kind(e.kind)) {
        measured.insert(e.to);
      }
    }
    std::vector<VertexId> dead_features;
    for (const auto& [id, v] : vertices_) {
      if (v.kind == VertexKind::kFeature && !measured.count(id)) {
        dead_features.push_back(id);
      }
    }
    if (!dead_features.empty()) {
      remove_vertices(dead_features);
      changed = true;
      continue;
    }

    // Past poses without measurements are dropped. A mid-chain drop would
    // split the odometry chain, so its two odometry edges are composed
    // into a single bridging edge first.
    for (std::size_t k = 0; k + 1 < pose_chain_.size(); ++k) {
      const VertexId id = pose_chain_[k];
      if (has_measurement_edge(id)) {
        continue;
      }
      if (k == 0) {
        remove_vertices({id});
      } else {
        const Edge* in = nullptr;
        const Edge* out = nullptr;
        for (const Edge& e : edges_) {
          if (e.kind != EdgeKind::kOdometry) continue;
          if (e.to == id) in = &e;
          if (e.from == id) out = &e;
        }
        if (in && out) {
          Edge bridge;
          bridge.kind = EdgeKind::kOdometry;
          bridge.from = in->from;
          bridge.to = out->to;
          bridge.measurement = pose_compose(in->measurement, out->measurement);
          const auto c1 = invert_covariance(in->information, 1e15);
          const auto c2 = invert_covariance(out->information, 1e15);
          Mat3 cov;
          if (c1 && c2) {
            cov = compose_relative_covariance(in->measurement, *c1, out->measurement, *c2);
          } else {
            cov = Mat3::Identity();
          }
          const auto info = invert_covariance(cov, 1e15);
          bridge.information = info ? *info : Mat3::Identity();
          remove_vertices({id});
          edges_.push_back(bridge);
        } else {
          remove_vertices({id});
        }
      }
      changed = true;
      break;
    }
  }
}

void FusionGraph::advance_odometry(const ControlVector& u) {
  if (!is_valid_control(u)) {
    throw std::invalid_argument("advance_odometry: invalid control vector");
  }
  const Pose2 delta = unicycle_step(u);

  // Expression change: everything moves into the new vehicle frame.
  // Edge measurements are relative poses and stay untouched.
  for (auto& [id, v] : vertices_) {
    v.pose = pose_between(delta, v.pose);
  }

  std::vector<VertexId> behind;
  for (const auto& [id, v] : vertices_) {
    if (v.kind == VertexKind::kFeature && v.pose.x < -graph_cfg_.prune_behind_m) {
      behind.push_back(id);
    }
  }
  remove_vertices(behind);
  drop_disconnected();

  // Pose window: at most pose_window + 1 poses including the new one.
  while (static_cast<int>(pose_chain_.size()) + 1 > graph_cfg_.pose_window + 1) {
    remove_vertices({pose_chain_.front()});
    drop_disconnected();
  }

  const VertexId prev = pose_chain_.back();
  Vertex v;
  v.id = new_vertex_id();
  v.kind = VertexKind::kEgoPose;
  v.pose = Pose2{};
  v.frame_added = frame_index_ + 1;
  pose_chain_.push_back(v.id);
  vertices_.emplace(v.id, v);

  const double dist = std::hypot(delta.x, delta.y);
  const double sxy = odo_cfg_.sigma_xy_per_m * dist + odo_cfg_.sigma_xy_floor_m;
  const double sth =
      odo_cfg_.sigma_theta_per_rad * std::abs(delta.theta) + odo_cfg_.sigma_theta_floor_rad;
  Edge e;
  e.kind = EdgeKind::kOdometry;
  e.from = prev;
  e.to = v.id;
  e.measurement = delta;
  e.information = Mat3::Zero();
  e.information(0, 0) = 1.0 / (sxy * sxy);
  e.information(1, 1) = 1.0 / (sxy * sxy);
  e.information(2, 2) = 1.0 / (sth * sth);
  edges_.push_back(e);

  ++frame_index_;
}

std::optional<VertexId> FusionGraph::associate(const LaneFeature& f) const {
  const VertexId best_none = 0;
  VertexId best = best_none;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& [id, v] : vertices_) {
    if (v.kind != VertexKind::kFeature) {
      continue;
    }
    const double dx = f.pose.x - v.pose.x;
    const double dy = f.pose.y - v.pose.y;
    if (std::abs(dx) >= assoc_cfg_.euclidean_gate_m || std::abs(dy) >= assoc_cfg_.euclidean_gate_m) {
      continue;
    }
    if (std::hypot(dx, dy) >= assoc_cfg_.euclidean_gate_m) {
      continue;
    }
    const double dth = normalize_angle(f.pose.theta - v.pose.theta);
    if (std::abs(dth) >= assoc_cfg_.heading_gate_rad) {
      continue;
    }
    const Mat3 combined = f.covariance + v.covariance;
    const auto info = invert_covariance(combined, 1e15);
    if (!info) {
      continue;
    }
    const Vec3 e(dx, dy, dth);
    const double d2 = e.dot(*info * e);
    if (d2 <= assoc_cfg_.mahalanobis_gate && d2 < best_d2) {
      best_d2 = d2;
      best = id;
    }
  }
  if (best == best_none) {
    return std::nullopt;
  }
  return best;
}

VertexId FusionGraph::insert_feature_vertex(const LaneFeature& f) {
  Vertex v;
  v.id = new_vertex_id();
  v.kind = VertexKind::kFeature;
  v.pose = f.pose;
  v.confidence = f.confidence;
  v.covariance = f.covariance;
  v.frame_added = frame_index_;
  vertices_.emplace(v.id, v);
  return v.id;
}

std::optional<VertexId> FusionGraph::add_measurement(EdgeKind source, const LaneFeature& f) {
  if (!is_measurement_kind(source)) {
    throw std::invalid_argument("add_measurement: not a measurement edge kind");
  }
  if (!is_valid_lane_feature(f)) {
    ++rejected_measurements_;
    return std::nullopt;
  }
  const auto info = invert_covariance(f.covariance, graph_cfg_.max_covariance_condition);
  if (!info) {
    ++rejected_measurements_;
    return std::nullopt;
  }

  VertexId target;
  if (auto hit = associate(f)) {
    target = *hit;
    Vertex& v = vertices_.at(target);
    v.confidence = 1.0 - (1.0 - v.confidence) * (1.0 - f.confidence);
    // Tighten the association gate as evidence accumulates.
    const auto prior_info = invert_covariance(v.covariance, 1e15);
    if (prior_info) {
      const auto fused = invert_covariance(Mat3(*prior_info + *info), 1e15);
      if (fused) {
        v.covariance = *fused;
      }
    }
  } else {
    target = insert_feature_vertex(f);
  }

  Edge e;
  e.kind = source;
  e.from = current_pose_id();
  e.to = target;
  e.measurement = f.pose;  // current pose sits at the origin of its frame
  e.information = *info;
  edges_.push_back(e);
  return target;
}

std::optional<std::pair<VertexId, VertexId>> FusionGraph::add_object_measurement(
    std::int64_t object_id, const LaneFeature& left, const LaneFeature& right,
    double lane_width_m, bool width_from_smc) {
  const auto prev = object_track_.find(object_id);
  const bool chain = prev != object_track_.end() && prev->second.frame + 1 == frame_index_ &&
                     vertices_.count(prev->second.left) && vertices_.count(prev->second.right);
  const VertexId prev_left = chain ? prev->second.left : 0;
  const VertexId prev_right = chain ? prev->second.right : 0;

  const auto lid = add_measurement(EdgeKind::kObjMeas, left);
  const auto rid = add_measurement(EdgeKind::kObjMeas, right);
  if (!lid || !rid) {
    object_track_.erase(object_id);
    return std::nullopt;
  }

  if (*lid != *rid) {
    const double sw = width_from_smc ? width_cfg_.sigma_smc_m : width_cfg_.sigma_default_m;
    Edge w;
    w.kind = EdgeKind::kWidth;
    w.from = *rid;
    w.to = *lid;
    w.measurement = Pose2{0.0, lane_width_m, 0.0};
    w.information = Mat3::Zero();  // x left free: left/right share the longitudinal position
    w.information(1, 1) = 1.0 / (sw * sw);
    w.information(2, 2) = 1.0 / (width_cfg_.sigma_theta_rad * width_cfg_.sigma_theta_rad);
    edges_.push_back(w);
  }

  if (chain) {
    auto add_smoothing = [&](VertexId a, VertexId b) {
      if (a == b) {
        return;  // association merged the two steps into one vertex
      }
      SwitchVariable s;
      s.value = 1.0;
      s.prior_information = smo_cfg_.switch_prior_information;
      const SwitchId sid = next_switch_id_++;
      switches_.emplace(sid, s);

      Edge e;
      e.kind = EdgeKind::kSmoothing;
      e.from = a;
      e.to = b;
      e.measurement = Pose2{};  // successive features should line up
      e.information = Mat3::Zero();  // Omega_xx = 0: longitudinal travel is expected
      e.information(1, 1) = 1.0 / (smo_cfg_.sigma_y_m * smo_cfg_.sigma_y_m);
      e.information(2, 2) = 1.0 / (smo_cfg_.sigma_theta_rad * smo_cfg_.sigma_theta_rad);
      e.switch_id = sid;
      edges_.push_back(e);
    };
    add_smoothing(prev_left, *lid);
    add_smoothing(prev_right, *rid);
  }

  object_track_[object_id] = ObjectRecord{*lid, *rid, frame_index_};
  return std::make_pair(*lid, *rid);
}

double FusionGraph::objective() const {
  double sum = 0.0;
  for (const Edge& e : edges_) {
    const double s = e.switch_id ? switches_.at(*e.switch_id).value : 1.0;
    sum += edge_objective(e, vertices_.at(e.from).pose, vertices_.at(e.to).pose, s);
  }
  for (const auto& [id, sw] : switches_) {
    sum += sw.prior_information * (1.0 - sw.value) * (1.0 - sw.value);
  }
  return sum;
}

void FusionGraph::set_vertex_pose(VertexId id, const Pose2& p) {
  Vertex& v = vertices_.at(id);
  v.pose = p;
  v.pose.theta = normalize_angle(p.theta);
}

void FusionGraph::set_switch_value(SwitchId id, double v) {
  switches_.at(id).value = std::clamp(v, 0.0, 1.0);
}

}  // namespace lanefusion
