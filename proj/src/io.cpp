#include "lanefusion/io.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lanefusion/pipeline.hpp"

namespace lanefusion {

using nlohmann::json;

std::string format_double(double v) { return json(v).dump(); }

// --- scenario configuration ---------------------------------------------

namespace {

class Strict {
 public:
  Strict(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    }
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      it->get_to(out);
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.push_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : seen_) {
        if (it.key() == k) {
          known = true;
          break;
        }
      }
      if (!known) {
        throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<const char*> seen_;
};

}  // namespace

json scenario_to_json(const ScenarioConfig& c) {
  json road = json::array();
  for (const RoadSegmentConfig& s : c.road) {
    road.push_back({{"length_m", s.length_m}, {"c0", s.c0}, {"c1", s.c1}});
  }
  json objects = json::array();
  for (const ExplicitObjectConfig& o : c.traffic.objects) {
    json jo = {{"id", o.id},
               {"lane", o.lane},
               {"ahead_m", o.ahead_m},
               {"speed_mps", o.speed_mps}};
    if (o.driver_offset_m) {
      jo["driver_offset_m"] = *o.driver_offset_m;
    }
    objects.push_back(jo);
  }
  json changes = json::array();
  for (const LaneChangeEvent& ev : c.traffic.lane_changes) {
    changes.push_back({{"object_id", ev.object_id},
                       {"time_s", ev.time_s},
                       {"to_lane", ev.to_lane},
                       {"duration_s", ev.duration_s}});
  }
  json dropouts = json::array();
  for (const DropoutSpan& d : c.hrc.dropout_spans) {
    dropouts.push_back({{"boundary", d.boundary}, {"s_begin", d.s_begin}, {"s_end", d.s_end}});
  }
  return json{
      {"road", road},
      {"lanes",
       {{"count", c.lanes.count}, {"width_m", c.lanes.width_m}, {"ego_lane", c.lanes.ego_lane}}},
      {"duration_s", c.duration_s},
      {"frame_rate_hz", c.frame_rate_hz},
      {"seed", c.seed},
      {"ego",
       {{"speed_mps", c.ego.speed_mps},
        {"wander_amplitude_m", c.ego.wander_amplitude_m},
        {"wander_period_s", c.ego.wander_period_s}}},
      {"odometry_noise",
       {{"speed_sigma_mps", c.odometry_noise.speed_sigma_mps},
        {"yaw_rate_sigma_radps", c.odometry_noise.yaw_rate_sigma_radps}}},
      {"smc",
       {{"enabled", c.smc.enabled},
        {"detection_range_m", c.smc.detection_range_m},
        {"sigma_y0", c.smc.sigma_y0},
        {"sigma_theta0", c.smc.sigma_theta0},
        {"sigma_c0", c.smc.sigma_c0},
        {"sigma_c1", c.smc.sigma_c1},
        {"confidence", c.smc.confidence}}},
      {"hrc",
       {{"enabled", c.hrc.enabled},
        {"max_range_m", c.hrc.max_range_m},
        {"min_range_m", c.hrc.min_range_m},
        {"sample_spacing_m", c.hrc.sample_spacing_m},
        {"sigma_base_m", c.hrc.sigma_base_m},
        {"sigma_per_m", c.hrc.sigma_per_m},
        {"sigma_theta_rad", c.hrc.sigma_theta_rad},
        {"confidence", c.hrc.confidence},
        {"outlier_rate", c.hrc.outlier_rate},
        {"outlier_min_m", c.hrc.outlier_min_m},
        {"outlier_max_m", c.hrc.outlier_max_m},
        {"lateral_limit_m", c.hrc.lateral_limit_m},
        {"dropout_spans", dropouts}}},
      {"traffic",
       {{"count", c.traffic.count},
        {"speed_min_mps", c.traffic.speed_min_mps},
        {"speed_max_mps", c.traffic.speed_max_mps},
        {"spawn_min_ahead_m", c.traffic.spawn_min_ahead_m},
        {"spawn_max_ahead_m", c.traffic.spawn_max_ahead_m},
        {"pos_sigma_m", c.traffic.pos_sigma_m},
        {"heading_sigma_rad", c.traffic.heading_sigma_rad},
        {"velocity_sigma_mps", c.traffic.velocity_sigma_mps},
        {"driver_lateral_sigma_m", c.traffic.driver_lateral_sigma_m},
        {"report_range_m", c.traffic.report_range_m},
        {"maintain_count", c.traffic.maintain_count},
        {"objects", objects},
        {"lane_changes", changes}}},
  };
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig c;
  Strict root(j, "scenario");
  if (const json* a = root.child("road")) {
    if (!a->is_array()) {
      throw ConfigError("scenario.road: expected an array");
    }
    c.road.clear();
    for (const json& seg : *a) {
      Strict o(seg, "scenario.road[]");
      RoadSegmentConfig s;
      o.get("length_m", s.length_m);
      o.get("c0", s.c0);
      o.get("c1", s.c1);
      o.finish();
      c.road.push_back(s);
    }
  }
  if (const json* a = root.child("lanes")) {
    Strict o(*a, "scenario.lanes");
    o.get("count", c.lanes.count);
    o.get("width_m", c.lanes.width_m);
    o.get("ego_lane", c.lanes.ego_lane);
    o.finish();
  }
  root.get("duration_s", c.duration_s);
  root.get("frame_rate_hz", c.frame_rate_hz);
  root.get("seed", c.seed);
  if (const json* a = root.child("ego")) {
    Strict o(*a, "scenario.ego");
    o.get("speed_mps", c.ego.speed_mps);
    o.get("wander_amplitude_m", c.ego.wander_amplitude_m);
    o.get("wander_period_s", c.ego.wander_period_s);
    o.finish();
  }
  if (const json* a = root.child("odometry_noise")) {
    Strict o(*a, "scenario.odometry_noise");
    o.get("speed_sigma_mps", c.odometry_noise.speed_sigma_mps);
    o.get("yaw_rate_sigma_radps", c.odometry_noise.yaw_rate_sigma_radps);
    o.finish();
  }
  if (const json* a = root.child("smc")) {
    Strict o(*a, "scenario.smc");
    o.get("enabled", c.smc.enabled);
    o.get("detection_range_m", c.smc.detection_range_m);
    o.get("sigma_y0", c.smc.sigma_y0);
    o.get("sigma_theta0", c.smc.sigma_theta0);
    o.get("sigma_c0", c.smc.sigma_c0);
    o.get("sigma_c1", c.smc.sigma_c1);
    o.get("confidence", c.smc.confidence);
    o.finish();
  }
  if (const json* a = root.child("hrc")) {
    Strict o(*a, "scenario.hrc");
    o.get("enabled", c.hrc.enabled);
    o.get("max_range_m", c.hrc.max_range_m);
    o.get("min_range_m", c.hrc.min_range_m);
    o.get("sample_spacing_m", c.hrc.sample_spacing_m);
    o.get("sigma_base_m", c.hrc.sigma_base_m);
    o.get("sigma_per_m", c.hrc.sigma_per_m);
    o.get("sigma_theta_rad", c.hrc.sigma_theta_rad);
    o.get("confidence", c.hrc.confidence);
    o.get("outlier_rate", c.hrc.outlier_rate);
    o.get("outlier_min_m", c.hrc.outlier_min_m);
    o.get("outlier_max_m", c.hrc.outlier_max_m);
    o.get("lateral_limit_m", c.hrc.lateral_limit_m);
    if (const json* d = o.child("dropout_spans")) {
      for (const json& span : *d) {
        Strict so(span, "scenario.hrc.dropout_spans[]");
        DropoutSpan ds;
        so.get("boundary", ds.boundary);
        so.get("s_begin", ds.s_begin);
        so.get("s_end", ds.s_end);
        so.finish();
        c.hrc.dropout_spans.push_back(ds);
      }
    }
    o.finish();
  }
  if (const json* a = root.child("traffic")) {
    Strict o(*a, "scenario.traffic");
    o.get("count", c.traffic.count);
    o.get("speed_min_mps", c.traffic.speed_min_mps);
    o.get("speed_max_mps", c.traffic.speed_max_mps);
    o.get("spawn_min_ahead_m", c.traffic.spawn_min_ahead_m);
    o.get("spawn_max_ahead_m", c.traffic.spawn_max_ahead_m);
    o.get("pos_sigma_m", c.traffic.pos_sigma_m);
    o.get("heading_sigma_rad", c.traffic.heading_sigma_rad);
    o.get("velocity_sigma_mps", c.traffic.velocity_sigma_mps);
    o.get("driver_lateral_sigma_m", c.traffic.driver_lateral_sigma_m);
    o.get("report_range_m", c.traffic.report_range_m);
    o.get("maintain_count", c.traffic.maintain_count);
    if (const json* d = o.child("objects")) {
      for (const json& obj : *d) {
        Strict oo(obj, "scenario.traffic.objects[]");
        ExplicitObjectConfig e;
        oo.get("id", e.id);
        oo.get("lane", e.lane);
        oo.get("ahead_m", e.ahead_m);
        oo.get("speed_mps", e.speed_mps);
        double off = 0.0;
        if (obj.contains("driver_offset_m")) {
          oo.get("driver_offset_m", off);
          e.driver_offset_m = off;
        }
        oo.finish();
        c.traffic.objects.push_back(e);
      }
    }
    if (const json* d = o.child("lane_changes")) {
      for (const json& ev : *d) {
        Strict oo(ev, "scenario.traffic.lane_changes[]");
        LaneChangeEvent e;
        oo.get("object_id", e.object_id);
        oo.get("time_s", e.time_s);
        oo.get("to_lane", e.to_lane);
        oo.get("duration_s", e.duration_s);
        oo.finish();
        c.traffic.lane_changes.push_back(e);
      }
    }
    o.finish();
  }
  root.child("pipeline");  // consumed by the caller
  root.finish();
  validate_scenario(c);
  return c;
}

ScenarioFile load_scenario_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("cannot open scenario file: " + path.string());
  }
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ScenarioFile f;
  f.scenario = scenario_from_json(j);
  f.pipeline_overrides = j.value("pipeline", json::object());
  return f;
}

// --- frame logs ------------------------------------------------------------

namespace {

json cov_to_json(const Mat3& m) {
  return json::array({m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)});
}

Mat3 cov_from_json(const json& j) {
  if (!j.is_array() || j.size() != 6) {
    throw json::type_error::create(302, "covariance must be a 6-element array", &j);
  }
  Mat3 m;
  m(0, 0) = j[0];
  m(0, 1) = m(1, 0) = j[1];
  m(0, 2) = m(2, 0) = j[2];
  m(1, 1) = j[3];
  m(1, 2) = m(2, 1) = j[4];
  m(2, 2) = j[5];
  return m;
}

json clothoid_to_json(const Clothoid& c) {
  return {{"y0", c.y0},     {"theta0", c.theta0}, {"c0", c.c0},
          {"c1", c.c1},     {"x_min", c.x_min},   {"x_max", c.x_max}};
}

Clothoid clothoid_from_json(const json& j) {
  Clothoid c;
  j.at("y0").get_to(c.y0);
  j.at("theta0").get_to(c.theta0);
  j.at("c0").get_to(c.c0);
  j.at("c1").get_to(c.c1);
  j.at("x_min").get_to(c.x_min);
  j.at("x_max").get_to(c.x_max);
  return c;
}

json feature_to_json(const LaneFeature& f) {
  return {{"x", f.pose.x},
          {"y", f.pose.y},
          {"theta", f.pose.theta},
          {"confidence", f.confidence},
          {"cov", cov_to_json(f.covariance)}};
}

LaneFeature feature_from_json(const json& j) {
  LaneFeature f;
  j.at("x").get_to(f.pose.x);
  j.at("y").get_to(f.pose.y);
  j.at("theta").get_to(f.pose.theta);
  j.at("confidence").get_to(f.confidence);
  f.covariance = cov_from_json(j.at("cov"));
  return f;
}

json frame_to_json(const SensorFrame& f) {
  json j;
  j["type"] = "frame";
  j["t"] = f.t;
  j["control"] = {{"yaw_rate", f.control.yaw_rate}, {"speed", f.control.speed},
                  {"dt", f.control.dt}};
  if (f.smc) {
    json smc;
    smc["left"] = f.smc->left ? clothoid_to_json(*f.smc->left) : json(nullptr);
    smc["right"] = f.smc->right ? clothoid_to_json(*f.smc->right) : json(nullptr);
    smc["detection_range_m"] = f.smc->detection_range_m;
    smc["sigma_y0"] = f.smc->sigma_y0;
    smc["sigma_theta0"] = f.smc->sigma_theta0;
    smc["sigma_c0"] = f.smc->sigma_c0;
    smc["sigma_c1"] = f.smc->sigma_c1;
    smc["confidence"] = f.smc->confidence;
    j["smc"] = smc;
  } else {
    j["smc"] = nullptr;
  }
  if (f.hrc) {
    json features = json::array();
    for (const LaneFeature& lf : f.hrc->features) {
      features.push_back(feature_to_json(lf));
    }
    j["hrc"] = {{"max_range_m", f.hrc->max_range_m}, {"features", features}};
  } else {
    j["hrc"] = nullptr;
  }
  json objs = json::array();
  for (const TrackedObject& o : f.objects) {
    objs.push_back({{"id", o.id},
                    {"x", o.pose.x},
                    {"y", o.pose.y},
                    {"theta", o.pose.theta},
                    {"velocity", o.velocity},
                    {"cov", cov_to_json(o.covariance)},
                    {"confirmed", o.confirmed}});
  }
  j["objects"] = objs;
  return j;
}

SensorFrame frame_from_json(const json& j) {
  SensorFrame f;
  j.at("t").get_to(f.t);
  const json& c = j.at("control");
  c.at("yaw_rate").get_to(f.control.yaw_rate);
  c.at("speed").get_to(f.control.speed);
  c.at("dt").get_to(f.control.dt);
  if (j.contains("smc") && !j.at("smc").is_null()) {
    const json& s = j.at("smc");
    SmcLaneReport smc;
    if (!s.at("left").is_null()) {
      smc.left = clothoid_from_json(s.at("left"));
    }
    if (!s.at("right").is_null()) {
      smc.right = clothoid_from_json(s.at("right"));
    }
    s.at("detection_range_m").get_to(smc.detection_range_m);
    s.at("sigma_y0").get_to(smc.sigma_y0);
    s.at("sigma_theta0").get_to(smc.sigma_theta0);
    s.at("sigma_c0").get_to(smc.sigma_c0);
    s.at("sigma_c1").get_to(smc.sigma_c1);
    s.at("confidence").get_to(smc.confidence);
    f.smc = smc;
  }
  if (j.contains("hrc") && !j.at("hrc").is_null()) {
    const json& h = j.at("hrc");
    HrcFeatureReport hrc;
    h.at("max_range_m").get_to(hrc.max_range_m);
    for (const json& lf : h.at("features")) {
      hrc.features.push_back(feature_from_json(lf));
    }
    f.hrc = hrc;
  }
  if (j.contains("objects")) {
    for (const json& o : j.at("objects")) {
      TrackedObject obj;
      o.at("id").get_to(obj.id);
      o.at("x").get_to(obj.pose.x);
      o.at("y").get_to(obj.pose.y);
      o.at("theta").get_to(obj.pose.theta);
      o.at("velocity").get_to(obj.velocity);
      obj.covariance = cov_from_json(o.at("cov"));
      o.at("confirmed").get_to(obj.confirmed);
      f.objects.push_back(obj);
    }
  }
  return f;
}

}  // namespace

void write_frame_log(std::ostream& os, const std::vector<SensorFrame>& frames) {
  os << json{{"type", "log_header"}, {"version", 1}}.dump() << '\n';
  for (const SensorFrame& f : frames) {
    os << frame_to_json(f).dump() << '\n';
  }
}

std::vector<SensorFrame> read_frame_log(std::istream& is) {
  std::vector<SensorFrame> frames;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("frame log line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "log_header") {
        header_seen = true;
        continue;
      }
      if (type != "frame") {
        throw IoError("frame log line " + std::to_string(line_no) + ": unknown record type '" +
                      type + "'");
      }
      frames.push_back(frame_from_json(j));
    } catch (const json::exception& e) {
      throw IoError("frame log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) {
    throw IoError("frame log: missing log_header record");
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].t > frames[i - 1].t)) {
      throw IoError("frame log: timestamps not strictly increasing at record " +
                    std::to_string(i));
    }
  }
  return frames;
}

void write_ground_truth(std::ostream& os, const GroundTruthMap& map) {
  json boundaries = json::array();
  for (const BoundaryCurve& b : map.boundaries) {
    boundaries.push_back(
        {{"offset", b.offset}, {"s", b.s}, {"x", b.x}, {"y", b.y}, {"theta", b.theta}});
  }
  json traj = json::array();
  for (const Pose2& p : map.ego_trajectory) {
    traj.push_back(json::array({p.x, p.y, p.theta}));
  }
  os << json{{"type", "ground_truth"},
             {"lane_count", map.lane_count},
             {"lane_width", map.lane_width},
             {"ego_lane", map.ego_lane},
             {"boundaries", boundaries},
             {"ego_trajectory", traj},
             {"ego_s", map.ego_s}}
            .dump()
     << '\n';
}

GroundTruthMap read_ground_truth(std::istream& is) {
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("ground truth: ") + e.what());
  }
  GroundTruthMap map;
  try {
    j.at("lane_count").get_to(map.lane_count);
    j.at("lane_width").get_to(map.lane_width);
    j.at("ego_lane").get_to(map.ego_lane);
    for (const json& b : j.at("boundaries")) {
      BoundaryCurve c;
      b.at("offset").get_to(c.offset);
      b.at("s").get_to(c.s);
      b.at("x").get_to(c.x);
      b.at("y").get_to(c.y);
      b.at("theta").get_to(c.theta);
      map.boundaries.push_back(std::move(c));
    }
    for (const json& p : j.at("ego_trajectory")) {
      map.ego_trajectory.push_back(Pose2{p.at(0), p.at(1), p.at(2)});
    }
    j.at("ego_s").get_to(map.ego_s);
  } catch (const json::exception& e) {
    throw IoError(std::string("ground truth: ") + e.what());
  }
  return map;
}

void write_lane_snapshot_line(std::ostream& os, std::size_t frame_index, double t,
                              const FrameResult& result) {
  json lanes = json::array();
  for (const Clothoid& c : result.lanes) {
    lanes.push_back(json::array({c.y0, c.theta0, c.c0, c.c1, c.x_min, c.x_max}));
  }
  os << json{{"frame", frame_index},
             {"t", t},
             {"lanes", lanes},
             {"fused_features", result.fused_features},
             {"iterations", result.solve.iterations},
             {"converged", result.solve.converged},
             {"objective", result.solve.final_objective}}
            .dump()
     << '\n';
}

// --- graph dump --------------------------------------------------------------

void dump_graph(std::ostream& os, const FusionGraph& g) {
  char buf[512];
  os << "# fusion graph, frame " << g.frame_index() << "\n";
  for (const auto& [id, v] : g.vertices()) {
    if (v.kind == VertexKind::kEgoPose) {
      std::snprintf(buf, sizeof buf, "VERTEX ego_pose %llu %.17g %.17g %.17g\n",
                    static_cast<unsigned long long>(id), v.pose.x, v.pose.y, v.pose.theta);
    } else {
      std::snprintf(buf, sizeof buf, "VERTEX feature %llu %.17g %.17g %.17g %.17g\n",
                    static_cast<unsigned long long>(id), v.pose.x, v.pose.y, v.pose.theta,
                    v.confidence);
    }
    os << buf;
  }
  for (const Edge& e : g.edges()) {
    const Mat3& m = e.information;
    std::snprintf(buf, sizeof buf,
                  "EDGE %s %llu %llu %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                  edge_kind_name(e.kind), static_cast<unsigned long long>(e.from),
                  static_cast<unsigned long long>(e.to), e.measurement.x, e.measurement.y,
                  e.measurement.theta, m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2));
    os << buf;
    if (e.switch_id) {
      os << " switch=" << *e.switch_id;
    }
    os << "\n";
  }
  for (const auto& [id, sw] : g.switches()) {
    std::snprintf(buf, sizeof buf, "SWITCH %llu %.17g %.17g\n",
                  static_cast<unsigned long long>(id), sw.value, sw.prior_information);
    os << buf;
  }
}

// --- reports -------------------------------------------------------------------

void write_deviation_csv(std::ostream& os, const DeviationTable& table) {
  os << "distance_m,lane_class,n,mean_m,sigma_m,rmse_m\n";
  for (std::size_t k = 0; k < table.distances().size(); ++k) {
    for (int ego = 1; ego >= 0; --ego) {
      const DeviationCell& c = table.cell(k, ego == 1);
      os << format_double(table.distances()[k]) << ',' << (ego ? "ego" : "adjacent") << ','
         << c.n << ',' << format_double(c.n ? c.mean : 0.0) << ',' << format_double(c.sigma())
         << ',' << format_double(c.rmse()) << '\n';
    }
  }
}

static json table_rows(const DeviationTable& table, double step) {
  json rows = json::array();
  for (std::size_t k = 0; k < table.distances().size(); ++k) {
    const double d = table.distances()[k];
    if (std::fmod(d, step) > 1e-9 && step - std::fmod(d, step) > 1e-9) {
      continue;
    }
    for (int ego = 1; ego >= 0; --ego) {
      const DeviationCell& c = table.cell(k, ego == 1);
      rows.push_back({{"distance_m", d},
                      {"class", ego ? "ego" : "adjacent"},
                      {"n", c.n},
                      {"mean_m", c.n ? c.mean : 0.0},
                      {"sigma_m", c.sigma()},
                      {"rmse_m", c.rmse()}});
    }
  }
  return rows;
}

json summary_to_json(const DeviationTable& table, std::size_t frames,
                     std::size_t rejected_measurements) {
  return json{{"frames", frames},
              {"unmatched_lane_samples", table.unmatched_lanes()},
              {"rejected_measurements", rejected_measurements},
              {"table", table_rows(table, 10.0)},
              {"table_20m_grid", table_rows(table, 20.0)}};
}

json runtime_to_json(const RuntimeStats& stats) {
  return json{{"frames", stats.per_frame_ms.size()},
              {"median_ms", stats.median_ms()},
              {"mean_ms", stats.mean_ms()},
              {"p90_ms", stats.p90_ms()},
              {"max_ms", stats.max_ms()},
              {"per_frame_ms", stats.per_frame_ms}};
}

}  // namespace lanefusion
