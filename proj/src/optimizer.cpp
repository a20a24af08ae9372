#include "lanefusion/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "lanefusion/marginals.hpp"

namespace lanefusion {

EdgeLinearization linearize_edge(const Edge& e, const Pose2& from, const Pose2& to,
                                 double switch_value) {
  const double c = std::cos(from.theta);
  const double s = std::sin(from.theta);
  const double dx = to.x - from.x;
  const double dy = to.y - from.y;
  const double zx = c * dx + s * dy;
  const double zy = -s * dx + c * dy;

  EdgeLinearization lin;
  lin.residual = Vec3(e.measurement.x - zx, e.measurement.y - zy,
                      normalize_angle(e.measurement.theta - (to.theta - from.theta)));
  lin.j_from << c, s, -zy,
               -s, c, zx,
                0, 0, 1;
  lin.j_to << -c, -s, 0,
               s, -c, 0,
               0, 0, -1;
  lin.j_switch.setZero();

  if (e.kind == EdgeKind::kSmoothing) {
    lin.j_switch = lin.residual;
    lin.residual *= switch_value;
    lin.j_from *= switch_value;
    lin.j_to *= switch_value;
  }
  return lin;
}

namespace {

/// Flattened view of the optimization problem: every vertex pose lives in
/// a dense slot array (the gauge-fixed current pose included but not a
/// free variable), switches in a scalar array. Free-variable ordering is
/// pose blocks in vertex-id order followed by switch scalars.
struct Problem {
  const FusionGraph* graph = nullptr;

  std::map<VertexId, int> vertex_slot;   // id -> slot * 3 into pose array
  std::map<SwitchId, int> switch_slot;   // id -> index into switch array
  std::map<VertexId, int> vertex_offset; // free variables only
  std::map<SwitchId, int> switch_offset;
  int dim = 0;

  struct EdgeRef {
    const Edge* edge;
    int from_slot;
    int to_slot;
    int switch_slot;   // -1 when none
    int from_off;      // -1 when gauge-fixed
    int to_off;
    int switch_off;
  };
  std::vector<EdgeRef> edges;
  struct PriorRef {
    int slot;
    int off;
    double information;
  };
  std::vector<PriorRef> priors;

  explicit Problem(const FusionGraph& g) : graph(&g) {
    const VertexId fixed = g.current_pose_id();
    int slot = 0;
    for (const auto& [id, v] : g.vertices()) {
      vertex_slot.emplace(id, 3 * slot++);
      if (id != fixed) {
        vertex_offset.emplace(id, dim);
        dim += 3;
      }
    }
    int ss = 0;
    for (const auto& [id, sw] : g.switches()) {
      switch_slot.emplace(id, ss++);
      switch_offset.emplace(id, dim);
      dim += 1;
    }
    edges.reserve(g.edges().size());
    for (const Edge& e : g.edges()) {
      EdgeRef r;
      r.edge = &e;
      r.from_slot = vertex_slot.at(e.from);
      r.to_slot = vertex_slot.at(e.to);
      r.switch_slot = e.switch_id ? switch_slot.at(*e.switch_id) : -1;
      const auto fo = vertex_offset.find(e.from);
      const auto to = vertex_offset.find(e.to);
      r.from_off = fo == vertex_offset.end() ? -1 : fo->second;
      r.to_off = to == vertex_offset.end() ? -1 : to->second;
      r.switch_off = e.switch_id ? switch_offset.at(*e.switch_id) : -1;
      edges.push_back(r);
    }
    for (const auto& [id, sw] : g.switches()) {
      priors.push_back({switch_slot.at(id), switch_offset.at(id), sw.prior_information});
    }
  }

  struct State {
    Eigen::VectorXd poses;     // x, y, theta per vertex slot
    Eigen::VectorXd switches;
  };

  State state_from_graph() const {
    State st;
    st.poses.resize(3 * static_cast<Eigen::Index>(vertex_slot.size()));
    st.switches.resize(static_cast<Eigen::Index>(switch_slot.size()));
    for (const auto& [id, slot] : vertex_slot) {
      const Pose2& p = graph->vertices().at(id).pose;
      st.poses.segment<3>(slot) << p.x, p.y, p.theta;
    }
    for (const auto& [id, slot] : switch_slot) {
      st.switches(slot) = graph->switches().at(id).value;
    }
    return st;
  }

  void state_to_graph(const State& st, FusionGraph& g) const {
    for (const auto& [id, slot] : vertex_slot) {
      g.set_vertex_pose(id, Pose2{st.poses(slot), st.poses(slot + 1), st.poses(slot + 2)});
    }
    for (const auto& [id, slot] : switch_slot) {
      g.set_switch_value(id, st.switches(slot));
    }
  }

  Pose2 pose_at(const State& st, int slot) const {
    return Pose2{st.poses(slot), st.poses(slot + 1), st.poses(slot + 2)};
  }

  double objective(const State& st) const {
    double sum = 0.0;
    for (const EdgeRef& r : edges) {
      const double s = r.switch_slot >= 0 ? st.switches(r.switch_slot) : 1.0;
      sum += edge_objective(*r.edge, pose_at(st, r.from_slot), pose_at(st, r.to_slot), s);
    }
    for (const PriorRef& p : priors) {
      const double s = st.switches(p.slot);
      sum += p.information * (1.0 - s) * (1.0 - s);
    }
    return sum;
  }

  State apply_step(const State& st, const Eigen::VectorXd& delta, double alpha) const {
    State out = st;
    for (const auto& [id, off] : vertex_offset) {
      const int slot = vertex_slot.at(id);
      out.poses(slot) += alpha * delta(off);
      out.poses(slot + 1) += alpha * delta(off + 1);
      out.poses(slot + 2) = normalize_angle(out.poses(slot + 2) + alpha * delta(off + 2));
    }
    for (const auto& [id, off] : switch_offset) {
      const int slot = switch_slot.at(id);
      out.switches(slot) = std::clamp(out.switches(slot) + alpha * delta(off), 0.0, 1.0);
    }
    return out;
  }

  /// Exact conditional optimum of every switch given the poses:
  /// s* = Wp / (Wp + e^T W e). Joint Gauss-Newton converges slowly along
  /// the switch-pose coupling; this coordinate step can only decrease the
  /// objective. Returns the largest switch change and accumulates the
  /// exact objective change into `objective_delta`.
  double refresh_switches(State& st, double* objective_delta = nullptr) const {
    double max_change = 0.0;
    double delta = 0.0;
    for (const EdgeRef& r : edges) {
      if (r.switch_slot < 0) {
        continue;
      }
      const Vec3 res = pose_residual(
          r.edge->measurement,
          pose_between(pose_at(st, r.from_slot), pose_at(st, r.to_slot)));
      const double raw = res.dot(r.edge->information * res);
      const double wp = graph->switches().at(*r.edge->switch_id).prior_information;
      const double target = std::clamp(wp / (wp + raw), 0.0, 1.0);
      double& s = st.switches(r.switch_slot);
      max_change = std::max(max_change, std::abs(target - s));
      delta += (target * target - s * s) * raw +
               wp * ((1.0 - target) * (1.0 - target) - (1.0 - s) * (1.0 - s));
      s = target;
    }
    if (objective_delta) {
      *objective_delta += delta;
    }
    return max_change;
  }
};

/// Assembles the normal equations. The sparsity pattern is fixed for a
/// given graph, so triplets are sorted once and later iterations only
/// rewrite the value array through a precomputed position map.
class NormalEquations {
 public:
  explicit NormalEquations(const Problem& p) : p_(p) {}

  void build(const Problem::State& st, double lambda) {
    if (positions_.empty()) {
      build_pattern(st, lambda);
      return;
    }
    std::fill(h_.valuePtr(), h_.valuePtr() + h_.nonZeros(), 0.0);
    b_.setZero(p_.dim);
    std::size_t k = 0;
    auto emit = [&](int row, int col, double v) {
      (void)row;
      (void)col;
      h_.valuePtr()[positions_[k++]] += v;
    };
    fill(st, emit);
    for (int i = 0; i < p_.dim; ++i) {
      h_.valuePtr()[diag_positions_[i]] += lambda;
    }
  }

  const Eigen::SparseMatrix<double>& matrix() const { return h_; }
  const Eigen::VectorXd& rhs() const { return b_; }

  /// Gradient-only refresh for iterations that reuse a stale factor.
  void build_rhs(const Problem::State& st) {
    b_.setZero(p_.dim);
    for (const Problem::EdgeRef& r : p_.edges) {
      const Edge& e = *r.edge;
      const double sv = r.switch_slot >= 0 ? st.switches(r.switch_slot) : 1.0;
      const EdgeLinearization lin =
          linearize_edge(e, p_.pose_at(st, r.from_slot), p_.pose_at(st, r.to_slot), sv);
      const Vec3 wr = e.information * lin.residual;
      if (r.from_off >= 0) {
        b_.segment<3>(r.from_off) -= lin.j_from.transpose() * wr;
      }
      if (r.to_off >= 0) {
        b_.segment<3>(r.to_off) -= lin.j_to.transpose() * wr;
      }
      if (r.switch_off >= 0) {
        b_(r.switch_off) -= lin.j_switch.dot(wr);
      }
    }
    for (const Problem::PriorRef& pr : p_.priors) {
      b_(pr.off) += pr.information * (1.0 - st.switches(pr.slot));
    }
  }

 private:
  void build_pattern(const Problem::State& st, double lambda) {
    std::vector<Eigen::Triplet<double>> trips;
    b_.setZero(p_.dim);
    auto emit = [&](int row, int col, double v) { trips.emplace_back(row, col, v); };
    fill(st, emit);
    for (int i = 0; i < p_.dim; ++i) {
      trips.emplace_back(i, i, lambda);
    }
    h_.resize(p_.dim, p_.dim);
    h_.setFromTriplets(trips.begin(), trips.end());
    h_.makeCompressed();

    // Map every emission to its slot in the value array.
    positions_.clear();
    positions_.reserve(trips.size());
    auto locate = [&](int row, int col) {
      const int begin = h_.outerIndexPtr()[col];
      const int end = h_.outerIndexPtr()[col + 1];
      const int* first = h_.innerIndexPtr() + begin;
      const int* last = h_.innerIndexPtr() + end;
      const int* it = std::lower_bound(first, last, row);
      return begin + static_cast<int>(it - first);
    };
    b_.setZero(p_.dim);
    auto emit_record = [&](int row, int col, double v) {
      (void)v;
      positions_.push_back(locate(row, col));
    };
    fill(st, emit_record);  // also rebuilds b_, matching the matrix values
    diag_positions_.resize(p_.dim);
    for (int i = 0; i < p_.dim; ++i) {
      diag_positions_[i] = locate(i, i);
    }
  }

  template <typename Emit>
  void fill(const Problem::State& st, Emit&& emit) {
    for (const Problem::EdgeRef& r : p_.edges) {
      const Edge& e = *r.edge;
      const double sv = r.switch_slot >= 0 ? st.switches(r.switch_slot) : 1.0;
      const EdgeLinearization lin =
          linearize_edge(e, p_.pose_at(st, r.from_slot), p_.pose_at(st, r.to_slot), sv);

      const Mat3 wf = e.information * lin.j_from;
      const Mat3 wt = e.information * lin.j_to;
      const Vec3 wr = e.information * lin.residual;

      if (r.from_off >= 0) {
        const Mat3 blk = lin.j_from.transpose() * wf;
        for (int a = 0; a < 3; ++a)
          for (int c2 = 0; c2 < 3; ++c2) emit(r.from_off + a, r.from_off + c2, blk(a, c2));
        b_.segment<3>(r.from_off) -= lin.j_from.transpose() * wr;
      }
      if (r.to_off >= 0) {
        const Mat3 blk = lin.j_to.transpose() * wt;
        for (int a = 0; a < 3; ++a)
          for (int c2 = 0; c2 < 3; ++c2) emit(r.to_off + a, r.to_off + c2, blk(a, c2));
        b_.segment<3>(r.to_off) -= lin.j_to.transpose() * wr;
      }
      if (r.from_off >= 0 && r.to_off >= 0) {
        const Mat3 cross = lin.j_from.transpose() * wt;
        for (int a = 0; a < 3; ++a) {
          for (int c2 = 0; c2 < 3; ++c2) {
            emit(r.from_off + a, r.to_off + c2, cross(a, c2));
            emit(r.to_off + c2, r.from_off + a, cross(a, c2));
          }
        }
      }
      if (r.switch_off >= 0) {
        const Vec3 ws = e.information * lin.j_switch;
        emit(r.switch_off, r.switch_off, lin.j_switch.dot(ws));
        b_(r.switch_off) -= lin.j_switch.dot(wr);
        // The residual is bilinear in (switch, poses); the exact
        // second-order term doubles the Gauss-Newton cross block, and
        // plain GN converges only linearly along this coupling.
        if (r.from_off >= 0) {
          const Vec3 cross = 2.0 * (lin.j_from.transpose() * ws);
          for (int a = 0; a < 3; ++a) {
            emit(r.from_off + a, r.switch_off, cross(a));
            emit(r.switch_off, r.from_off + a, cross(a));
          }
        }
        if (r.to_off >= 0) {
          const Vec3 cross = 2.0 * (lin.j_to.transpose() * ws);
          for (int a = 0; a < 3; ++a) {
            emit(r.to_off + a, r.switch_off, cross(a));
            emit(r.switch_off, r.to_off + a, cross(a));
          }
        }
      }
    }
    for (const Problem::PriorRef& pr : p_.priors) {
      emit(pr.off, pr.off, pr.information);
      b_(pr.off) += pr.information * (1.0 - st.switches(pr.slot));
    }
  }

  const Problem& p_;
  Eigen::SparseMatrix<double> h_;
  Eigen::VectorXd b_;
  std::vector<int> positions_;
  std::vector<int> diag_positions_;
};

/// Distinguishes structurally under-constrained graphs (vanishing
/// diagonal blocks: a vertex nothing constrains) from transient
/// indefiniteness that damping can fix. Fills the report when structural.
bool structurally_deficient(const Problem& p, const Eigen::SparseMatrix<double>& h,
                            SolveReport& rep) {
  const Eigen::VectorXd diag = h.diagonal();
  const double dmax = std::max(diag.maxCoeff(), 1.0);
  for (const auto& [id, off] : p.vertex_offset) {
    if (diag.segment<3>(off).minCoeff() < 1e-12 * dmax) {
      rep.underconstrained.push_back(id);
    }
  }
  return !rep.underconstrained.empty();
}

}  // namespace

namespace {

/// The normal matrix is insensitive to small pose moves but very
/// sensitive to switch snaps (s^2-scaled smoothing weights). Iterations
/// whose predecessors stayed below these bounds reuse the previous
/// factorization with a fresh gradient (modified Newton); any rejection
/// forces a refactorization.
constexpr double kStaleFactorPoseStep = 0.05;
constexpr double kStaleFactorSwitchStep = 2e-3;

SolveReport solve_impl(const Problem& problem, NormalEquations& normal, Problem::State& st,
                       const SolverConfig& cfg,
                       Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt,
                       bool* factor_current) {
  SolveReport rep;
  rep.initial_objective = problem.objective(st);
  rep.final_objective = rep.initial_objective;
  *factor_current = false;
  if (problem.dim == 0) {
    rep.converged = true;
    rep.message = "no free variables";
    return rep;
  }

  bool analyzed = false;

  // Freshly created switches start at 1; snapping every switch to its
  // conditional optimum before the first linearization removes most of
  // the switch transient from the iteration budget.
  double current_obj = rep.initial_objective;
  problem.refresh_switches(st, &current_obj);
  double lambda = 0.0;
  bool stop = false;
  bool have_factor = false;
  double factor_lambda = -1.0;   // lambda baked into the current factor
  double drift_since_factor = 0.0;
  double last_pose_step = std::numeric_limits<double>::infinity();
  double last_switch_step = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iterations && !stop; ++it) {
    rep.iterations = it + 1;

    bool accepted = false;
    bool allow_stale = have_factor && lambda == 0.0 &&
                       last_pose_step < kStaleFactorPoseStep &&
                       last_switch_step < kStaleFactorSwitchStep;
    for (int damp = 0; damp < 12 && !accepted; ++damp) {
      if (allow_stale) {
        normal.build_rhs(st);
      } else {
        normal.build(st, lambda);
        if (!analyzed) {
          ldlt.analyzePattern(normal.matrix());
          analyzed = true;
        }
        ldlt.factorize(normal.matrix());
        ++rep.factorizations;
        bool singular = ldlt.info() != Eigen::Success;
        if (!singular) {
          const Eigen::VectorXd d = ldlt.vectorD();
          singular = !(d.minCoeff() > 0.0) || d.minCoeff() < 1e-14 * d.cwiseAbs().maxCoeff();
        }
        if (singular) {
          have_factor = false;
          if (lambda == 0.0 && structurally_deficient(problem, normal.matrix(), rep)) {
            rep.failed = true;
            rep.message = "singular normal matrix";
            stop = true;
            break;
          }
          lambda =
              std::max(lambda * 10.0, 1e-6 * std::max(1.0, normal.matrix().diagonal().maxCoeff()));
          continue;
        }
        have_factor = true;
        factor_lambda = lambda;
        drift_since_factor = 0.0;
      }
      const Eigen::VectorXd delta = ldlt.solve(normal.rhs());
      if (!delta.allFinite()) {
        if (allow_stale) {
          allow_stale = false;
          continue;
        }
        lambda =
            std::max(lambda * 10.0, 1e-6 * std::max(1.0, normal.matrix().diagonal().maxCoeff()));
        continue;
      }

      double alpha = 1.0;
      Problem::State trial = problem.apply_step(st, delta, alpha);
      double trial_obj = problem.objective(trial);
      int halvings = 0;
      while (trial_obj > current_obj && halvings < cfg.max_step_halvings) {
        alpha *= 0.5;
        trial = problem.apply_step(st, delta, alpha);
        trial_obj = problem.objective(trial);
        ++halvings;
      }
      if (trial_obj > current_obj) {
        if (allow_stale) {
          allow_stale = false;  // stale direction failed; refactorize
          continue;
        }
        if (delta.lpNorm<Eigen::Infinity>() < cfg.update_tolerance) {
          rep.converged = true;
          stop = true;
          break;
        }
        lambda =
            std::max(lambda * 10.0, 1e-6 * std::max(1.0, normal.matrix().diagonal().maxCoeff()));
        continue;
      }

      accepted = true;
      lambda *= 0.25;
      if (lambda < 1e-12) {
        lambda = 0.0;
      }
      st = std::move(trial);
      current_obj = trial_obj;
      const double switch_change = problem.refresh_switches(st, &current_obj);
      const double step_norm = std::max(alpha * delta.lpNorm<Eigen::Infinity>(), switch_change);
      last_pose_step = alpha * delta.lpNorm<Eigen::Infinity>();
      last_switch_step = switch_change;
      drift_since_factor += step_norm;
      rep.step_norms.push_back(step_norm);
      rep.step_alphas.push_back(alpha);
      if (step_norm < cfg.update_tolerance) {
        rep.converged = true;
        stop = true;
      }
    }
    if (!accepted && !stop) {
      break;  // damping exhausted without descent
    }
  }

  rep.final_objective = current_obj;
  // The factor is reusable for marginal extraction when it was computed
  // undamped and the state has barely moved since.
  *factor_current = have_factor && factor_lambda == 0.0 && drift_since_factor < 0.05;
  return rep;
}

std::vector<LaneFeature> extract_impl(
    const FusionGraph& g, const SolverConfig& cfg, const Problem& problem,
    NormalEquations* normal, const Problem::State& st,
    const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>* factor = nullptr) {
  std::vector<LaneFeature> out;
  SparseMarginals marginals;
  bool have_marginals = false;
  if (cfg.covariance_mode == "marginal" && problem.dim > 0) {
    if (factor) {
      have_marginals = marginals.compute_from_factor(*factor);
    }
    if (!have_marginals) {
      NormalEquations local(problem);
      NormalEquations& ne = normal ? *normal : local;
      ne.build(st, 0.0);
      have_marginals = marginals.compute(ne.matrix());
    }
  }

  for (const auto& [id, v] : g.vertices()) {
    if (v.kind != VertexKind::kFeature) {
      continue;
    }
    LaneFeature f;
    f.pose = v.pose;
    f.confidence = v.confidence;
    if (have_marginals) {
      const Mat3 m = marginals.block3(problem.vertex_offset.at(id));
      f.covariance = 0.5 * (m + m.transpose());
    } else {
      const double scale = 1.5 - v.confidence;  // in [0.5, 1.5]
      f.covariance = Mat3::Zero();
      f.covariance(0, 0) = f.covariance(1, 1) =
          scale * cfg.fallback_position_sigma_m * cfg.fallback_position_sigma_m;
      f.covariance(2, 2) = scale * cfg.fallback_heading_sigma_rad * cfg.fallback_heading_sigma_rad;
    }
    out.push_back(f);
  }
  return out;
}

}  // namespace

SolveReport solve(FusionGraph& g, const SolverConfig& cfg) {
  const Problem problem(g);
  Problem::State st = problem.state_from_graph();
  NormalEquations normal(problem);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool factor_current = false;
  const SolveReport rep = solve_impl(problem, normal, st, cfg, ldlt, &factor_current);
  problem.state_to_graph(st, g);
  return rep;
}

std::vector<LaneFeature> extract_fused_features(const FusionGraph& g, const SolverConfig& cfg) {
  const Problem problem(g);
  return extract_impl(g, cfg, problem, nullptr, problem.state_from_graph());
}

SolveExtractResult solve_and_extract(FusionGraph& g, const SolverConfig& cfg) {
  const Problem problem(g);
  Problem::State st = problem.state_from_graph();
  NormalEquations normal(problem);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool factor_current = false;
  SolveExtractResult out;
  out.report = solve_impl(problem, normal, st, cfg, ldlt, &factor_current);
  problem.state_to_graph(st, g);
  out.fused = extract_impl(g, cfg, problem, &normal, st,
                           factor_current ? &ldlt : nullptr);
  return out;
}

}  // namespace lanefusion
