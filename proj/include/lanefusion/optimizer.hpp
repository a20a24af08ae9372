#pragma once

#include <string>
#include <vector>

#include "lanefusion/fusion_graph.hpp"

namespace lanefusion {

struct SolveReport {
  int iterations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  bool converged = false;
  bool failed = false;
  std::string message;
  std::vector<double> step_norms;          // max update norm per iteration
  std::vector<double> step_alphas;         // accepted step fraction per iteration
  int factorizations = 0;
  std::vector<VertexId> underconstrained;  // filled on singular systems
};

/// Residual and analytic Jacobian blocks of one edge. The residual is
/// z - zhat(from, to) with the angle wrapped; smoothing edges scale the
/// residual (and endpoint Jacobians) by the switch value and expose the
/// derivative with respect to the switch.
struct EdgeLinearization {
  Vec3 residual;
  Mat3 j_from;
  Mat3 j_to;
  Vec3 j_switch;
};

EdgeLinearization linearize_edge(const Edge& e, const Pose2& from, const Pose2& to,
                                 double switch_value);

/// Sparse Gauss-Newton over all vertex poses (current ego pose held
/// fixed as the gauge) and switch variables. Steps that would increase
/// the objective are halved up to max_step_halvings times; switch values
/// are clamped to [0,1] after every update.
SolveReport solve(FusionGraph& g, const SolverConfig& cfg);

/// One fused feature per feature vertex at the optimized pose.
/// Covariance comes from the marginal block of the inverse normal matrix
/// ("marginal" mode, the default) or a confidence-scaled diagonal
/// ("diagonal" mode).
std::vector<LaneFeature> extract_fused_features(const FusionGraph& g, const SolverConfig& cfg);

struct SolveExtractResult {
  SolveReport report;
  std::vector<LaneFeature> fused;
};

/// solve() followed by extract_fused_features(), sharing the assembled
/// system between the two so the per-frame hot path avoids rebuilding it.
SolveExtractResult solve_and_extract(FusionGraph& g, const SolverConfig& cfg);

}  // namespace lanefusion
