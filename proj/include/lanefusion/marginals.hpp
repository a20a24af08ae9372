#pragma once

#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "lanefusion/geometry.hpp"

namespace lanefusion {

/// Selected inverse of a sparse SPD matrix: computes the entries of H^-1
/// on the sparsity pattern of the Cholesky factor (Takahashi recurrence
/// over an LDL^T factorization with fill-reducing ordering). Any entry
/// that is structurally nonzero in H can be queried, which covers the
/// per-vertex marginal blocks without one triangular solve per vertex.
class SparseMarginals {
 public:
  /// Factorizes and runs the recurrence. Returns false when H is not
  /// numerically positive definite.
  bool compute(const Eigen::SparseMatrix<double>& h);

  /// Runs the recurrence on an existing factorization (saves the
  /// factorize when the caller already solved with the same matrix).
  bool compute_from_factor(const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt);

  /// Entry (i, j) of H^-1. Only positions inside the factor pattern are
  /// available; querying others throws std::out_of_range.
  double entry(int i, int j) const;

  /// 3x3 marginal block starting at variable index `base`.
  Mat3 block3(int base) const;

 private:
  bool ingest(const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt);
  void recurrence();
  double permuted_entry(int i, int j) const;  // i >= j in permuted coords

  int n_ = 0;
  std::vector<int> col_ptr_;
  std::vector<int> row_idx_;
  std::vector<double> lval_;
  std::vector<double> zval_;
  std::vector<double> zdiag_;
  std::vector<double> dinv_;
  std::vector<int> perm_;  // original index -> permuted index
};

}  // namespace lanefusion
