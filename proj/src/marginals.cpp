#include "lanefusion/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace lanefusion {

bool SparseMarginals::compute(const Eigen::SparseMatrix<double>& h) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
  return compute_from_factor(ldlt);
}

bool SparseMarginals::compute_from_factor(
    const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt) {
  if (!ingest(ldlt)) {
    return false;
  }
  recurrence();
  return true;
}

bool SparseMarginals::ingest(const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt) {
  if (ldlt.info() != Eigen::Success) {
    return false;
  }
  n_ = static_cast<int>(ldlt.rows());
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(d.minCoeff() > 0.0) || d.minCoeff() < 1e-14 * dmax) {
    return false;
  }

  Eigen::SparseMatrix<double> l = ldlt.matrixL();
  l.makeCompressed();
  const int* outer = l.outerIndexPtr();
  const int* inner = l.innerIndexPtr();
  const double* lv = l.valuePtr();

  // Strictly-lower pattern per column (the unit diagonal, when stored,
  // is dropped here).
  col_ptr_.assign(n_ + 1, 0);
  row_idx_.clear();
  lval_.clear();
  row_idx_.reserve(l.nonZeros());
  lval_.reserve(l.nonZeros());
  for (int j = 0; j < n_; ++j) {
    for (int a = outer[j]; a < outer[j + 1]; ++a) {
      if (inner[a] > j) {
        row_idx_.push_back(inner[a]);
        lval_.push_back(lv[a]);
      }
    }
    col_ptr_[j + 1] = static_cast<int>(row_idx_.size());
  }

  const auto& pidx = ldlt.permutationP().indices();
  perm_.assign(pidx.data(), pidx.data() + n_);

  dinv_.resize(n_);
  for (int i = 0; i < n_; ++i) {
    dinv_[i] = 1.0 / d(i);
  }
  return true;
}

void SparseMarginals::recurrence() {
  // Takahashi recurrence, column-blocked: with S = struct(col j) and
  // l = L(S, j), the new entries are Z(S, j) = -Z(S, S) l and
  // Z_jj = 1/d_j - l^T Z(S, j). Z(S, S) is gathered from the already
  // finished columns by a sorted merge, so no per-entry search is needed.
  zval_.assign(lval_.size(), 0.0);
  zdiag_.assign(n_, 0.0);
  std::vector<double> m;       // dense m x m scratch, column-major
  std::vector<double> v;       // Z(S, j)
  for (int j = n_ - 1; j >= 0; --j) {
    const int begin = col_ptr_[j];
    const int end = col_ptr_[j + 1];
    const int mdim = end - begin;
    if (mdim == 0) {
      zdiag_[j] = dinv_[j];
      continue;
    }
    const int* rows = row_idx_.data() + begin;
    const double* lcol = lval_.data() + begin;

    m.assign(static_cast<std::size_t>(mdim) * mdim, 0.0);
    // Gather the lower triangle of Z(S, S): column c of Z holds rows > c.
    for (int cidx = 0; cidx < mdim; ++cidx) {
      const int c = rows[cidx];
      m[static_cast<std::size_t>(cidx) * mdim + cidx] = zdiag_[c];
      const int cb = col_ptr_[c];
      const int ce = col_ptr_[c + 1];
      int a = cb;
      int ridx = cidx + 1;
      while (a < ce && ridx < mdim) {
        const int zr = row_idx_[a];
        const int sr = rows[ridx];
        if (zr < sr) {
          ++a;
        } else if (zr > sr) {
          ++ridx;
        } else {
          m[static_cast<std::size_t>(cidx) * mdim + ridx] = zval_[a];
          ++a;
          ++ridx;
        }
      }
    }
    // mirror to the upper triangle
    for (int cidx = 0; cidx < mdim; ++cidx) {
      for (int ridx = cidx + 1; ridx < mdim; ++ridx) {
        m[static_cast<std::size_t>(ridx) * mdim + cidx] =
            m[static_cast<std::size_t>(cidx) * mdim + ridx];
      }
    }

    v.assign(mdim, 0.0);
    for (int cidx = 0; cidx < mdim; ++cidx) {
      const double lc = lcol[cidx];
      if (lc == 0.0) {
        continue;
      }
      const double* mc = m.data() + static_cast<std::size_t>(cidx) * mdim;
      for (int ridx = 0; ridx < mdim; ++ridx) {
        v[ridx] -= lc * mc[ridx];
      }
    }
    double diag = dinv_[j];
    for (int cidx = 0; cidx < mdim; ++cidx) {
      zval_[begin + cidx] = v[cidx];
      diag -= lcol[cidx] * v[cidx];
    }
    zdiag_[j] = diag;
  }
}

double SparseMarginals::permuted_entry(int i, int j) const {
  if (i == j) {
    return zdiag_[i];
  }
  const int begin = col_ptr_[j];
  const int end = col_ptr_[j + 1];
  const auto first = row_idx_.begin() + begin;
  const auto last = row_idx_.begin() + end;
  const auto it = std::lower_bound(first, last, i);
  if (it == last || *it != i) {
    throw std::out_of_range("SparseMarginals: entry outside factor pattern");
  }
  return zval_[begin + static_cast<int>(it - first)];
}

double SparseMarginals::entry(int i, int j) const {
  const int pi = perm_[i];
  const int pj = perm_[j];
  return permuted_entry(std::max(pi, pj), std::min(pi, pj));
}

Mat3 SparseMarginals::block3(int base) const {
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c <= r; ++c) {
      const double v = entry(base + r, base + c);
      m(r, c) = v;
      m(c, r) = v;
    }
  }
  return m;
}

}  // namespace lanefusion
