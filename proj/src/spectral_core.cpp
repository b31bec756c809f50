#include "mscr/spectral_core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mscr {

Matrix SVDFactor::reconstruct() const {
  return U * singular_values.asDiagonal() * Vt;
}

void require_finite(const Matrix& X, const char* what) {
  if (!X.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entry");
  }
}

SVDFactor svd(const Matrix& X) {
  require_finite(X, "svd");
  SVDFactor f;
  if (X.size() == 0) {
    f.U = Matrix(X.rows(), 0);
    f.singular_values = Vector(0);
    f.Vt = Matrix(0, X.cols());
    return f;
  }
  Eigen::BDCSVD<Matrix> dec(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  f.U = dec.matrixU();
  f.singular_values = dec.singularValues();
  f.Vt = dec.matrixV().transpose();
  return f;
}

Vector singular_values(const Matrix& X) {
  require_finite(X, "singular_values");
  if (X.size() == 0) return Vector(0);
  Eigen::BDCSVD<Matrix> dec(X);
  return dec.singularValues();
}

double nuclear_norm(const Matrix& X) { return singular_values(X).sum(); }

double spectral_norm(const Matrix& X) {
  const Vector s = singular_values(X);
  return s.size() == 0 ? 0.0 : s(0);
}

int numerical_rank(const Vector& sigma) {
  if (sigma.size() == 0 || sigma(0) <= 0.0) return 0;
  const double cut = kRankTol * sigma(0);
  return static_cast<int>((sigma.array() > cut).count());
}

Matrix prox_nuclear(const Matrix& X, double tau) {
  if (tau < 0.0 || !std::isfinite(tau)) throw InvalidInput("prox_nuclear: tau must be nonnegative");
  if (tau == 0.0) return X;
  SVDFactor f = svd(X);
  Index keep = 0;
  for (Index i = 0; i < f.singular_values.size(); ++i) {
    f.singular_values(i) = std::max(f.singular_values(i) - tau, 0.0);
    if (f.singular_values(i) > 0.0) keep = i + 1;
  }
  if (keep == 0) return Matrix::Zero(X.rows(), X.cols());
  return f.U.leftCols(keep) * f.singular_values.head(keep).asDiagonal() * f.Vt.topRows(keep);
}

Matrix project_spectral_ball(const Matrix& X, double R) {
  if (!(R > 0.0)) throw InvalidInput("project_spectral_ball: radius must be positive");
  SVDFactor f = svd(X);
  if (f.singular_values.size() == 0 || f.singular_values(0) <= R) return X;
  // X − U·Diag((σ − R)₊)·Vt keeps the untouched part exact.
  Index over = 0;
  while (over < f.singular_values.size() && f.singular_values(over) > R) ++over;
  const Vector excess = f.singular_values.head(over).array() - R;
  return X - f.U.leftCols(over) * excess.asDiagonal() * f.Vt.topRows(over);
}

bool is_symmetric(const Matrix& X, double tol) {
  if (X.rows() != X.cols()) return false;
  const double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
  return (X - X.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

Matrix symmetrize(const Matrix& X) { return 0.5 * (X + X.transpose()); }

Matrix project_psd(const Matrix& X) {
  require_finite(X, "project_psd");
  if (!is_symmetric(X)) throw InvalidInput("project_psd: input is not symmetric");
  if (X.size() == 0) return X;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(X));
  const Vector lam = eig.eigenvalues().cwiseMax(0.0);
  const Matrix& Q = eig.eigenvectors();
  return Q * lam.asDiagonal() * Q.transpose();
}

Vector project_l2_ball(const Vector& v, const Vector& center, double radius) {
  if (v.size() != center.size()) throw InvalidInput("project_l2_ball: dimension mismatch");
  if (radius < 0.0) throw InvalidInput("project_l2_ball: negative radius");
  const Vector diff = v - center;
  const double nrm = diff.norm();
  if (nrm <= radius) return v;
  return center + (radius / nrm) * diff;
}

// ---------------------------------------------------------------------------

SamplingOperator SamplingOperator::explicit_matrices(Index rows, Index cols, Matrix stacked) {
  if (rows <= 0 || cols <= 0) throw InvalidInput("SamplingOperator: shape must be positive");
  if (stacked.cols() != rows * cols) {
    throw InvalidInput("SamplingOperator: stacked operator has wrong column count");
  }
  require_finite(stacked, "SamplingOperator");
  SamplingOperator op;
  op.kind_ = Kind::kExplicit;
  op.rows_ = rows;
  op.cols_ = cols;
  op.stacked_ = std::move(stacked);
  return op;
}

SamplingOperator SamplingOperator::explicit_matrices(const std::vector<Matrix>& mats) {
  if (mats.empty()) throw InvalidInput("SamplingOperator: no measurement matrices");
  const Index rows = mats.front().rows();
  const Index cols = mats.front().cols();
  Matrix stacked(static_cast<Index>(mats.size()), rows * cols);
  for (std::size_t i = 0; i < mats.size(); ++i) {
    if (mats[i].rows() != rows || mats[i].cols() != cols) {
      throw InvalidInput("SamplingOperator: measurement matrices differ in shape");
    }
    stacked.row(static_cast<Index>(i)) = mats[i].reshaped().transpose();
  }
  return explicit_matrices(rows, cols, std::move(stacked));
}

SamplingOperator SamplingOperator::entry_mask(Index rows, Index cols, std::vector<Entry> entries) {
  if (rows <= 0 || cols <= 0) throw InvalidInput("SamplingOperator: shape must be positive");
  std::set<Entry> seen;
  for (const Entry& e : entries) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
      throw InvalidInput("SamplingOperator: mask index out of range");
    }
    if (!seen.insert(e).second) throw InvalidInput("SamplingOperator: duplicate mask index");
  }
  SamplingOperator op;
  op.kind_ = Kind::kMask;
  op.rows_ = rows;
  op.cols_ = cols;
  op.entries_ = std::move(entries);
  return op;
}

Vector SamplingOperator::apply(const Matrix& X) const {
  if (X.rows() != rows_ || X.cols() != cols_) throw InvalidInput("SamplingOperator::apply: shape mismatch");
  if (kind_ == Kind::kExplicit) return stacked_ * X.reshaped();
  Vector out(static_cast<Index>(entries_.size()));
  for (std::size_t i = 0; i < entries_.size(); ++i) out(static_cast<Index>(i)) = X(entries_[i].row, entries_[i].col);
  return out;
}

Matrix SamplingOperator::adjoint(const Vector& y) const {
  if (y.size() != size()) throw InvalidInput("SamplingOperator::adjoint: length mismatch");
  if (kind_ == Kind::kExplicit) {
    Vector v = stacked_.transpose() * y;
    return v.reshaped(rows_, cols_);
  }
  Matrix out = Matrix::Zero(rows_, cols_);
  for (std::size_t i = 0; i < entries_.size(); ++i) out(entries_[i].row, entries_[i].col) += y(static_cast<Index>(i));
  return out;
}

Matrix SamplingOperator::component(Index i) const {
  if (i < 0 || i >= size()) throw InvalidInput("SamplingOperator::component: index out of range");
  if (kind_ == Kind::kExplicit) return stacked_.row(i).transpose().reshaped(rows_, cols_);
  Matrix out = Matrix::Zero(rows_, cols_);
  out(entries_[static_cast<std::size_t>(i)].row, entries_[static_cast<std::size_t>(i)].col) = 1.0;
  return out;
}

// ---------------------------------------------------------------------------

TangentSpace TangentSpace::at(const Matrix& M, Index rank) {
  const SVDFactor f = svd(M);
  if (rank < 0 || rank > f.singular_values.size()) throw InvalidInput("TangentSpace: rank out of range");
  return TangentSpace{f.U.leftCols(rank), f.Vt.topRows(rank).transpose()};
}

Matrix tangent_project(const TangentSpace& T, const Matrix& Z, bool complement) {
  if (T.U1.rows() != Z.rows() || T.V1.rows() != Z.cols()) throw InvalidInput("tangent_project: shape mismatch");
  const Matrix UtZ = T.U1.transpose() * Z;           // r × n2
  const Matrix ZV = Z * T.V1;                        // n1 × r
  const Matrix core = UtZ * T.V1;                    // r × r
  Matrix pt = T.U1 * UtZ + ZV * T.V1.transpose() - T.U1 * core * T.V1.transpose();
  if (complement) return Z - pt;
  return pt;
}

}  // namespace mscr
