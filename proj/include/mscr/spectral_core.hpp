#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mscr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when an operation receives data outside its contract
/// (non-finite entries, mismatched shapes, norm-ball violations, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Relative threshold for numerical rank: σᵢ counts iff σᵢ > kRankTol·σ₁.
inline constexpr double kRankTol = 1e-10;

/// Symmetry tolerance below which inputs are silently symmetrized.
inline constexpr double kSymmetryTol = 1e-10;

/// Thin singular value decomposition X = U·Diag(σ)·Vt with k = min(rows, cols).
struct SVDFactor {
  Matrix U;                // rows × k, orthonormal columns
  Vector singular_values;  // length k, nonincreasing, nonnegative
  Matrix Vt;               // k × cols, orthonormal rows

  [[nodiscard]] Matrix reconstruct() const;
};

void require_finite(const Matrix& X, const char* what);

/// Deterministic thin SVD (Eigen BDCSVD, which falls back to one-sided
/// Jacobi for small blocks).
SVDFactor svd(const Matrix& X);
Vector singular_values(const Matrix& X);

double nuclear_norm(const Matrix& X);
double spectral_norm(const Matrix& X);
int numerical_rank(const Vector& sigma);

/// argmin_Z τ‖Z‖_* + ½‖Z − X‖²_F (singular value soft-thresholding).
Matrix prox_nuclear(const Matrix& X, double tau);
/// Nearest point (Frobenius) of {Z : ‖Z‖ ≤ R}.
Matrix project_spectral_ball(const Matrix& X, double R);
/// Nearest PSD matrix. Inputs asymmetric beyond kSymmetryTol (relative) are rejected.
Matrix project_psd(const Matrix& X);
Vector project_l2_ball(const Vector& v, const Vector& center, double radius);

bool is_symmetric(const Matrix& X, double tol = kSymmetryTol);
Matrix symmetrize(const Matrix& X);

struct Entry {
  Index row = 0;
  Index col = 0;
  friend bool operator==(const Entry&, const Entry&) = default;
  friend auto operator<=>(const Entry&, const Entry&) = default;
};

/// The linear map X ↦ (⟨A₁,X⟩, …, ⟨A_m,X⟩).
///
/// Two storage variants: a dense stack of explicit matrices (row i holds
/// vec(A_i) in column-major order), or an entry mask where A_i = E_{jk}.
/// Mask operators are plain entry samplers; no 1/√m normalization.
class SamplingOperator {
 public:
  enum class Kind { kExplicit, kMask };

  SamplingOperator() = default;

  /// `stacked` is m × (rows·cols); row i is vec(A_i) (column-major).
  static SamplingOperator explicit_matrices(Index rows, Index cols, Matrix stacked);
  static SamplingOperator explicit_matrices(const std::vector<Matrix>& mats);
  static SamplingOperator entry_mask(Index rows, Index cols, std::vector<Entry> entries);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] Index rows() const { return rows_; }
  [[nodiscard]] Index cols() const { return cols_; }
  [[nodiscard]] Index size() const { return kind_ == Kind::kMask ? static_cast<Index>(entries_.size()) : stacked_.rows(); }

  [[nodiscard]] const Matrix& stacked() const { return stacked_; }
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }

  [[nodiscard]] Vector apply(const Matrix& X) const;
  [[nodiscard]] Matrix adjoint(const Vector& y) const;
  /// A_i as a rows × cols matrix.
  [[nodiscard]] Matrix component(Index i) const;

 private:
  Kind kind_ = Kind::kMask;
  Index rows_ = 0;
  Index cols_ = 0;
  Matrix stacked_;
  std::vector<Entry> entries_;
};

/// Tangent space of the rank-r manifold at M: {U1 U1ᵀ Z + Z V1 V1ᵀ − U1 U1ᵀ Z V1 V1ᵀ}.
struct TangentSpace {
  Matrix U1;  // n1 × r
  Matrix V1;  // n2 × r

  /// Built from the leading `rank` singular pairs of M.
  static TangentSpace at(const Matrix& M, Index rank);
};

/// P_T(Z), or P_{T⊥}(Z) = Z − P_T(Z) when `complement` is set.
Matrix tangent_project(const TangentSpace& T, const Matrix& Z, bool complement = false);

}  // namespace mscr
