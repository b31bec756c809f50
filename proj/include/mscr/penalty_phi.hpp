#pragma once

#include "mscr/spectral_core.hpp"

#include <limits>

namespace mscr {

/// A member of the penalty family: φ₁(t) = t, or
/// φ₂(t) = −t − ((q−1)/q)(1−t+ε)^{q/(q−1)} + ε + (q−1)/q on t < 1+ε.
///
/// Every member is closed proper convex with argmin over [0,1] at t* < 1,
/// φ(t*) = 0 and a finite left derivative at 1.
struct PhiSpec {
  enum class Variant { kPhi1, kPhi2 };

  Variant variant = Variant::kPhi2;
  double q = 0.5;
  double eps = 1e-3;

  static PhiSpec phi1() { return PhiSpec{Variant::kPhi1, 0.0, 0.0}; }
  static PhiSpec phi2(double q = 0.5, double eps = 1e-3);

  /// Throws InvalidInput when q or ε leave (0,1).
  void validate() const;

  [[nodiscard]] double t_star() const;
  [[nodiscard]] double phi_at_1() const;
  [[nodiscard]] double left_derivative_at_1() const;

  friend bool operator==(const PhiSpec&, const PhiSpec&) = default;
};

/// Closed interval [lo, hi] ⊆ [0,1].
struct SubgradInterval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool is_singleton() const { return lo == hi; }
};

/// Which end of ∂ψ*(s) to pick at a kink.
enum class BoundaryRule { kUpper, kLower };

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// φ(t); +∞ outside dom φ.
double phi_value(const PhiSpec& spec, double t);

/// ψ*(s) = max_{t∈[0,1]} { s·t − φ(t) }.
double psi_conj_value(const PhiSpec& spec, double s);

/// ∂ψ*(s) in closed form.
SubgradInterval psi_conj_subgrad(const PhiSpec& spec, double s);

/// Pick one element of ∂ψ*(s) according to `rule`.
double psi_conj_select(const PhiSpec& spec, double s, BoundaryRule rule);

/// Weight vector wᵢ ∈ ∂ψ*(ρσᵢ) with equal weights on tied σ's.
/// `sigma` must be nonincreasing and nonnegative; the result is nonincreasing in [0,1].
Vector stage_weights(const PhiSpec& spec, const Vector& sigma, double rho, BoundaryRule rule);

/// The W-step: Wᵏ = U·Diag(w)·Vᵀ on the SVD frame of Xᵏ.
Matrix w_update(const PhiSpec& spec, const Matrix& Xk, double rho_k,
                BoundaryRule rule = BoundaryRule::kUpper);

/// Same update for a symmetric PSD Xᵏ on its eigenframe, so Wᵏ stays symmetric.
/// Eigenvalues are clipped at zero before weighting.
Matrix w_update_psd(const PhiSpec& spec, const Matrix& Xk, double rho_k,
                    BoundaryRule rule = BoundaryRule::kUpper);

/// φ(1)·rank(X), the optimal value of min{Σφ(σᵢ(W)) : ‖X‖_* − ⟨W,X⟩ = 0, ‖W‖ ≤ 1}.
double variational_rank_value(const PhiSpec& spec, const Matrix& X);

/// A minimizer of the problem above: U₁V₁ᵀ + t*·U₂[I 0]V₂ᵀ.
/// When X has full row rank the second block is empty.
Matrix variational_rank_witness(const PhiSpec& spec, const Matrix& X);

/// Σφ(σᵢ(W)) + ρ(‖X‖_* − ⟨W,X⟩). Requires ‖W‖ ≤ 1 + 1e-10.
double penalty_objective(const PhiSpec& spec, const Matrix& X, const Matrix& W, double rho);

}  // namespace mscr
