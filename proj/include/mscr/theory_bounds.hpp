#pragma once

#include "mscr/penalty_phi.hpp"
#include "mscr/spectral_core.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mscr {

/// Argument outside [0, 1/c).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A hypothesis of the error-bound theorems fails; what() names the inequality.
class HypothesisError : public std::runtime_error {
 public:
  explicit HypothesisError(std::string inequality)
      : std::runtime_error("hypothesis violated: " + inequality), inequality_(std::move(inequality)) {}
  [[nodiscard]] const std::string& inequality() const { return inequality_; }

 private:
  std::string inequality_;
};

/// γ₀ = ‖Ū₁V̄₁ᵀ‖_F/√(2r) = 1/√2.
inline const double kGamma0 = 1.0 / std::sqrt(2.0);

/// Restricted-eigenvalue data. theta_plus/theta_minus are taken at level 2r+s.
struct RECParams {
  int r = 1;
  int s = 1;
  double c = 0.0;
  double theta_plus = 1.0;
  double theta_minus = 1.0;
  double delta = 1.0;
  std::optional<double> sigma_r_bar;

  void validate() const;
  /// 2δ√θ₊/θ₋ = Ξ(0).
  [[nodiscard]] double xi_scale() const;
  [[nodiscard]] double sigma_r() const;
};

/// Ξ(t) = Ξ(0)·√(1 + rt²/(2s))/(1 − ct).
double xi(const RECParams& p, double t);
/// Γ(t) = Ξ(0)·√(2r)·t/(1 − ct).
double gamma_cap(const RECParams& p, double t);

/// Ξ(0)/Ξ(γ₀); depends only on (r, s, c).
double xi_floor_ratio(int r, int s, double c);

/// One step of the γ̃ recursion given Ξ(γ̃ₖ₋₁) and ρₖ.
struct RecursionStep {
  double a = 0.0;
  double b = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

RecursionStep recursion_step(const RECParams& p, const PhiSpec& phi, double rho_k, double xi_prev);

/// Right-hand side of the ρ₁ condition ã₁ < ((b̃₁−β̃₁²)√r − β̃₁)/((1−β̃₁²)√r + √2β̃₁).
double rho1_condition_rhs(const RecursionStep& first, int r);

struct BoundSeq {
  /// γ̃ₖ for k = 0..K (γ̃₀ = γ₀).
  std::vector<double> gamma_tilde;
  /// Ξ(γ̃ₖ) for k = 0..K.
  std::vector<double> xi_values;
  /// Entries for k = 1..K (index k−1).
  std::vector<double> a_tilde;
  std::vector<double> b_tilde;
  std::vector<double> beta_tilde;
  std::vector<double> rho;
};

/// γ̃₁..γ̃_K. `mu_schedule` holds μ₂, μ₃, …; its last entry repeats and an empty
/// schedule means μ ≡ 1. Throws HypothesisError when σ_r(X̄) ≤ 2Ξ(γ₀), when
/// ρ₁ fails the admissibility inequality, or when some μₖ leaves
/// [1, Ξ(γ̃ₖ₋₂)/Ξ(γ̃ₖ₋₁)].
BoundSeq gamma_tilde_recursion(const RECParams& p, const PhiSpec& phi, double rho1,
                               const std::vector<double>& mu_schedule, int K);

struct Table1 {
  std::vector<double> c_values;
  /// ratios[k][j] = Ξ(γ̃ₖ₊₁)/Ξ(γ₀) at c_values[j], k = 0..K−1.
  std::vector<std::vector<double>> ratios;
  /// Ξ(0)/Ξ(γ₀) per c.
  std::vector<double> floor;
};

/// Bound-reduction table with σ_r(X̄) = αΞ(γ₀), ρ₁ = κ·α/σ_r(X̄) and μ ≡ 1.
/// (δ, θ₊, θ₋) only set the common scale Ξ(0) and cancel in every ratio.
Table1 table1_ratios(const PhiSpec& phi, int r, int s, const std::vector<double>& c_values, double alpha,
                     double kappa, int K, double delta = 1.0, double theta_plus = 1.0, double theta_minus = 1.0);

/// Reference ρ₁ midpoints in units of α/σ_r(X̄): 0.645 for φ₁, 2.33 for φ₂.
double table1_kappa(const PhiSpec& phi);

struct Rho1Interval {
  bool empty = true;
  double lo = 0.0;
  double hi = 0.0;
  /// Why the interval is empty, when it is.
  std::string diagnostic;

  [[nodiscard]] bool contains(double rho1) const { return !empty && rho1 > lo && rho1 < hi; }
};

/// Largest contiguous set of ρ₁ satisfying the ρ₁ condition, found on a
/// log grid and refined by bisection. Endpoints are accurate to ~1e-12 relative.
Rho1Interval rho1_admissible(const RECParams& p, const PhiSpec& phi);

struct GeometricBound {
  /// Right-hand side of the geometric error bound for k = 1..K.
  std::vector<double> rhs;
  /// The contraction factor α·Ξ(γ₀)/(σ_r − √2Ξ(γ₀)).
  double varrho = 0.0;
  /// α = (1 + √2ã₁)/((1 − ã₁)(1 − β̃₁²)√(r+4s)).
  double alpha = 0.0;
  /// Stage count from Ξ(0)/Ξ(γ₀), rounded up.
  int k_bar = 0;
  /// Stage count from the observed first-stage error, rounded up.
  int k_bar_observed = 0;
};

/// `err1` is ‖X¹ − X̄‖_F. Throws HypothesisError unless σ_r > max(2, √2 + α)Ξ(γ₀).
GeometricBound geometric_bound(const RECParams& p, const PhiSpec& phi, const BoundSeq& seq, double err1, int K);

/// ⌈log(floor_ratio)/log(varrho) + 1⌉.
int stage_count_bound(double floor_ratio, double varrho);

struct RestrictedEigs {
  double theta_plus = 0.0;
  double theta_minus = 0.0;
  /// θ₊ is a lower bound of the true supremum and θ₋ an upper bound of the true infimum.
  bool one_sided = true;
};

/// Alternating factored estimate of θ±(k) from `trials` seeded starts.
RestrictedEigs estimate_restricted_eigs(const SamplingOperator& op, int k, int trials, std::uint64_t seed);

/// (√l/2)·√(θ₊(l)/θ₋(k+l) − 1).
double pi_upper_bound(double theta_plus_l, double theta_minus_kl, int l);

struct AssumptionCheck {
  bool holds = false;
  /// (1 + 2c²s/r) − θ₊(s)/θ₋(2r+2s).
  double margin = 0.0;
};

AssumptionCheck assumption_check(double theta_plus_s, double theta_minus_2r2s, int r, int s, double c);

}  // namespace mscr
