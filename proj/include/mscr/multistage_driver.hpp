#pragma once

#include "mscr/penalty_phi.hpp"
#include "mscr/subproblem_solver.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mscr {

/// How ρ₁ is picked once X¹ is known.
struct Rho1Rule {
  enum class Kind { kFixed, kScaled };

  Kind kind = Kind::kScaled;
  /// ρ₁ itself for kFixed; c₀ in ρ₁ = c₀/‖X¹‖ for kScaled.
  double value = 10.0;

  static Rho1Rule fixed(double rho1) { return {Kind::kFixed, rho1}; }
  static Rho1Rule scaled(double c0 = 10.0) { return {Kind::kScaled, c0}; }
};

enum class StopRule { kFixedStages, kRankStability };

struct MultistageConfig {
  PhiSpec phi = PhiSpec::phi2();
  Rho1Rule rho1 = Rho1Rule::scaled();
  double mu = 1.25;
  /// μ₂, μ₃, … ; when nonempty it overrides `mu` and its last entry repeats.
  std::vector<double> mu_schedule;
  int max_stages = 15;
  StopRule stop = StopRule::kRankStability;
  /// Number of consecutive equal ranks that ends the loop.
  int stability_window = 3;
  SolveOptions solver;
  BoundaryRule boundary = BoundaryRule::kUpper;
  bool warm_start = true;
  bool abort_on_nonconvergence = false;
  /// Keep every Xᵏ in the trace.
  bool keep_iterates = false;
  /// When set, Xᵏ is written to <dir>/stage_<k>.bin.
  std::optional<std::filesystem::path> iterate_dir;

  void validate() const;
  /// μₖ for k ≥ 2.
  [[nodiscard]] double mu_at(int k) const;
};

struct StageTrace {
  int k = 0;
  double rho = 0.0;
  std::optional<double> relerr;
  int rank = 0;
  int iterations = 0;
  int cumulative_iterations = 0;
  /// ‖Xᵏ‖_* − ⟨Wᵏ⁻¹, Xᵏ⟩.
  double stage_objective = 0.0;
  /// Penalty objective at (Xᵏ, Wᵏ⁻¹, ρₖ) and at (Xᵏ, Wᵏ, ρₖ).
  double penalty_before_w = 0.0;
  double penalty_after_w = 0.0;
  /// ‖Xᵏ‖_* − ⟨Wᵏ, Xᵏ⟩; zero certifies a local minimizer of the rank problem.
  double complementarity = 0.0;
  double primal_infeas = 0.0;
  double dual_infeas = 0.0;
  double gap = 0.0;
  bool converged = false;
  double seconds = 0.0;
  std::optional<Matrix> X;
  std::optional<std::filesystem::path> iterate_path;
};

struct MultistageResult {
  std::vector<StageTrace> stages;
  Matrix X;  // last iterate
  Matrix W;  // last weight matrix
  bool aborted = false;
  /// "max_stages", "rank_stability" or "nonconvergence".
  std::string stop_reason;

  [[nodiscard]] const StageTrace& final_stage() const { return stages.back(); }
};

/// Algorithm 1 on a sensing problem; ground truth only feeds relerr.
MultistageResult run_multistage(const SensingProblem& P, const MultistageConfig& cfg,
                                const std::optional<Matrix>& ground_truth = std::nullopt);

/// Algorithm 1 on a PSD completion problem, with weights built on the eigenframe.
MultistageResult run_multistage(const PSDCompletionProblem& P, const MultistageConfig& cfg,
                                const std::optional<Matrix>& ground_truth = std::nullopt);

/// Count of σᵢ(X) > 1e-10·σ₁(X).
int numerical_rank(const Matrix& X);

/// ‖X − X̄‖_F / ‖X̄‖_F.
double relative_error(const Matrix& X, const Matrix& Xbar);

}  // namespace mscr
