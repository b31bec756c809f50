#pragma once

#include "mscr/spectral_core.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace mscr {

/// min ‖X‖_* − ⟨C,X⟩ over {‖A(X) − b‖ ≤ δ, X_e = d_e (e ∈ fixed), ‖X‖ ≤ R}.
struct SensingProblem {
  SamplingOperator op;
  Vector b;
  double delta = 0.0;
  std::vector<Entry> fixed_entries;
  Vector fixed_values;
  double spectral_radius = std::numeric_limits<double>::infinity();

  [[nodiscard]] Index rows() const { return op.rows(); }
  [[nodiscard]] Index cols() const { return op.cols(); }
  void validate() const;
};

/// min ⟨C,X⟩ over {X ⪰ 0, ‖A(X) − b‖ ≤ δ, X_e = g1_e (e ∈ E1), X_e ≤ g2_e (e ∈ E2)}.
///
/// A, E1 and E2 are entry selectors on the upper triangle (row ≤ col) of a
/// symmetric n × n matrix; an off-diagonal selector reads X_ij = ⟨(E_ij + E_ji)/2, X⟩.
struct PSDCompletionProblem {
  Index n = 0;
  SamplingOperator op;
  Vector b;
  double delta = 0.0;
  std::vector<Entry> eq_entries;
  Vector eq_values;
  std::vector<Entry> ineq_entries;
  Vector ineq_bounds;

  void validate() const;
};

enum class GapMode { kAbsolute, kRelative };

struct SolveOptions {
  double tol_infeas = 1e-6;
  double tol_gap = 1e-5;
  GapMode gap_mode = GapMode::kAbsolute;
  int max_iters = 20000;
  /// Initial ADMM penalty; ≤ 0 selects a scale-based default.
  double admm_sigma0 = 0.0;
  double step_length = 1.618;
  int check_every = 10;
  int sigma_update_every = 50;
  bool record_history = false;

  void validate() const;
};

struct ResidualSample {
  int iteration = 0;
  double primal_infeas = 0.0;
  double dual_infeas = 0.0;
  double gap = 0.0;
  double rel_gap = 0.0;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double sigma = 0.0;
};

struct SolveResult {
  Matrix X;
  int iterations = 0;
  double primal_infeas = 0.0;
  double dual_infeas = 0.0;
  /// |primal_obj − dual_obj|.
  double gap = 0.0;
  /// gap / (1 + |primal_obj| + |dual_obj|).
  double rel_gap = 0.0;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  bool converged = false;
  /// Set when the run stopped early because primal infeasibility stalled.
  bool stagnated = false;
  std::vector<ResidualSample> history;
};

/// ‖X‖_* − ⟨W,X⟩.
double stage_objective(const Matrix& X, const Matrix& W_prev);

/// ADMM for the sensing stage problem.
///
/// Splits X into an affine copy (fixed entries pinned), a nuclear-norm copy
/// and a spectral-ball copy, plus the slack z = A(X) − b in the δ-ball. The
/// affine step is an exact least-squares solve through a Cholesky factor
/// precomputed once per problem, so stage re-solves only pay for the
/// iterations. Variables persist between solve() calls for warm starts.
class SensingStageSolver {
 public:
  explicit SensingStageSolver(SensingProblem problem);
  ~SensingStageSolver();
  SensingStageSolver(SensingStageSolver&&) noexcept;
  SensingStageSolver& operator=(SensingStageSolver&&) noexcept;

  /// Solves the stage problem with C = W_prev. Requires ‖W_prev‖ ≤ 1 + 1e-10.
  SolveResult solve(const Matrix& W_prev, const SolveOptions& opts, bool warm_start = true);
  /// Drops the warm-start state.
  void reset();

  [[nodiscard]] const SensingProblem& problem() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// ADMM for the PSD completion stage problem; C = I − W_prev is formed internally.
class PSDStageSolver {
 public:
  explicit PSDStageSolver(PSDCompletionProblem problem);
  ~PSDStageSolver();
  PSDStageSolver(PSDStageSolver&&) noexcept;
  PSDStageSolver& operator=(PSDStageSolver&&) noexcept;

  /// W_prev must be symmetric with ‖W_prev‖ ≤ 1 + 1e-10.
  SolveResult solve(const Matrix& W_prev, const SolveOptions& opts, bool warm_start = true);
  /// Solves min ⟨C,X⟩ over the same feasible set for an arbitrary symmetric C.
  SolveResult solve_linear(const Matrix& C, const SolveOptions& opts, bool warm_start = true);
  void reset();

  [[nodiscard]] const PSDCompletionProblem& problem() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SolveResult solve_sensing_stage(const SensingProblem& P, const Matrix& W_prev, const SolveOptions& opts);
SolveResult solve_psd_stage(const PSDCompletionProblem& P, const Matrix& W_prev, const SolveOptions& opts);

}  // namespace mscr
