#include "mscr/multistage_driver.hpp"

#include "mscr/matrix_io.hpp"

#include <chrono>
#include <cmath>

namespace mscr {

void MultistageConfig::validate() const {
  phi.validate();
  if (max_stages < 1) throw InvalidInput("MultistageConfig: max_stages must be ≥ 1");
  if (stability_window < 1) throw InvalidInput("MultistageConfig: stability window must be ≥ 1");
  if (!(rho1.value > 0.0) || !std::isfinite(rho1.value)) throw InvalidInput("MultistageConfig: ρ₁ rule needs a positive value");
  if (!(mu >= 1.0) || !std::isfinite(mu)) throw InvalidInput("MultistageConfig: μ must be ≥ 1");
  for (double m : mu_schedule) {
    if (!(m >= 1.0) || !std::isfinite(m)) throw InvalidInput("MultistageConfig: every scheduled μ must be ≥ 1");
  }
  solver.validate();
}

double MultistageConfig::mu_at(int k) const {
  if (mu_schedule.empty()) return mu;
  const std::size_t idx = static_cast<std::size_t>(std::max(k - 2, 0));
  return idx < mu_schedule.size() ? mu_schedule[idx] : mu_schedule.back();
}

int numerical_rank(const Matrix& X) { return numerical_rank(singular_values(X)); }

double relative_error(const Matrix& X, const Matrix& Xbar) {
  if (X.rows() != Xbar.rows() || X.cols() != Xbar.cols()) throw InvalidInput("relative_error: shape mismatch");
  const double denom = Xbar.norm();
  if (denom == 0.0) throw InvalidInput("relative_error: zero ground truth");
  return (X - Xbar).norm() / denom;
}

namespace {

template <typename Solver, typename WStep>
MultistageResult run_loop(Solver& solver, Index n1, Index n2, const MultistageConfig& cfg,
                          const std::optional<Matrix>& ground_truth, WStep w_step) {
  cfg.validate();
  if (ground_truth && (ground_truth->rows() != n1 || ground_truth->cols() != n2)) {
    throw InvalidInput("run_multistage: ground truth shape mismatch");
  }
  if (cfg.iterate_dir) std::filesystem::create_directories(*cfg.iterate_dir);

  MultistageResult out;
  Matrix W = Matrix::Zero(n1, n2);
  double rho = 0.0;
  int cumulative = 0;

  for (int k = 1; k <= cfg.max_stages; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    SolveResult res = solver.solve(W, cfg.solver, cfg.warm_start && k > 1);
    const Matrix& X = res.X;

    if (k == 1) {
      if (cfg.rho1.kind == Rho1Rule::Kind::kFixed) {
        rho = cfg.rho1.value;
      } else {
        const double top = spectral_norm(X);
        if (!(top > 0.0)) throw InvalidInput("run_multistage: cannot scale ρ₁ by a zero first-stage solution");
        rho = cfg.rho1.value / top;
      }
    } else {
      rho *= cfg.mu_at(k);
    }

    StageTrace tr;
    tr.k = k;
    tr.rho = rho;
    tr.iterations = res.iterations;
    cumulative += res.iterations;
    tr.cumulative_iterations = cumulative;
    tr.stage_objective = stage_objective(X, W);
    tr.penalty_before_w = penalty_objective(cfg.phi, X, W, rho);
    Matrix W_next = w_step(X, rho);
    tr.penalty_after_w = penalty_objective(cfg.phi, X, W_next, rho);
    tr.complementarity = nuclear_norm(X) - X.cwiseProduct(W_next).sum();
    tr.rank = numerical_rank(X);
    if (ground_truth) tr.relerr = relative_error(X, *ground_truth);
    tr.primal_infeas = res.primal_infeas;
    tr.dual_infeas = res.dual_infeas;
    tr.gap = res.gap;
    tr.converged = res.converged;
    if (cfg.keep_iterates) tr.X = X;
    if (cfg.iterate_dir) {
      tr.iterate_path = *cfg.iterate_dir / ("stage_" + std::to_string(k) + ".bin");
      write_matrix_binary(*tr.iterate_path, X);
    }
    tr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    out.X = X;
    out.W = W_next;
    W = std::move(W_next);
    out.stages.push_back(std::move(tr));

    if (!res.converged && cfg.abort_on_nonconvergence) {
      out.aborted = true;
      out.stop_reason = "nonconvergence";
      break;
    }
    if (cfg.stop == StopRule::kRankStability && static_cast<int>(out.stages.size()) >= cfg.stability_window) {
      bool stable = true;
      const int last_rank = out.stages.back().rank;
      for (int i = 1; i <= cfg.stability_window; ++i) {
        stable = stable && out.stages[out.stages.size() - static_cast<std::size_t>(i)].rank == last_rank;
      }
      if (stable) {
        out.stop_reason = "rank_stability";
        break;
      }
    }
    if (k == cfg.max_stages) out.stop_reason = "max_stages";
  }
  return out;
}

}  // namespace

MultistageResult run_multistage(const SensingProblem& P, const MultistageConfig& cfg,
                                const std::optional<Matrix>& ground_truth) {
  SensingStageSolver solver(P);
  return run_loop(solver, P.rows(), P.cols(), cfg, ground_truth, [&](const Matrix& X, double rho) {
    return w_update(cfg.phi, X, rho, cfg.boundary);
  });
}

MultistageResult run_multistage(const PSDCompletionProblem& P, const MultistageConfig& cfg,
                                const std::optional<Matrix>& ground_truth) {
  PSDStageSolver solver(P);
  return run_loop(solver, P.n, P.n, cfg, ground_truth, [&](const Matrix& X, double rho) {
    return w_update_psd(cfg.phi, X, rho, cfg.boundary);
  });
}

}  // namespace mscr
