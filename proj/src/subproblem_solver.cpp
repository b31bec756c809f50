#include "mscr/subproblem_solver.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace mscr {

namespace {

void check_entries(const std::vector<Entry>& entries, Index rows, Index cols, const char* what) {
  std::set<Entry> seen;
  for (const Entry& e : entries) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
      throw InvalidInput(std::string(what) + ": index out of range");
    }
    if (!seen.insert(e).second) throw InvalidInput(std::string(what) + ": duplicate index");
  }
}

void check_upper(const std::vector<Entry>& entries, const char* what) {
  for (const Entry& e : entries) {
    if (e.row > e.col) throw InvalidInput(std::string(what) + ": entries must lie on the upper triangle");
  }
}

bool gap_ok(const SolveOptions& o, double gap, double rel_gap) {
  return (o.gap_mode == GapMode::kAbsolute ? gap : rel_gap) <= o.tol_gap;
}

// Adaptive penalty on the splitting residuals: r_p = ‖copy mismatch‖ / (1 + ‖X‖), r_d = σ‖Δcopies‖ / (1 + ‖Γ‖).
double rebalance(double sigma, double rp, double rd) {
  constexpr double kRatio = 5.0;
  if (rp > kRatio * rd) return sigma * 2.0;
  if (rd > kRatio * rp) return sigma * 0.5;
  return sigma;
}

// Leading singular value of A by power iteration on AᵀA from a fixed start.
double operator_norm(const Matrix& A) {
  if (A.size() == 0) return 1.0;
  Vector v = Vector::Ones(A.cols()).normalized();
  double est = 0.0;
  for (int it = 0; it < 60; ++it) {
    Vector w = A.transpose() * (A * v);
    const double nrm = w.norm();
    if (nrm == 0.0) return 1.0;
    const double next = std::sqrt(nrm);
    v = w / nrm;
    if (std::abs(next - est) <= 1e-6 * next) return next;
    est = next;
  }
  return est > 0.0 ? est : 1.0;
}

}  // namespace

void SensingProblem::validate() const {
  if (op.rows() <= 0 || op.cols() <= 0) throw InvalidInput("SensingProblem: empty operator");
  if (b.size() != op.size()) throw InvalidInput("SensingProblem: b has wrong length");
  if (!b.allFinite()) throw InvalidInput("SensingProblem: b not finite");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidInput("SensingProblem: delta must be finite and ≥ 0");
  if (!(spectral_radius > 0.0)) throw InvalidInput("SensingProblem: spectral radius must be positive");
  if (static_cast<Index>(fixed_entries.size()) != fixed_values.size()) {
    throw InvalidInput("SensingProblem: fixed entries and values differ in length");
  }
  check_entries(fixed_entries, op.rows(), op.cols(), "SensingProblem fixed entries");
}

void PSDCompletionProblem::validate() const {
  if (n <= 0) throw InvalidInput("PSDCompletionProblem: n must be positive");
  if (op.rows() != n || op.cols() != n) throw InvalidInput("PSDCompletionProblem: operator shape mismatch");
  if (op.kind() != SamplingOperator::Kind::kMask) throw InvalidInput("PSDCompletionProblem: operator must be an entry mask");
  check_upper(op.entries(), "PSDCompletionProblem mask");
  if (b.size() != op.size()) throw InvalidInput("PSDCompletionProblem: b has wrong length");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidInput("PSDCompletionProblem: delta must be finite and ≥ 0");
  if (static_cast<Index>(eq_entries.size()) != eq_values.size()) throw InvalidInput("PSDCompletionProblem: g1 length mismatch");
  if (static_cast<Index>(ineq_entries.size()) != ineq_bounds.size()) throw InvalidInput("PSDCompletionProblem: g2 length mismatch");
  check_entries(eq_entries, n, n, "PSDCompletionProblem E1");
  check_entries(ineq_entries, n, n, "PSDCompletionProblem E2");
  check_upper(eq_entries, "PSDCompletionProblem E1");
  check_upper(ineq_entries, "PSDCompletionProblem E2");
  std::set<Entry> eq(eq_entries.begin(), eq_entries.end());
  for (const Entry& e : ineq_entries) {
    if (eq.count(e)) throw InvalidInput("PSDCompletionProblem: entry is both pinned and bounded");
  }
}

void SolveOptions::validate() const {
  if (!(tol_infeas > 0.0) || !(tol_gap > 0.0)) throw InvalidInput("SolveOptions: tolerances must be positive");
  if (max_iters <= 0 || check_every <= 0 || sigma_update_every <= 0) throw InvalidInput("SolveOptions: counts must be positive");
  if (!(step_length > 0.0 && step_length < (1.0 + std::sqrt(5.0)) / 2.0)) {
    throw InvalidInput("SolveOptions: step length must lie in (0, (1+√5)/2)");
  }
}

double stage_objective(const Matrix& X, const Matrix& W_prev) {
  if (X.rows() != W_prev.rows() || X.cols() != W_prev.cols()) throw InvalidInput("stage_objective: shape mismatch");
  return nuclear_norm(X) - X.cwiseProduct(W_prev).sum();
}

// ===========================================================================
// Sensing stage solver
// ===========================================================================

struct SensingStageSolver::Impl {
  SensingProblem P;
  Index n1 = 0, n2 = 0, m = 0;
  std::vector<Index> free_idx;   // column-major positions of free entries
  std::vector<Index> fixed_idx;  // same order as P.fixed_entries
  bool has_ball_copy = false;

  double scale = 1.0;  // ‖A‖₂; internal operator is A / scale
  Matrix A_free;       // m × |F|
  Matrix A_fixed;      // m × |fix|
  Vector afix_d;       // A_fixed · d
  Vector b_s;
  double delta_s = 0.0;
  double copies = 1.0;

  bool woodbury = true;
  Matrix gram;  // A_F A_Fᵀ when woodbury
  Eigen::LLT<Matrix> chol;

  // ADMM state (scaled units).
  bool warm = false;
  Matrix X, Z1, Z2, Y1, Y2, C_last;
  Vector z, y3;
  double sigma = 1.0;

  explicit Impl(SensingProblem problem) : P(std::move(problem)) {
    P.validate();
    n1 = P.rows();
    n2 = P.cols();
    m = P.op.size();
    has_ball_copy = std::isfinite(P.spectral_radius);
    copies = has_ball_copy ? 2.0 : 1.0;

    std::vector<char> is_fixed(static_cast<std::size_t>(n1 * n2), 0);
    for (const Entry& e : P.fixed_entries) {
      const Index pos = e.row + n1 * e.col;
      is_fixed[static_cast<std::size_t>(pos)] = 1;
      fixed_idx.push_back(pos);
    }
    for (Index pos = 0; pos < n1 * n2; ++pos) {
      if (!is_fixed[static_cast<std::size_t>(pos)]) free_idx.push_back(pos);
    }

    Matrix stacked;
    if (P.op.kind() == SamplingOperator::Kind::kExplicit) {
      stacked = P.op.stacked();
    } else {
      stacked = Matrix::Zero(m, n1 * n2);
      for (Index i = 0; i < m; ++i) {
        const Entry& e = P.op.entries()[static_cast<std::size_t>(i)];
        stacked(i, e.row + n1 * e.col) = 1.0;
      }
    }
    scale = operator_norm(stacked);
    const Index nf = static_cast<Index>(free_idx.size());
    A_free.resize(m, nf);
    for (Index j = 0; j < nf; ++j) A_free.col(j) = stacked.col(free_idx[static_cast<std::size_t>(j)]) / scale;
    A_fixed.resize(m, static_cast<Index>(fixed_idx.size()));
    for (Index j = 0; j < A_fixed.cols(); ++j) A_fixed.col(j) = stacked.col(fixed_idx[static_cast<std::size_t>(j)]) / scale;
    afix_d = A_fixed * P.fixed_values;
    b_s = P.b / scale;
    delta_s = P.delta / scale;

    woodbury = m <= nf;
    if (nf > 0 && m > 0) {
      if (woodbury) {
        gram = Matrix::Zero(m, m);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(A_free);
        gram = gram.selfadjointView<Eigen::Lower>();
        Matrix K = gram;
        K.diagonal().array() += copies;
        chol.compute(K);
      } else {
        Matrix H = Matrix::Zero(nf, nf);
        H.selfadjointView<Eigen::Lower>().rankUpdate(A_free.transpose());
        H = H.selfadjointView<Eigen::Lower>();
        H.diagonal().array() += copies;
        chol.compute(H);
      }
    }
  }

  Vector gather(const Matrix& M) const {
    Vector out(static_cast<Index>(free_idx.size()));
    for (std::size_t j = 0; j < free_idx.size(); ++j) out(static_cast<Index>(j)) = M.reshaped()(free_idx[j]);
    return out;
  }

  Vector gather_fixed(const Matrix& M) const {
    Vector out(static_cast<Index>(fixed_idx.size()));
    for (std::size_t j = 0; j < fixed_idx.size(); ++j) out(static_cast<Index>(j)) = M.reshaped()(fixed_idx[j]);
    return out;
  }

  Matrix scatter(const Vector& x_free) const {
    Matrix out(n1, n2);
    auto flat = out.reshaped();
    for (std::size_t j = 0; j < free_idx.size(); ++j) flat(free_idx[j]) = x_free(static_cast<Index>(j));
    for (std::size_t j = 0; j < fixed_idx.size(); ++j) flat(fixed_idx[j]) = P.fixed_values(static_cast<Index>(j));
    return out;
  }

  // A·M in scaled units.
  Vector apply_scaled(const Matrix& M) const {
    Vector out = A_free * gather(M);
    if (!fixed_idx.empty()) out += A_fixed * gather_fixed(M);
    return out;
  }

  // Aᵀ·y in scaled units, as an n1 × n2 matrix.
  Matrix adjoint_scaled(const Vector& y) const {
    Matrix out(n1, n2);
    auto flat = out.reshaped();
    const Vector f = A_free.transpose() * y;
    for (std::size_t j = 0; j < free_idx.size(); ++j) flat(free_idx[j]) = f(static_cast<Index>(j));
    if (!fixed_idx.empty()) {
      const Vector g = A_fixed.transpose() * y;
      for (std::size_t j = 0; j < fixed_idx.size(); ++j) flat(fixed_idx[j]) = g(static_cast<Index>(j));
    }
    return out;
  }

  void cold_start(const SolveOptions& opts) {
    X = scatter(Vector::Zero(static_cast<Index>(free_idx.size())));
    Z1 = Matrix::Zero(n1, n2);
    Z2 = Matrix::Zero(n1, n2);
    Y1 = Matrix::Zero(n1, n2);
    Y2 = Matrix::Zero(n1, n2);
    z = Vector::Zero(m);
    y3 = Vector::Zero(m);
    const double primal_scale = std::max(1.0, b_s.norm());
    sigma = opts.admm_sigma0 > 0.0 ? opts.admm_sigma0 : std::sqrt(static_cast<double>(std::min(n1, n2))) / primal_scale;
    warm = true;
  }

  SolveResult solve(const Matrix& C, const SolveOptions& opts, bool warm_start) {
    opts.validate();
    if (C.rows() != n1 || C.cols() != n2) throw InvalidInput("solve_sensing_stage: W_prev shape mismatch");
    require_finite(C, "solve_sensing_stage");
    if (spectral_norm(C) > 1.0 + 1e-10) throw InvalidInput("solve_sensing_stage: ‖W_prev‖ exceeds 1");

    if (!warm_start || !warm) {
      cold_start(opts);
    } else {
      // Keep Γ = Y1 + C across the change of C.
      Y1 += C_last - C;
      if (opts.admm_sigma0 > 0.0) sigma = opts.admm_sigma0;
    }
    C_last = C;

    const double tau = opts.step_length;
    const double b_norm = P.b.norm();
    const double d_norm = P.fixed_values.norm();
    const double c_norm = C.norm();
    const double R = P.spectral_radius;
    const Index nf = static_cast<Index>(free_idx.size());

    SolveResult res;
    Vector AX(m);
    Matrix Gamma(n1, n2);
    Vector z1_sigma;  // singular values of Z1
    double z1_top = 0.0;
    Matrix Z1_prev, Z2_prev;
    Vector z_prev;
    double next_sigma = sigma;
    double stall_mark = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= opts.max_iters; ++it) {
      // Affine block: least squares over the free entries.
      const Matrix U = (has_ball_copy ? Matrix(Z1 + Z2 - (Y1 + Y2) / sigma) : Matrix(Z1 - Y1 / sigma));
      if (nf > 0) {
        const Vector u = gather(U);
        const Vector t = b_s + z - y3 / sigma - afix_d;
        Vector x_free;
        if (m == 0) {
          x_free = u / copies;
          AX.resize(0);
        } else if (woodbury) {
          const Vector Au = A_free * u;
          const Vector s = chol.solve(Au + gram * t);
          const Vector diff = t - s;
          x_free = (u + A_free.transpose() * diff) / copies;
          AX = (Au + gram * diff) / copies + afix_d;
        } else {
          x_free = chol.solve(u + A_free.transpose() * t);
          AX = A_free * x_free + afix_d;
        }
        X = scatter(x_free);
      } else {
        X = scatter(Vector(0));
        AX = afix_d;
      }

      const bool tune = it % opts.sigma_update_every == 0;
      if (tune) {
        Z1_prev = Z1;
        if (has_ball_copy) Z2_prev = Z2;
        z_prev = z;
      }

      // Nuclear block: prox of (‖·‖_* − ⟨C,·⟩)/σ.
      const Matrix V1 = X + (Y1 + C) / sigma;
      SVDFactor f = svd(V1);
      const double thresh = 1.0 / sigma;
      Index keep = 0;
      z1_sigma = (f.singular_values.array() - thresh).cwiseMax(0.0);
      while (keep < z1_sigma.size() && z1_sigma(keep) > 0.0) ++keep;
      if (keep > 0) {
        Z1.noalias() = f.U.leftCols(keep) * z1_sigma.head(keep).asDiagonal() * f.Vt.topRows(keep);
      } else {
        Z1.setZero();
      }
      z1_top = keep > 0 ? z1_sigma(0) : 0.0;
      Gamma = sigma * (V1 - Z1);

      // Spectral-ball block.
      if (has_ball_copy) {
        const Matrix V2 = X + Y2 / sigma;
        if (z1_top + (V2 - Z1).norm() <= R) {
          Z2 = V2;
        } else {
          Z2 = project_spectral_ball(V2, R);
        }
      }

      // Slack block.
      z = project_l2_ball(AX - b_s + y3 / sigma, Vector::Zero(m), delta_s);

      if (tune) {
        double rp2 = (X - Z1).squaredNorm() + (AX - b_s - z).squaredNorm();
        double rd2 = (Z1 - Z1_prev).squaredNorm() + (z - z_prev).squaredNorm();
        if (has_ball_copy) {
          rp2 += (X - Z2).squaredNorm();
          rd2 += (Z2 - Z2_prev).squaredNorm();
        }
        next_sigma = rebalance(sigma, std::sqrt(rp2) / (1.0 + X.norm()), sigma * std::sqrt(rd2) / (1.0 + Gamma.norm()));
      }

      Y1 += tau * sigma * (X - Z1);
      if (has_ball_copy) Y2 += tau * sigma * (X - Z2);
      y3 += tau * sigma * (AX - b_s - z);
      sigma = next_sigma;

      const bool last = it == opts.max_iters;
      const bool check = it % opts.check_every == 0 || last;
      if (!check) continue;

      // Primal side evaluated at the low-rank copy Z1.
      const Vector r_ball = apply_scaled(Z1) - b_s;
      const double ball_viol = scale * std::max(0.0, r_ball.norm() - delta_s);
      const double fix_viol = fixed_idx.empty() ? 0.0 : (gather_fixed(Z1) - P.fixed_values).norm();
      const double spec_viol = has_ball_copy ? std::max(0.0, z1_top - R) : 0.0;
      const double pinf = std::sqrt(ball_viol * ball_viol + fix_viol * fix_viol + spec_viol * spec_viol) /
                          (1.0 + b_norm + d_norm);
      const double pobj = z1_sigma.sum() - C.cwiseProduct(Z1).sum();

      // Dual point: Γ ∈ ∂‖Z1‖_*, ξ = −y3/scale, Y = −Y2, η absorbs the fixed-entry rows.
      Matrix D = Gamma - C + adjoint_scaled(y3);
      if (has_ball_copy) D += Y2;
      const Vector eta = gather_fixed(D);
      double dres2 = D.squaredNorm() - eta.squaredNorm();
      const double dinf = std::sqrt(std::max(0.0, dres2)) / (1.0 + c_norm);
      double dobj = -b_s.dot(y3) - delta_s * y3.norm() + P.fixed_values.dot(eta);
      if (has_ball_copy) dobj -= R * nuclear_norm(Y2);
      const double gap = std::abs(pobj - dobj);
      const double rel_gap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));

      res.iterations = it;
      res.primal_infeas = pinf;
      res.dual_infeas = dinf;
      res.gap = gap;
      res.rel_gap = rel_gap;
      res.primal_obj = pobj;
      res.dual_obj = dobj;
      if (opts.record_history) res.history.push_back({it, pinf, dinf, gap, rel_gap, pobj, dobj, sigma});

      if (pinf <= opts.tol_infeas && dinf <= opts.tol_infeas && gap_ok(opts, gap, rel_gap)) {
        res.converged = true;
        break;
      }
      if (it % 1000 == 0) {
        if (it >= 3000 && pinf > 1e-3 && pinf > 0.95 * stall_mark) {
          res.stagnated = true;
          break;
        }
        stall_mark = pinf;
      }
    }
    res.X = Z1;
    return res;
  }
};

SensingStageSolver::SensingStageSolver(SensingProblem problem)
    : impl_(std::make_unique<Impl>(std::move(problem))) {}
SensingStageSolver::~SensingStageSolver() = default;
SensingStageSolver::SensingStageSolver(SensingStageSolver&&) noexcept = default;
SensingStageSolver& SensingStageSolver::operator=(SensingStageSolver&&) noexcept = default;

SolveResult SensingStageSolver::solve(const Matrix& W_prev, const SolveOptions& opts, bool warm_start) {
  return impl_->solve(W_prev, opts, warm_start);
}
void SensingStageSolver::reset() { impl_->warm = false; }
const SensingProblem& SensingStageSolver::problem() const { return impl_->P; }

// ===========================================================================
// PSD completion stage solver
// ===========================================================================

struct PSDStageSolver::Impl {
  enum Role : unsigned char { kFree = 0, kEq = 1, kUpper = 2 };

  PSDCompletionProblem P;
  Index n = 0, m = 0;
  Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> role;
  Eigen::MatrixXi meas;  // measurement index per upper entry, −1 if unobserved
  Matrix bound;          // pinned value or upper bound per upper entry

  bool warm = false;
  Matrix X, Z, Lam, C_last;
  Vector z, lam;
  double sigma = 1.0;

  explicit Impl(PSDCompletionProblem problem) : P(std::move(problem)) {
    P.validate();
    n = P.n;
    m = P.op.size();
    role = decltype(role)::Constant(n, n, kFree);
    meas = Eigen::MatrixXi::Constant(n, n, -1);
    bound = Matrix::Zero(n, n);
    for (Index k = 0; k < m; ++k) {
      const Entry& e = P.op.entries()[static_cast<std::size_t>(k)];
      meas(e.row, e.col) = static_cast<int>(k);
    }
    for (std::size_t k = 0; k < P.eq_entries.size(); ++k) {
      const Entry& e = P.eq_entries[k];
      role(e.row, e.col) = kEq;
      bound(e.row, e.col) = P.eq_values(static_cast<Index>(k));
    }
    for (std::size_t k = 0; k < P.ineq_entries.size(); ++k) {
      const Entry& e = P.ineq_entries[k];
      role(e.row, e.col) = kUpper;
      bound(e.row, e.col) = P.ineq_bounds(static_cast<Index>(k));
    }
  }

  Vector sample(const Matrix& M) const {
    Vector out(m);
    for (Index k = 0; k < m; ++k) {
      const Entry& e = P.op.entries()[static_cast<std::size_t>(k)];
      out(k) = M(e.row, e.col);
    }
    return out;
  }

  // A*(y) on the symmetric space: off-diagonal samples split evenly over (i,j), (j,i).
  Matrix adjoint_sym(const Vector& y) const {
    Matrix out = Matrix::Zero(n, n);
    for (Index k = 0; k < m; ++k) {
      const Entry& e = P.op.entries()[static_cast<std::size_t>(k)];
      if (e.row == e.col) {
        out(e.row, e.col) += y(k);
      } else {
        out(e.row, e.col) += 0.5 * y(k);
        out(e.col, e.row) += 0.5 * y(k);
      }
    }
    return out;
  }

  void cold_start(const SolveOptions& opts) {
    X = Matrix::Zero(n, n);
    Z = Matrix::Zero(n, n);
    Lam = Matrix::Zero(n, n);
    z = Vector::Zero(m);
    lam = Vector::Zero(m);
    sigma = opts.admm_sigma0 > 0.0 ? opts.admm_sigma0 : 1.0;
    warm = true;
  }

  SolveResult solve(const Matrix& C, const SolveOptions& opts, bool warm_start) {
    opts.validate();
    if (C.rows() != n || C.cols() != n) throw InvalidInput("solve_psd_stage: C shape mismatch");
    require_finite(C, "solve_psd_stage");
    if (!is_symmetric(C, 1e-8)) throw InvalidInput("solve_psd_stage: C must be symmetric");
    const Matrix Cs = symmetrize(C);

    if (!warm_start || !warm) {
      cold_start(opts);
    } else {
      // Keep Γ = −Λ fixed is not meaningful when C moves; shift by the change in C.
      Lam -= Cs - C_last;
      if (opts.admm_sigma0 > 0.0) sigma = opts.admm_sigma0;
    }
    C_last = Cs;

    const double tau = opts.step_length;
    const double b_norm = P.b.norm();
    const double g1_norm = P.eq_values.norm();
    const double c_norm = Cs.norm();

    SolveResult res;
    Vector AX(m);
    Matrix Gamma(n, n);
    Matrix Z_prev;
    Vector z_prev;
    double next_sigma = sigma;
    double stall_mark = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= opts.max_iters; ++it) {
      // Entrywise affine block.
      for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i <= j; ++i) {
          const double g = Cs(i, j) + Lam(i, j);
          double x;
          if (role(i, j) == kEq) {
            x = bound(i, j);
          } else {
            const int k = meas(i, j);
            if (i == j) {
              x = k < 0 ? Z(i, i) - g / sigma
                        : (sigma * Z(i, i) + sigma * (P.b(k) + z(k)) - g - lam(k)) / (2.0 * sigma);
            } else {
              x = k < 0 ? Z(i, j) - g / sigma
                        : (2.0 * sigma * Z(i, j) + sigma * (P.b(k) + z(k)) - 2.0 * g - lam(k)) / (3.0 * sigma);
            }
            if (role(i, j) == kUpper) x = std::min(x, bound(i, j));
          }
          X(i, j) = x;
          X(j, i) = x;
        }
      }
      AX = sample(X);

      const bool tune = it % opts.sigma_update_every == 0;
      if (tune) {
        Z_prev = Z;
        z_prev = z;
      }

      // PSD block.
      const Matrix V = X + Lam / sigma;
      Eigen::SelfAdjointEigenSolver<Matrix> eig(V);
      const Vector lp = eig.eigenvalues().cwiseMax(0.0);
      const Matrix& Q = eig.eigenvectors();
      Z.noalias() = Q * lp.asDiagonal() * Q.transpose();
      Gamma = sigma * (Z - V);

      z = project_l2_ball(AX - P.b + lam / sigma, Vector::Zero(m), P.delta);

      if (tune) {
        const double rp = std::sqrt((X - Z).squaredNorm() + (AX - P.b - z).squaredNorm());
        const double rd = sigma * std::sqrt((Z - Z_prev).squaredNorm() + (z - z_prev).squaredNorm());
        next_sigma = rebalance(sigma, rp / (1.0 + X.norm()), rd / (1.0 + Gamma.norm()));
      }

      Lam += tau * sigma * (X - Z);
      lam += tau * sigma * (AX - P.b - z);
      sigma = next_sigma;

      const bool last = it == opts.max_iters;
      const bool check = it % opts.check_every == 0 || last;
      if (!check) continue;

      // Primal side at the PSD copy.
      const Vector rz = sample(Z) - P.b;
      const double ball_viol = std::max(0.0, rz.norm() - P.delta);
      double eq2 = 0.0, ub2 = 0.0;
      for (std::size_t k = 0; k < P.eq_entries.size(); ++k) {
        const Entry& e = P.eq_entries[k];
        const double r = Z(e.row, e.col) - P.eq_values(static_cast<Index>(k));
        eq2 += r * r;
      }
      for (std::size_t k = 0; k < P.ineq_entries.size(); ++k) {
        const Entry& e = P.ineq_entries[k];
        const double r = std::max(0.0, Z(e.row, e.col) - P.ineq_bounds(static_cast<Index>(k)));
        ub2 += r * r;
      }
      const double pinf = std::sqrt(ball_viol * ball_viol + eq2 + ub2) / (1.0 + b_norm + g1_norm);
      const double pobj = Cs.cwiseProduct(Z).sum();

      // Dual point: ξ = −λ, Γ = σ(Z − V) ⪰ 0, η₁ and u read off the pinned / bounded entries.
      const Matrix S = Cs + adjoint_sym(lam) - Gamma;
      double dres2 = 0.0;
      double dobj = -P.b.dot(lam) - P.delta * lam.norm();
      for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i <= j; ++i) {
          const double w = i == j ? 1.0 : 2.0;
          const double s = S(i, j);
          switch (role(i, j)) {
            case kFree:
              dres2 += w * s * s;
              break;
            case kEq:
              dobj += bound(i, j) * w * s;  // −⟨g1, η₁⟩ with η₁ = −w·s
              break;
            case kUpper: {
              const double u = std::max(0.0, -w * s);
              dobj -= bound(i, j) * u;
              const double r = std::max(0.0, s);
              dres2 += w * r * r;
              break;
            }
          }
        }
      }
      const double dinf = std::sqrt(dres2) / (1.0 + c_norm);
      const double gap = std::abs(pobj - dobj);
      const double rel_gap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));

      res.iterations = it;
      res.primal_infeas = pinf;
      res.dual_infeas = dinf;
      res.gap = gap;
      res.rel_gap = rel_gap;
      res.primal_obj = pobj;
      res.dual_obj = dobj;
      if (opts.record_history) res.history.push_back({it, pinf, dinf, gap, rel_gap, pobj, dobj, sigma});

      if (pinf <= opts.tol_infeas && dinf <= opts.tol_infeas && gap_ok(opts, gap, rel_gap)) {
        res.converged = true;
        break;
      }
      if (it % 1000 == 0) {
        if (it >= 3000 && pinf > 1e-3 && pinf > 0.95 * stall_mark) {
          res.stagnated = true;
          break;
        }
        stall_mark = pinf;
      }
    }
    res.X = Z;
    return res;
  }
};

PSDStageSolver::PSDStageSolver(PSDCompletionProblem problem)
    : impl_(std::make_unique<Impl>(std::move(problem))) {}
PSDStageSolver::~PSDStageSolver() = default;
PSDStageSolver::PSDStageSolver(PSDStageSolver&&) noexcept = default;
PSDStageSolver& PSDStageSolver::operator=(PSDStageSolver&&) noexcept = default;

SolveResult PSDStageSolver::solve(const Matrix& W_prev, const SolveOptions& opts, bool warm_start) {
  if (W_prev.rows() != impl_->n || W_prev.cols() != impl_->n) throw InvalidInput("solve_psd_stage: W_prev shape mismatch");
  require_finite(W_prev, "solve_psd_stage");
  if (!is_symmetric(W_prev, 1e-8)) throw InvalidInput("solve_psd_stage: W_prev must be symmetric");
  if (spectral_norm(W_prev) > 1.0 + 1e-10) throw InvalidInput("solve_psd_stage: ‖W_prev‖ exceeds 1");
  const Matrix C = Matrix::Identity(impl_->n, impl_->n) - symmetrize(W_prev);
  return impl_->solve(C, opts, warm_start);
}

SolveResult PSDStageSolver::solve_linear(const Matrix& C, const SolveOptions& opts, bool warm_start) {
  return impl_->solve(C, opts, warm_start);
}

void PSDStageSolver::reset() { impl_->warm = false; }
const PSDCompletionProblem& PSDStageSolver::problem() const { return impl_->P; }

SolveResult solve_sensing_stage(const SensingProblem& P, const Matrix& W_prev, const SolveOptions& opts) {
  SensingStageSolver solver(P);
  return solver.solve(W_prev, opts, false);
}

SolveResult solve_psd_stage(const PSDCompletionProblem& P, const Matrix& W_prev, const SolveOptions& opts) {
  PSDStageSolver solver(P);
  return solver.solve(W_prev, opts, false);
}

}  // namespace mscr
