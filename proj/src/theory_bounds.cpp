#include "mscr/theory_bounds.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace mscr {

void RECParams::validate() const {
  if (r < 1 || s < 1) throw InvalidInput("RECParams: r and s must be positive");
  if (!(c >= 0.0 && c < std::sqrt(2.0))) throw InvalidInput("RECParams: c must lie in [0, √2)");
  if (!(theta_minus > 0.0) || !(theta_plus >= theta_minus)) {
    throw InvalidInput("RECParams: need θ₊ ≥ θ₋ > 0");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidInput("RECParams: δ must be positive");
  if (sigma_r_bar && !(*sigma_r_bar > 0.0)) throw InvalidInput("RECParams: σ_r(X̄) must be positive");
}

double RECParams::xi_scale() const { return 2.0 * delta * std::sqrt(theta_plus) / theta_minus; }

double RECParams::sigma_r() const {
  if (!sigma_r_bar) throw InvalidInput("RECParams: σ_r(X̄) is required here");
  return *sigma_r_bar;
}

namespace {

void check_domain(const RECParams& p, double t) {
  if (!(t >= 0.0)) throw DomainError("bound functions need t ≥ 0");
  if (p.c > 0.0 && t >= 1.0 / p.c) throw DomainError("bound functions need t < 1/c");
}

}  // namespace

double xi(const RECParams& p, double t) {
  check_domain(p, t);
  const double r = p.r, s = p.s;
  return p.xi_scale() * std::sqrt(1.0 + r * t * t / (2.0 * s)) / (1.0 - p.c * t);
}

double gamma_cap(const RECParams& p, double t) {
  check_domain(p, t);
  return p.xi_scale() * std::sqrt(2.0 * p.r) * t / (1.0 - p.c * t);
}

double xi_floor_ratio(int r, int s, double c) {
  RECParams p;
  p.r = r;
  p.s = s;
  p.c = c;
  p.validate();
  return xi(p, 0.0) / xi(p, kGamma0);
}

RecursionStep recursion_step(const RECParams& p, const PhiSpec& phi, double rho_k, double xi_prev) {
  const double sr = p.sigma_r();
  RecursionStep st;
  st.a = psi_conj_subgrad(phi, rho_k * xi_prev).hi;
  st.b = psi_conj_subgrad(phi, rho_k * (sr - xi_prev)).lo;
  const double arg = 1.0 - std::sqrt(2.0) * xi_prev / sr;
  if (!(arg > 0.0)) throw HypothesisError("√2·Ξ(γ̃ₖ₋₁) < σ_r(X̄)");
  st.beta = -std::log(arg) / std::sqrt(2.0);
  if (!(st.a < 1.0)) throw HypothesisError("ãₖ < 1");
  if (!(st.beta < 1.0)) throw HypothesisError("β̃ₖ < 1");
  const double r = p.r;
  st.gamma = (std::sqrt(r) * (1.0 - st.b) + (std::sqrt(2.0) * st.a + 1.0) * st.beta) /
             (std::sqrt(2.0 * r) * (1.0 - st.a) * (1.0 - st.beta * st.beta));
  return st;
}

double rho1_condition_rhs(const RecursionStep& first, int r) {
  const double sr = std::sqrt(static_cast<double>(r));
  const double b2 = first.beta * first.beta;
  return ((first.b - b2) * sr - first.beta) / ((1.0 - b2) * sr + std::sqrt(2.0) * first.beta);
}

BoundSeq gamma_tilde_recursion(const RECParams& p, const PhiSpec& phi, double rho1,
                               const std::vector<double>& mu_schedule, int K) {
  p.validate();
  phi.validate();
  if (K < 1) throw InvalidInput("gamma_tilde_recursion: K must be ≥ 1");
  if (!(rho1 > 0.0)) throw InvalidInput("gamma_tilde_recursion: ρ₁ must be positive");
  const double xi0 = xi(p, kGamma0);
  if (!(p.sigma_r() > 2.0 * xi0)) throw HypothesisError("σ_r(X̄) > 2Ξ(γ₀)");

  BoundSeq seq;
  seq.gamma_tilde.push_back(kGamma0);
  seq.xi_values.push_back(xi0);
  double rho = rho1;
  for (int k = 1; k <= K; ++k) {
    if (k >= 2) {
      const std::size_t idx = static_cast<std::size_t>(k - 2);
      const double mu = mu_schedule.empty() ? 1.0 : mu_schedule[std::min(idx, mu_schedule.size() - 1)];
      const double cap = seq.xi_values[static_cast<std::size_t>(k - 2)] / seq.xi_values[static_cast<std::size_t>(k - 1)];
      if (!(mu >= 1.0) || mu > cap * (1.0 + 1e-12)) throw HypothesisError("μₖ ∈ [1, Ξ(γ̃ₖ₋₂)/Ξ(γ̃ₖ₋₁)]");
      rho *= mu;
    }
    const RecursionStep st = recursion_step(p, phi, rho, seq.xi_values.back());
    if (k == 1 && !(st.a < rho1_condition_rhs(st, p.r))) {
      throw HypothesisError("ã₁ < ((b̃₁−β̃₁²)√r − β̃₁)/((1−β̃₁²)√r + √2β̃₁)");
    }
    if (p.c > 0.0 && st.gamma >= 1.0 / p.c) throw HypothesisError("γ̃ₖ < 1/c");
    seq.a_tilde.push_back(st.a);
    seq.b_tilde.push_back(st.b);
    seq.beta_tilde.push_back(st.beta);
    seq.rho.push_back(rho);
    seq.gamma_tilde.push_back(st.gamma);
    seq.xi_values.push_back(xi(p, st.gamma));
  }
  return seq;
}

Table1 table1_ratios(const PhiSpec& phi, int r, int s, const std::vector<double>& c_values, double alpha,
                     double kappa, int K, double delta, double theta_plus, double theta_minus) {
  if (!(alpha > 0.0) || !(kappa > 0.0)) throw InvalidInput("table1_ratios: α and κ must be positive");
  Table1 t;
  t.c_values = c_values;
  t.ratios.assign(static_cast<std::size_t>(K), std::vector<double>(c_values.size(), 0.0));
  for (std::size_t j = 0; j < c_values.size(); ++j) {
    RECParams p;
    p.r = r;
    p.s = s;
    p.c = c_values[j];
    p.delta = delta;
    p.theta_plus = theta_plus;
    p.theta_minus = theta_minus;
    p.validate();
    const double xi0 = xi(p, kGamma0);
    p.sigma_r_bar = alpha * xi0;
    const double rho1 = kappa * alpha / *p.sigma_r_bar;
    const BoundSeq seq = gamma_tilde_recursion(p, phi, rho1, {}, K);
    for (int k = 0; k < K; ++k) {
      t.ratios[static_cast<std::size_t>(k)][j] = seq.xi_values[static_cast<std::size_t>(k + 1)] / xi0;
    }
    t.floor.push_back(xi(p, 0.0) / xi0);
  }
  return t;
}

double table1_kappa(const PhiSpec& phi) {
  return phi.variant == PhiSpec::Variant::kPhi1 ? (0.29 + 1.0) / 2.0 : (0.24 + 4.42) / 2.0;
}

Rho1Interval rho1_admissible(const RECParams& p, const PhiSpec& phi) {
  p.validate();
  phi.validate();
  Rho1Interval out;
  const double xi0 = xi(p, kGamma0);
  if (!(p.sigma_r() > 2.0 * xi0)) {
    out.diagnostic = "σ_r(X̄) > 2Ξ(γ₀) fails";
    return out;
  }
  auto ok = [&](double rho) {
    try {
      const RecursionStep st = recursion_step(p, phi, rho, xi0);
      return st.a < rho1_condition_rhs(st, p.r);
    } catch (const HypothesisError&) {
      return false;
    }
  };

  // Scan ρ₁·Ξ(γ₀) over [1e-6, 1e6].
  constexpr int kGrid = 4001;
  const double log_lo = std::log(1e-6), log_hi = std::log(1e6);
  auto grid = [&](int i) { return std::exp(log_lo + (log_hi - log_lo) * i / (kGrid - 1)) / xi0; };
  int best_start = -1, best_len = 0, start = -1;
  for (int i = 0; i <= kGrid; ++i) {
    const bool inside = i < kGrid && ok(grid(i));
    if (inside && start < 0) start = i;
    if (!inside && start >= 0) {
      if (i - start > best_len) {
        best_len = i - start;
        best_start = start;
      }
      start = -1;
    }
  }
  if (best_len == 0) {
    out.diagnostic = "no ρ₁ satisfies ã₁ < ((b̃₁−β̃₁²)√r − β̃₁)/((1−β̃₁²)√r + √2β̃₁)";
    return out;
  }

  // Bisect in log space between a failing and a passing point.
  auto refine = [&](double fail, double pass) {
    for (int it = 0; it < 200 && std::abs(std::log(pass / fail)) > 1e-13; ++it) {
      const double mid = std::sqrt(fail * pass);
      (ok(mid) ? pass : fail) = mid;
    }
    return std::sqrt(fail * pass);
  };
  const int last = best_start + best_len - 1;
  out.empty = false;
  out.lo = best_start == 0 ? grid(0) : refine(grid(best_start - 1), grid(best_start));
  out.hi = last == kGrid - 1 ? grid(kGrid - 1) : refine(grid(last + 1), grid(last));
  return out;
}

int stage_count_bound(double floor_ratio, double varrho) {
  if (!(floor_ratio > 0.0 && floor_ratio <= 1.0)) throw InvalidInput("stage_count_bound: ratio must lie in (0,1]");
  if (!(varrho >= 0.0 && varrho < 1.0)) throw InvalidInput("stage_count_bound: ϱ must lie in [0,1)");
  if (varrho == 0.0 || floor_ratio == 1.0) return 1;
  const double k = std::log(floor_ratio) / std::log(varrho) + 1.0;
  return std::max(1, static_cast<int>(std::ceil(k - 1e-12)));
}

GeometricBound geometric_bound(const RECParams& p, const PhiSpec& phi, const BoundSeq& seq, double err1, int K) {
  p.validate();
  phi.validate();
  if (seq.a_tilde.empty() || seq.gamma_tilde.size() < 2) throw InvalidInput("geometric_bound: empty bound sequence");
  if (K < 1) throw InvalidInput("geometric_bound: K must be ≥ 1");
  if (!(err1 >= 0.0)) throw InvalidInput("geometric_bound: first-stage error must be ≥ 0");
  const double a1 = seq.a_tilde[0], b1 = seq.b_tilde[0], beta1 = seq.beta_tilde[0];
  const double r = p.r, s = p.s;
  const double one_minus_b2 = 1.0 - beta1 * beta1;

  GeometricBound g;
  g.alpha = (1.0 + std::sqrt(2.0) * a1) / ((1.0 - a1) * one_minus_b2 * std::sqrt(r + 4.0 * s));
  const double xi0 = xi(p, kGamma0);
  const double sr = p.sigma_r();
  if (!(sr > std::max(2.0, std::sqrt(2.0) + g.alpha) * xi0)) {
    throw HypothesisError("σ_r(X̄) > max(2, √2 + α)Ξ(γ₀)");
  }
  g.varrho = g.alpha * xi0 / (sr - std::sqrt(2.0) * xi0);

  const double gamma1 = seq.gamma_tilde[1];
  const double floor = xi(p, 0.0) / (1.0 - p.c * gamma1) *
                       (1.0 + (1.0 - b1) * std::sqrt(r) / (2.0 * (1.0 - a1) * one_minus_b2 * std::sqrt(s)));
  for (int k = 1; k <= K; ++k) g.rhs.push_back(floor + std::pow(g.varrho, k - 1) * err1);

  g.k_bar = stage_count_bound(xi(p, 0.0) / xi0, g.varrho);
  if (g.varrho == 0.0 || err1 <= xi(p, 0.0)) {
    g.k_bar_observed = 1;
  } else {
    const double k = (std::log(xi(p, 0.0)) - std::log(err1)) / std::log(g.varrho) + 1.0;
    g.k_bar_observed = std::max(1, static_cast<int>(std::ceil(k - 1e-12)));
  }
  return g;
}

namespace {

Matrix orthonormal_columns(const Matrix& M) {
  Eigen::HouseholderQR<Matrix> qr(M);
  return qr.householderQ() * Matrix::Identity(M.rows(), M.cols());
}

// Extreme eigenpair of HᵀH for the stacked rows H; `largest` selects the end.
double extreme_pair(const Matrix& H, bool largest, Vector& vec) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(H.transpose() * H);
  const Index idx = largest ? eig.eigenvalues().size() - 1 : 0;
  vec = eig.eigenvectors().col(idx);
  return std::max(0.0, eig.eigenvalues()(idx));
}

double alternate(const std::vector<Matrix>& comps, Index n1, Index n2, int k, bool largest, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix start(n2, k);
  for (Index i = 0; i < start.size(); ++i) start.data()[i] = normal(rng);
  Matrix R = orthonormal_columns(start);
  const Index m = static_cast<Index>(comps.size());
  Matrix H_left(m, n1 * k), H_right(m, n2 * k);
  Vector v;
  double value = largest ? 0.0 : std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    for (Index i = 0; i < m; ++i) H_left.row(i) = (comps[static_cast<std::size_t>(i)] * R).reshaped().transpose();
    extreme_pair(H_left, largest, v);
    const Matrix QL = orthonormal_columns(v.reshaped(n1, k));
    for (Index i = 0; i < m; ++i) {
      H_right.row(i) = (comps[static_cast<std::size_t>(i)].transpose() * QL).reshaped().transpose();
    }
    const double next = extreme_pair(H_right, largest, v);
    R = orthonormal_columns(v.reshaped(n2, k));
    const bool settled = std::abs(next - value) <= 1e-13 * std::max(1.0, std::abs(next));
    value = next;
    if (settled) break;
  }
  return value;
}

}  // namespace

RestrictedEigs estimate_restricted_eigs(const SamplingOperator& op, int k, int trials, std::uint64_t seed) {
  const Index n1 = op.rows(), n2 = op.cols();
  if (k < 1 || k > std::min(n1, n2)) throw InvalidInput("estimate_restricted_eigs: k out of range");
  if (trials < 1) throw InvalidInput("estimate_restricted_eigs: trials must be ≥ 1");
  std::vector<Matrix> comps;
  comps.reserve(static_cast<std::size_t>(op.size()));
  for (Index i = 0; i < op.size(); ++i) comps.push_back(op.component(i));

  std::mt19937_64 rng(seed);
  RestrictedEigs out;
  out.theta_minus = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    out.theta_plus = std::max(out.theta_plus, alternate(comps, n1, n2, k, true, rng));
    out.theta_minus = std::min(out.theta_minus, alternate(comps, n1, n2, k, false, rng));
  }
  return out;
}

double pi_upper_bound(double theta_plus_l, double theta_minus_kl, int l) {
  if (l < 1) throw InvalidInput("pi_upper_bound: l must be ≥ 1");
  if (!(theta_minus_kl > 0.0) || !(theta_plus_l >= theta_minus_kl)) {
    throw InvalidInput("pi_upper_bound: need θ₊(l) ≥ θ₋(k+l) > 0");
  }
  return 0.5 * std::sqrt(static_cast<double>(l)) * std::sqrt(theta_plus_l / theta_minus_kl - 1.0);
}

AssumptionCheck assumption_check(double theta_plus_s, double theta_minus_2r2s, int r, int s, double c) {
  if (!(theta_plus_s > 0.0) || !(theta_minus_2r2s > 0.0) || r < 1 || s < 1 || !(c >= 0.0)) {
    throw InvalidInput("assumption_check: inputs must be positive");
  }
  const double rhs = 1.0 + 2.0 * c * c * s / r;
  const double lhs = theta_plus_s / theta_minus_2r2s;
  return {lhs <= rhs, rhs - lhs};
}

}  // namespace mscr
