#include "mscr/penalty_phi.hpp"

#include <algorithm>
#include <cmath>

namespace mscr {

namespace {

// Maximizer of s·t − φ₂(t) over [0,1]; φ₂'(t) = (1−t+ε)^{1/(q−1)} − 1.
double phi2_argmax(const PhiSpec& spec, double s) {
  const double s_lo = std::pow(1.0 + spec.eps, 1.0 / (spec.q - 1.0)) - 1.0;
  const double s_hi = std::pow(spec.eps, 1.0 / (spec.q - 1.0)) - 1.0;
  if (s <= s_lo) return 0.0;
  if (s >= s_hi) return 1.0;
  return std::clamp(1.0 + spec.eps - std::pow(s + 1.0, spec.q - 1.0), 0.0, 1.0);
}

double tie_tolerance(const Vector& sigma) {
  return sigma.size() == 0 ? 0.0 : 1e-12 * sigma(0);
}

}  // namespace

PhiSpec PhiSpec::phi2(double q, double eps) {
  PhiSpec p{Variant::kPhi2, q, eps};
  p.validate();
  return p;
}

void PhiSpec::validate() const {
  if (variant == Variant::kPhi2) {
    if (!(q > 0.0 && q < 1.0)) throw InvalidInput("PhiSpec: q must lie in (0,1)");
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidInput("PhiSpec: eps must lie in (0,1)");
  }
}

double PhiSpec::t_star() const { return variant == Variant::kPhi1 ? 0.0 : eps; }

double PhiSpec::phi_at_1() const { return phi_value(*this, 1.0); }

double PhiSpec::left_derivative_at_1() const {
  if (variant == Variant::kPhi1) return 1.0;
  return std::pow(eps, 1.0 / (q - 1.0)) - 1.0;
}

double phi_value(const PhiSpec& spec, double t) {
  if (spec.variant == PhiSpec::Variant::kPhi1) return t;
  if (t >= 1.0 + spec.eps) return kInfinity;
  const double c = (spec.q - 1.0) / spec.q;
  return -t - c * std::pow(1.0 - t + spec.eps, spec.q / (spec.q - 1.0)) + spec.eps + c;
}

double psi_conj_value(const PhiSpec& spec, double s) {
  if (spec.variant == PhiSpec::Variant::kPhi1) return s > 1.0 ? s - 1.0 : 0.0;
  const double t = phi2_argmax(spec, s);
  return s * t - phi_value(spec, t);
}

SubgradInterval psi_conj_subgrad(const PhiSpec& spec, double s) {
  if (spec.variant == PhiSpec::Variant::kPhi1) {
    if (s > 1.0) return {1.0, 1.0};
    if (s < 1.0) return {0.0, 0.0};
    return {0.0, 1.0};
  }
  const double t = phi2_argmax(spec, s);
  return {t, t};
}

double psi_conj_select(const PhiSpec& spec, double s, BoundaryRule rule) {
  const SubgradInterval g = psi_conj_subgrad(spec, s);
  return rule == BoundaryRule::kUpper ? g.hi : g.lo;
}

Vector stage_weights(const PhiSpec& spec, const Vector& sigma, double rho, BoundaryRule rule) {
  if (!(rho > 0.0)) throw InvalidInput("stage_weights: rho must be positive");
  const Index n = sigma.size();
  Vector w(n);
  const double tol = tie_tolerance(sigma);
  Index start = 0;
  while (start < n) {
    Index end = start + 1;
    while (end < n && std::abs(sigma(start) - sigma(end)) <= tol) ++end;
    const double shared = sigma.segment(start, end - start).mean();
    const double value = psi_conj_select(spec, rho * shared, rule);
    w.segment(start, end - start).setConstant(value);
    start = end;
  }
  return w;
}

Matrix w_update(const PhiSpec& spec, const Matrix& Xk, double rho_k, BoundaryRule rule) {
  const SVDFactor f = svd(Xk);
  const Vector w = stage_weights(spec, f.singular_values, rho_k, rule);
  return f.U * w.asDiagonal() * f.Vt;
}

Matrix w_update_psd(const PhiSpec& spec, const Matrix& Xk, double rho_k, BoundaryRule rule) {
  require_finite(Xk, "w_update_psd");
  if (!is_symmetric(Xk, 1e-8)) throw InvalidInput("w_update_psd: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(Xk));
  // Eigen sorts ascending; reverse to nonincreasing order.
  Vector lam = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Matrix Q = eig.eigenvectors().rowwise().reverse();
  const Vector w = stage_weights(spec, lam, rho_k, rule);
  return symmetrize(Q * w.asDiagonal() * Q.transpose());
}

double variational_rank_value(const PhiSpec& spec, const Matrix& X) {
  return spec.phi_at_1() * numerical_rank(singular_values(X));
}

Matrix variational_rank_witness(const PhiSpec& spec, const Matrix& X) {
  const SVDFactor f = svd(X);
  const int rank = numerical_rank(f.singular_values);
  Vector w = Vector::Constant(f.singular_values.size(), spec.t_star());
  w.head(rank).setOnes();
  return f.U * w.asDiagonal() * f.Vt;
}

double penalty_objective(const PhiSpec& spec, const Matrix& X, const Matrix& W, double rho) {
  if (X.rows() != W.rows() || X.cols() != W.cols()) throw InvalidInput("penalty_objective: shape mismatch");
  const Vector sw = singular_values(W);
  if (sw.size() > 0 && sw(0) > 1.0 + 1e-10) throw InvalidInput("penalty_objective: ‖W‖ exceeds 1");
  double total = 0.0;
  for (Index i = 0; i < sw.size(); ++i) total += phi_value(spec, sw(i));
  return total + rho * (nuclear_norm(X) - X.cwiseProduct(W).sum());
}

}  // namespace mscr
