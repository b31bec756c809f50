#include "doctest.h"
#include "random.hpp"

#include "mscr/theory_bounds.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace mscr;
using mscr::testing::gaussian;

namespace {

RECParams table_params(double c, double alpha) {
  RECParams p;
  p.r = 10;
  p.s = 5;
  p.c = c;
  p.sigma_r_bar = alpha * xi(p, kGamma0);
  return p;
}

const PhiSpec kPhi2 = PhiSpec::phi2(0.5, 1e-3);

// Best rank-1 Rayleigh quotient per sampled left factor u: the optimal right
// factor is an extreme eigenvector of Σ Aᵢᵀuuᵀ Aᵢ.
std::pair<double, double> sampled_rank1_extremes(const SamplingOperator& op, int samples, std::mt19937_64& rng) {
  std::vector<Matrix> comps;
  for (Index i = 0; i < op.size(); ++i) comps.push_back(op.component(i));
  double hi = 0.0, lo = std::numeric_limits<double>::infinity();
  for (int t = 0; t < samples; ++t) {
    Vector u = gaussian(op.rows(), rng);
    u.normalize();
    Matrix M = Matrix::Zero(op.cols(), op.cols());
    for (const Matrix& A : comps) {
      const Vector g = A.transpose() * u;
      M += g * g.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(M, Eigen::EigenvaluesOnly);
    hi = std::max(hi, eig.eigenvalues()(eig.eigenvalues().size() - 1));
    lo = std::min(lo, eig.eigenvalues()(0));
  }
  return {hi, lo};
}

}  // namespace

TEST_CASE("xi and gamma_cap at zero") {
  RECParams p;
  p.r = 3;
  p.s = 2;
  p.c = 0.4;
  p.delta = 0.7;
  p.theta_plus = 2.5;
  p.theta_minus = 0.8;
  CHECK(xi(p, 0.0) == doctest::Approx(2.0 * 0.7 * std::sqrt(2.5) / 0.8));
  CHECK(xi(p, 0.0) == doctest::Approx(p.xi_scale()));
  CHECK(gamma_cap(p, 0.0) == 0.0);
}

TEST_CASE("statistical floor ratios") {
  CHECK(xi_floor_ratio(10, 5, 0.0) == doctest::Approx(1.0 / std::sqrt(1.5)).epsilon(1e-12));
  CHECK(xi_floor_ratio(10, 5, 0.5) == doctest::Approx(0.528).epsilon(1e-3));
  RECParams p;
  p.r = 10;
  p.s = 5;
  p.c = 0.5;
  CHECK(xi(p, 0.0) / xi(p, kGamma0) == doctest::Approx(xi_floor_ratio(10, 5, 0.5)));
}

TEST_CASE("xi and gamma_cap domain") {
  RECParams p;
  p.c = 0.5;
  CHECK_THROWS_AS(xi(p, 2.0), DomainError);
  CHECK_THROWS_AS(gamma_cap(p, 2.5), DomainError);
  CHECK_THROWS_AS(xi(p, -0.1), DomainError);
  p.c = 0.0;
  CHECK_NOTHROW(xi(p, 100.0));
}

TEST_CASE("xi and gamma_cap strictly increasing") {
  for (double c : {0.0, 0.3, 0.9, 1.4}) {
    RECParams p;
    p.r = 10;
    p.s = 5;
    p.c = c;
    const double end = c > 0.0 ? 1.0 / c : 5.0;
    double px = xi(p, 0.0), pg = gamma_cap(p, 0.0);
    for (int i = 1; i < 200; ++i) {
      const double t = end * i / 200.0;
      const double x = xi(p, t), g = gamma_cap(p, t);
      CHECK(x > px);
      CHECK(g > pg);
      px = x;
      pg = g;
    }
  }
}

TEST_CASE("phi1 first step in the recommended range") {
  for (double alpha : {2.5, 4.5, 8.0}) {
    const RECParams p = table_params(0.5, alpha);
    const double x0 = xi(p, kGamma0);
    const double rho1 = 0.5 * (1.0 / ((alpha - 1.0) * x0) + 1.0 / x0);
    const BoundSeq seq = gamma_tilde_recursion(p, PhiSpec::phi1(), rho1, {}, 1);
    CHECK(seq.a_tilde[0] == 0.0);
    CHECK(seq.b_tilde[0] == 1.0);
    CHECK(seq.beta_tilde[0] >= 0.0);
    CHECK(seq.beta_tilde[0] < 0.6);
  }
}

TEST_CASE("recursion limit at vanishing error") {
  const RECParams p = table_params(0.5, 4.5);
  const double rho = 2.0 / xi(p, kGamma0);
  const RecursionStep st = recursion_step(p, kPhi2, rho, 1e-14);
  CHECK(st.beta == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(st.gamma == doctest::Approx(std::sqrt(p.r) * (1.0 - st.b) / (std::sqrt(2.0 * p.r) * (1.0 - st.a))).epsilon(1e-10));
}

TEST_CASE("table ratios") {
  SUBCASE("phi1 c = 0.5") {
    const Table1 t = table1_ratios(PhiSpec::phi1(), 10, 5, {0.5}, 4.5, table1_kappa(PhiSpec::phi1()), 4);
    const double want[] = {0.547, 0.537, 0.536, 0.536};
    for (int k = 0; k < 4; ++k) CHECK(t.ratios[k][0] == doctest::Approx(want[k]).epsilon(6e-4 / want[k]));
  }
  SUBCASE("phi1 c = 0") {
    const Table1 t = table1_ratios(PhiSpec::phi1(), 10, 5, {0.0}, 4.5, table1_kappa(PhiSpec::phi1()), 4);
    const double want[] = {0.819, 0.818, 0.818, 0.818};
    for (int k = 0; k < 4; ++k) CHECK(t.ratios[k][0] == doctest::Approx(want[k]).epsilon(6e-4 / want[k]));
    CHECK(t.floor[0] == doctest::Approx(0.8165).epsilon(1e-4));
  }
  SUBCASE("phi2 c = 0.9") {
    const Table1 t = table1_ratios(kPhi2, 10, 5, {0.9}, 4.5, table1_kappa(kPhi2), 4);
    const double want[] = {0.856, 0.689, 0.572, 0.516};
    for (int k = 0; k < 4; ++k) CHECK(t.ratios[k][0] == doctest::Approx(want[k]).epsilon(6e-4 / want[k]));
  }
  SUBCASE("phi2 c = 0.5 second stage") {
    const RECParams p = table_params(0.5, 4.5);
    const double rho1 = table1_kappa(kPhi2) * 4.5 / *p.sigma_r_bar;
    const BoundSeq seq = gamma_tilde_recursion(p, kPhi2, rho1, {}, 1);
    CHECK(seq.xi_values[1] / seq.xi_values[0] == doctest::Approx(0.934).epsilon(6e-4 / 0.934));
  }
}

TEST_CASE("table ratios cancel the common scale") {
  const std::vector<double> cs = {0.0, 0.3, 0.5, 0.9};
  const Table1 a = table1_ratios(kPhi2, 10, 5, cs, 4.5, table1_kappa(kPhi2), 4);
  const Table1 b = table1_ratios(kPhi2, 10, 5, cs, 4.5, table1_kappa(kPhi2), 4, 3.7, 11.0, 0.02);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t j = 0; j < cs.size(); ++j) CHECK(a.ratios[k][j] == doctest::Approx(b.ratios[k][j]).epsilon(1e-10));
  }
}

TEST_CASE("monotone order of the bound sequences") {
  for (const PhiSpec& phi : {PhiSpec::phi1(), kPhi2, PhiSpec::phi2(0.3, 1e-2)}) {
    for (double c : {0.0, 0.4, 0.8, 1.2}) {
      for (double alpha : {3.0, 4.5, 10.0}) {
        const RECParams p = table_params(c, alpha);
        const Rho1Interval iv = rho1_admissible(p, phi);
        if (iv.empty) continue;
        const double rho1 = 0.5 * (iv.lo + iv.hi);
        const BoundSeq seq = gamma_tilde_recursion(p, phi, rho1, {}, 6);
        CAPTURE(c);
        CAPTURE(alpha);
        CHECK(seq.gamma_tilde[0] == kGamma0);
        for (std::size_t k = 1; k < seq.a_tilde.size(); ++k) {
          CHECK(seq.a_tilde[k] <= seq.a_tilde[k - 1] + 1e-15);
          CHECK(seq.b_tilde[k] >= seq.b_tilde[k - 1] - 1e-15);
          CHECK(seq.beta_tilde[k] < seq.beta_tilde[k - 1]);
        }
        for (std::size_t k = 1; k < seq.gamma_tilde.size(); ++k) CHECK(seq.gamma_tilde[k] < seq.gamma_tilde[k - 1]);
      }
    }
  }
}

TEST_CASE("recursion hypothesis errors") {
  RECParams p = table_params(0.5, 1.9);
  CHECK_THROWS_AS(gamma_tilde_recursion(p, kPhi2, 1.0, {}, 2), HypothesisError);
  p = table_params(0.5, 4.5);
  CHECK_THROWS_AS(gamma_tilde_recursion(p, kPhi2, 1e-6, {}, 2), HypothesisError);
  const double rho1 = table1_kappa(kPhi2) * 4.5 / *p.sigma_r_bar;
  CHECK_THROWS_AS(gamma_tilde_recursion(p, kPhi2, rho1, {0.5}, 3), HypothesisError);
  CHECK_THROWS_AS(gamma_tilde_recursion(p, kPhi2, rho1, {100.0}, 3), HypothesisError);
  RECParams no_sigma;
  CHECK_THROWS_AS(gamma_tilde_recursion(no_sigma, kPhi2, 1.0, {}, 2), InvalidInput);
}

TEST_CASE("admissible rho1 intervals") {
  SUBCASE("phi1 contains the recommended range") {
    const RECParams p = table_params(0.5, 4.5);
    const double x0 = xi(p, kGamma0);
    const Rho1Interval iv = rho1_admissible(p, PhiSpec::phi1());
    REQUIRE_FALSE(iv.empty);
    CHECK(iv.lo <= 1.0 / (3.5 * x0) * (1.0 + 1e-9));
    CHECK(iv.hi >= 1.0 / x0 * (1.0 - 1e-9));
  }
  SUBCASE("empty below the hypothesis threshold") {
    const RECParams p = table_params(0.5, 2.0);
    const Rho1Interval iv = rho1_admissible(p, kPhi2);
    CHECK(iv.empty);
    CHECK_FALSE(iv.diagnostic.empty());
    CHECK_FALSE(iv.contains(1.0));
  }
  SUBCASE("phi2 contains the tabulated midpoint") {
    const RECParams p = table_params(0.5, 4.5);
    const Rho1Interval iv = rho1_admissible(p, kPhi2);
    const double mid = 0.5 * (0.24 + 4.42) * 4.5 / *p.sigma_r_bar;
    CHECK(iv.contains(mid));
  }
  SUBCASE("interval endpoints satisfy the condition on the inside") {
    const RECParams p = table_params(0.3, 4.5);
    const Rho1Interval iv = rho1_admissible(p, kPhi2);
    REQUIRE_FALSE(iv.empty);
    const double x0 = xi(p, kGamma0);
    for (double rho : {iv.lo * 1.001, 0.5 * (iv.lo + iv.hi), iv.hi * 0.999}) {
      const RecursionStep st = recursion_step(p, kPhi2, rho, x0);
      CHECK(st.a < rho1_condition_rhs(st, p.r));
    }
    for (double rho : {iv.lo * 0.99, iv.hi * 1.01}) {
      const RecursionStep st = recursion_step(p, kPhi2, rho, x0);
      CHECK_FALSE(st.a < rho1_condition_rhs(st, p.r));
    }
  }
}

TEST_CASE("stage count bounds") {
  CHECK(stage_count_bound(xi_floor_ratio(5, 5, 0.3), 0.7) <= 2);
  CHECK(stage_count_bound(xi_floor_ratio(5, 5, 0.7), 0.7) <= 4);
  CHECK(stage_count_bound(xi_floor_ratio(10, 10, 0.3), 0.7) <= 2);
  CHECK(stage_count_bound(xi_floor_ratio(10, 10, 0.7), 0.7) <= 4);
}

TEST_CASE("phi1 contraction factor") {
  for (double c : {0.0, 0.5, 1.0}) {
    const RECParams p = table_params(c, 2.4);
    const double x0 = xi(p, kGamma0);
    const double rho1 = 0.5 * (1.0 / (1.4 * x0) + 1.0 / x0);
    const BoundSeq seq = gamma_tilde_recursion(p, PhiSpec::phi1(), rho1, {}, 3);
    const GeometricBound gb = geometric_bound(p, PhiSpec::phi1(), seq, 0.9 * x0, 3);
    CHECK(gb.varrho <= 0.76);
    CHECK(gb.varrho > 0.0);
    REQUIRE(gb.rhs.size() == 3);
    for (std::size_t k = 1; k < gb.rhs.size(); ++k) CHECK(gb.rhs[k] <= gb.rhs[k - 1]);
    CHECK(gb.k_bar >= 1);
  }
  const RECParams p = table_params(0.5, 2.4);
  const double x0 = xi(p, kGamma0);
  const BoundSeq seq = gamma_tilde_recursion(p, PhiSpec::phi1(), 0.85 / x0, {}, 2);
  RECParams low = p;
  low.sigma_r_bar = 1.95 * x0;
  CHECK_THROWS_AS(geometric_bound(low, PhiSpec::phi1(), seq, x0, 2), HypothesisError);
}

TEST_CASE("restricted eigenvalues of trivial operators") {
  SUBCASE("identity vectorization") {
    const SamplingOperator op = SamplingOperator::explicit_matrices(3, 4, Matrix::Identity(12, 12));
    for (int k = 1; k <= 3; ++k) {
      const RestrictedEigs re = estimate_restricted_eigs(op, k, 3, 7);
      CHECK(re.theta_plus == doctest::Approx(1.0));
      CHECK(re.theta_minus == doctest::Approx(1.0));
      CHECK(re.one_sided);
    }
  }
  SUBCASE("single corner measurement") {
    Matrix S = Matrix::Zero(1, 9);
    S(0, 0) = 1.0;
    const RestrictedEigs re = estimate_restricted_eigs(SamplingOperator::explicit_matrices(3, 3, S), 1, 5, 1);
    CHECK(re.theta_plus == doctest::Approx(1.0));
    CHECK(re.theta_minus == doctest::Approx(0.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(estimate_restricted_eigs(SamplingOperator::explicit_matrices(3, 3, Matrix::Identity(9, 9)), 4, 1, 0),
                  InvalidInput);
}

TEST_CASE("restricted eigenvalue estimate against dense sampling") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 rng(seed);
    const SamplingOperator op = SamplingOperator::explicit_matrices(6, 6, gaussian(20, 36, rng));
    const RestrictedEigs re = estimate_restricted_eigs(op, 1, 20, seed);
    const auto [hi, lo] = sampled_rank1_extremes(op, 100000, rng);
    CAPTURE(seed);
    CHECK(std::abs(re.theta_plus - hi) <= 0.02 * hi);
    CHECK(re.theta_minus <= lo * 1.02);
    CHECK(re.theta_minus >= 0.0);
    // The full-rank operator norm caps every restricted value.
    const double cap = std::pow(Eigen::JacobiSVD<Matrix>(op.stacked()).singularValues()(0), 2);
    CHECK(re.theta_plus <= cap * (1.0 + 1e-12));
  }
}

TEST_CASE("pi upper bound") {
  CHECK(pi_upper_bound(2.0, 2.0, 3) == 0.0);
  CHECK(pi_upper_bound(2.0, 1.0, 4) == doctest::Approx(1.0));
  CHECK_THROWS_AS(pi_upper_bound(1.0, 2.0, 3), InvalidInput);
  CHECK_THROWS_AS(pi_upper_bound(1.0, 0.0, 3), InvalidInput);
}

TEST_CASE("assumption check") {
  for (double c : {0.0, 0.5, 1.3}) CHECK(assumption_check(1.0, 1.0, 4, 2, c).holds);
  const double d = std::sqrt(2.0) - 1.0 - 1e-6;
  const AssumptionCheck rip = assumption_check(1.0 + d, 1.0 - d, 5, 5, 0.843);
  CHECK(rip.holds);
  CHECK(rip.margin > 0.0);
  const int r = 6, s = 3;
  const double c = 0.7;
  const double edge = 1.0 + 2.0 * c * c * s / r;
  CHECK_FALSE(assumption_check(edge + 1e-9, 1.0, r, s, c).holds);
  CHECK(assumption_check(edge, 1.0, r, s, c).holds);
}

TEST_CASE("pi bound chain under the assumption equality case") {
  const int r = 10, s = 5;
  const double c = 0.5;
  const double ratio = 1.0 + 2.0 * c * c * s / r;
  const double pi = pi_upper_bound(ratio, 1.0, s);
  CHECK(std::isfinite(pi));
  CHECK(pi > 0.0);
  for (double gamma : {0.1, 0.5, kGamma0}) {
    CHECK(pi * gamma / s <= c * gamma / std::sqrt(2.0 * r) * (1.0 + 1e-12));
  }
}
