#include "doctest.h"
#include "random.hpp"

#include "mscr/spectral_core.hpp"

#include <cmath>
#include <limits>

using namespace mscr;
using mscr::testing::gaussian;
using mscr::testing::inner;

namespace {

Matrix diag2x4(double a, double b) {
  Matrix X = Matrix::Zero(2, 4);
  X(0, 0) = a;
  X(1, 1) = b;
  return X;
}

}  // namespace

TEST_CASE("svd of simple matrices") {
  CHECK(singular_values(Matrix::Identity(3, 3)).isApprox(Vector::Ones(3)));
  const Vector s = singular_values(diag2x4(1.0, 3.0));
  REQUIRE(s.size() == 2);
  CHECK(s(0) == doctest::Approx(3.0));
  CHECK(s(1) == doctest::Approx(1.0));
}

TEST_CASE("svd factor invariants on seeded matrices") {
  std::mt19937_64 rng(11);
  for (auto [r, c] : {std::pair<Index, Index>{5, 7}, {7, 5}, {1, 4}, {6, 6}}) {
    const Matrix X = gaussian(r, c, rng);
    const SVDFactor f = svd(X);
    const Index k = std::min(r, c);
    CHECK((f.U.transpose() * f.U - Matrix::Identity(k, k)).norm() <= 1e-10);
    CHECK((f.Vt * f.Vt.transpose() - Matrix::Identity(k, k)).norm() <= 1e-10);
    for (Index i = 0; i + 1 < k; ++i) CHECK(f.singular_values(i) >= f.singular_values(i + 1));
    CHECK(f.singular_values.minCoeff() >= 0.0);
    CHECK((f.reconstruct() - X).norm() <= 1e-8 * (1.0 + X.norm()));
  }
}

TEST_CASE("svd is deterministic and rejects non-finite input") {
  std::mt19937_64 rng(3);
  const Matrix X = gaussian(6, 9, rng);
  const SVDFactor a = svd(X), b = svd(X);
  CHECK(a.U == b.U);
  CHECK(a.singular_values == b.singular_values);
  CHECK(a.Vt == b.Vt);
  Matrix bad = X;
  bad(2, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd(bad), InvalidInput);
  bad(2, 3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(nuclear_norm(bad), InvalidInput);
}

TEST_CASE("norms and numerical rank") {
  const Matrix X = diag2x4(3.0, 1.0);
  CHECK(nuclear_norm(X) == doctest::Approx(4.0));
  CHECK(spectral_norm(X) == doctest::Approx(3.0));
  CHECK(numerical_rank(Vector(Vector::Zero(3))) == 0);
  Vector s(3);
  s << 1.0, 2e-10, 5e-11;
  CHECK(numerical_rank(s) == 2);
}

TEST_CASE("prox_nuclear examples") {
  Matrix X = Matrix::Zero(2, 2);
  X(0, 0) = 3.0;
  X(1, 1) = 1.0;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 2.0;
  CHECK((prox_nuclear(X, 1.0) - expected).norm() <= 1e-12);
  std::mt19937_64 rng(5);
  const Matrix Y = gaussian(4, 6, rng);
  CHECK((prox_nuclear(Y, 0.0) - Y).norm() <= 1e-12 * Y.norm());
  CHECK_THROWS_AS(prox_nuclear(Y, -1.0), InvalidInput);
}

TEST_CASE("prox_nuclear beats random perturbations of its output") {
  std::mt19937_64 rng(17);
  const Matrix X = gaussian(4, 6, rng);
  const double tau = 0.5;
  auto objective = [&](const Matrix& Z) { return tau * nuclear_norm(Z) + 0.5 * (Z - X).squaredNorm(); };
  const Matrix Z = prox_nuclear(X, tau);
  const double best = objective(Z);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const double scale = std::pow(10.0, mscr::testing::uniform(-4.0, 0.0, rng));
    if (objective(Z + scale * gaussian(4, 6, rng)) < best - 1e-12) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("prox_nuclear optimality identity") {
  std::mt19937_64 rng(19);
  for (int t = 0; t < 20; ++t) {
    const Matrix X = gaussian(5, 8, rng);
    const double tau = mscr::testing::uniform(0.1, 2.0, rng);
    const Matrix Z = prox_nuclear(X, tau);
    const double lhs = inner(X - Z, Z);
    const double rhs = tau * nuclear_norm(Z);
    CHECK(std::abs(lhs - rhs) <= 1e-8 * (1.0 + std::abs(rhs)));
    CHECK(spectral_norm(X - Z) <= tau * (1.0 + 1e-10));
  }
}

TEST_CASE("project_spectral_ball examples and idempotence") {
  Matrix X = Matrix::Zero(2, 2);
  X(0, 0) = 5.0;
  X(1, 1) = 1.0;
  Matrix expected = X;
  expected(0, 0) = 2.0;
  CHECK((project_spectral_ball(X, 2.0) - expected).norm() <= 1e-12);
  CHECK((project_spectral_ball(X, 6.0) - X).norm() <= 1e-12);
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    const Matrix Y = gaussian(4, 5, rng);
    const Matrix P = project_spectral_ball(Y, 1.0);
    CHECK(spectral_norm(P) <= 1.0 + 1e-12);
    CHECK((project_spectral_ball(P, 1.0) - P).norm() <= 1e-10);
  }
  CHECK_THROWS_AS(project_spectral_ball(X, 0.0), InvalidInput);
}

TEST_CASE("project_psd examples and cone identities") {
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 2.0;
  D(1, 1) = -1.0;
  Matrix expected = D;
  expected(1, 1) = 0.0;
  CHECK((project_psd(D) - expected).norm() <= 1e-12);
  std::mt19937_64 rng(29);
  const Matrix G = gaussian(5, 5, rng);
  const Matrix psd = G * G.transpose();
  CHECK((project_psd(psd) - psd).norm() <= 1e-10 * psd.norm());
  for (int t = 0; t < 20; ++t) {
    const Matrix S = mscr::testing::random_symmetric(6, rng);
    const Matrix P = project_psd(S);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(P);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    CHECK(std::abs(inner(S - P, P)) <= 1e-8);
    CHECK((project_psd(P) - P).norm() <= 1e-10);
  }
  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(project_psd(asym), InvalidInput);
}

TEST_CASE("project_l2_ball examples") {
  Vector v(2);
  v << 3.0, 4.0;
  const Vector p = project_l2_ball(v, Vector::Zero(2), 1.0);
  CHECK(p(0) == doctest::Approx(0.6));
  CHECK(p(1) == doctest::Approx(0.8));
  Vector inside(2);
  inside << 0.1, -0.2;
  CHECK(project_l2_ball(inside, Vector::Zero(2), 1.0) == inside);
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    const Vector w = 3.0 * gaussian(7, rng);
    const Vector c = gaussian(7, rng);
    const double radius = mscr::testing::uniform(0.0, 2.0, rng);
    CHECK((project_l2_ball(w, c, radius) - c).norm() <= radius + 1e-12);
  }
  CHECK_THROWS_AS(project_l2_ball(v, Vector::Zero(3), 1.0), InvalidInput);
}

TEST_CASE("projections are nonexpansive") {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 30; ++t) {
    const Matrix A = gaussian(4, 5, rng), B = gaussian(4, 5, rng);
    CHECK((project_spectral_ball(A, 1.0) - project_spectral_ball(B, 1.0)).norm() <= (A - B).norm() + 1e-12);
    const Matrix S = mscr::testing::random_symmetric(5, rng), T = mscr::testing::random_symmetric(5, rng);
    CHECK((project_psd(S) - project_psd(T)).norm() <= (S - T).norm() + 1e-12);
    const Vector v = gaussian(6, rng), w = gaussian(6, rng);
    CHECK((project_l2_ball(v, Vector::Zero(6), 0.7) - project_l2_ball(w, Vector::Zero(6), 0.7)).norm() <=
          (v - w).norm() + 1e-12);
  }
}

TEST_CASE("sampling operator examples") {
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 1.0;
  D(1, 1) = 2.0;
  const auto mask = SamplingOperator::entry_mask(2, 2, {{0, 0}});
  CHECK(mask.apply(D)(0) == 1.0);
  Matrix E11 = Matrix::Zero(2, 3);
  E11(0, 0) = 1.0;
  const auto expl = SamplingOperator::explicit_matrices(std::vector<Matrix>{E11});
  Matrix X(2, 3);
  X << 4, 5, 6, 7, 8, 9;
  CHECK(expl.apply(X)(0) == 4.0);
  CHECK((expl.component(0) - E11).norm() == 0.0);
  CHECK_THROWS_AS((void)expl.apply(Matrix::Zero(3, 3)), InvalidInput);
  CHECK_THROWS_AS(SamplingOperator::entry_mask(2, 2, {{0, 0}, {0, 0}}), InvalidInput);
  CHECK_THROWS_AS(SamplingOperator::entry_mask(2, 2, {{2, 0}}), InvalidInput);
}

TEST_CASE("adjoint identity on seeded operators") {
  std::mt19937_64 rng(41);
  const auto dense = SamplingOperator::explicit_matrices(4, 6, gaussian(15, 24, rng));
  const auto mask = SamplingOperator::entry_mask(4, 6, {{0, 1}, {3, 5}, {2, 2}, {1, 0}});
  for (const SamplingOperator* op : {&dense, &mask}) {
    for (int t = 0; t < 100; ++t) {
      const Matrix X = gaussian(4, 6, rng);
      const Vector y = gaussian(op->size(), rng);
      const double lhs = op->apply(X).dot(y);
      const double rhs = inner(X, op->adjoint(y));
      CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
    }
  }
}

TEST_CASE("tangent space projections") {
  std::mt19937_64 rng(43);
  const Matrix M = mscr::testing::low_rank(5, 7, 2, rng);
  const TangentSpace T = TangentSpace::at(M, 2);
  CHECK((T.U1.transpose() * T.U1 - Matrix::Identity(2, 2)).norm() <= 1e-10);
  CHECK((T.V1.transpose() * T.V1 - Matrix::Identity(2, 2)).norm() <= 1e-10);

  const Matrix inside = T.U1 * gaussian(2, 2, rng) * T.V1.transpose();
  CHECK((tangent_project(T, inside) - inside).norm() <= 1e-10);

  const Matrix Pu = Matrix::Identity(5, 5) - T.U1 * T.U1.transpose();
  const Matrix Pv = Matrix::Identity(7, 7) - T.V1 * T.V1.transpose();
  const Matrix outside = Pu * gaussian(5, 7, rng) * Pv;
  CHECK(tangent_project(T, outside).norm() <= 1e-10);

  for (int t = 0; t < 20; ++t) {
    const Matrix Z = gaussian(5, 7, rng);
    const Matrix PT = tangent_project(T, Z);
    const Matrix PTc = tangent_project(T, Z, true);
    CHECK(std::abs(inner(PT, PTc)) <= 1e-10 * (1.0 + Z.squaredNorm()));
    CHECK((PT + PTc - Z).norm() <= 1e-12 * (1.0 + Z.norm()));
    CHECK((tangent_project(T, PT) - PT).norm() <= 1e-10);
    CHECK((tangent_project(T, PTc, true) - PTc).norm() <= 1e-10);
  }
}
