#include "doctest.h"
#include "random.hpp"

#include "mscr/experiments.hpp"
#include "mscr/matrix_io.hpp"
#include "mscr/multistage_driver.hpp"

#include <cmath>
#include <filesystem>

using namespace mscr;
using mscr::testing::gaussian;

namespace {

SensingInstance sensing40(std::uint64_t seed) {
  GeneratorSpec s;
  s.kind = GeneratorKind::kSensing;
  s.n1 = s.n2 = 40;
  s.r = 3;
  s.nu = 1.5;
  s.seed = seed;
  return gen_sensing(s);
}

MultistageConfig fixed_stages(int k) {
  MultistageConfig cfg;
  cfg.max_stages = k;
  cfg.stop = StopRule::kFixedStages;
  return cfg;
}

}  // namespace

TEST_CASE("numerical_rank examples") {
  CHECK(numerical_rank(Matrix(Matrix::Zero(4, 5))) == 0);
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 1.0;
  D(1, 1) = 1e-14;
  CHECK(numerical_rank(D) == 1);
  std::mt19937_64 rng(1);
  CHECK(numerical_rank(Matrix(gaussian(40, 3, rng) * gaussian(3, 40, rng))) == 3);
}

TEST_CASE("relative_error examples") {
  std::mt19937_64 rng(2);
  const Matrix X = gaussian(5, 6, rng);
  CHECK(relative_error(X, X) == 0.0);
  CHECK(relative_error(2.0 * X, X) == doctest::Approx(1.0));
  Matrix E = gaussian(5, 6, rng);
  E *= 0.1 * X.norm() / E.norm();
  CHECK(relative_error(X + E, X) == doctest::Approx(0.1));
  CHECK_THROWS_AS(relative_error(X, Matrix::Zero(5, 6)), InvalidInput);
  CHECK_THROWS_AS(relative_error(X, Matrix::Ones(4, 6)), InvalidInput);
}

TEST_CASE("config validation") {
  MultistageConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.mu = 0.9;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = MultistageConfig{};
  cfg.max_stages = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = MultistageConfig{};
  cfg.mu_schedule = {1.5, 1.0};
  CHECK(cfg.mu_at(2) == 1.5);
  CHECK(cfg.mu_at(3) == 1.0);
  CHECK(cfg.mu_at(9) == 1.0);
  cfg.mu_schedule = {1.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("one stage is the nuclear-norm relaxation") {
  const SensingInstance inst = sensing40(1);
  const MultistageResult res = run_multistage(inst.problem, fixed_stages(1), inst.Xbar);
  REQUIRE(res.stages.size() == 1);
  const SolveResult direct = solve_sensing_stage(inst.problem, Matrix::Zero(40, 40), SolveOptions{});
  CHECK(res.X == direct.X);
  CHECK(res.stages[0].relerr.has_value());
  CHECK(*res.stages[0].relerr == doctest::Approx(relative_error(direct.X, inst.Xbar)));
}

TEST_CASE("the first stage never depends on phi") {
  const SensingInstance inst = sensing40(2);
  MultistageConfig a = fixed_stages(1), b = fixed_stages(1);
  a.phi = PhiSpec::phi1();
  b.phi = PhiSpec::phi2(0.3, 0.05);
  CHECK(run_multistage(inst.problem, a).X == run_multistage(inst.problem, b).X);
}

TEST_CASE("a determined problem stops by rank stability at stage 3") {
  std::mt19937_64 rng(3);
  const Matrix Xbar = mscr::testing::low_rank(3, 4, 1, rng);
  SensingProblem P;
  P.op = SamplingOperator::explicit_matrices(3, 4, gaussian(16, 12, rng));
  P.b = P.op.apply(Xbar);
  P.fixed_values.resize(0);
  MultistageConfig cfg;
  cfg.stop = StopRule::kRankStability;
  const MultistageResult res = run_multistage(P, cfg, Xbar);
  CHECK(res.stop_reason == "rank_stability");
  REQUIRE(res.stages.size() == 3);
  CHECK(*res.stages[0].relerr <= 1e-5);
  for (const StageTrace& st : res.stages) CHECK(st.rank == 1);
}

TEST_CASE("sensing pipeline improves on the first stage") {
  const SensingInstance inst = sensing40(4);
  const MultistageResult res = run_multistage(inst.problem, fixed_stages(5), inst.Xbar);
  REQUIRE(res.stages.size() == 5);
  CHECK(res.stop_reason == "max_stages");
  std::vector<double> e;
  for (const StageTrace& st : res.stages) e.push_back(*st.relerr);
  CHECK(e[4] < e[0]);
  const double first_drop = e[0] - e[1];
  for (std::size_t k = 2; k < e.size(); ++k) CHECK(first_drop > e[k - 1] - e[k]);
}

TEST_CASE("trace invariants") {
  const SensingInstance inst = sensing40(5);
  MultistageConfig cfg = fixed_stages(5);
  cfg.keep_iterates = true;
  const MultistageResult res = run_multistage(inst.problem, cfg, inst.Xbar);
  int cumulative = 0;
  for (std::size_t k = 0; k < res.stages.size(); ++k) {
    const StageTrace& st = res.stages[k];
    CHECK(st.k == static_cast<int>(k) + 1);
    if (k > 0) CHECK(st.rho == doctest::Approx(1.25 * res.stages[k - 1].rho));
    cumulative += st.iterations;
    CHECK(st.cumulative_iterations == cumulative);
    REQUIRE(st.X.has_value());
    CHECK(st.rank == numerical_rank(*st.X));
    CHECK(st.stage_objective >= -1e-8);
    CHECK(st.complementarity >= -1e-8);
  }
  CHECK(res.stages.front().rho == doctest::Approx(10.0 / spectral_norm(*res.stages.front().X)));
  CHECK(res.stages.back().complementarity <= res.stages.front().complementarity + 1e-8);
  CHECK(*res.stages.back().X == res.X);
}

TEST_CASE("alternating descent at frozen rho") {
  const SensingInstance inst = sensing40(6);
  MultistageConfig cfg = fixed_stages(5);
  cfg.mu = 1.0;
  const MultistageResult res = run_multistage(inst.problem, cfg, inst.Xbar);
  for (std::size_t k = 1; k < res.stages.size(); ++k) {
    const StageTrace& prev = res.stages[k - 1];
    const StageTrace& st = res.stages[k];
    CHECK(st.rho == prev.rho);
    const double tol = st.rho * 1e-4 * (1.0 + prev.stage_objective);
    CHECK(st.penalty_before_w <= prev.penalty_after_w + tol);
    CHECK(st.penalty_after_w <= st.penalty_before_w + 1e-10 * (1.0 + std::abs(st.penalty_before_w)));
  }
}

TEST_CASE("fixed rho1 and explicit mu schedule") {
  const SensingInstance inst = sensing40(7);
  MultistageConfig cfg = fixed_stages(4);
  cfg.rho1 = Rho1Rule::fixed(0.5);
  cfg.mu_schedule = {2.0, 1.0};
  const MultistageResult res = run_multistage(inst.problem, cfg);
  REQUIRE(res.stages.size() == 4);
  CHECK(res.stages[0].rho == 0.5);
  CHECK(res.stages[1].rho == 1.0);
  CHECK(res.stages[2].rho == 1.0);
  CHECK(res.stages[3].rho == 1.0);
  CHECK_FALSE(res.stages[0].relerr.has_value());
}

TEST_CASE("iterates can be written to disk") {
  const SensingInstance inst = sensing40(8);
  MultistageConfig cfg = fixed_stages(2);
  const auto dir = std::filesystem::temp_directory_path() / "mscr_iterates_test";
  std::filesystem::remove_all(dir);
  cfg.iterate_dir = dir;
  const MultistageResult res = run_multistage(inst.problem, cfg);
  REQUIRE(res.stages[1].iterate_path.has_value());
  CHECK(read_matrix_binary(*res.stages[1].iterate_path) == res.X);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-convergence is recorded or aborts on request") {
  const SensingInstance inst = sensing40(9);
  MultistageConfig cfg = fixed_stages(3);
  cfg.solver.max_iters = 3;
  const MultistageResult soft = run_multistage(inst.problem, cfg);
  CHECK(soft.stages.size() == 3);
  CHECK_FALSE(soft.stages[0].converged);
  cfg.abort_on_nonconvergence = true;
  const MultistageResult hard = run_multistage(inst.problem, cfg);
  CHECK(hard.aborted);
  CHECK(hard.stop_reason == "nonconvergence");
  CHECK(hard.stages.size() == 1);
}

TEST_CASE("psd pipeline on a small correlation instance") {
  GeneratorSpec s;
  s.kind = GeneratorKind::kCorrelation;
  s.n1 = s.n2 = 40;
  s.r = 3;
  s.oversampling = dof_matched_oversampling(0.0192, 1000, 5, false);
  s.seed = 3;
  const CompletionInstance inst = gen_correlation(s);
  const MultistageResult res = run_multistage(inst.problem, MultistageConfig{}, inst.Xbar);
  REQUIRE(res.stages.size() >= 2);
  CHECK(*res.stages[1].relerr < *res.stages[0].relerr);
  for (const StageTrace& st : res.stages) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(res.X, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-6);
    CHECK(st.converged);
  }
  CHECK((res.W - res.W.transpose()).norm() <= 1e-12);
}
