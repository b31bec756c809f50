#include "mscr/experiments.hpp"
#include "mscr/matrix_io.hpp"
#include "mscr/multistage_driver.hpp"
#include "mscr/serialization.hpp"
#include "mscr/theory_bounds.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using mscr::json;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kPartial = 2;

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

/// Pulls `key` out of an object, returning null when absent.
json take(json& j, const char* key) {
  if (!j.contains(key)) return nullptr;
  json v = j.at(key);
  j.erase(key);
  return v;
}

int cmd_gen(const fs::path& spec_path, const fs::path& out) {
  const mscr::GeneratorSpec spec = mscr::read_json_file(spec_path).get<mscr::GeneratorSpec>();
  json info = {{"spec", spec}, {"rng_scheme", mscr::kRngScheme}};
  if (spec.kind == mscr::GeneratorKind::kSensing) {
    const mscr::SensingInstance inst = mscr::gen_sensing(spec);
    mscr::write_problem_file(out, inst.problem, inst.Xbar);
    info["m"] = inst.problem.op.size();
  } else {
    const mscr::CompletionInstance inst = spec.kind == mscr::GeneratorKind::kCorrelation ? mscr::gen_correlation(spec)
                                                                                          : mscr::gen_covariance(spec);
    mscr::write_problem_file(out, inst.problem, inst.Xbar);
    info["m"] = inst.problem.op.size();
    info["eigr"] = inst.eigr;
  }
  info["problem"] = out.string();
  std::cout << info.dump(2) << '\n';
  return kOk;
}

std::string trace_csv(const mscr::MultistageResult& res) {
  std::ostringstream os;
  os << "stage,rho,relerr,rank,iters,cumulative_iters,converged,seconds\n";
  for (const mscr::StageTrace& st : res.stages) {
    os << st.k << ',' << num(st.rho) << ',' << (st.relerr ? num(*st.relerr) : "") << ',' << st.rank << ','
       << st.iterations << ',' << st.cumulative_iterations << ',' << (st.converged ? 1 : 0) << ',' << num(st.seconds)
       << '\n';
  }
  return os.str();
}

int cmd_solve(const fs::path& run_path, const fs::path& out_dir) {
  json run = mscr::read_json_file(run_path);
  if (!run.is_object()) throw mscr::InvalidInput("run config must be a JSON object");
  const json problem_ref = take(run, "problem");
  if (!problem_ref.is_string()) throw mscr::InvalidInput("run config: 'problem' must name a problem file");
  const json seed = take(run, "seed");
  const mscr::MultistageConfig cfg = run.get<mscr::MultistageConfig>();

  fs::path problem_path = problem_ref.get<std::string>();
  if (problem_path.is_relative()) problem_path = run_path.parent_path() / problem_path;
  const mscr::ProblemFile file = mscr::read_problem_file(problem_path);

  const mscr::MultistageResult res = std::visit(
      [&](const auto& P) { return mscr::run_multistage(P, cfg, file.ground_truth); }, file.problem);

  json trace = mscr::multistage_result_to_json(res);
  trace["config"] = cfg;
  trace["problem"] = problem_path.string();
  trace["seed"] = seed;
  mscr::write_json_file(out_dir / "trace.json", trace);
  write_text(out_dir / "trace.csv", trace_csv(res));
  mscr::write_matrix_binary(out_dir / "X_final.bin", res.X);
  std::cout << trace_csv(res);

  bool all_converged = true;
  for (const mscr::StageTrace& st : res.stages) all_converged = all_converged && st.converged;
  return all_converged && !res.aborted ? kOk : kPartial;
}

std::vector<mscr::GridPoint> grid_points(json grid) {
  std::vector<mscr::GridPoint> points;
  if (grid.contains("points")) {
    for (const json& p : grid.at("points")) {
      points.push_back({p.at("label").get<std::string>(), p.at("spec").get<mscr::GeneratorSpec>()});
    }
    return points;
  }
  json base = grid.at("base");
  if (!base.contains("seed")) base["seed"] = 0;
  const std::vector<std::uint64_t> seeds = grid.at("seeds").get<std::vector<std::uint64_t>>();
  if (grid.contains("nu")) {
    base.erase("m");
    base["nu"] = grid.at("nu").at(0);
    return mscr::nu_grid(base.get<mscr::GeneratorSpec>(), grid.at("nu").get<std::vector<double>>(), seeds);
  }
  for (std::uint64_t s : seeds) {
    json spec = base;
    spec["seed"] = s;
    points.push_back({"seed" + std::to_string(s), spec.get<mscr::GeneratorSpec>()});
  }
  return points;
}

int cmd_grid(const fs::path& grid_path, const fs::path& out_dir, int workers) {
  json grid = mscr::read_json_file(grid_path);
  if (!grid.is_object()) throw mscr::InvalidInput("grid config must be a JSON object");
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    const std::string& k = it.key();
    if (k != "base" && k != "seeds" && k != "nu" && k != "points" && k != "config" && k != "workers") {
      throw mscr::InvalidInput("grid config: unknown key '" + k + "'");
    }
  }
  const std::vector<mscr::GridPoint> points = grid_points(grid);
  const mscr::MultistageConfig cfg =
      grid.contains("config") ? grid.at("config").get<mscr::MultistageConfig>() : mscr::MultistageConfig{};
  if (grid.contains("workers") && workers == 0) workers = grid.at("workers").get<int>();
  const auto records = mscr::run_grid(points, cfg, out_dir, std::max(workers, 1));
  int failed = 0;
  for (const auto& rec : records) failed += rec.ok ? 0 : 1;
  std::cout << records.size() - failed << "/" << records.size() << " points ok; outputs in " << out_dir << '\n';
  return failed == 0 ? kOk : kPartial;
}

int cmd_bounds(const fs::path& cfg_path, const std::optional<fs::path>& out) {
  json j = mscr::read_json_file(cfg_path);
  const mscr::PhiSpec phi = j.contains("phi") ? j.at("phi").get<mscr::PhiSpec>() : mscr::PhiSpec::phi2();
  const int r = j.at("r").get<int>();
  const int s = j.value("s", r);
  const int K = j.value("K", 4);
  std::vector<double> cs;
  if (j.at("c").is_array()) {
    cs = j.at("c").get<std::vector<double>>();
  } else {
    cs.push_back(j.at("c").get<double>());
  }
  if (j.contains("alpha") == j.contains("sigma_r")) throw mscr::InvalidInput("bounds: give exactly one of alpha, sigma_r");
  std::vector<double> mu_schedule;
  if (j.contains("mu")) {
    if (j.at("mu").is_array()) {
      mu_schedule = j.at("mu").get<std::vector<double>>();
    } else {
      mu_schedule = {j.at("mu").get<double>()};
    }
  }

  std::vector<std::vector<std::string>> ratio_cells(static_cast<std::size_t>(K));
  std::vector<std::string> floor_row, lo_row, hi_row, kbar_row;
  json detail = json::array();
  bool partial = false;
  for (double c : cs) {
    mscr::RECParams p;
    p.r = r;
    p.s = s;
    p.c = c;
    p.delta = j.value("delta", 1.0);
    p.theta_plus = j.value("theta_plus", 1.0);
    p.theta_minus = j.value("theta_minus", 1.0);
    p.validate();
    const double xi0 = mscr::xi(p, mscr::kGamma0);
    const double sigma_r = j.contains("sigma_r") ? j.at("sigma_r").get<double>() : j.at("alpha").get<double>() * xi0;
    const double alpha = sigma_r / xi0;
    p.sigma_r_bar = sigma_r;
    // ρ₁ is absolute under "rho1", in units of α/σ_r under "rho1_kappa", and the interval midpoint otherwise.
    const double rho1 = j.contains("rho1") ? j.at("rho1").get<double>()
                                           : j.value("rho1_kappa", mscr::table1_kappa(phi)) * alpha / sigma_r;
    const mscr::Rho1Interval iv = mscr::rho1_admissible(p, phi);
    json d = {{"c", c}, {"alpha", alpha}, {"sigma_r", sigma_r}, {"rho1", rho1}, {"xi_gamma0", xi0}};
    d["rho1_interval"] = iv.empty ? json(nullptr) : json{iv.lo * sigma_r / alpha, iv.hi * sigma_r / alpha};
    floor_row.push_back(num(mscr::xi(p, 0.0) / xi0));
    lo_row.push_back(iv.empty ? "" : num(iv.lo * sigma_r / alpha));
    hi_row.push_back(iv.empty ? "" : num(iv.hi * sigma_r / alpha));
    if (j.contains("varrho")) {
      kbar_row.push_back(std::to_string(mscr::stage_count_bound(mscr::xi_floor_ratio(r, s, c), j.at("varrho").get<double>())));
    }
    try {
      const mscr::BoundSeq seq = mscr::gamma_tilde_recursion(p, phi, rho1, mu_schedule, K);
      for (int k = 0; k < K; ++k) ratio_cells[static_cast<std::size_t>(k)].push_back(num(seq.xi_values[k + 1] / xi0));
      d["gamma_tilde"] = seq.gamma_tilde;
      d["xi_values"] = seq.xi_values;
    } catch (const mscr::HypothesisError& e) {
      partial = true;
      for (int k = 0; k < K; ++k) ratio_cells[static_cast<std::size_t>(k)].push_back("NA");
      d["error"] = e.what();
    }
    detail.push_back(d);
  }

  std::ostringstream os;
  os << "row";
  for (double c : cs) os << ",c=" << num(c);
  os << '\n';
  auto put = [&](const std::string& name, const std::vector<std::string>& cells) {
    os << name;
    for (const auto& cell : cells) os << ',' << cell;
    os << '\n';
  };
  for (int k = 0; k < K; ++k) put("k=" + std::to_string(k + 1), ratio_cells[static_cast<std::size_t>(k)]);
  put("xi0_over_xi_gamma0", floor_row);
  put("rho1_lo_alpha_units", lo_row);
  put("rho1_hi_alpha_units", hi_row);
  if (!kbar_row.empty()) put("k_bar", kbar_row);

  if (out) {
    write_text(*out, os.str());
    fs::path details = *out;
    details.replace_extension(".json");
    mscr::write_json_file(details, detail);
  }
  std::cout << os.str();
  return partial ? kPartial : kOk;
}

int cmd_rec(const fs::path& op_path, std::vector<long> shape, int k, int trials, std::uint64_t seed,
            std::vector<double> check) {
  mscr::SamplingOperator op;
  if (op_path.extension() == ".json") {
    const mscr::ProblemFile file = mscr::read_problem_file(op_path);
    op = std::visit([](const auto& P) { return P.op; }, file.problem);
  } else {
    if (shape.size() != 2) throw mscr::InvalidInput("rec-estimate: a binary operator needs --shape n1 n2");
    op = mscr::SamplingOperator::explicit_matrices(shape[0], shape[1], mscr::read_matrix(op_path));
  }
  json out;
  const mscr::RestrictedEigs est = mscr::estimate_restricted_eigs(op, k, trials, seed);
  out["k"] = k;
  out["theta_plus"] = est.theta_plus;
  out["theta_minus"] = est.theta_minus;
  out["one_sided"] = est.one_sided;
  if (!check.empty()) {
    if (check.size() != 3) throw mscr::InvalidInput("rec-estimate: --check takes r s c");
    const int r = static_cast<int>(check[0]), s = static_cast<int>(check[1]);
    const double c = check[2];
    const auto plus = mscr::estimate_restricted_eigs(op, s, trials, seed);
    const auto minus = mscr::estimate_restricted_eigs(op, 2 * r + 2 * s, trials, seed);
    const mscr::AssumptionCheck ac = mscr::assumption_check(plus.theta_plus, minus.theta_minus, r, s, c);
    out["assumption"] = {{"theta_plus_s", plus.theta_plus},
                         {"theta_minus_2r2s", minus.theta_minus},
                         {"holds", ac.holds},
                         {"margin", ac.margin}};
  }
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stage convex relaxation for structured low-rank recovery"};
  app.require_subcommand(1);

  fs::path gen_spec, gen_out = "problem.json";
  auto* gen = app.add_subcommand("gen", "Generate a random instance and write its problem file");
  gen->add_option("spec", gen_spec, "Generator spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", gen_out, "Problem file to write");

  fs::path run_cfg, solve_out = "run";
  auto* solve = app.add_subcommand("solve", "Run the multi-stage loop on one problem file");
  solve->add_option("config", run_cfg, "Run config JSON")->required()->check(CLI::ExistingFile);
  solve->add_option("-o,--out", solve_out, "Output directory");

  fs::path grid_cfg, grid_out = "grid";
  int workers = 0;
  auto* grid = app.add_subcommand("grid", "Sweep generated instances");
  grid->add_option("config", grid_cfg, "Grid config JSON")->required()->check(CLI::ExistingFile);
  grid->add_option("-o,--out", grid_out, "Output directory");
  grid->add_option("-j,--workers", workers, "Worker threads");

  fs::path bounds_cfg;
  std::optional<fs::path> bounds_out;
  auto* bounds = app.add_subcommand("bounds", "Evaluate the error-bound recursion as a table");
  bounds->add_option("config", bounds_cfg, "Bounds config JSON")->required()->check(CLI::ExistingFile);
  bounds->add_option("-o,--out", bounds_out, "CSV file to write (details go next to it as .json)");

  fs::path rec_op;
  std::vector<long> rec_shape;
  int rec_k = 1, rec_trials = 20;
  std::uint64_t rec_seed = 0;
  std::vector<double> rec_check;
  auto* rec = app.add_subcommand("rec-estimate", "Estimate restricted eigenvalues of an operator");
  rec->add_option("operator", rec_op, "Problem file (.json) or binary stacked operator")->required()->check(CLI::ExistingFile);
  rec->add_option("--shape", rec_shape, "n1 n2 for a binary operator")->expected(2);
  rec->add_option("-k", rec_k, "Rank level");
  rec->add_option("--trials", rec_trials, "Random starts");
  rec->add_option("--seed", rec_seed, "Seed for the starts");
  rec->add_option("--check", rec_check, "r s c: also test the restricted eigenvalue condition")->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*gen) return cmd_gen(gen_spec, gen_out);
    if (*solve) return cmd_solve(run_cfg, solve_out);
    if (*grid) return cmd_grid(grid_cfg, grid_out, workers);
    if (*bounds) return cmd_bounds(bounds_cfg, bounds_out);
    if (*rec) return cmd_rec(rec_op, rec_shape, rec_k, rec_trials, rec_seed, rec_check);
  } catch (const mscr::InvalidInput& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalid;
  } catch (const json::exception& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalid;
  } catch (const mscr::HypothesisError& e) {
    std::cerr << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kOk;
}
