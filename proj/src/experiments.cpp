#include "mscr/experiments.hpp"

#include "mscr/serialization.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

namespace mscr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Matrix randn(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) M(i, j) = normal(rng);
  }
  return M;
}

Vector randn(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// k distinct positions out of [0, n) by a partial Fisher–Yates shuffle, returned sorted.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Vector add_noise(const Vector& clean, double level, const Vector& xi) {
  if (level == 0.0 || xi.norm() == 0.0) return clean;
  return clean + level * (clean.norm() / xi.norm()) * xi;
}

std::vector<Entry> upper_entries(Index n, bool with_diagonal) {
  std::vector<Entry> out;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < (with_diagonal ? j + 1 : j); ++i) out.push_back({i, j});
  }
  return out;
}

Index pairs(Index n, bool with_diagonal) { return with_diagonal ? n * (n + 1) / 2 : n * (n - 1) / 2; }

double eigen_ratio(const Matrix& Xbar, int r) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(Xbar, Eigen::EigenvaluesOnly);
  const Vector lam = eig.eigenvalues().reverse();
  return lam(0) / lam(r - 1);
}

// Fills the sampling operator, b, δ and noise for a symmetric instance.
void sample_symmetric(const GeneratorSpec& spec, const std::vector<Entry>& candidates, CompletionInstance& inst) {
  auto op_rng = make_stream(spec.seed, RngStream::kOperator);
  const Index m = spec.measurement_count();
  std::vector<Entry> observed;
  for (std::size_t idx : choose(candidates.size(), static_cast<std::size_t>(m), op_rng)) observed.push_back(candidates[idx]);
  PSDCompletionProblem& P = inst.problem;
  P.op = SamplingOperator::entry_mask(spec.n1, spec.n1, std::move(observed));
  auto noise_rng = make_stream(spec.seed, RngStream::kNoise);
  inst.noise = randn(m, noise_rng);
  P.b = add_noise(P.op.apply(inst.Xbar), spec.noise_level, inst.noise);
  P.delta = spec.delta_factor * P.b.norm();
}

}  // namespace

std::mt19937_64 make_stream(std::uint64_t seed, RngStream stream) {
  const auto id = static_cast<std::uint64_t>(stream) + 1;
  return std::mt19937_64(splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * id)));
}

const char* to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kSensing:
      return "sensing";
    case GeneratorKind::kCorrelation:
      return "correlation";
    case GeneratorKind::kCovariance:
      return "covariance";
  }
  return "unknown";
}

GeneratorKind generator_kind_from_string(const std::string& name) {
  if (name == "sensing") return GeneratorKind::kSensing;
  if (name == "correlation") return GeneratorKind::kCorrelation;
  if (name == "covariance") return GeneratorKind::kCovariance;
  throw InvalidInput("unknown generator kind '" + name + "'");
}

void GeneratorSpec::validate() const {
  const bool symmetric = kind != GeneratorKind::kSensing;
  if (n1 <= 0 || (!symmetric && n2 <= 0)) throw InvalidInput("GeneratorSpec: dimensions must be positive");
  if (!symmetric && n1 > n2) throw InvalidInput("GeneratorSpec: sensing instances need n1 ≤ n2");
  const Index nmin = symmetric ? n1 : std::min(n1, n2);
  if (r < 1 || r > nmin) throw InvalidInput("GeneratorSpec: r must lie in [1, min(n1, n2)]");
  if (symmetric && (weight == 0.0 || !std::isfinite(weight))) {
    throw InvalidInput("GeneratorSpec: weight must be finite and nonzero");
  }
  const int rules = int(m.has_value()) + int(nu.has_value()) + int(sample_ratio.has_value()) + int(oversampling.has_value());
  if (rules != 1) throw InvalidInput("GeneratorSpec: give exactly one of m, nu, sample_ratio, oversampling");
  if (nu && symmetric) throw InvalidInput("GeneratorSpec: nu applies to sensing instances only");
  if (oversampling && !symmetric) throw InvalidInput("GeneratorSpec: oversampling applies to symmetric kinds only");
  if (!(noise_level >= 0.0) || !(delta_factor >= 0.0)) throw InvalidInput("GeneratorSpec: noise settings must be ≥ 0");
  if (num_fixed < 0 || num_fixed_diag < 0 || num_fixed_offdiag < 0) {
    throw InvalidInput("GeneratorSpec: known-entry counts must be ≥ 0");
  }
  if (!symmetric && num_fixed > n1 * n2) throw InvalidInput("GeneratorSpec: too many known entries");
  if (kind == GeneratorKind::kCorrelation && num_fixed_diag != 0) {
    throw InvalidInput("GeneratorSpec: the correlation kind pins the whole diagonal; leave num_fixed_diag at 0");
  }
  if (symmetric) {
    if (num_fixed_diag > n1 || num_fixed_offdiag > pairs(n1, false)) {
      throw InvalidInput("GeneratorSpec: too many known entries");
    }
  }
  const Index count = measurement_count();
  Index candidates = n1 * n2;
  if (kind == GeneratorKind::kCorrelation) candidates = pairs(n1, false) - num_fixed_offdiag;
  if (kind == GeneratorKind::kCovariance) candidates = pairs(n1, true) - num_fixed_diag - num_fixed_offdiag;
  if (count < 1 || count > candidates) throw InvalidInput("GeneratorSpec: measurement count out of range");
}

Index GeneratorSpec::measurement_count() const {
  if (m) return *m;
  if (nu) return static_cast<Index>(std::lround(*nu * r * static_cast<double>(n1 + n2 - r)));
  if (sample_ratio) {
    const Index total = kind == GeneratorKind::kSensing        ? n1 * n2
                        : kind == GeneratorKind::kCorrelation ? pairs(n1, false)
                                                               : pairs(n1, true);
    return static_cast<Index>(std::lround(*sample_ratio * static_cast<double>(total)));
  }
  if (oversampling) return static_cast<Index>(std::lround(*oversampling * r * static_cast<double>(2 * n1 - r + 1) / 2.0));
  throw InvalidInput("GeneratorSpec: no measurement-count rule");
}

double dof_matched_oversampling(double ref_ratio, Index n_ref, int r, bool include_diagonal) {
  if (!(ref_ratio > 0.0) || n_ref < 2 || r < 1 || r > n_ref) throw InvalidInput("dof_matched_oversampling: bad reference");
  const double dof = r * static_cast<double>(2 * n_ref - r + 1) / 2.0;
  return ref_ratio * static_cast<double>(pairs(n_ref, include_diagonal)) / dof;
}

SensingInstance gen_sensing(const GeneratorSpec& spec) {
  if (spec.kind != GeneratorKind::kSensing) throw InvalidInput("gen_sensing: spec kind is not sensing");
  spec.validate();
  const Index n1 = spec.n1, n2 = spec.n2, m = spec.measurement_count();
  const double bytes = 8.0 * static_cast<double>(m) * static_cast<double>(n1 * n2);
  if (bytes > static_cast<double>(spec.memory_budget_bytes)) {
    throw ResourceError("gen_sensing: dense operator needs " + std::to_string(bytes / (1 << 20)) + " MiB, over budget");
  }

  SensingInstance inst;
  auto truth = make_stream(spec.seed, RngStream::kTruth);
  const Matrix XR = randn(n1, spec.r, truth);
  const Matrix XL = randn(n2, spec.r, truth);
  inst.Xbar = XR * XL.transpose();

  auto op_rng = make_stream(spec.seed, RngStream::kOperator);
  Matrix stacked = randn(m, n1 * n2, op_rng);

  SensingProblem& P = inst.problem;
  P.op = SamplingOperator::explicit_matrices(n1, n2, std::move(stacked));
  auto noise_rng = make_stream(spec.seed, RngStream::kNoise);
  inst.noise = randn(m, noise_rng);
  P.b = add_noise(P.op.apply(inst.Xbar), spec.noise_level, inst.noise);
  P.delta = spec.delta_factor * P.b.norm();
  P.spectral_radius = 2.0 * spectral_norm(inst.Xbar);

  auto known = make_stream(spec.seed, RngStream::kKnownEntries);
  const auto picks = choose(static_cast<std::size_t>(n1 * n2), static_cast<std::size_t>(spec.num_fixed), known);
  P.fixed_values.resize(static_cast<Index>(picks.size()));
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const Index pos = static_cast<Index>(picks[i]);
    const Entry e{pos % n1, pos / n1};
    P.fixed_entries.push_back(e);
    P.fixed_values(static_cast<Index>(i)) = inst.Xbar(e.row, e.col);
  }
  P.validate();
  return inst;
}

CompletionInstance gen_correlation(const GeneratorSpec& spec) {
  if (spec.kind != GeneratorKind::kCorrelation) throw InvalidInput("gen_correlation: spec kind is not correlation");
  spec.validate();
  const Index n = spec.n1;
  CompletionInstance inst;
  auto truth = make_stream(spec.seed, RngStream::kTruth);
  Matrix L = randn(n, spec.r, truth);
  L.col(0) *= spec.weight;
  const Matrix G = L * L.transpose();
  const Vector d = G.diagonal().cwiseSqrt().cwiseInverse();
  const Matrix M = d.asDiagonal() * G * d.asDiagonal();
  inst.Xbar = symmetrize(M);
  inst.Xbar.diagonal().setOnes();
  inst.eigr = eigen_ratio(inst.Xbar, spec.r);

  PSDCompletionProblem& P = inst.problem;
  P.n = n;
  const auto off = upper_entries(n, false);
  auto known = make_stream(spec.seed, RngStream::kKnownEntries);
  const auto fixed = choose(off.size(), static_cast<std::size_t>(spec.num_fixed_offdiag), known);
  std::vector<char> is_fixed(off.size(), 0);
  for (Index i = 0; i < n; ++i) P.eq_entries.push_back({i, i});
  for (std::size_t idx : fixed) {
    is_fixed[idx] = 1;
    P.eq_entries.push_back(off[idx]);
  }
  P.eq_values.resize(static_cast<Index>(P.eq_entries.size()));
  for (std::size_t k = 0; k < P.eq_entries.size(); ++k) {
    P.eq_values(static_cast<Index>(k)) = inst.Xbar(P.eq_entries[k].row, P.eq_entries[k].col);
  }
  P.ineq_bounds.resize(0);

  std::vector<Entry> candidates;
  for (std::size_t i = 0; i < off.size(); ++i) {
    if (!is_fixed[i]) candidates.push_back(off[i]);
  }
  sample_symmetric(spec, candidates, inst);
  P.validate();
  return inst;
}

CompletionInstance gen_covariance(const GeneratorSpec& spec) {
  if (spec.kind != GeneratorKind::kCovariance) throw InvalidInput("gen_covariance: spec kind is not covariance");
  spec.validate();
  const Index n = spec.n1;
  CompletionInstance inst;
  auto truth = make_stream(spec.seed, RngStream::kTruth);
  Matrix L = randn(n, spec.r, truth) / std::sqrt(std::sqrt(static_cast<double>(n)));
  L.col(0) *= spec.weight;
  inst.Xbar = symmetrize(L * L.transpose());
  inst.eigr = eigen_ratio(inst.Xbar, spec.r);

  PSDCompletionProblem& P = inst.problem;
  P.n = n;
  auto known = make_stream(spec.seed, RngStream::kKnownEntries);
  const auto diag_known = choose(static_cast<std::size_t>(n), static_cast<std::size_t>(spec.num_fixed_diag), known);
  const auto off = upper_entries(n, false);
  const auto off_known = choose(off.size(), static_cast<std::size_t>(spec.num_fixed_offdiag), known);

  std::vector<char> diag_fixed(static_cast<std::size_t>(n), 0), off_fixed(off.size(), 0);
  for (std::size_t i : diag_known) {
    diag_fixed[i] = 1;
    P.eq_entries.push_back({static_cast<Index>(i), static_cast<Index>(i)});
  }
  for (std::size_t i : off_known) {
    off_fixed[i] = 1;
    P.eq_entries.push_back(off[i]);
  }
  P.eq_values.resize(static_cast<Index>(P.eq_entries.size()));
  for (std::size_t k = 0; k < P.eq_entries.size(); ++k) {
    P.eq_values(static_cast<Index>(k)) = inst.Xbar(P.eq_entries[k].row, P.eq_entries[k].col);
  }

  auto bounds_rng = make_stream(spec.seed, RngStream::kBounds);
  const double bound = (1.0 + 0.01 * std::uniform_real_distribution<double>(0.0, 1.0)(bounds_rng)) *
                       inst.Xbar.cwiseAbs().maxCoeff();
  for (Index i = 0; i < n; ++i) {
    if (!diag_fixed[static_cast<std::size_t>(i)]) P.ineq_entries.push_back({i, i});
  }
  P.ineq_bounds = Vector::Constant(static_cast<Index>(P.ineq_entries.size()), bound);

  std::vector<Entry> candidates;
  std::size_t off_idx = 0;
  for (const Entry& e : upper_entries(n, true)) {
    if (e.row == e.col) {
      if (!diag_fixed[static_cast<std::size_t>(e.row)]) candidates.push_back(e);
    } else {
      if (!off_fixed[off_idx]) candidates.push_back(e);
      ++off_idx;
    }
  }
  sample_symmetric(spec, candidates, inst);
  P.validate();
  return inst;
}

std::vector<GridPoint> nu_grid(const GeneratorSpec& base, const std::vector<double>& nus,
                               const std::vector<std::uint64_t>& seeds) {
  if (nus.empty() || seeds.empty()) throw InvalidInput("nu_grid: empty grid");
  std::vector<GridPoint> out;
  for (double nu : nus) {
    for (std::uint64_t seed : seeds) {
      GridPoint p;
      p.spec = base;
      p.spec.m.reset();
      p.spec.sample_ratio.reset();
      p.spec.oversampling.reset();
      p.spec.nu = nu;
      p.spec.seed = seed;
      std::ostringstream label;
      label << "nu" << nu << "_seed" << seed;
      p.label = label.str();
      out.push_back(std::move(p));
    }
  }
  return out;
}

ExperimentRecord run_point(const GridPoint& point, const MultistageConfig& cfg) {
  ExperimentRecord rec;
  rec.label = point.label;
  rec.spec = point.spec;
  rec.config = cfg;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    MultistageConfig local = cfg;
    if (local.iterate_dir) local.iterate_dir = *local.iterate_dir / point.label;
    MultistageResult res;
    if (point.spec.kind == GeneratorKind::kSensing) {
      const SensingInstance inst = gen_sensing(point.spec);
      rec.m = inst.problem.op.size();
      rec.generation_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res = run_multistage(inst.problem, local, inst.Xbar);
    } else {
      const CompletionInstance inst = point.spec.kind == GeneratorKind::kCorrelation ? gen_correlation(point.spec)
                                                                                      : gen_covariance(point.spec);
      rec.m = inst.problem.op.size();
      rec.eigr = inst.eigr;
      rec.generation_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res = run_multistage(inst.problem, local, inst.Xbar);
    }
    rec.stages = std::move(res.stages);
    rec.stop_reason = res.stop_reason;
    for (const StageTrace& st : rec.stages) rec.ok = rec.ok && st.converged;
    if (!rec.ok) rec.error = "subproblem did not converge in some stage";
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<ExperimentRecord> run_grid(const std::vector<GridPoint>& points, const MultistageConfig& cfg,
                                       const std::optional<std::filesystem::path>& out_dir, int workers) {
  if (points.empty()) throw InvalidInput("run_grid: empty grid");
  if (workers < 1) throw InvalidInput("run_grid: workers must be ≥ 1");
  cfg.validate();
  std::vector<ExperimentRecord> records(points.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) records[i] = run_point(points[i], cfg);
  };
  const int n_threads = std::min<int>(workers, static_cast<int>(points.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::ofstream json_out(*out_dir / "records.json", std::ios::trunc);
    json_out << nlohmann::json(records).dump(2) << '\n';
    write_stages_csv(*out_dir / "stages.csv", records);
    write_summary_csv(*out_dir / "summary.csv", records);
  }
  return records;
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

const StageTrace* stage_at(const ExperimentRecord& rec, int k) {
  for (const StageTrace& st : rec.stages) {
    if (st.k == k) return &st;
  }
  return nullptr;
}

void put_common(std::ostream& os, const ExperimentRecord& rec) {
  const GeneratorSpec& s = rec.spec;
  os << rec.label << ',' << to_string(s.kind) << ',' << s.n1 << ',' << (s.kind == GeneratorKind::kSensing ? s.n2 : s.n1)
     << ',' << s.r << ',' << rec.m << ',' << opt_num(s.nu) << ',' << s.seed;
}

}  // namespace

void write_stages_csv(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "label,kind,n1,n2,r,m,nu,seed,stage,rho,relerr,rank,iterations,cumulative_iterations,stage_objective,"
        "penalty_before_w,penalty_after_w,complementarity,primal_infeas,dual_infeas,gap,converged,seconds\n";
  for (const ExperimentRecord& rec : records) {
    for (const StageTrace& st : rec.stages) {
      put_common(os, rec);
      os << ',' << st.k << ',' << num(st.rho) << ',' << opt_num(st.relerr) << ',' << st.rank << ',' << st.iterations << ','
         << st.cumulative_iterations << ',' << num(st.stage_objective) << ',' << num(st.penalty_before_w) << ','
         << num(st.penalty_after_w) << ',' << num(st.complementarity) << ',' << num(st.primal_infeas) << ','
         << num(st.dual_infeas) << ',' << num(st.gap) << ',' << (st.converged ? 1 : 0) << ',' << num(st.seconds) << '\n';
    }
  }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "label,kind,n1,n2,r,m,nu,seed,eigr,ok,stop_reason,final_stage,relerr_1,rank_1,iters_1,relerr_2,rank_2,"
        "cum_iters_2,relerr_5,rank_5,cum_iters_5,relerr_final,rank_final,cum_iters_final,total_seconds,error\n";
  for (const ExperimentRecord& rec : records) {
    put_common(os, rec);
    os << ',' << opt_num(rec.eigr) << ',' << (rec.ok ? 1 : 0) << ',' << rec.stop_reason << ',' << rec.final_stage();
    for (int k : {1, 2, 5}) {
      const StageTrace* st = stage_at(rec, k);
      os << ',' << (st ? opt_num(st->relerr) : "") << ',' << (st ? std::to_string(st->rank) : "") << ','
         << (st ? std::to_string(k == 1 ? st->iterations : st->cumulative_iterations) : "");
    }
    const StageTrace* last = rec.stages.empty() ? nullptr : &rec.stages.back();
    os << ',' << (last ? opt_num(last->relerr) : "") << ',' << (last ? std::to_string(last->rank) : "") << ','
       << (last ? std::to_string(last->cumulative_iterations) : "") << ',' << num(rec.total_seconds) << ',';
    std::string err = rec.error;
    std::replace(err.begin(), err.end(), ',', ';');
    os << err << '\n';
  }
}

}  // namespace mscr
