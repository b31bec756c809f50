#include "mscr/serialization.hpp"

#include "mscr/matrix_io.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string>

namespace mscr {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw InvalidInput(std::string(what) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) known = known || it.key() == key;
    if (!known) throw InvalidInput(std::string(what) + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json entries_to_json(const std::vector<Entry>& entries) {
  json out = json::array();
  for (const Entry& e : entries) out.push_back({e.row, e.col});
  return out;
}

std::vector<Entry> entries_from_json(const json& j) {
  std::vector<Entry> out;
  for (const json& e : j) {
    if (!e.is_array() || e.size() != 2) throw InvalidInput("entry lists hold [row, col] pairs");
    out.push_back({e[0].get<Index>(), e[1].get<Index>()});
  }
  return out;
}

Vector vector_or_empty(const json& j, const char* key) {
  return j.contains(key) ? vector_from_json(j.at(key)) : Vector();
}

}  // namespace

void to_json(json& j, const PhiSpec& phi) {
  j = {{"variant", phi.variant == PhiSpec::Variant::kPhi1 ? "phi1" : "phi2"}, {"q", phi.q}, {"eps", phi.eps}};
}

void from_json(const json& j, PhiSpec& phi) {
  check_keys(j, {"variant", "q", "eps"}, "phi");
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "phi1") {
    phi = PhiSpec::phi1();
    return;
  }
  if (variant != "phi2") throw InvalidInput("phi: variant must be phi1 or phi2");
  phi = PhiSpec::phi2();
  read_opt(j, "q", phi.q);
  read_opt(j, "eps", phi.eps);
  phi.validate();
}

void to_json(json& j, const SolveOptions& o) {
  j = {{"tol_infeas", o.tol_infeas},
       {"tol_gap", o.tol_gap},
       {"gap_mode", o.gap_mode == GapMode::kAbsolute ? "absolute" : "relative"},
       {"max_iters", o.max_iters},
       {"admm_sigma0", o.admm_sigma0},
       {"step_length", o.step_length},
       {"check_every", o.check_every},
       {"sigma_update_every", o.sigma_update_every},
       {"record_history", o.record_history}};
}

void from_json(const json& j, SolveOptions& o) {
  check_keys(j,
             {"tol_infeas", "tol_gap", "gap_mode", "max_iters", "admm_sigma0", "step_length", "check_every",
              "sigma_update_every", "record_history"},
             "solver");
  read_opt(j, "tol_infeas", o.tol_infeas);
  read_opt(j, "tol_gap", o.tol_gap);
  if (j.contains("gap_mode")) {
    const std::string mode = j.at("gap_mode").get<std::string>();
    if (mode == "absolute") {
      o.gap_mode = GapMode::kAbsolute;
    } else if (mode == "relative") {
      o.gap_mode = GapMode::kRelative;
    } else {
      throw InvalidInput("solver: gap_mode must be absolute or relative");
    }
  }
  read_opt(j, "max_iters", o.max_iters);
  read_opt(j, "admm_sigma0", o.admm_sigma0);
  read_opt(j, "step_length", o.step_length);
  read_opt(j, "check_every", o.check_every);
  read_opt(j, "sigma_update_every", o.sigma_update_every);
  read_opt(j, "record_history", o.record_history);
  o.validate();
}

void to_json(json& j, const Rho1Rule& rule) {
  j = {{"rule", rule.kind == Rho1Rule::Kind::kFixed ? "fixed" : "scaled"}, {"value", rule.value}};
}

void from_json(const json& j, Rho1Rule& rule) {
  check_keys(j, {"rule", "value"}, "rho1_rule");
  const std::string kind = j.at("rule").get<std::string>();
  if (kind == "fixed") {
    rule.kind = Rho1Rule::Kind::kFixed;
  } else if (kind == "scaled") {
    rule.kind = Rho1Rule::Kind::kScaled;
  } else {
    throw InvalidInput("rho1_rule: rule must be fixed or scaled");
  }
  if (!j.contains("value") && rule.kind == Rho1Rule::Kind::kFixed) throw InvalidInput("rho1_rule: fixed needs a value");
  rule.value = 10.0;
  read_opt(j, "value", rule.value);
  if (!(rule.value > 0.0) || !std::isfinite(rule.value)) throw InvalidInput("rho1_rule: value must be positive");
}

void to_json(json& j, const MultistageConfig& c) {
  j = {{"phi", c.phi},
       {"rho1_rule", c.rho1},
       {"mu", c.mu},
       {"mu_schedule", c.mu_schedule},
       {"max_stages", c.max_stages},
       {"stop", c.stop == StopRule::kFixedStages ? "fixed_stages" : "rank_stability"},
       {"stability_window", c.stability_window},
       {"solver", c.solver},
       {"boundary", c.boundary == BoundaryRule::kUpper ? "upper" : "lower"},
       {"warm_start", c.warm_start},
       {"abort_on_nonconvergence", c.abort_on_nonconvergence},
       {"keep_iterates", c.keep_iterates},
       {"iterate_dir", c.iterate_dir ? json(c.iterate_dir->string()) : json(nullptr)}};
}

void from_json(const json& j, MultistageConfig& c) {
  check_keys(j,
             {"phi", "rho1_rule", "mu", "mu_schedule", "max_stages", "stop", "stability_window", "solver", "boundary",
              "warm_start", "abort_on_nonconvergence", "keep_iterates", "iterate_dir"},
             "config");
  read_opt(j, "phi", c.phi);
  read_opt(j, "rho1_rule", c.rho1);
  read_opt(j, "mu", c.mu);
  read_opt(j, "mu_schedule", c.mu_schedule);
  read_opt(j, "max_stages", c.max_stages);
  if (j.contains("stop")) {
    const std::string stop = j.at("stop").get<std::string>();
    if (stop == "fixed_stages") {
      c.stop = StopRule::kFixedStages;
    } else if (stop == "rank_stability") {
      c.stop = StopRule::kRankStability;
    } else {
      throw InvalidInput("config: stop must be fixed_stages or rank_stability");
    }
  }
  read_opt(j, "stability_window", c.stability_window);
  read_opt(j, "solver", c.solver);
  if (j.contains("boundary")) {
    const std::string b = j.at("boundary").get<std::string>();
    if (b != "upper" && b != "lower") throw InvalidInput("config: boundary must be upper or lower");
    c.boundary = b == "upper" ? BoundaryRule::kUpper : BoundaryRule::kLower;
  }
  read_opt(j, "warm_start", c.warm_start);
  read_opt(j, "abort_on_nonconvergence", c.abort_on_nonconvergence);
  read_opt(j, "keep_iterates", c.keep_iterates);
  if (j.contains("iterate_dir") && !j.at("iterate_dir").is_null()) {
    c.iterate_dir = std::filesystem::path(j.at("iterate_dir").get<std::string>());
  }
  c.validate();
}

void to_json(json& j, const GeneratorSpec& s) {
  j = {{"kind", to_string(s.kind)},
       {"n1", s.n1},
       {"n2", s.n2},
       {"r", s.r},
       {"weight", s.weight},
       {"m", opt_json(s.m)},
       {"nu", opt_json(s.nu)},
       {"sample_ratio", opt_json(s.sample_ratio)},
       {"oversampling", opt_json(s.oversampling)},
       {"num_fixed", s.num_fixed},
       {"num_fixed_diag", s.num_fixed_diag},
       {"num_fixed_offdiag", s.num_fixed_offdiag},
       {"noise_level", s.noise_level},
       {"delta_factor", s.delta_factor},
       {"seed", s.seed},
       {"memory_budget_bytes", s.memory_budget_bytes}};
}

namespace {

void parse_spec(const json& j, GeneratorSpec& s) {
  check_keys(j,
             {"kind", "n", "n1", "n2", "r", "weight", "m", "nu", "sample_ratio", "oversampling", "num_fixed",
              "num_fixed_diag", "num_fixed_offdiag", "noise_level", "delta_factor", "seed", "memory_budget_bytes"},
             "generator");
  if (!j.contains("seed")) throw InvalidInput("generator: seed is mandatory");
  s = GeneratorSpec{};
  s.kind = generator_kind_from_string(j.at("kind").get<std::string>());
  read_opt(j, "n1", s.n1);
  read_opt(j, "n2", s.n2);
  if (j.contains("n")) s.n1 = s.n2 = j.at("n").get<Index>();
  if (s.kind != GeneratorKind::kSensing) s.n2 = s.n1;
  read_opt(j, "r", s.r);
  read_opt(j, "weight", s.weight);
  read_opt(j, "m", s.m);
  read_opt(j, "nu", s.nu);
  read_opt(j, "sample_ratio", s.sample_ratio);
  read_opt(j, "oversampling", s.oversampling);
  read_opt(j, "num_fixed", s.num_fixed);
  read_opt(j, "num_fixed_diag", s.num_fixed_diag);
  read_opt(j, "num_fixed_offdiag", s.num_fixed_offdiag);
  read_opt(j, "noise_level", s.noise_level);
  read_opt(j, "delta_factor", s.delta_factor);
  s.seed = j.at("seed").get<std::uint64_t>();
  read_opt(j, "memory_budget_bytes", s.memory_budget_bytes);
}

}  // namespace

void from_json(const json& j, GeneratorSpec& s) {
  parse_spec(j, s);
  s.validate();
}

void to_json(json& j, const StageTrace& st) {
  j = {{"k", st.k},
       {"rho", st.rho},
       {"relerr", opt_json(st.relerr)},
       {"rank", st.rank},
       {"iterations", st.iterations},
       {"cumulative_iterations", st.cumulative_iterations},
       {"stage_objective", st.stage_objective},
       {"penalty_before_w", st.penalty_before_w},
       {"penalty_after_w", st.penalty_after_w},
       {"complementarity", st.complementarity},
       {"primal_infeas", st.primal_infeas},
       {"dual_infeas", st.dual_infeas},
       {"gap", st.gap},
       {"converged", st.converged},
       {"seconds", st.seconds},
       {"X", st.X ? matrix_to_json(*st.X) : json(nullptr)},
       {"iterate_path", st.iterate_path ? json(st.iterate_path->string()) : json(nullptr)}};
}

void from_json(const json& j, StageTrace& st) {
  st = StageTrace{};
  st.k = j.at("k").get<int>();
  st.rho = j.at("rho").get<double>();
  read_opt(j, "relerr", st.relerr);
  st.rank = j.at("rank").get<int>();
  st.iterations = j.at("iterations").get<int>();
  st.cumulative_iterations = j.at("cumulative_iterations").get<int>();
  st.stage_objective = j.at("stage_objective").get<double>();
  st.penalty_before_w = j.at("penalty_before_w").get<double>();
  st.penalty_after_w = j.at("penalty_after_w").get<double>();
  st.complementarity = j.at("complementarity").get<double>();
  st.primal_infeas = j.at("primal_infeas").get<double>();
  st.dual_infeas = j.at("dual_infeas").get<double>();
  st.gap = j.at("gap").get<double>();
  st.converged = j.at("converged").get<bool>();
  st.seconds = j.at("seconds").get<double>();
  if (j.contains("X") && !j.at("X").is_null()) st.X = matrix_from_json(j.at("X"));
  if (j.contains("iterate_path") && !j.at("iterate_path").is_null()) {
    st.iterate_path = std::filesystem::path(j.at("iterate_path").get<std::string>());
  }
}

void to_json(json& j, const ExperimentRecord& rec) {
  j = {{"label", rec.label},
       {"spec", rec.spec},
       {"config", rec.config},
       {"m", rec.m},
       {"eigr", opt_json(rec.eigr)},
       {"stages", rec.stages},
       {"final_stage", rec.final_stage()},
       {"stop_reason", rec.stop_reason},
       {"generation_seconds", rec.generation_seconds},
       {"total_seconds", rec.total_seconds},
       {"ok", rec.ok},
       {"error", rec.error},
       {"rng_scheme", kRngScheme}};
}

void from_json(const json& j, ExperimentRecord& rec) {
  rec = ExperimentRecord{};
  rec.label = j.at("label").get<std::string>();
  parse_spec(j.at("spec"), rec.spec);
  rec.config = j.at("config").get<MultistageConfig>();
  rec.m = j.at("m").get<Index>();
  read_opt(j, "eigr", rec.eigr);
  rec.stages = j.at("stages").get<std::vector<StageTrace>>();
  rec.stop_reason = j.at("stop_reason").get<std::string>();
  rec.generation_seconds = j.at("generation_seconds").get<double>();
  rec.total_seconds = j.at("total_seconds").get<double>();
  rec.ok = j.at("ok").get<bool>();
  rec.error = j.at("error").get<std::string>();
}

void to_json(json& j, const ResidualSample& s) {
  j = {{"iteration", s.iteration}, {"primal_infeas", s.primal_infeas}, {"dual_infeas", s.dual_infeas},
       {"gap", s.gap},             {"rel_gap", s.rel_gap},             {"primal_obj", s.primal_obj},
       {"dual_obj", s.dual_obj},   {"sigma", s.sigma}};
}

json solve_result_to_json(const SolveResult& res, bool with_history, bool with_iterate) {
  json j = {{"iterations", res.iterations}, {"primal_infeas", res.primal_infeas}, {"dual_infeas", res.dual_infeas},
            {"gap", res.gap},               {"rel_gap", res.rel_gap},             {"primal_obj", res.primal_obj},
            {"dual_obj", res.dual_obj},     {"converged", res.converged},         {"stagnated", res.stagnated}};
  if (with_history) j["history"] = res.history;
  if (with_iterate) j["X"] = matrix_to_json(res.X);
  return j;
}

json multistage_result_to_json(const MultistageResult& res) {
  return {{"stages", res.stages},
          {"final_stage", res.stages.empty() ? 0 : res.stages.back().k},
          {"final_rank", res.stages.empty() ? 0 : res.stages.back().rank},
          {"aborted", res.aborted},
          {"stop_reason", res.stop_reason}};
}

json problem_to_json(const Problem& problem, const std::optional<std::filesystem::path>& operator_file) {
  const SamplingOperator& op = std::visit([](const auto& p) -> const SamplingOperator& { return p.op; }, problem);
  json oper;
  if (op.kind() == SamplingOperator::Kind::kMask) {
    oper = {{"kind", "mask"}, {"entries", entries_to_json(op.entries())}};
  } else if (operator_file) {
    write_matrix_binary(*operator_file, op.stacked());
    oper = {{"kind", "explicit"}, {"path", operator_file->filename().string()}};
  } else {
    oper = {{"kind", "explicit"}, {"stacked", matrix_to_json(op.stacked())}};
  }

  json j;
  if (const auto* s = std::get_if<SensingProblem>(&problem)) {
    j = {{"variant", "sensing"},
         {"shape", {s->rows(), s->cols()}},
         {"operator", oper},
         {"b", vector_to_json(s->b)},
         {"delta", s->delta},
         {"fixed_entries", entries_to_json(s->fixed_entries)},
         {"fixed_values", vector_to_json(s->fixed_values)},
         {"spectral_radius", std::isfinite(s->spectral_radius) ? json(s->spectral_radius) : json(nullptr)}};
  } else {
    const auto& p = std::get<PSDCompletionProblem>(problem);
    j = {{"variant", "psd_completion"},
         {"shape", {p.n, p.n}},
         {"operator", oper},
         {"b", vector_to_json(p.b)},
         {"delta", p.delta},
         {"eq_entries", entries_to_json(p.eq_entries)},
         {"eq_values", vector_to_json(p.eq_values)},
         {"ineq_entries", entries_to_json(p.ineq_entries)},
         {"ineq_bounds", vector_to_json(p.ineq_bounds)}};
  }
  return j;
}

Problem problem_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j,
             {"variant", "shape", "operator", "b", "delta", "fixed_entries", "fixed_values", "spectral_radius",
              "eq_entries", "eq_values", "ineq_entries", "ineq_bounds", "ground_truth"},
             "problem");
  const std::string variant = j.at("variant").get<std::string>();
  if (variant != "sensing" && variant != "psd_completion") throw InvalidInput("problem: unknown variant '" + variant + "'");
  const json& shape = j.at("shape");
  if (!shape.is_array() || shape.size() != 2) throw InvalidInput("problem: shape must be [n1, n2]");
  const Index n1 = shape[0].get<Index>(), n2 = shape[1].get<Index>();

  const json& oj = j.at("operator");
  check_keys(oj, {"kind", "entries", "stacked", "path"}, "operator");
  const std::string kind = oj.at("kind").get<std::string>();
  SamplingOperator op;
  if (kind == "mask") {
    op = SamplingOperator::entry_mask(n1, n2, entries_from_json(oj.at("entries")));
  } else if (kind == "explicit") {
    Matrix stacked;
    if (oj.contains("path")) {
      std::filesystem::path p = oj.at("path").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      stacked = read_matrix(p);
    } else {
      stacked = matrix_from_json(oj.at("stacked"));
    }
    op = SamplingOperator::explicit_matrices(n1, n2, std::move(stacked));
  } else {
    throw InvalidInput("operator: kind must be mask or explicit");
  }

  if (variant == "sensing") {
    SensingProblem P;
    P.op = std::move(op);
    P.b = vector_from_json(j.at("b"));
    P.delta = j.at("delta").get<double>();
    if (j.contains("fixed_entries")) P.fixed_entries = entries_from_json(j.at("fixed_entries"));
    P.fixed_values = vector_or_empty(j, "fixed_values");
    read_opt(j, "spectral_radius", P.spectral_radius);
    P.validate();
    return P;
  }
  if (variant == "psd_completion") {
    if (n1 != n2) throw InvalidInput("problem: psd_completion needs a square shape");
    PSDCompletionProblem P;
    P.n = n1;
    P.op = std::move(op);
    P.b = vector_from_json(j.at("b"));
    P.delta = j.at("delta").get<double>();
    if (j.contains("eq_entries")) P.eq_entries = entries_from_json(j.at("eq_entries"));
    P.eq_values = vector_or_empty(j, "eq_values");
    if (j.contains("ineq_entries")) P.ineq_entries = entries_from_json(j.at("ineq_entries"));
    P.ineq_bounds = vector_or_empty(j, "ineq_bounds");
    P.validate();
    return P;
  }
  throw InvalidInput("problem: variant must be sensing or psd_completion");
}

void write_problem_file(const std::filesystem::path& path, const Problem& problem,
                        const std::optional<Matrix>& ground_truth) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path stem = path.parent_path() / path.stem();
  const SamplingOperator& op = std::visit([](const auto& p) -> const SamplingOperator& { return p.op; }, problem);
  std::optional<std::filesystem::path> op_file;
  if (op.kind() == SamplingOperator::Kind::kExplicit) op_file = stem.string() + "_operator.bin";
  json j = problem_to_json(problem, op_file);
  if (ground_truth) {
    const std::filesystem::path truth = stem.string() + "_truth.bin";
    write_matrix_binary(truth, *ground_truth);
    j["ground_truth"] = truth.filename().string();
  }
  write_json_file(path, j);
}

ProblemFile read_problem_file(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const std::filesystem::path base = path.parent_path();
  ProblemFile out{problem_from_json(j, base), std::nullopt};
  if (j.contains("ground_truth") && !j.at("ground_truth").is_null()) {
    std::filesystem::path p = j.at("ground_truth").get<std::string>();
    if (p.is_relative()) p = base / p;
    out.ground_truth = read_matrix(p);
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mscr
