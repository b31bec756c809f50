#pragma once

#include "mscr/experiments.hpp"
#include "mscr/multistage_driver.hpp"
#include "mscr/penalty_phi.hpp"
#include "mscr/subproblem_solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <variant>

namespace mscr {

using nlohmann::json;

// Objects are read leniently: missing keys keep their defaults, unknown keys
// raise InvalidInput. Doubles are written in shortest round-trip form, so every
// to_json/from_json pair below is lossless. An infinite spectral radius is null.

void to_json(json& j, const PhiSpec& phi);
void from_json(const json& j, PhiSpec& phi);

void to_json(json& j, const SolveOptions& opts);
void from_json(const json& j, SolveOptions& opts);

void to_json(json& j, const Rho1Rule& rule);
void from_json(const json& j, Rho1Rule& rule);

void to_json(json& j, const MultistageConfig& cfg);
void from_json(const json& j, MultistageConfig& cfg);

/// "seed" is mandatory; symmetric kinds accept "n" for the order.
void to_json(json& j, const GeneratorSpec& spec);
void from_json(const json& j, GeneratorSpec& spec);

void to_json(json& j, const StageTrace& st);
void from_json(const json& j, StageTrace& st);

void to_json(json& j, const ExperimentRecord& rec);
void from_json(const json& j, ExperimentRecord& rec);

void to_json(json& j, const ResidualSample& s);

/// Iterate and residual history are attached on request.
json solve_result_to_json(const SolveResult& res, bool with_history = false, bool with_iterate = false);

json multistage_result_to_json(const MultistageResult& res);

using Problem = std::variant<SensingProblem, PSDCompletionProblem>;

/// Problem file: {"variant": "sensing" | "psd_completion", "shape": [n1, n2],
/// "operator": {...}, "b": [...], "delta": δ, ...structure constraints}.
/// An explicit operator is stored inline ("stacked") unless `operator_file`
/// names a binary matrix file, which is then written and referenced by "path"
/// (relative to the envelope's directory).
json problem_to_json(const Problem& problem, const std::optional<std::filesystem::path>& operator_file = std::nullopt);
/// `base_dir` resolves relative operator paths.
Problem problem_from_json(const json& j, const std::filesystem::path& base_dir = {});

struct ProblemFile {
  Problem problem;
  std::optional<Matrix> ground_truth;
};

/// Writes the envelope; large explicit operators and X̄ go to sibling .bin files.
void write_problem_file(const std::filesystem::path& path, const Problem& problem,
                        const std::optional<Matrix>& ground_truth = std::nullopt);
ProblemFile read_problem_file(const std::filesystem::path& path);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace mscr
