#pragma once

#include "mscr/multistage_driver.hpp"
#include "mscr/subproblem_solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mscr {

/// Generation would exceed the memory budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Random streams are mt19937_64 engines seeded with splitmix64(seed ⊕ φ·(stream+1)),
/// φ = 0x9E3779B97F4A7C15. Bump the version when the scheme changes.
inline constexpr const char* kRngScheme = "mt19937_64+splitmix64/v1";

enum class RngStream : std::uint64_t {
  kTruth = 0,
  kOperator = 1,
  kNoise = 2,
  kKnownEntries = 3,
  kBounds = 4,
};

std::mt19937_64 make_stream(std::uint64_t seed, RngStream stream);

enum class GeneratorKind { kSensing, kCorrelation, kCovariance };

const char* to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(const std::string& name);

/// Describes one random instance. Exactly one of m, nu, sample_ratio or
/// oversampling fixes the number of measurements.
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kSensing;
  /// Rows; also the order n for the symmetric kinds.
  Index n1 = 40;
  Index n2 = 40;
  int r = 3;
  /// Scales the first factor column of the symmetric kinds (controls λ₁/λ_r).
  double weight = 1.0;

  std::optional<Index> m;
  /// Sensing: m = ν·r(n1 + n2 − r).
  std::optional<double> nu;
  /// Fraction of the candidate entries (sensing: all n1·n2 inner products;
  /// correlation: off-diagonal upper entries; covariance: upper entries).
  std::optional<double> sample_ratio;
  /// Symmetric kinds: m = oversampling · r(2n − r + 1)/2.
  std::optional<double> oversampling;

  /// Sensing: number of exactly known entries.
  int num_fixed = 5;
  /// Symmetric kinds: known diagonal / off-diagonal entries. The correlation
  /// kind always pins the whole diagonal.
  int num_fixed_diag = 0;
  int num_fixed_offdiag = 0;

  double noise_level = 0.1;
  /// δ = delta_factor·‖b‖.
  double delta_factor = 0.1;
  std::uint64_t seed = 0;
  /// Upper bound on the dense sensing operator's storage.
  std::size_t memory_budget_bytes = std::size_t{2} << 30;

  void validate() const;
  [[nodiscard]] Index measurement_count() const;
};

/// Oversampling factor that keeps m/dof equal to a reference sample ratio at
/// order n_ref, where dof = r(2n − r + 1)/2 and the ratio counts `pairs` entries.
double dof_matched_oversampling(double ref_ratio, Index n_ref, int r, bool include_diagonal);

struct SensingInstance {
  SensingProblem problem;
  Matrix Xbar;
  Vector noise;
};

struct CompletionInstance {
  PSDCompletionProblem problem;
  Matrix Xbar;
  Vector noise;
  /// λ₁(X̄)/λ_r(X̄).
  double eigr = 0.0;
};

SensingInstance gen_sensing(const GeneratorSpec& spec);
CompletionInstance gen_correlation(const GeneratorSpec& spec);
CompletionInstance gen_covariance(const GeneratorSpec& spec);

struct ExperimentRecord {
  std::string label;
  GeneratorSpec spec;
  MultistageConfig config;
  Index m = 0;
  std::optional<double> eigr;
  std::vector<StageTrace> stages;
  std::string stop_reason;
  double generation_seconds = 0.0;
  double total_seconds = 0.0;
  bool ok = true;
  std::string error;

  [[nodiscard]] int final_stage() const { return stages.empty() ? 0 : stages.back().k; }
};

struct GridPoint {
  std::string label;
  GeneratorSpec spec;
};

/// Sensing ν-sweep: one point per (ν, seed).
std::vector<GridPoint> nu_grid(const GeneratorSpec& base, const std::vector<double>& nus,
                               const std::vector<std::uint64_t>& seeds);

/// Generates and solves one point; failures are captured in the record.
ExperimentRecord run_point(const GridPoint& point, const MultistageConfig& cfg);

/// Runs every point on `workers` threads (each owns its solver and streams).
/// With `out_dir` set, writes records.json, stages.csv and summary.csv.
std::vector<ExperimentRecord> run_grid(const std::vector<GridPoint>& points, const MultistageConfig& cfg,
                                       const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                       int workers = 1);

void write_stages_csv(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records);
void write_summary_csv(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records);

}  // namespace mscr
