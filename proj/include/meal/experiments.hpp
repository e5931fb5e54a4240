#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "meal/diagnostics.hpp"
#include "meal/problem.hpp"
#include "meal/solvers.hpp"

namespace meal {

enum class ExperimentId { kExp1, kExp2, kCustom };

std::string to_string(ExperimentId id);

/// One grid entry; `label` names the output file (<label>.csv).
struct RunSpec {
  std::string label;
  SolverConfig config;
  /// Zeros when omitted.
  std::optional<IterateState> init;
};

struct ExperimentSpec {
  ExperimentId id = ExperimentId::kExp1;
  std::uint64_t seed = 42;
  int m = 5;
  int n = 20;
  /// Empty means the default grid of the experiment.
  std::vector<RunSpec> grid;
  /// Problem for kCustom.
  std::optional<Problem> problem;
};

/// min x² − y² s.t. x = y, x ∈ [−1, 1].
Problem build_exp1();

/// Starting point of the Exp1 runs: x⁰ = z⁰ = (½, −½), λ⁰ = 0.
IterateState exp1_initial_state();

/// Random box-constrained QP: Q = (G + Gᵀ)/2, r, A, x̃ ~ U[0,1] drawn in that
/// order from SplitMix64(seed); b = A x̃; 0 ≤ x ≤ 1.
Problem build_exp2(std::uint64_t seed, int m = 5, int n = 20);

struct Exp2Params {
  double q_norm;
  double a_norm_sq;
  double gamma;  // 1/(2‖Q‖)
  double p;      // 2‖Q‖
  double s;      // 1/(2(‖Q‖ + p + β‖A‖²))
};

Exp2Params exp2_params(const Problem& problem, double beta = 50.0);

std::vector<RunSpec> default_grid(ExperimentId id, const Problem& problem);

struct RunResult {
  std::string label;
  std::optional<Trace> trace;
  std::string error;
  /// First k with stationarity and feasibility both within tolerance.
  std::optional<int> iterations_to_tol;
  std::optional<RateFit> rate;
};

struct ExperimentBundle {
  ExperimentId id = ExperimentId::kExp1;
  std::vector<RunResult> runs;
};

ExperimentBundle run_experiment(const ExperimentSpec& spec);

std::string summary_csv(const ExperimentBundle& bundle);

/// Writes <dir>/<label>.csv per run plus <dir>/summary.csv.
void write_bundle(const ExperimentBundle& bundle, const std::filesystem::path& dir);

}  // namespace meal
