#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meal/envelope.hpp"

namespace meal {

enum class Algorithm { kMeal, kImeal, kLimeal, kAlm, kProxIalm };

std::string to_string(Algorithm a);

/// ε_k = ε₀ / (k + 1)^power; square-summable for power > ½.
struct EpsilonSchedule {
  double eps0 = 1e-2;
  double power = 1.0;

  double at(int k) const;
};

/// Step parameters of the proximal inexact ALM baseline. With η = 1 the
/// method is plain iALM.
struct ProxIalmParams {
  double p;
  double s;
  double alpha_dual;
};

struct StopCriteria {
  int max_iters = 2000;
  double stat_tol = 1e-6;
  double feas_tol = 1e-6;
};

struct MonitorFlags {
  bool dual_by_primal = false;
  bool one_step_progress = false;
};

struct SolverConfig {
  Algorithm algorithm = Algorithm::kMeal;
  PenaltyPlan plan{FixedPenalty{1.0}, 0.5, 1.0};
  SubproblemOptions subproblem{};
  std::optional<EpsilonSchedule> epsilon;
  std::optional<ProxIalmParams> prox_ialm;
  StopCriteria stop{};
  MonitorFlags monitors{};

  void validate() const;
};

struct StepOutcome {
  IterateState next;
  StepReport report;
};

StepOutcome meal_step(const EnvelopeContext& ctx, const IterateState& state);
StepOutcome imeal_step(const EnvelopeContext& ctx, const IterateState& state,
                       double epsilon);
StepOutcome limeal_step(const EnvelopeContext& ctx, const IterateState& state);
/// Classic ALM: x' globally minimizes ℒ_β(·, λ); z is carried unchanged.
StepOutcome alm_step(const Problem& problem, const IterateState& state,
                     double beta);
/// Proximal inexact ALM: one projected gradient step on the proximal
/// augmented Lagrangian, then the z and λ updates.
StepOutcome prox_ialm_step(const Problem& problem, const IterateState& state,
                           double beta, double eta, const ProxIalmParams& params);

struct TraceRow {
  int k = 0;
  double objective = 0.0;
  double feasibility = 0.0;
  double stationarity = 0.0;
  double lyapunov = 0.0;
  double lambda_norm = 0.0;
  double xz_gap = 0.0;
  double wall_time = 0.0;
};

enum class TerminalStatus {
  kConverged,
  kMaxIters,
  kInnerBudgetExhausted,
  kDivergenceDetected,
};

std::string to_string(TerminalStatus s);

/// Inequality monitor verdicts for step k → k+1 (k ≥ 1).
struct MonitorRecord {
  int k = 0;
  double dual_lhs = 0.0;
  double dual_rhs = 0.0;
  double progress_lhs = 0.0;
  double progress_rhs = 0.0;
  bool dual_checked = false;
  bool progress_checked = false;
  bool dual_ok = true;
  bool progress_ok = true;
};

struct Trace {
  Algorithm algorithm = Algorithm::kMeal;
  std::vector<TraceRow> rows;
  /// Per-row gradient norm before the prefix minimum is taken.
  std::vector<double> raw_stationarity;
  std::vector<MonitorRecord> monitors;
  TerminalStatus status = TerminalStatus::kMaxIters;
  IterateState final_state;
  /// Period-two multiplier oscillation seen for 20 consecutive iterations.
  bool oscillating = false;
  /// β at iteration 0, for reporting.
  double beta = 0.0;
};

/// Monitor slack and oscillation thresholds.
inline constexpr double kMonitorSlack = 1e-9;
inline constexpr double kDivergenceThreshold = 1e12;
inline constexpr int kOscillationWindow = 20;

/// All-zero initial state for a problem.
IterateState zero_state(const Problem& problem);

/// Drives the configured algorithm from `init` (zeros when omitted).
Trace run(const Problem& problem, const SolverConfig& config,
          std::optional<IterateState> init = std::nullopt);

/// Builds the envelope context the driver would use for MEAL-type methods.
EnvelopeContext make_context(const Problem& problem, const SolverConfig& config);

}  // namespace meal
