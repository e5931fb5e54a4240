#pragma once

#include <filesystem>
#include <string>

#include "meal/problem.hpp"
#include "meal/solvers.hpp"

namespace meal {

inline constexpr const char* kTraceHeader =
    "k,objective,feasibility,stationarity,lyapunov,lambda_norm,xz_gap,wall_time";

/// Shortest decimal string that parses back to the same double; "nan",
/// "inf" and "-inf" for non-finite values.
std::string format_double(double value);

std::string trace_to_csv(const Trace& trace);
void save_trace(const Trace& trace, const std::filesystem::path& path);

/// Problem files are JSON; see docs/problem-schema.md. Throws kSchemaError
/// with line or field context.
Problem parse_problem(const std::string& text);
Problem load_problem(const std::filesystem::path& path);
std::string serialize_problem(const Problem& problem);
void save_problem(const Problem& problem, const std::filesystem::path& path);

/// Writes text to path, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace meal
