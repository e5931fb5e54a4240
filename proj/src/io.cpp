#include "meal/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "meal/errors.hpp"

namespace meal {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void schema_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kSchemaError, "schema error at '" + field + "': " + what);
}

const json& member(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path + "." + key, "missing field");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  schema_error(path, "expected a number, \"inf\" or \"-inf\"");
}

Vector vector(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

Matrix matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) schema_error(path, "expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const Vector row = vector(j[i], row_path);
    if (static_cast<std::size_t>(row.size()) != cols) schema_error(row_path, "ragged row");
    M.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return M;
}

json to_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(to_json(v(i)));
  return out;
}

json to_json(const Matrix& M) {
  json out = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) out.push_back(to_json(Vector(M.row(i).transpose())));
  return out;
}

json class_to_json(const ImplicitClass& cls) {
  return std::visit(
      Overloaded{[](const UnknownClass&) { return json(nullptr); },
                 [](const LipschitzSubgradient& c) {
                   return json{{"kind", "lipschitz"}, {"constant", c.lipschitz}};
                 },
                 [](const BoundedSubgradient& c) {
                   return json{{"kind", "bounded"}, {"constant", c.bound}};
                 }},
      cls);
}

ImplicitClass class_from_json(const json& j, const std::string& path) {
  if (j.is_null()) return UnknownClass{};
  const auto kind = member(j, "kind", path);
  const double constant = number(member(j, "constant", path), path + ".constant");
  if (kind == "lipschitz") return LipschitzSubgradient{constant};
  if (kind == "bounded") return BoundedSubgradient{constant};
  schema_error(path + ".kind", "expected \"lipschitz\" or \"bounded\"");
}

json quad_fields(const QuadraticForm& q) {
  return json{{"Q", to_json(q.Q)}, {"r", to_json(q.r)}, {"c", q.c}};
}

QuadraticForm quad_from_json(const json& j, const std::string& path) {
  QuadraticForm q;
  q.Q = matrix(member(j, "Q", path), path + ".Q");
  q.r = vector(member(j, "r", path), path + ".r");
  q.c = j.contains("c") ? number(j["c"], path + ".c") : 0.0;
  return q;
}

json prox_to_json(const ProxFunction& g) {
  json out = std::visit(
      Overloaded{
          [](const Zero&) { return json{{"kind", "zero"}}; },
          [](const QuadraticForm& q) {
            json j = quad_fields(q);
            j["kind"] = "quadratic";
            return j;
          },
          [](const BoxIndicator& b) {
            return json{{"kind", "box"}, {"lower", to_json(b.lower)}, {"upper", to_json(b.upper)}};
          },
          [](const L1& l) { return json{{"kind", "l1"}, {"weight", l.weight}}; },
          [](const Scad& s) { return json{{"kind", "scad"}, {"lambda", s.lambda}, {"a", s.a}}; },
          [](const Mcp& p) { return json{{"kind", "mcp"}, {"lambda", p.lambda}, {"a", p.a}}; },
          [](const PointwiseMin& pm) {
            json pieces = json::array();
            for (const auto& piece : pm.pieces) {
              json j = quad_fields(piece.quad);
              j["lower"] = to_json(piece.box.lower);
              j["upper"] = to_json(piece.box.upper);
              pieces.push_back(j);
            }
            return json{{"kind", "pointwise_min"}, {"pieces", pieces}};
          }},
      g.kind());
  out["rho"] = g.weak_convexity();
  out["implicit_class"] = class_to_json(g.implicit_class());
  return out;
}

ProxFunction prox_from_json(const json& j, const std::string& path) {
  const json& kind_j = member(j, "kind", path);
  if (!kind_j.is_string()) schema_error(path + ".kind", "expected a string");
  const auto kind = kind_j.get<std::string>();
  auto num = [&](const char* key) { return number(member(j, key, path), path + "." + key); };
  std::optional<ProxFunction> g;
  try {
    if (kind == "zero") {
      g = ProxFunction::zero();
    } else if (kind == "quadratic") {
      const auto q = quad_from_json(j, path);
      g = ProxFunction::quadratic(q.Q, q.r, q.c);
    } else if (kind == "box") {
      g = ProxFunction::box(vector(member(j, "lower", path), path + ".lower"),
                            vector(member(j, "upper", path), path + ".upper"));
    } else if (kind == "l1") {
      g = ProxFunction::l1(num("weight"));
    } else if (kind == "scad") {
      g = ProxFunction::scad(num("lambda"), num("a"));
    } else if (kind == "mcp") {
      g = ProxFunction::mcp(num("lambda"), num("a"));
    } else if (kind == "pointwise_min") {
      const json& pieces_j = member(j, "pieces", path);
      if (!pieces_j.is_array()) schema_error(path + ".pieces", "expected an array");
      std::vector<QuadraticPiece> pieces;
      for (std::size_t i = 0; i < pieces_j.size(); ++i) {
        const std::string p = path + ".pieces[" + std::to_string(i) + "]";
        pieces.push_back({quad_from_json(pieces_j[i], p),
                          BoxIndicator{vector(member(pieces_j[i], "lower", p), p + ".lower"),
                                       vector(member(pieces_j[i], "upper", p), p + ".upper")}});
      }
      g = ProxFunction::pointwise_min(std::move(pieces));
    } else {
      schema_error(path + ".kind", "unknown kind '" + kind + "'");
    }
    if (j.contains("rho") && num("rho") > g->weak_convexity()) {
      g = g->with_weak_convexity(num("rho"));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSchemaError) throw;
    schema_error(path, e.what());
  }
  if (j.contains("implicit_class")) {
    g = g->with_implicit_class(class_from_json(j["implicit_class"], path + ".implicit_class"));
  }
  return *g;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string trace_to_csv(const Trace& trace) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const auto& row : trace.rows) {
    out += std::to_string(row.k);
    for (double v : {row.objective, row.feasibility, row.stationarity, row.lyapunov,
                     row.lambda_norm, row.xz_gap, row.wall_time}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
  os << text;
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  write_text(path, trace_to_csv(trace));
}

Problem parse_problem(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(ErrorCode::kSchemaError, "schema error at line " + std::to_string(line) +
                                             ", column " + std::to_string(column) +
                                             ": malformed JSON");
  }
  const Matrix A = matrix(member(doc, "A", "$"), "$.A");
  const Vector b = vector(member(doc, "b", "$"), "$.b");
  const json& objective = member(doc, "objective", "$");
  const ProxFunction g = prox_from_json(member(objective, "prox", "$.objective"), "$.objective.prox");
  try {
    LinearConstraint constraint(A, b);
    std::optional<Problem> problem;
    if (objective.contains("smooth") && !objective["smooth"].is_null()) {
      const json& s = objective["smooth"];
      const std::string path = "$.objective.smooth";
      const json& kind = member(s, "kind", path);
      if (kind != "quadratic") schema_error(path + ".kind", "only \"quadratic\" is supported");
      const auto q = quad_from_json(s, path);
      problem.emplace(constraint, SmoothFunction::quadratic(q.Q, q.r, q.c), g);
    } else {
      problem.emplace(constraint, g);
    }
    if (objective.contains("implicit_class")) {
      problem = problem->with_objective_class(
          class_from_json(objective["implicit_class"], "$.objective.implicit_class"));
    }
    return *problem;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSchemaError) throw;
    schema_error("$", e.what());
  }
}

Problem load_problem(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kSchemaError, "cannot open problem file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_problem(ss.str());
}

std::string serialize_problem(const Problem& problem) {
  json objective;
  if (problem.composite()) {
    const auto& q = problem.smooth()->quadratic_form();
    if (!q) {
      throw Error(ErrorCode::kSchemaError,
                  "only quadratic smooth parts can be serialized");
    }
    json s = quad_fields(*q);
    s["kind"] = "quadratic";
    objective["smooth"] = s;
  }
  objective["prox"] = prox_to_json(problem.prox_part());
  objective["implicit_class"] = class_to_json(problem.objective_class());
  json doc{{"A", to_json(problem.A())}, {"b", to_json(problem.b())}, {"objective", objective}};
  return doc.dump(2) + "\n";
}

void save_problem(const Problem& problem, const std::filesystem::path& path) {
  write_text(path, serialize_problem(problem));
}

}  // namespace meal
