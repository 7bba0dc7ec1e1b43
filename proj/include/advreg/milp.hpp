#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "advreg/lp.hpp"

namespace advreg {

/// Linear program in which the listed variables must take values in {0, 1}.
struct MILPProblem {
  LinearProgram lp;
  std::vector<std::size_t> binary_vars;

  void validate() const {
    lp.validate();
    for (std::size_t j : binary_vars) {
      detail::require(j < lp.n_vars(), "binary variable index out of range");
      const auto k = static_cast<Eigen::Index>(j);
      detail::require(lp.lower(k) >= 0.0 && lp.upper(k) <= 1.0, "binary variable bounds must lie in [0, 1]");
    }
  }
};

struct MILPOptions {
  std::size_t max_nodes = 0;  // 0: 2^|binaries| + 1000
  double integrality_tol = 1e-6;
  double prune_tol = 1e-9;
  SimplexOptions simplex;
};

namespace detail {

struct BranchNode {
  Vector lower;
  Vector upper;
  double bound = -kInfinity;
};

inline std::size_t default_node_cap(std::size_t n_binaries) {
  if (n_binaries >= 40) return std::numeric_limits<std::size_t>::max() / 2;
  return (std::size_t{1} << n_binaries) + 1000;
}

}  // namespace detail

/// Branch and bound over the binaries. Dives depth-first (up-branch first when
/// the fractional value is at least 0.5) and, once a dive ends, resumes from
/// the open node with the best bound. Branches on the most fractional binary.
inline MILPSolution solve_milp(const MILPProblem& problem, const MILPOptions& opt = {}) {
  problem.validate();
  const std::size_t cap = opt.max_nodes ? opt.max_nodes : detail::default_node_cap(problem.binary_vars.size());

  MILPSolution best;
  best.status = SolveStatus::Infeasible;
  bool hit_limit = false;
  std::size_t nodes = 0;
  std::size_t pivots = 0;

  std::vector<detail::BranchNode> open;
  open.push_back({problem.lp.lower, problem.lp.upper, -kInfinity});
  std::vector<detail::BranchNode> dive;
  LinearProgram relaxation = problem.lp;

  // Rounds the binaries of an integral relaxation and re-solves with them
  // fixed, so unattacked continuous variables come back exactly.
  auto polish = [&](const Vector& x, const detail::BranchNode& node) {
    relaxation.lower = node.lower;
    relaxation.upper = node.upper;
    for (std::size_t j : problem.binary_vars) {
      const auto k = static_cast<Eigen::Index>(j);
      const double v = std::round(x(k));
      relaxation.lower(k) = v;
      relaxation.upper(k) = v;
    }
    auto fixed = solve_lp(relaxation, opt.simplex);
    pivots += fixed.iterations;
    return fixed;
  };

  while (!open.empty() || !dive.empty()) {
    if (nodes >= cap) {
      hit_limit = true;
      break;
    }
    detail::BranchNode node;
    if (!dive.empty()) {
      node = std::move(dive.back());
      dive.pop_back();
    } else {
      auto it = std::min_element(open.begin(), open.end(),
                                 [](const auto& a, const auto& b) { return a.bound < b.bound; });
      node = std::move(*it);
      open.erase(it);
    }
    if (best.status == SolveStatus::Optimal && node.bound >= best.objective - opt.prune_tol) continue;
    ++nodes;

    relaxation.lower = node.lower;
    relaxation.upper = node.upper;
    const MILPSolution relaxed = solve_lp(relaxation, opt.simplex);
    pivots += relaxed.iterations;
    if (relaxed.status == SolveStatus::IterationLimit) {
      hit_limit = true;
      continue;
    }
    if (relaxed.status != SolveStatus::Optimal) continue;
    if (best.status == SolveStatus::Optimal && relaxed.objective >= best.objective - opt.prune_tol) continue;

    std::size_t branch = problem.binary_vars.size();
    double most = opt.integrality_tol;
    for (std::size_t b = 0; b < problem.binary_vars.size(); ++b) {
      const double v = relaxed.x(static_cast<Eigen::Index>(problem.binary_vars[b]));
      const double frac = std::abs(v - std::round(v));
      if (frac > most) {
        most = frac;
        branch = b;
      }
    }

    if (branch == problem.binary_vars.size()) {
      MILPSolution candidate = polish(relaxed.x, node);
      if (candidate.status != SolveStatus::Optimal) candidate = relaxed;
      if (best.status != SolveStatus::Optimal || candidate.objective < best.objective) {
        best.status = SolveStatus::Optimal;
        best.x = candidate.x;
        best.objective = candidate.objective;
      }
      continue;
    }

    const auto k = static_cast<Eigen::Index>(problem.binary_vars[branch]);
    detail::BranchNode down{node.lower, node.upper, relaxed.objective};
    detail::BranchNode up{node.lower, node.upper, relaxed.objective};
    down.upper(k) = 0.0;
    up.lower(k) = 1.0;
    if (relaxed.x(k) >= 0.5) {
      open.push_back(std::move(down));
      dive.push_back(std::move(up));
    } else {
      open.push_back(std::move(up));
      dive.push_back(std::move(down));
    }
  }

  best.nodes_explored = nodes;
  best.iterations = pivots;
  if (hit_limit) best.status = SolveStatus::IterationLimit;
  return best;
}

/// Problem dump for cross-checking with external solvers.
inline nlohmann::json to_json(const MILPProblem& problem) {
  const auto& lp = problem.lp;
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json rows = nlohmann::json::array();
  nlohmann::json senses = nlohmann::json::array();
  std::vector<double> rhs;
  for (const auto& row : lp.constraints) {
    rows.push_back(vec(row.coeffs));
    senses.push_back(sense_symbol(row.sense));
    rhs.push_back(row.rhs);
  }
  return {{"format_version", "advreg-milp/1"},
          {"objective", vec(lp.objective)},
          {"rows", rows},
          {"senses", senses},
          {"rhs", rhs},
          {"lower", vec(lp.lower)},
          {"upper", vec(lp.upper)},
          {"binaries", problem.binary_vars}};
}

inline MILPProblem milp_from_json(const nlohmann::json& j) {
  try {
    auto vec = [](const nlohmann::json& v) {
      const auto values = v.get<std::vector<double>>();
      return Vector(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
    };
    MILPProblem p;
    p.lp.objective = vec(j.at("objective"));
    p.lp.lower = vec(j.at("lower"));
    p.lp.upper = vec(j.at("upper"));
    const auto& rows = j.at("rows");
    const auto& senses = j.at("senses");
    const auto rhs = j.at("rhs").get<std::vector<double>>();
    if (rows.size() != senses.size() || rows.size() != rhs.size()) throw ParseError("row arrays differ in length");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Sense sense = sense_from_symbol(senses[i].get<std::string>());
      p.lp.constraints.push_back({vec(rows[i]), sense, rhs[i]});
    }
    p.binary_vars = j.at("binaries").get<std::vector<std::size_t>>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed MILP JSON: ") + e.what());
  }
}

}  // namespace advreg
