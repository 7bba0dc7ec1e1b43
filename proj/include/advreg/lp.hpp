#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advreg/core.hpp"

namespace advreg {

enum class Sense { LessEqual, Equal, GreaterEqual };

struct LinearConstraint {
  Vector coeffs;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
};

/// minimize c.x subject to rows and finite per-variable boxes.
struct LinearProgram {
  Vector objective;
  std::vector<LinearConstraint> constraints;
  Vector lower;
  Vector upper;

  LinearProgram() = default;
  explicit LinearProgram(std::size_t n_vars)
      : objective(Vector::Zero(static_cast<Eigen::Index>(n_vars))),
        lower(Vector::Zero(static_cast<Eigen::Index>(n_vars))),
        upper(Vector::Zero(static_cast<Eigen::Index>(n_vars))) {}

  std::size_t n_vars() const { return static_cast<std::size_t>(objective.size()); }

  void add_row(const std::vector<std::pair<std::size_t, double>>& terms, Sense sense, double rhs) {
    LinearConstraint row{Vector::Zero(objective.size()), sense, rhs};
    for (const auto& [index, value] : terms) {
      detail::require(index < n_vars(), "constraint term references unknown variable");
      row.coeffs(static_cast<Eigen::Index>(index)) += value;
    }
    constraints.push_back(std::move(row));
  }

  void validate() const {
    const auto n = objective.size();
    detail::require(lower.size() == n && upper.size() == n, "bounds must cover every variable");
    detail::require(objective.allFinite() && lower.allFinite() && upper.allFinite(),
                    "objective and bounds must be finite");
    detail::require((lower.array() <= upper.array()).all(), "lower bound exceeds upper bound");
    for (const auto& row : constraints) {
      detail::require(row.coeffs.size() == n, "constraint width must match variable count");
      detail::require(row.coeffs.allFinite() && std::isfinite(row.rhs), "constraint data must be finite");
    }
  }

  /// Largest violation of any row or bound at `x` (0 when feasible).
  double max_violation(const Eigen::Ref<const Vector>& x) const {
    double worst = 0.0;
    for (const auto& row : constraints) {
      const double lhs = row.coeffs.dot(x);
      switch (row.sense) {
        case Sense::LessEqual: worst = std::max(worst, lhs - row.rhs); break;
        case Sense::GreaterEqual: worst = std::max(worst, row.rhs - lhs); break;
        case Sense::Equal: worst = std::max(worst, std::abs(lhs - row.rhs)); break;
      }
    }
    worst = std::max(worst, (lower - x).maxCoeff());
    worst = std::max(worst, (x - upper).maxCoeff());
    return worst;
  }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterationLimit: return "iteration_limit";
  }
  return "unknown";
}

struct MILPSolution {
  SolveStatus status = SolveStatus::Infeasible;
  Vector x;
  double objective = kInfinity;
  std::size_t nodes_explored = 0;
  std::size_t iterations = 0;  // simplex pivots

  bool optimal() const { return status == SolveStatus::Optimal; }
};

struct SimplexOptions {
  std::size_t max_iterations = 0;  // 0: 10 * (vars + constraints)^2
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
};

namespace detail {

/// Dense simplex tableau. Rows 0..m-1 are constraints, row m holds reduced
/// costs; the last column holds the right-hand side (and -objective in row m).
class Tableau {
 public:
  Tableau(Matrix a, Vector b, std::vector<Eigen::Index> basis)
      : table_(a.rows() + 1, a.cols() + 1), basis_(std::move(basis)) {
    table_.topLeftCorner(a.rows(), a.cols()) = a;
    table_.topRightCorner(a.rows(), 1) = b;
    table_.row(a.rows()).setZero();
  }

  Eigen::Index rows() const { return table_.rows() - 1; }
  Eigen::Index cols() const { return table_.cols() - 1; }
  const std::vector<Eigen::Index>& basis() const { return basis_; }
  double rhs(Eigen::Index i) const { return table_(i, cols()); }
  double entry(Eigen::Index i, Eigen::Index j) const { return table_(i, j); }
  double objective() const { return -table_(rows(), cols()); }

  /// Loads cost vector c (length cols()) and prices out the current basis.
  void set_costs(const Vector& costs) {
    auto z = table_.row(rows());
    z.setZero();
    z.head(cols()) = costs.transpose();
    for (Eigen::Index i = 0; i < rows(); ++i) {
      const double cb = costs(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) z -= cb * table_.row(i);
    }
  }

  void pivot(Eigen::Index r, Eigen::Index c) {
    const double pivot_value = table_(r, c);
    table_.row(r) /= pivot_value;
    for (Eigen::Index i = 0; i < table_.rows(); ++i) {
      if (i == r) continue;
      const double factor = table_(i, c);
      if (factor != 0.0) table_.row(i) -= factor * table_.row(r);
    }
    table_(r, c) = 1.0;
    basis_[static_cast<std::size_t>(r)] = c;
  }

  void remove_row(Eigen::Index r) {
    const Eigen::Index last = table_.rows() - 1;
    RowMatrix next(table_.rows() - 1, table_.cols());
    next.topRows(r) = table_.topRows(r);
    next.bottomRows(last - r) = table_.bottomRows(last - r);
    table_ = std::move(next);
    basis_.erase(basis_.begin() + r);
  }

  /// Primal simplex on the loaded costs. Dantzig pricing, switching to
  /// Bland's rule after `bland_after` consecutive degenerate pivots.
  SolveStatus run(const std::vector<bool>& allowed, const SimplexOptions& opt, std::size_t max_iterations,
                  std::size_t bland_after, std::size_t& iterations) {
    std::size_t degenerate = 0;
    bool bland = false;
    const Eigen::Index m = rows();
    const Eigen::Index n = cols();
    for (;;) {
      if (iterations >= max_iterations) return SolveStatus::IterationLimit;
      Eigen::Index enter = -1;
      double best = -opt.optimality_tol;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!allowed[static_cast<std::size_t>(j)]) continue;
        const double d = table_(m, j);
        if (d < best) {
          enter = j;
          if (bland) break;
          best = d;
        }
      }
      if (enter < 0) return SolveStatus::Optimal;

      Eigen::Index leave = -1;
      double best_ratio = kInfinity;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double a = table_(i, enter);
        if (a <= opt.pivot_tol) continue;
        const double ratio = std::max(0.0, table_(i, n)) / a;
        if (leave < 0 || ratio < best_ratio - 1e-12) {
          leave = i;
          best_ratio = ratio;
        } else if (ratio <= best_ratio + 1e-12) {
          const bool better = bland ? basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]
                                    : a > table_(leave, enter);
          if (better) {
            leave = i;
            best_ratio = std::min(best_ratio, ratio);
          }
        }
      }
      if (leave < 0) return SolveStatus::Unbounded;

      if (best_ratio * std::abs(table_(m, enter)) <= 1e-12) {
        if (++degenerate >= bland_after) bland = true;
      } else {
        degenerate = 0;
      }
      pivot(leave, enter);
      for (Eigen::Index i = 0; i < m; ++i)
        if (table_(i, n) < 0 && table_(i, n) > -opt.feasibility_tol) table_(i, n) = 0.0;
      ++iterations;
    }
  }

 private:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMatrix table_;
  std::vector<Eigen::Index> basis_;
};

}  // namespace detail

/// Two-phase dense-tableau simplex. Variables are shifted to their lower
/// bounds; fixed variables are eliminated and finite upper bounds become rows.
inline MILPSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  lp.validate();
  const auto n = static_cast<Eigen::Index>(lp.n_vars());
  MILPSolution result;

  std::vector<Eigen::Index> free_vars;
  for (Eigen::Index j = 0; j < n; ++j)
    if (lp.upper(j) > lp.lower(j)) free_vars.push_back(j);
  const auto nf = static_cast<Eigen::Index>(free_vars.size());

  struct Row {
    Vector a;  // over free variables
    Sense sense;
    double b;
  };
  std::vector<Row> rows;
  const double scale = 1.0 + lp.lower.cwiseAbs().maxCoeff() + lp.upper.cwiseAbs().maxCoeff();
  for (const auto& c : lp.constraints) {
    Row row{Vector(nf), c.sense, c.rhs - c.coeffs.dot(lp.lower)};
    for (Eigen::Index k = 0; k < nf; ++k) row.a(k) = c.coeffs(free_vars[static_cast<std::size_t>(k)]);
    if (nf == 0 || row.a.cwiseAbs().maxCoeff() <= 0.0) {
      const double tol = 1e-9 * (1.0 + std::abs(c.rhs) + c.coeffs.cwiseAbs().maxCoeff() * scale);
      const bool ok = (c.sense == Sense::LessEqual && row.b >= -tol) ||
                      (c.sense == Sense::GreaterEqual && row.b <= tol) ||
                      (c.sense == Sense::Equal && std::abs(row.b) <= tol);
      if (!ok) return result;  // Infeasible
      continue;
    }
    rows.push_back(std::move(row));
  }
  for (Eigen::Index k = 0; k < nf; ++k) {
    const auto j = free_vars[static_cast<std::size_t>(k)];
    Row row{Vector::Zero(nf), Sense::LessEqual, lp.upper(j) - lp.lower(j)};
    row.a(k) = 1.0;
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    if (row.b < 0) {
      row.a = -row.a;
      row.b = -row.b;
      if (row.sense == Sense::LessEqual) row.sense = Sense::GreaterEqual;
      else if (row.sense == Sense::GreaterEqual) row.sense = Sense::LessEqual;
    }
  }

  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::Index n_slack = 0;
  Eigen::Index n_art = 0;
  for (const auto& row : rows) {
    if (row.sense != Sense::Equal) ++n_slack;
    if (row.sense != Sense::LessEqual) ++n_art;
  }
  const Eigen::Index total = nf + n_slack + n_art;
  Matrix a = Matrix::Zero(m, total);
  Vector b(m);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  std::vector<bool> artificial(static_cast<std::size_t>(total), false);
  {
    Eigen::Index slack = nf;
    Eigen::Index art = nf + n_slack;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i)];
      a.row(i).head(nf) = row.a.transpose();
      b(i) = row.b;
      if (row.sense == Sense::LessEqual) {
        a(i, slack) = 1.0;
        basis[static_cast<std::size_t>(i)] = slack++;
      } else {
        if (row.sense == Sense::GreaterEqual) a(i, slack++) = -1.0;
        a(i, art) = 1.0;
        artificial[static_cast<std::size_t>(art)] = true;
        basis[static_cast<std::size_t>(i)] = art++;
      }
    }
  }

  const std::size_t cap =
      opt.max_iterations ? opt.max_iterations
                         : 10 * static_cast<std::size_t>((n + lp.constraints.size()) * (n + lp.constraints.size()));
  const std::size_t bland_after = 3 * static_cast<std::size_t>(std::max<Eigen::Index>(total, 1));
  detail::Tableau tableau(a, b, basis);
  std::vector<Eigen::Index> kept_rows(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) kept_rows[static_cast<std::size_t>(i)] = i;
  std::size_t iterations = 0;

  if (n_art > 0) {
    Vector phase1 = Vector::Zero(total);
    for (Eigen::Index j = 0; j < total; ++j)
      if (artificial[static_cast<std::size_t>(j)]) phase1(j) = 1.0;
    tableau.set_costs(phase1);
    std::vector<bool> allowed(static_cast<std::size_t>(total), true);
    const auto status = tableau.run(allowed, opt, cap, bland_after, iterations);
    result.iterations = iterations;
    if (status == SolveStatus::IterationLimit) {
      result.status = status;
      return result;
    }
    if (tableau.objective() > 1e-7 * (1.0 + b.cwiseAbs().maxCoeff())) return result;  // Infeasible

    // Drive remaining artificials out of the basis; drop redundant rows.
    for (Eigen::Index i = tableau.rows(); i-- > 0;) {
      const auto basic = tableau.basis()[static_cast<std::size_t>(i)];
      if (!artificial[static_cast<std::size_t>(basic)]) continue;
      Eigen::Index col = -1;
      double best = 1e-9;
      for (Eigen::Index j = 0; j < total; ++j) {
        if (artificial[static_cast<std::size_t>(j)]) continue;
        if (std::abs(tableau.entry(i, j)) > best) {
          best = std::abs(tableau.entry(i, j));
          col = j;
        }
      }
      if (col >= 0) {
        tableau.pivot(i, col);
      } else {
        tableau.remove_row(i);
        kept_rows.erase(kept_rows.begin() + i);
      }
    }
  }

  Vector costs = Vector::Zero(total);
  for (Eigen::Index k = 0; k < nf; ++k) costs(k) = lp.objective(free_vars[static_cast<std::size_t>(k)]);
  tableau.set_costs(costs);
  std::vector<bool> allowed(static_cast<std::size_t>(total));
  for (Eigen::Index j = 0; j < total; ++j) allowed[static_cast<std::size_t>(j)] = !artificial[static_cast<std::size_t>(j)];
  const auto status = tableau.run(allowed, opt, cap, bland_after, iterations);
  result.iterations = iterations;
  if (status != SolveStatus::Optimal) {
    result.status = status;
    return result;
  }

  const Eigen::Index basic_rows = tableau.rows();
  Vector shifted = Vector::Zero(total);
  for (Eigen::Index i = 0; i < basic_rows; ++i)
    shifted(tableau.basis()[static_cast<std::size_t>(i)]) = std::max(0.0, tableau.rhs(i));

  // Re-solve the basic variables against the untouched constraint data to
  // shed round-off accumulated over the pivots.
  if (basic_rows > 0) {
    Matrix basis_matrix(basic_rows, basic_rows);
    Vector rhs(basic_rows);
    for (Eigen::Index i = 0; i < basic_rows; ++i) {
      const auto r = kept_rows[static_cast<std::size_t>(i)];
      rhs(i) = b(r);
      for (Eigen::Index k = 0; k < basic_rows; ++k)
        basis_matrix(i, k) = a(r, tableau.basis()[static_cast<std::size_t>(k)]);
    }
    Eigen::PartialPivLU<Matrix> lu(basis_matrix);
    const Vector refined = lu.solve(rhs);
    double drift = 0.0;
    for (Eigen::Index k = 0; k < basic_rows; ++k)
      drift = std::max(drift, std::abs(refined(k) - shifted(tableau.basis()[static_cast<std::size_t>(k)])));
    if (refined.allFinite() && drift < 1e-6 * (1.0 + b.cwiseAbs().maxCoeff())) {
      for (Eigen::Index k = 0; k < basic_rows; ++k)
        shifted(tableau.basis()[static_cast<std::size_t>(k)]) = std::max(0.0, refined(k));
    }
  }

  result.x = lp.lower;
  for (Eigen::Index k = 0; k < nf; ++k) {
    const auto j = free_vars[static_cast<std::size_t>(k)];
    result.x(j) = std::clamp(lp.lower(j) + shifted(k), lp.lower(j), lp.upper(j));
  }
  result.objective = lp.objective.dot(result.x);
  result.status = SolveStatus::Optimal;
  return result;
}

// --- debug dump -----------------------------------------------------------------

inline std::string sense_symbol(Sense s) {
  switch (s) {
    case Sense::LessEqual: return "<=";
    case Sense::Equal: return "=";
    case Sense::GreaterEqual: return ">=";
  }
  return "?";
}

inline Sense sense_from_symbol(const std::string& s) {
  if (s == "<=") return Sense::LessEqual;
  if (s == "=") return Sense::Equal;
  if (s == ">=") return Sense::GreaterEqual;
  throw ParseError("unknown constraint sense '" + s + "'");
}

}  // namespace advreg
