#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "advreg/advreg.hpp"

namespace advreg::testing {

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(engine); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  Vector normal_vector(Eigen::Index n, double sd = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(sd);
    return v;
  }
};

/// Sensor s predicted from every other column with Gaussian weights.
inline PredictorBank random_linear_bank(Rng& rng, std::size_t d, std::size_t n_detectors, double weight_sd = 0.5) {
  PredictorBank bank;
  std::vector<SensorId> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng.engine);
  order.resize(std::min(n_detectors, d));
  std::sort(order.begin(), order.end());
  for (SensorId s : order) {
    Detector det;
    det.sensor = s;
    for (SensorId j = 0; j < d; ++j)
      if (j != s) det.features.push_back(j);
    LinearModel m;
    m.weights = rng.normal_vector(static_cast<Eigen::Index>(det.features.size()), weight_sd);
    m.bias = rng.normal();
    det.model = m;
    bank.detectors.push_back(std::move(det));
  }
  return bank;
}

/// Thresholds that leave the clean reading quiet with random slack.
inline ThresholdConfig slack_thresholds(Rng& rng, const PredictorBank& bank, const Vector& y, double lo = 0.1,
                                        double hi = 1.5) {
  ThresholdConfig tau;
  for (const auto& d : bank.detectors) tau.tau[d.sensor] = d.residual(y) + rng.uniform(lo, hi);
  return tau;
}

/// Random instance over d columns: every column attackable, 1 or 2 critical
/// targets, box of half-width `box` around y, and a random mix of finite and
/// infinite eta.
inline AttackInstance random_instance(Rng& rng, std::size_t d, std::size_t budget, double box = 5.0) {
  AttackInstance inst;
  inst.y = rng.normal_vector(static_cast<Eigen::Index>(d), 2.0);
  for (SensorId s = 0; s < d; ++s) inst.attackable.push_back(s);
  inst.critical.push_back(rng.index(d));
  if (d > 1 && rng.coin()) {
    const SensorId other = rng.index(d);
    if (other != inst.critical.front()) inst.critical.push_back(other);
  }
  inst.budget = std::min(budget, d);
  inst.box_lower = inst.y.array() - box;
  inst.box_upper = inst.y.array() + box;
  inst.eta = Vector(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < inst.eta.size(); ++i) inst.eta(i) = rng.coin(0.3) ? kInfinity : rng.uniform(0.5, 4.0);
  inst.direction = rng.coin(0.8) ? Direction::Minimize : Direction::Maximize;
  return inst;
}

/// LP optimum by enumerating every basic solution: pick n constraints from
/// the rows and variable bounds, solve them as equalities, keep the feasible
/// points. Needs finite bounds on every variable. Returns nothing if no
/// vertex is feasible.
inline std::optional<double> lp_vertex_oracle(const LinearProgram& full, double tol = 1e-8) {
  // Substitute fixed variables so the enumeration runs over the free ones.
  std::vector<Eigen::Index> free_vars;
  for (Eigen::Index j = 0; j < full.lower.size(); ++j)
    if (full.upper(j) > full.lower(j)) free_vars.push_back(j);
  Vector fixed = full.lower;
  for (Eigen::Index j : free_vars) fixed(j) = 0.0;
  const double offset = full.objective.dot(fixed);
  if (free_vars.empty()) {
    if (full.max_violation(full.lower) > tol * (1.0 + full.lower.cwiseAbs().maxCoeff())) return std::nullopt;
    return offset;
  }
  LinearProgram lp(free_vars.size());
  for (std::size_t k = 0; k < free_vars.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    lp.objective(kk) = full.objective(free_vars[k]);
    lp.lower(kk) = full.lower(free_vars[k]);
    lp.upper(kk) = full.upper(free_vars[k]);
  }
  for (const auto& c : full.constraints) {
    Vector coeffs(static_cast<Eigen::Index>(free_vars.size()));
    for (std::size_t k = 0; k < free_vars.size(); ++k) coeffs(static_cast<Eigen::Index>(k)) = c.coeffs(free_vars[k]);
    lp.constraints.push_back({coeffs, c.sense, c.rhs - c.coeffs.dot(fixed)});
  }

  const auto n = static_cast<Eigen::Index>(lp.n_vars());
  std::vector<Vector> rows;
  std::vector<double> rhs;
  for (const auto& c : lp.constraints) {
    rows.push_back(c.coeffs);
    rhs.push_back(c.rhs);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector e = Vector::Zero(n);
    e(j) = 1.0;
    rows.push_back(e);
    rhs.push_back(lp.lower(j));
    rows.push_back(e);
    rhs.push_back(lp.upper(j));
  }
  // Equalities need no special handling: the feasibility check enforces them
  // and every vertex has n independent active rows among all of these.
  const std::size_t total = rows.size();
  const std::size_t pick = static_cast<std::size_t>(n);

  std::optional<double> best;
  std::vector<std::size_t> choice(pick);
  auto feasible = [&](const Vector& x) {
    for (Eigen::Index j = 0; j < n; ++j)
      if (x(j) < lp.lower(j) - tol || x(j) > lp.upper(j) + tol) return false;
    for (const auto& c : lp.constraints) {
      const double v = c.coeffs.dot(x);
      const double scale = tol * (1.0 + std::abs(c.rhs));
      if (c.sense == Sense::LessEqual && v > c.rhs + scale) return false;
      if (c.sense == Sense::GreaterEqual && v < c.rhs - scale) return false;
      if (c.sense == Sense::Equal && std::abs(v - c.rhs) > scale) return false;
    }
    return true;
  };
  auto visit = [&](const std::vector<std::size_t>& active) {
    Matrix a(n, n);
    Vector b(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      a.row(r) = rows[active[static_cast<std::size_t>(r)]].transpose();
      b(r) = rhs[active[static_cast<std::size_t>(r)]];
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.rank() < n) return;
    const Vector x = lu.solve(b);
    if (!x.allFinite() || !feasible(x)) return;
    const double value = lp.objective.dot(x) + offset;
    if (!best || value < *best) best = value;
  };

  // Iterate over combinations of `pick` optional rows.
  if (pick > total) return best;
  for (std::size_t i = 0; i < pick; ++i) choice[i] = i;
  for (;;) {
    visit(choice);
    std::size_t k = pick;
    while (k > 0 && choice[k - 1] == total - pick + k - 1) --k;
    if (k == 0) break;
    ++choice[k - 1];
    for (std::size_t i = k; i < pick; ++i) choice[i] = choice[i - 1] + 1;
  }
  return best;
}

/// Optimal value from solve_lp, or nothing when it is not Optimal.
inline std::optional<double> lp_simplex_value(const LinearProgram& lp) {
  const MILPSolution s = solve_lp(lp);
  if (!s.optimal()) return std::nullopt;
  return s.objective;
}

/// MILP optimum by fixing every binary assignment and solving the remaining
/// LP with `lp_value` (lp_vertex_oracle or lp_simplex_value).
template <typename LpValue>
std::optional<double> milp_enumeration_oracle(const MILPProblem& p, LpValue&& lp_value) {
  const std::size_t nb = p.binary_vars.size();
  std::optional<double> best;
  for (std::uint32_t mask = 0; mask < (std::uint32_t{1} << nb); ++mask) {
    LinearProgram lp = p.lp;
    bool allowed = true;
    for (std::size_t b = 0; b < nb; ++b) {
      const auto k = static_cast<Eigen::Index>(p.binary_vars[b]);
      const double v = (mask >> b) & 1u ? 1.0 : 0.0;
      if (v < lp.lower(k) || v > lp.upper(k)) allowed = false;
      lp.lower(k) = lp.upper(k) = v;
    }
    if (!allowed) continue;
    const std::optional<double> value = lp_value(lp);
    if (value && (!best || *value < *best)) best = value;
  }
  return best;
}

/// Random mixed-binary problem with finite bounds: `n_cont` continuous
/// variables in [-5, 5] and `n_bin` binaries, random <= / >= / = rows.
inline MILPProblem random_milp(Rng& rng, std::size_t n_cont, std::size_t n_bin, std::size_t n_rows) {
  MILPProblem p;
  const std::size_t n = n_cont + n_bin;
  p.lp = LinearProgram(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    p.lp.objective(k) = rng.normal();
    if (j < n_cont) {
      p.lp.lower(k) = -rng.uniform(0.0, 5.0);
      p.lp.upper(k) = rng.uniform(0.0, 5.0);
    } else {
      p.lp.lower(k) = 0.0;
      p.lp.upper(k) = 1.0;
      p.binary_vars.push_back(j);
    }
  }
  for (std::size_t r = 0; r < n_rows; ++r) {
    Vector coeffs(static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < coeffs.size(); ++k) coeffs(k) = rng.coin(0.7) ? std::round(rng.normal(2.0) * 4) / 4 : 0.0;
    const double u = rng.uniform(0.0, 1.0);
    const Sense sense = u < 0.6 ? Sense::LessEqual : (u < 0.9 ? Sense::GreaterEqual : Sense::Equal);
    double rhs = rng.normal(2.0);
    if (sense == Sense::LessEqual) rhs = std::abs(rhs) + 0.5;
    if (sense == Sense::GreaterEqual) rhs = -std::abs(rhs) - 0.5;
    p.lp.constraints.push_back({coeffs, sense, rhs});
  }
  return p;
}

/// Tanh network with random weights and identity scaling.
inline NeuralModel random_network(Rng& rng, std::size_t n_in, const std::vector<int>& hidden, double sd = 0.8) {
  NeuralModel m;
  std::size_t width = n_in;
  for (int h : hidden) {
    DenseLayer layer;
    layer.weights = Matrix(h, static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = rng.normal(sd);
    layer.bias = rng.normal_vector(h, sd);
    m.layers.push_back(std::move(layer));
    width = static_cast<std::size_t>(h);
  }
  DenseLayer out;
  out.weights = Matrix(1, static_cast<Eigen::Index>(width));
  for (Eigen::Index i = 0; i < out.weights.size(); ++i) out.weights.data()[i] = rng.normal(sd);
  out.bias = rng.normal_vector(1, sd);
  m.layers.push_back(std::move(out));
  const auto in = static_cast<Eigen::Index>(n_in);
  m.input_mean = rng.normal_vector(in, 0.5);
  m.input_scale = Vector::Constant(in, 1.0) + rng.normal_vector(in, 0.1).cwiseAbs();
  m.output_mean = rng.normal();
  m.output_scale = 1.0 + std::abs(rng.normal(0.3));
  return m;
}

/// Central differences with step h.
template <typename F>
Vector finite_difference_gradient(F&& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector up = x;
    Vector down = x;
    up(i) += h;
    down(i) -= h;
    g(i) = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

}  // namespace advreg::testing
