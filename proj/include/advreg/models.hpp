#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "advreg/core.hpp"

namespace advreg {

/// f(x) = w.x + b, in engineering units.
struct LinearModel {
  Vector weights;
  double bias = 0.0;
  std::vector<std::string> feature_names;

  std::size_t n_features() const { return static_cast<std::size_t>(weights.size()); }
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

/// Feed-forward network: tanh on hidden layers, identity output. Inputs are
/// z-scored with the stored scaler and the scalar output is mapped back to
/// engineering units, so callers always work in raw units.
struct NeuralModel {
  std::vector<DenseLayer> layers;  // last layer is the 1-unit output
  Vector input_mean;
  Vector input_scale;
  double output_mean = 0.0;
  double output_scale = 1.0;
  std::vector<std::string> feature_names;

  std::size_t n_features() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols());
  }
  std::size_t hidden_layers() const { return layers.empty() ? 0 : layers.size() - 1; }

  void validate() const {
    detail::require(!layers.empty(), "neural model needs an output layer");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      detail::require(layer.bias.size() == layer.weights.rows(), "layer bias size mismatch");
      if (l > 0)
        detail::require(layer.weights.cols() == layers[l - 1].weights.rows(), "incompatible layer dimensions");
      detail::require(layer.weights.allFinite() && layer.bias.allFinite(), "non-finite network parameter");
    }
    detail::require(layers.back().weights.rows() == 1, "output layer must have a single unit");
    const auto k = static_cast<Eigen::Index>(n_features());
    detail::require(input_mean.size() == k && input_scale.size() == k, "scaler size mismatch");
    detail::require((input_scale.array() > 0).all() && output_scale > 0, "scaler scales must be positive");
  }
};

/// Bagged average of a network and a linear model over the same features.
struct EnsembleModel {
  NeuralModel nn;
  LinearModel lr;

  std::size_t n_features() const { return lr.n_features(); }
};

using Predictor = std::variant<LinearModel, NeuralModel, EnsembleModel>;

enum class ModelFamily { Linear, Neural, Ensemble };

inline std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::Linear: return "linear";
    case ModelFamily::Neural: return "neural";
    case ModelFamily::Ensemble: return "ensemble";
  }
  return "unknown";
}

inline ModelFamily family_from_string(const std::string& name) {
  if (name == "linear") return ModelFamily::Linear;
  if (name == "neural") return ModelFamily::Neural;
  if (name == "ensemble") return ModelFamily::Ensemble;
  throw ArgumentError("unknown model family '" + name + "'");
}

inline ModelFamily family_of(const Predictor& model) {
  return static_cast<ModelFamily>(model.index());
}

struct TrainConfig {
  int epochs = 5000;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<int> hidden_layers = {16, 16};
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(epochs > 0, "epochs must be positive");
    detail::require(learning_rate > 0, "learning_rate must be positive");
    detail::require(adam_beta1 > 0 && adam_beta1 < 1, "adam_beta1 must lie in (0, 1)");
    detail::require(adam_beta2 > 0 && adam_beta2 < 1, "adam_beta2 must lie in (0, 1)");
    detail::require(adam_eps > 0, "adam_eps must be positive");
    for (int w : hidden_layers) detail::require(w > 0, "hidden layer widths must be positive");
  }
};

/// First-order model of a predictor around an operating point.
struct AffineMap {
  Vector weights;
  double bias = 0.0;

  double operator()(const Eigen::Ref<const Vector>& x) const { return weights.dot(x) + bias; }
};

// --- evaluation ---------------------------------------------------------------

namespace detail {
inline void check_input(std::size_t expected, Eigen::Index got) {
  if (static_cast<Eigen::Index>(expected) != got)
    throw ArgumentError("feature vector has " + std::to_string(got) + " entries, model expects " +
                        std::to_string(expected));
}
}  // namespace detail

inline double predict(const LinearModel& model, const Eigen::Ref<const Vector>& x) {
  detail::check_input(model.n_features(), x.size());
  return model.weights.dot(x) + model.bias;
}

inline double predict(const NeuralModel& model, const Eigen::Ref<const Vector>& x) {
  detail::check_input(model.n_features(), x.size());
  Vector h = (x - model.input_mean).cwiseQuotient(model.input_scale);
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l)
    h = (model.layers[l].weights * h + model.layers[l].bias).array().tanh().matrix();
  const auto& out = model.layers.back();
  const double raw = out.weights.row(0).dot(h) + out.bias(0);
  return raw * model.output_scale + model.output_mean;
}

inline double predict(const EnsembleModel& model, const Eigen::Ref<const Vector>& x) {
  return 0.5 * (predict(model.nn, x) + predict(model.lr, x));
}

inline double predict(const Predictor& model, const Eigen::Ref<const Vector>& x) {
  return std::visit([&](const auto& m) { return predict(m, x); }, model);
}

inline Vector jacobian(const LinearModel& model, const Eigen::Ref<const Vector>& x) {
  detail::check_input(model.n_features(), x.size());
  return model.weights;
}

/// Exact input gradient by reverse-mode chain rule through the tanh layers.
inline Vector jacobian(const NeuralModel& model, const Eigen::Ref<const Vector>& x) {
  detail::check_input(model.n_features(), x.size());
  std::vector<Vector> activations;
  activations.reserve(model.layers.size());
  Vector h = (x - model.input_mean).cwiseQuotient(model.input_scale);
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    h = (model.layers[l].weights * h + model.layers[l].bias).array().tanh().matrix();
    activations.push_back(h);
  }
  Vector grad = model.output_scale * model.layers.back().weights.row(0).transpose();
  for (std::size_t l = model.layers.size() - 1; l-- > 0;) {
    const Vector& a = activations[l];
    grad = model.layers[l].weights.transpose() *
           grad.cwiseProduct((1.0 - a.array().square()).matrix());
  }
  return grad.cwiseQuotient(model.input_scale);
}

inline Vector jacobian(const EnsembleModel& model, const Eigen::Ref<const Vector>& x) {
  return 0.5 * (jacobian(model.nn, x) + jacobian(model.lr, x));
}

inline Vector jacobian(const Predictor& model, const Eigen::Ref<const Vector>& x) {
  return std::visit([&](const auto& m) { return jacobian(m, x); }, model);
}

template <typename Model>
AffineMap taylor_linearize(const Model& model, const Eigen::Ref<const Vector>& x0) {
  Vector w = jacobian(model, x0);
  const double b = predict(model, x0) - w.dot(x0);
  return {std::move(w), b};
}

inline AffineMap taylor_linearize(const LinearModel& model, const Eigen::Ref<const Vector>& x0) {
  detail::check_input(model.n_features(), x0.size());
  return {model.weights, model.bias};
}

/// Average of the member linearizations: W = (W_nn + W_lr) / 2, b = (b_nn + b_lr) / 2.
inline AffineMap taylor_linearize(const EnsembleModel& model, const Eigen::Ref<const Vector>& x0) {
  const AffineMap nn = taylor_linearize(model.nn, x0);
  const AffineMap lr = taylor_linearize(model.lr, x0);
  return {0.5 * (nn.weights + lr.weights), 0.5 * (nn.bias + lr.bias)};
}

inline AffineMap taylor_linearize(const Predictor& model, const Eigen::Ref<const Vector>& x0) {
  return std::visit([&](const auto& m) { return taylor_linearize(m, x0); }, model);
}

/// True when the predictor is an affine function of its input everywhere, so
/// its first-order expansion is exact at any operating point.
inline bool is_affine(const NeuralModel& model) {
  if (model.hidden_layers() == 0) return true;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l)
    if (model.layers[l].weights.isZero(0.0)) return true;
  return false;
}

inline bool is_affine(const Predictor& model) {
  if (std::holds_alternative<LinearModel>(model)) return true;
  if (const auto* nn = std::get_if<NeuralModel>(&model)) return is_affine(*nn);
  return is_affine(std::get<EnsembleModel>(model).nn);
}

inline std::size_t n_features(const Predictor& model) {
  return std::visit([](const auto& m) { return m.n_features(); }, model);
}

/// Expresses a linear model as a network with no hidden layers.
inline NeuralModel as_neural(const LinearModel& model) {
  NeuralModel nn;
  const auto k = static_cast<Eigen::Index>(model.n_features());
  nn.layers.push_back({model.weights.transpose(), Vector::Constant(1, model.bias)});
  nn.input_mean = Vector::Zero(k);
  nn.input_scale = Vector::Ones(k);
  nn.feature_names = model.feature_names;
  return nn;
}

// --- training -----------------------------------------------------------------

/// Least squares with intercept via centered normal equations. Falls back to
/// ridge (lambda = 1e-8) when the centered design is rank deficient.
inline LinearModel fit_linear(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& targets) {
  const auto rows = features.rows();
  const auto k = features.cols();
  detail::require(rows > 1, "fit_linear needs more than one row");
  detail::require(k > 0, "fit_linear needs at least one feature");
  detail::require(targets.size() == rows, "targets length must match feature rows");
  detail::require(features.allFinite() && targets.allFinite(), "training data must be finite");

  const Eigen::RowVectorXd mean_x = features.colwise().mean();
  const double mean_y = targets.mean();
  const Matrix centered = features.rowwise() - mean_x;
  const Vector centered_y = targets.array() - mean_y;

  Matrix gram = centered.transpose() * centered;
  const Vector rhs = centered.transpose() * centered_y;

  Eigen::ColPivHouseholderQR<Matrix> qr(centered);
  if (qr.rank() < k) gram.diagonal().array() += 1e-8;

  Eigen::LDLT<Matrix> solver(gram);
  Vector w = solver.solve(rhs);
  w += solver.solve(rhs - gram * w);  // one step of iterative refinement

  LinearModel model;
  model.weights = w;
  model.bias = mean_y - mean_x.dot(w);
  return model;
}

namespace detail {

struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Eigen::Ref<const Matrix>& data) {
    Standardizer s;
    s.mean = data.colwise().mean().transpose();
    s.scale = ((data.rowwise() - s.mean.transpose()).array().square().colwise().sum() /
               static_cast<double>(data.rows()))
                  .sqrt()
                  .transpose();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
    return s;
  }
};

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
};

inline double network_mse(const std::vector<DenseLayer>& layers, const Matrix& inputs, const Eigen::RowVectorXd& targets) {
  Matrix h = inputs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l)
    h = ((layers[l].weights * h).colwise() + layers[l].bias).array().tanh().matrix();
  const Eigen::RowVectorXd out = (layers.back().weights * h).array() + layers.back().bias(0);
  return (out - targets).squaredNorm() / static_cast<double>(targets.size());
}

}  // namespace detail

/// Full-batch Adam on z-scored features and targets. Deterministic for a given
/// seed; returns the parameters with the lowest training loss seen.
inline NeuralModel fit_nn(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& targets,
                          const TrainConfig& cfg) {
  cfg.validate();
  const auto rows = features.rows();
  const auto k = features.cols();
  detail::require(rows > 0 && k > 0, "fit_nn needs a nonempty feature matrix");
  detail::require(targets.size() == rows, "targets length must match feature rows");
  detail::require(features.allFinite() && targets.allFinite(), "training data must be finite");

  const auto in = detail::Standardizer::fit(features);
  const auto out = detail::Standardizer::fit(targets);

  // Samples as columns.
  const Matrix inputs = ((features.rowwise() - in.mean.transpose()).array().rowwise() /
                         in.scale.transpose().array())
                            .matrix()
                            .transpose();
  const Eigen::RowVectorXd goal = ((targets.array() - out.mean(0)) / out.scale(0)).matrix().transpose();

  std::mt19937_64 rng(cfg.seed);
  std::vector<DenseLayer> layers;
  Eigen::Index fan_in = k;
  std::vector<int> widths = cfg.hidden_layers;
  widths.push_back(1);
  for (int width : widths) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + width));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    DenseLayer layer{Matrix(width, fan_in), Vector::Zero(width)};
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = uniform(rng);
    layers.push_back(std::move(layer));
    fan_in = width;
  }

  detail::AdamState adam;
  for (const auto& layer : layers) {
    adam.m_w.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    adam.v_w.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    adam.m_b.push_back(Vector::Zero(layer.bias.size()));
    adam.v_b.push_back(Vector::Zero(layer.bias.size()));
  }

  const double n = static_cast<double>(rows);
  const std::size_t depth = layers.size();
  std::vector<Matrix> acts(depth);  // acts[l] = input to layer l
  std::vector<DenseLayer> best = layers;
  double best_loss = kInfinity;
  double beta1_power = 1.0;
  double beta2_power = 1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    acts[0] = inputs;
    for (std::size_t l = 0; l + 1 < depth; ++l)
      acts[l + 1] = ((layers[l].weights * acts[l]).colwise() + layers[l].bias).array().tanh().matrix();
    const Eigen::RowVectorXd prediction = (layers.back().weights * acts[depth - 1]).array() + layers.back().bias(0);
    const Eigen::RowVectorXd error = prediction - goal;
    const double loss = error.squaredNorm() / n;
    if (!std::isfinite(loss)) throw TrainingDiverged(epoch);
    if (loss < best_loss) {
      best_loss = loss;
      best = layers;
    }

    beta1_power *= cfg.adam_beta1;
    beta2_power *= cfg.adam_beta2;
    Matrix delta = (2.0 / n) * error;  // 1 x rows
    for (std::size_t l = depth; l-- > 0;) {
      const Matrix grad_w = delta * acts[l].transpose();
      const Vector grad_b = delta.rowwise().sum();
      if (l > 0) {
        delta = (layers[l].weights.transpose() * delta).cwiseProduct((1.0 - acts[l].array().square()).matrix());
      }
      adam.m_w[l] = cfg.adam_beta1 * adam.m_w[l] + (1 - cfg.adam_beta1) * grad_w;
      adam.v_w[l] = cfg.adam_beta2 * adam.v_w[l] + (1 - cfg.adam_beta2) * grad_w.cwiseAbs2();
      adam.m_b[l] = cfg.adam_beta1 * adam.m_b[l] + (1 - cfg.adam_beta1) * grad_b;
      adam.v_b[l] = cfg.adam_beta2 * adam.v_b[l] + (1 - cfg.adam_beta2) * grad_b.cwiseAbs2();
      const double step = cfg.learning_rate / (1 - beta1_power);
      const double correction = 1.0 / (1 - beta2_power);
      layers[l].weights.array() -=
          step * adam.m_w[l].array() / ((adam.v_w[l].array() * correction).sqrt() + cfg.adam_eps);
      layers[l].bias.array() -=
          step * adam.m_b[l].array() / ((adam.v_b[l].array() * correction).sqrt() + cfg.adam_eps);
    }
  }
  const double final_loss = detail::network_mse(layers, inputs, goal);
  if (!std::isfinite(final_loss)) throw TrainingDiverged(cfg.epochs);
  if (final_loss < best_loss) best = layers;

  NeuralModel model;
  model.layers = std::move(best);
  model.input_mean = in.mean;
  model.input_scale = in.scale;
  model.output_mean = out.mean(0);
  model.output_scale = out.scale(0);
  return model;
}

inline EnsembleModel fit_ensemble(const Eigen::Ref<const Matrix>& features, const Eigen::Ref<const Vector>& targets,
                                  const TrainConfig& cfg) {
  return {fit_nn(features, targets, cfg), fit_linear(features, targets)};
}

inline Predictor fit(ModelFamily family, const Eigen::Ref<const Matrix>& features,
                     const Eigen::Ref<const Vector>& targets, const TrainConfig& cfg) {
  switch (family) {
    case ModelFamily::Linear: return fit_linear(features, targets);
    case ModelFamily::Neural: return fit_nn(features, targets, cfg);
    case ModelFamily::Ensemble: return fit_ensemble(features, targets, cfg);
  }
  throw ArgumentError("unknown model family");
}

inline void set_feature_names(Predictor& model, const std::vector<std::string>& names) {
  std::visit(
      [&](auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, EnsembleModel>) {
          m.nn.feature_names = names;
          m.lr.feature_names = names;
        } else {
          m.feature_names = names;
        }
      },
      model);
}

/// Mean squared error after dividing errors by `target_scale` (the training
/// standard deviation of the target), so sensors of different units compare.
inline double normalized_mse(const Predictor& model, const Eigen::Ref<const Matrix>& features,
                             const Eigen::Ref<const Vector>& targets, double target_scale) {
  detail::require(features.rows() == targets.size() && features.rows() > 0, "normalized_mse size mismatch");
  detail::require(target_scale > 0, "target_scale must be positive");
  double total = 0.0;
  for (Eigen::Index t = 0; t < features.rows(); ++t) {
    const double e = (predict(model, features.row(t).transpose()) - targets(t)) / target_scale;
    total += e * e;
  }
  return total / static_cast<double>(features.rows());
}

// --- serialization ------------------------------------------------------------

inline constexpr const char* kModelFormat = "advreg-model/1";

namespace detail {

inline nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline nlohmann::json linear_json(const LinearModel& m) {
  return {{"n_features", m.n_features()}, {"weights", vector_json(m.weights)}, {"bias", m.bias}};
}

inline LinearModel linear_from_json(const nlohmann::json& j) {
  LinearModel m;
  m.weights = vector_from_json(j.at("weights"));
  m.bias = j.at("bias").get<double>();
  if (j.at("n_features").get<std::size_t>() != m.n_features()) throw ParseError("linear model shape mismatch");
  return m;
}

inline nlohmann::json neural_json(const NeuralModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : m.layers) {
    std::vector<double> flat;  // row-major
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) flat.push_back(layer.weights(i, j));
    layers.push_back({{"rows", layer.weights.rows()},
                      {"cols", layer.weights.cols()},
                      {"weights", flat},
                      {"bias", vector_json(layer.bias)}});
  }
  return {{"activation", "tanh"},
          {"layers", layers},
          {"input_mean", vector_json(m.input_mean)},
          {"input_scale", vector_json(m.input_scale)},
          {"output_mean", m.output_mean},
          {"output_scale", m.output_scale}};
}

inline NeuralModel neural_from_json(const nlohmann::json& j) {
  NeuralModel m;
  for (const auto& entry : j.at("layers")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto flat = entry.at("weights").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw ParseError("layer weight count mismatch");
    DenseLayer layer{Matrix(rows, cols), vector_from_json(entry.at("bias"))};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
    m.layers.push_back(std::move(layer));
  }
  m.input_mean = vector_from_json(j.at("input_mean"));
  m.input_scale = vector_from_json(j.at("input_scale"));
  m.output_mean = j.at("output_mean").get<double>();
  m.output_scale = j.at("output_scale").get<double>();
  try {
    m.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(std::string("invalid neural model: ") + e.what());
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const Predictor& model) {
  nlohmann::json j = {{"format_version", kModelFormat}, {"family", to_string(family_of(model))}};
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LinearModel>) {
          j["feature_names"] = m.feature_names;
          j["linear"] = detail::linear_json(m);
        } else if constexpr (std::is_same_v<M, NeuralModel>) {
          j["feature_names"] = m.feature_names;
          j["neural"] = detail::neural_json(m);
        } else {
          j["feature_names"] = m.lr.feature_names;
          j["linear"] = detail::linear_json(m.lr);
          j["neural"] = detail::neural_json(m.nn);
        }
      },
      model);
  return j;
}

inline Predictor predictor_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<std::string>() != kModelFormat)
      throw ParseError("unsupported model format '" + j.at("format_version").get<std::string>() + "'");
    const auto names = j.value("feature_names", std::vector<std::string>{});
    Predictor model;
    switch (family_from_string(j.at("family").get<std::string>())) {
      case ModelFamily::Linear: model = detail::linear_from_json(j.at("linear")); break;
      case ModelFamily::Neural: model = detail::neural_from_json(j.at("neural")); break;
      case ModelFamily::Ensemble:
        model = EnsembleModel{detail::neural_from_json(j.at("neural")), detail::linear_from_json(j.at("linear"))};
        break;
    }
    set_feature_names(model, names);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model JSON: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ParseError(e.what());
  }
}

}  // namespace advreg
