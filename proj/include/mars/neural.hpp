#pragma once

// Small fully connected networks with hand-written backpropagation and Adam.
// Vectors and matrices are Eigen types; a network evaluates one input vector
// at a time.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mars/error.hpp"

namespace mars {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { kIdentity, kTanh, kRelu };

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "identity";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + s + "'");
}

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::kTanh;
};

// Parameter-shaped container, used for gradients and Adam moments.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] += o.weights[i];
      bias[i] += o.bias[i];
    }
    return *this;
  }
  Gradients& operator*=(double s) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] *= s;
      bias[i] *= s;
    }
    return *this;
  }
  double squared_norm() const {
    double n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      n += weights[i].squaredNorm() + bias[i].squaredNorm();
    }
    return n;
  }
  bool all_finite() const {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!weights[i].allFinite() || !bias[i].allFinite()) return false;
    }
    return true;
  }
};

class Network;

struct ForwardCache {
  std::vector<Vector> inputs;  // input to each layer
  std::vector<Vector> outputs; // activated output of each layer
  std::uint64_t version = 0;
};

class Network {
 public:
  Network() = default;

  // Layer sizes {in, h1, ..., out}; hidden layers use `hidden`, the last
  // layer `output`. Weights are Glorot-uniform, biases zero.
  Network(const std::vector<int>& sizes, Activation hidden, Activation output,
          std::uint64_t seed) {
    if (sizes.size() < 2) throw ConfigError("network needs at least input and output sizes");
    for (int s : sizes) {
      if (s < 1) throw ConfigError("layer sizes must be positive");
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const int in = sizes[i];
      const int out = sizes[i + 1];
      const double limit = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> init(-limit, limit);
      Layer layer;
      layer.weights.resize(out, in);
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) layer.weights(r, c) = init(rng);
      }
      layer.bias = Vector::Zero(out);
      layer.activation = i + 2 == sizes.size() ? output : hidden;
      layers_.push_back(std::move(layer));
    }
  }

  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) { check_chain(); }

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows()); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::uint64_t version() const { return version_; }

  // Direct parameter access bumps the version so outstanding caches go stale.
  std::vector<Layer>& mutable_layers() {
    ++version_;
    return layers_;
  }

  Gradients zero_gradients() const {
    Gradients g;
    for (const auto& l : layers_) {
      g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  Vector forward(const Vector& input, ForwardCache* cache = nullptr) const {
    if (input.size() != input_dim()) {
      throw ContractError("network input has " + std::to_string(input.size()) +
                          " entries, expected " + std::to_string(input_dim()));
    }
    if (cache) {
      cache->inputs.clear();
      cache->outputs.clear();
      cache->version = version_;
    }
    Vector x = input;
    for (const auto& layer : layers_) {
      if (cache) cache->inputs.push_back(x);
      Vector z = layer.weights * x + layer.bias;
      activate(z, layer.activation);
      if (cache) cache->outputs.push_back(z);
      x = std::move(z);
    }
    return x;
  }

  // Gradients of <grad_output, output> with respect to every parameter.
  Gradients backward(const ForwardCache& cache, const Vector& grad_output) const {
    if (cache.version != version_ || cache.inputs.size() != layers_.size()) {
      throw ContractError("backward called with a stale or foreign forward cache");
    }
    if (grad_output.size() != output_dim()) throw ContractError("output gradient has wrong size");
    Gradients g = zero_gradients();
    Vector delta = grad_output;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& layer = layers_[k];
      const Vector& y = cache.outputs[k];
      switch (layer.activation) {
        case Activation::kIdentity:
          break;
        case Activation::kTanh:
          delta = delta.array() * (1.0 - y.array().square());
          break;
        case Activation::kRelu:
          delta = delta.array() * (y.array() > 0).cast<double>();
          break;
      }
      g.weights[k] = delta * cache.inputs[k].transpose();
      g.bias[k] = delta;
      if (k > 0) delta = layer.weights.transpose() * delta;
    }
    return g;
  }

  // params += scale * g
  void apply(const Gradients& g, double scale) {
    ++version_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i].weights += scale * g.weights[i];
      layers_[i].bias += scale * g.bias[i];
    }
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  bool operator==(const Network& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = o.layers_[i];
      if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
          a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias) {
        return false;
      }
    }
    return true;
  }

 private:
  static void activate(Vector& z, Activation a) {
    switch (a) {
      case Activation::kIdentity: break;
      case Activation::kTanh: z = z.array().tanh(); break;
      case Activation::kRelu: z = z.array().max(0.0); break;
    }
  }

  void check_chain() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].bias.size() != layers_[i].weights.rows()) throw ConfigError("bias size mismatch");
      if (i > 0 && layers_[i].weights.cols() != layers_[i - 1].weights.rows()) {
        throw ConfigError("layer dimensions do not chain");
      }
    }
  }

  std::vector<Layer> layers_;
  std::uint64_t version_ = 0;
};

// Numerically stable softmax (max subtracted). Entries equal to -inf get
// probability exactly 0.
inline Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector p(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    p[i] = std::isinf(logits[i]) && logits[i] < 0 ? 0.0 : std::exp(logits[i] - top);
  }
  return p / p.sum();
}

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Gradients first;
  Gradients second;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const Network& net, AdamConfig cfg)
      : config(cfg), first(net.zero_gradients()), second(net.zero_gradients()) {}

  bool operator==(const AdamState& o) const {
    if (step != o.step || first.weights.size() != o.first.weights.size()) return false;
    for (std::size_t i = 0; i < first.weights.size(); ++i) {
      if (first.weights[i] != o.first.weights[i] || first.bias[i] != o.first.bias[i] ||
          second.weights[i] != o.second.weights[i] || second.bias[i] != o.second.bias[i]) {
        return false;
      }
    }
    return true;
  }
};

// One bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(Network& net, const Gradients& grads, AdamState& adam) {
  if (!grads.all_finite()) throw DivergenceError("non-finite gradient");
  if (grads.weights.size() != net.layers().size()) throw ContractError("gradient shape mismatch");
  const auto& c = adam.config;
  ++adam.step;
  const double t = static_cast<double>(adam.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  auto& layers = net.mutable_layers();
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= c.learning_rate * (m.array() / correct1) /
                     ((v.array() / correct2).sqrt() + c.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weights, grads.weights[i], adam.first.weights[i], adam.second.weights[i]);
    update(layers[i].bias, grads.bias[i], adam.first.bias[i], adam.second.bias[i]);
  }
}

// JSON encoding. Doubles are written in shortest round-trip form, so a
// save/load cycle reproduces parameters bit-exactly.
namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("matrix size mismatch");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  Vector v(static_cast<Eigen::Index>(data.size()));
  std::copy(data.begin(), data.end(), v.data());
  return v;
}

inline nlohmann::json gradients_to_json(const Gradients& g) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    out.push_back({{"weights", matrix_to_json(g.weights[i])}, {"bias", vector_to_json(g.bias[i])}});
  }
  return out;
}

inline Gradients gradients_from_json(const nlohmann::json& j) {
  Gradients g;
  for (const auto& layer : j) {
    g.weights.push_back(matrix_from_json(layer.at("weights")));
    g.bias.push_back(vector_from_json(layer.at("bias")));
  }
  return g;
}

}  // namespace detail

inline nlohmann::json to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"weights", detail::matrix_to_json(l.weights)},
                      {"bias", detail::vector_to_json(l.bias)},
                      {"activation", activation_name(l.activation)}});
  }
  return {{"layers", layers}};
}

inline Network network_from_json(const nlohmann::json& j) {
  std::vector<Layer> layers;
  for (const auto& l : j.at("layers")) {
    layers.push_back({detail::matrix_from_json(l.at("weights")), detail::vector_from_json(l.at("bias")),
                      parse_activation(l.at("activation").get<std::string>())});
  }
  return Network(std::move(layers));
}

inline nlohmann::json to_json(const AdamState& adam) {
  return {{"learning_rate", adam.config.learning_rate},
          {"beta1", adam.config.beta1},
          {"beta2", adam.config.beta2},
          {"epsilon", adam.config.epsilon},
          {"step", adam.step},
          {"first", detail::gradients_to_json(adam.first)},
          {"second", detail::gradients_to_json(adam.second)}};
}

inline AdamState adam_from_json(const nlohmann::json& j) {
  AdamState a;
  a.config = {j.at("learning_rate").get<double>(), j.at("beta1").get<double>(),
              j.at("beta2").get<double>(), j.at("epsilon").get<double>()};
  a.step = j.at("step").get<std::uint64_t>();
  a.first = detail::gradients_from_json(j.at("first"));
  a.second = detail::gradients_from_json(j.at("second"));
  return a;
}

}  // namespace mars
