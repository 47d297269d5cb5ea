#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "expertdg/rng.hpp"

namespace expertdg::nn {

using Eigen::Index;

enum class Activation { tanh, relu, identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

/// Shape and every coefficient equal (Eigen's operator== assumes equal shapes).
template <typename A, typename B>
bool bitwise_equal(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

/// Fully-connected network. Layer l maps layer_sizes[l] -> layer_sizes[l+1];
/// `activation` is applied after every hidden layer, the output layer is affine.
template <typename Scalar>
struct BasicMlp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Index> layer_sizes;
  Activation activation = Activation::tanh;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  BasicMlp() = default;

  // All parameters zero.
  BasicMlp(std::vector<Index> sizes, Activation act) : layer_sizes(std::move(sizes)), activation(act) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (Index s : layer_sizes)
      if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      weights.push_back(Matrix::Zero(layer_sizes[l + 1], layer_sizes[l]));
      biases.push_back(Vector::Zero(layer_sizes[l + 1]));
    }
  }

  Index num_layers() const { return static_cast<Index>(weights.size()); }
  Index input_size() const { return layer_sizes.front(); }
  Index output_size() const { return layer_sizes.back(); }

  Index param_count() const {
    Index n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
  }

  // Bitwise equality of architecture and parameters.
  friend bool operator==(const BasicMlp& a, const BasicMlp& b) {
    if (a.layer_sizes != b.layer_sizes || a.activation != b.activation) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
  }
};

/// Per-parameter gradients laid out like the model they belong to.
template <typename Scalar>
struct BasicGradients {
  using Matrix = typename BasicMlp<Scalar>::Matrix;
  using Vector = typename BasicMlp<Scalar>::Vector;

  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static BasicGradients zeros_like(const BasicMlp<Scalar>& model) {
    BasicGradients g;
    for (Index l = 0; l < model.num_layers(); ++l) {
      g.weights.push_back(Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
      g.biases.push_back(Vector::Zero(model.biases[l].size()));
    }
    return g;
  }

  bool congruent_with(const BasicMlp<Scalar>& model) const {
    if (static_cast<Index>(weights.size()) != model.num_layers() || biases.size() != weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != model.weights[l].rows() || weights[l].cols() != model.weights[l].cols() ||
          biases[l].size() != model.biases[l].size())
        return false;
    }
    return true;
  }

  BasicGradients& operator+=(const BasicGradients& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += other.weights[l];
      biases[l] += other.biases[l];
    }
    return *this;
  }

  BasicGradients& operator*=(Scalar s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }
};

using Mlp = BasicMlp<double>;
using Gradients = BasicGradients<double>;
using Matrix = Mlp::Matrix;
using Vector = Mlp::Vector;

/// Gaussian init with variance 1/fan_in (2/fan_in for relu); zero biases.
template <typename Scalar>
void init_random(BasicMlp<Scalar>& model, Rng& rng, double gain = 1.0) {
  for (Index l = 0; l < model.num_layers(); ++l) {
    const double fan_in = static_cast<double>(model.weights[l].cols());
    const double scale = (model.activation == Activation::relu ? std::sqrt(2.0) : 1.0) * gain / std::sqrt(fan_in);
    for (Index j = 0; j < model.weights[l].cols(); ++j)
      for (Index i = 0; i < model.weights[l].rows(); ++i) model.weights[l](i, j) = static_cast<Scalar>(scale * rng.normal());
    model.biases[l].setZero();
  }
}

template <typename Scalar>
BasicMlp<Scalar> make_random_mlp(std::vector<Index> sizes, Activation act, Rng& rng, double gain = 1.0) {
  BasicMlp<Scalar> model(std::move(sizes), act);
  init_random(model, rng, gain);
  return model;
}

namespace detail {

template <typename Derived>
void apply_activation(Activation act, Eigen::MatrixBase<Derived>& z) {
  switch (act) {
    case Activation::tanh: z.derived() = z.array().tanh().matrix(); break;
    case Activation::relu: z.derived() = z.cwiseMax(typename Derived::Scalar(0)); break;
    case Activation::identity: break;
  }
}

}  // namespace detail

/// Evaluates a batch stored column-wise (input_size x B).
template <typename Scalar, typename Derived>
typename BasicMlp<Scalar>::Matrix forward_batch(const BasicMlp<Scalar>& model, const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.rows() != model.input_size())
    throw std::invalid_argument("mlp forward: input has " + std::to_string(inputs.rows()) + " rows, expected " +
                                std::to_string(model.input_size()));
  typename BasicMlp<Scalar>::Matrix a = inputs;
  for (Index l = 0; l < model.num_layers(); ++l) {
    typename BasicMlp<Scalar>::Matrix z = model.weights[l] * a;
    z.colwise() += model.biases[l];
    if (l + 1 < model.num_layers()) detail::apply_activation(model.activation, z);
    a = std::move(z);
  }
  return a;
}

template <typename Scalar, typename Derived>
typename BasicMlp<Scalar>::Vector forward(const BasicMlp<Scalar>& model, const Eigen::MatrixBase<Derived>& input) {
  if (input.cols() != 1) throw std::invalid_argument("mlp forward: expected a column vector");
  return forward_batch(model, input).col(0);
}

/// Activations kept for a reverse pass. activations[0] is the input,
/// activations.back() the output; preactivations[l] = W_l a_l + b_l.
template <typename Scalar>
struct BasicForwardCache {
  std::vector<typename BasicMlp<Scalar>::Matrix> activations;
  std::vector<typename BasicMlp<Scalar>::Matrix> preactivations;

  const typename BasicMlp<Scalar>::Matrix& output() const { return activations.back(); }
};

template <typename Scalar, typename Derived>
BasicForwardCache<Scalar> forward_cached(const BasicMlp<Scalar>& model, const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.rows() != model.input_size())
    throw std::invalid_argument("mlp forward: input has " + std::to_string(inputs.rows()) + " rows, expected " +
                                std::to_string(model.input_size()));
  BasicForwardCache<Scalar> cache;
  cache.activations.emplace_back(inputs);
  for (Index l = 0; l < model.num_layers(); ++l) {
    typename BasicMlp<Scalar>::Matrix z = model.weights[l] * cache.activations.back();
    z.colwise() += model.biases[l];
    cache.preactivations.push_back(z);
    if (l + 1 < model.num_layers()) detail::apply_activation(model.activation, z);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

template <typename Scalar>
struct BasicBackwardResult {
  BasicGradients<Scalar> grads;
  typename BasicMlp<Scalar>::Matrix input_grad;
};

/// Reverse pass given dLoss/dOutput (output_size x B). Gradients are summed
/// over the batch columns.
template <typename Scalar, typename Derived>
BasicBackwardResult<Scalar> backward(const BasicMlp<Scalar>& model, const BasicForwardCache<Scalar>& cache,
                                     const Eigen::MatrixBase<Derived>& output_grad) {
  using Matrix = typename BasicMlp<Scalar>::Matrix;
  if (output_grad.rows() != model.output_size() || output_grad.cols() != cache.output().cols())
    throw std::invalid_argument("mlp backward: output gradient shape mismatch");
  BasicBackwardResult<Scalar> result;
  result.grads = BasicGradients<Scalar>::zeros_like(model);
  Matrix delta = output_grad;
  for (Index l = model.num_layers() - 1; l >= 0; --l) {
    result.grads.weights[l].noalias() = delta * cache.activations[l].transpose();
    result.grads.biases[l] = delta.rowwise().sum();
    Matrix upstream = model.weights[l].transpose() * delta;
    if (l > 0) {
      const Matrix& a = cache.activations[l];
      switch (model.activation) {
        case Activation::tanh: upstream.array() *= (Scalar(1) - a.array().square()); break;
        case Activation::relu: upstream.array() *= (cache.preactivations[l - 1].array() > Scalar(0)).template cast<Scalar>(); break;
        case Activation::identity: break;
      }
    }
    delta = std::move(upstream);
  }
  result.input_grad = std::move(delta);
  return result;
}

/// Parameters in a flat vector: per layer, row-major weights then bias.
template <typename Scalar>
typename BasicMlp<Scalar>::Vector flatten(const BasicMlp<Scalar>& model) {
  typename BasicMlp<Scalar>::Vector flat(model.param_count());
  Index k = 0;
  for (Index l = 0; l < model.num_layers(); ++l) {
    for (Index i = 0; i < model.weights[l].rows(); ++i)
      for (Index j = 0; j < model.weights[l].cols(); ++j) flat(k++) = model.weights[l](i, j);
    for (Index i = 0; i < model.biases[l].size(); ++i) flat(k++) = model.biases[l](i);
  }
  return flat;
}

template <typename Scalar>
typename BasicMlp<Scalar>::Vector flatten(const BasicGradients<Scalar>& grads) {
  Index n = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) n += grads.weights[l].size() + grads.biases[l].size();
  typename BasicMlp<Scalar>::Vector flat(n);
  Index k = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    for (Index i = 0; i < grads.weights[l].rows(); ++i)
      for (Index j = 0; j < grads.weights[l].cols(); ++j) flat(k++) = grads.weights[l](i, j);
    for (Index i = 0; i < grads.biases[l].size(); ++i) flat(k++) = grads.biases[l](i);
  }
  return flat;
}

template <typename Scalar, typename Derived>
void assign_flat(BasicMlp<Scalar>& model, const Eigen::MatrixBase<Derived>& flat) {
  if (flat.size() != model.param_count()) throw std::invalid_argument("assign_flat: size mismatch");
  Index k = 0;
  for (Index l = 0; l < model.num_layers(); ++l) {
    for (Index i = 0; i < model.weights[l].rows(); ++i)
      for (Index j = 0; j < model.weights[l].cols(); ++j) model.weights[l](i, j) = flat(k++);
    for (Index i = 0; i < model.biases[l].size(); ++i) model.biases[l](i) = flat(k++);
  }
}

}  // namespace expertdg::nn
