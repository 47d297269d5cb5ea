#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "expertdg/nn/mlp.hpp"

namespace expertdg::nn {

/// Raised when a loss or similarity sees non-finite values or an
/// undefined quantity (e.g. cosine of a zero vector).
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class LossKind { cross_entropy_logits, mse };

inline std::string_view to_string(LossKind k) { return k == LossKind::mse ? "mse" : "cross_entropy_logits"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "mse") return LossKind::mse;
  if (s == "cross_entropy_logits" || s == "cross_entropy") return LossKind::cross_entropy_logits;
  throw std::invalid_argument("unknown loss kind: " + std::string(s));
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string(what) + ": non-finite value");
}

template <typename Derived>
typename Derived::PlainObject log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  const auto max = logits.maxCoeff();
  typename Derived::PlainObject shifted = logits.array() - max;
  const auto lse = std::log(shifted.array().exp().sum());
  return (shifted.array() - lse).matrix();
}

template <typename Derived>
typename Derived::PlainObject softmax(const Eigen::MatrixBase<Derived>& logits) {
  typename Derived::PlainObject e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// -log softmax(logits)[label].
template <typename Derived>
typename Derived::Scalar cross_entropy_logits(const Eigen::MatrixBase<Derived>& logits, Index label) {
  if (logits.size() == 0) throw std::invalid_argument("cross_entropy: empty prediction");
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " out of range");
  require_finite(logits, "cross_entropy");
  return -log_softmax(logits)(label);
}

/// d cross_entropy / d logits = softmax - onehot.
template <typename Derived>
typename Derived::PlainObject cross_entropy_grad(const Eigen::MatrixBase<Derived>& logits, Index label) {
  typename Derived::PlainObject g = softmax(logits);
  g(label) -= 1;
  return g;
}

/// Mean squared difference over the output coordinates.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mse(const Eigen::MatrixBase<DerivedA>& prediction, const Eigen::MatrixBase<DerivedB>& target) {
  if (prediction.size() == 0) throw std::invalid_argument("mse: empty prediction");
  if (prediction.size() != target.size()) throw std::invalid_argument("mse: target size mismatch");
  require_finite(prediction, "mse");
  require_finite(target, "mse");
  return (prediction - target).squaredNorm() / static_cast<typename DerivedA::Scalar>(prediction.size());
}

/// Inputs column-wise; `labels` used for cross-entropy, `targets`
/// (output_size x B) for mse.
template <typename Scalar>
struct BasicBatch {
  typename BasicMlp<Scalar>::Matrix inputs;
  std::vector<Index> labels;
  typename BasicMlp<Scalar>::Matrix targets;

  Index size() const { return inputs.cols(); }
};

using Batch = BasicBatch<double>;

template <typename Scalar>
struct BasicLossAndGrads {
  Scalar loss = 0;
  BasicGradients<Scalar> grads;
};

namespace detail {

template <typename Scalar>
void validate_batch(const BasicMlp<Scalar>& model, const BasicBatch<Scalar>& batch, LossKind kind,
                    const std::optional<typename BasicMlp<Scalar>::Vector>& weights) {
  if (batch.size() == 0) throw std::invalid_argument("backprop: empty batch");
  if (batch.inputs.rows() != model.input_size()) throw std::invalid_argument("backprop: input dimension mismatch");
  if (kind == LossKind::cross_entropy_logits) {
    if (static_cast<Index>(batch.labels.size()) != batch.size())
      throw std::invalid_argument("backprop: label count does not match batch size");
  } else if (batch.targets.rows() != model.output_size() || batch.targets.cols() != batch.size()) {
    throw std::invalid_argument("backprop: target shape mismatch");
  }
  if (weights) {
    if (weights->size() != batch.size()) throw std::invalid_argument("backprop: weight count does not match batch size");
    if ((weights->array() < 0).any()) throw std::invalid_argument("backprop: negative sample weight");
  }
}

}  // namespace detail

/// Weighted-sum loss over the batch and exact gradients of that sum.
/// Weights default to 1.
template <typename Scalar>
BasicLossAndGrads<Scalar> backprop_grads(const BasicMlp<Scalar>& model, const BasicBatch<Scalar>& batch, LossKind kind,
                                         const std::optional<typename BasicMlp<Scalar>::Vector>& weights = std::nullopt) {
  using Matrix = typename BasicMlp<Scalar>::Matrix;
  detail::validate_batch(model, batch, kind, weights);
  auto cache = forward_cached(model, batch.inputs);
  const Matrix& out = cache.output();
  Matrix d_out(out.rows(), out.cols());
  Scalar total = 0;
  for (Index j = 0; j < batch.size(); ++j) {
    const Scalar w = weights ? (*weights)(j) : Scalar(1);
    if (kind == LossKind::cross_entropy_logits) {
      total += w * cross_entropy_logits(out.col(j), batch.labels[j]);
      d_out.col(j) = w * cross_entropy_grad(out.col(j), batch.labels[j]);
    } else {
      total += w * mse(out.col(j), batch.targets.col(j));
      d_out.col(j) = (Scalar(2) * w / static_cast<Scalar>(out.rows())) * (out.col(j) - batch.targets.col(j));
    }
  }
  BasicLossAndGrads<Scalar> result;
  result.loss = total;
  result.grads = backward(model, cache, d_out).grads;
  return result;
}

/// Loss only (same convention as backprop_grads).
template <typename Scalar>
Scalar batch_loss(const BasicMlp<Scalar>& model, const BasicBatch<Scalar>& batch, LossKind kind,
                  const std::optional<typename BasicMlp<Scalar>::Vector>& weights = std::nullopt) {
  detail::validate_batch(model, batch, kind, weights);
  const auto out = forward_batch(model, batch.inputs);
  Scalar total = 0;
  for (Index j = 0; j < batch.size(); ++j) {
    const Scalar w = weights ? (*weights)(j) : Scalar(1);
    total += w * (kind == LossKind::cross_entropy_logits ? cross_entropy_logits(out.col(j), batch.labels[j])
                                                         : mse(out.col(j), batch.targets.col(j)));
  }
  return total;
}

}  // namespace expertdg::nn
