#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "expertdg/nn/mlp.hpp"

namespace expertdg::nn {

enum class OptimizerKind { sgd, adamw };

inline OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adamw") return OptimizerKind::adamw;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Layers whose weights and biases must not move.
struct FreezeMask {
  std::vector<bool> frozen_layers;

  static FreezeMask all(Index layers) { return FreezeMask{std::vector<bool>(static_cast<std::size_t>(layers), true)}; }

  bool frozen(Index layer) const {
    return static_cast<std::size_t>(layer) < frozen_layers.size() && frozen_layers[static_cast<std::size_t>(layer)];
  }
};

/// SGD / AdamW with decoupled weight decay. Parameter blocks are addressed
/// by slot; moment buffers are created on first use of a slot and must keep
/// the same shape afterwards.
template <typename Scalar>
class BasicOptimizer {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  explicit BasicOptimizer(OptimizerConfig config = {}) : config_(config) {
    if (!(config_.learning_rate > 0)) throw std::invalid_argument("optimizer: learning rate must be positive");
  }

  const OptimizerConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }

  void set_learning_rate(double lr) {
    if (!(lr > 0)) throw std::invalid_argument("optimizer: learning rate must be positive");
    config_.learning_rate = lr;
  }

  // Advances the step counter used for AdamW bias correction. Call once per
  // optimisation step, before the block updates belonging to it.
  void begin_step() { ++step_; }

  template <typename P, typename G>
  void update(std::size_t slot, Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
      throw std::invalid_argument("optimizer: gradient shape mismatch in slot " + std::to_string(slot));
    const Scalar lr = static_cast<Scalar>(config_.learning_rate);
    if (config_.kind == OptimizerKind::sgd) {
      param -= lr * grad;
      return;
    }
    if (step_ == 0) throw std::logic_error("optimizer: begin_step() not called");
    if (first_.size() <= slot) {
      first_.resize(slot + 1);
      second_.resize(slot + 1);
    }
    Matrix& m = first_[slot];
    Matrix& v = second_[slot];
    if (m.size() == 0) {
      m = Matrix::Zero(param.rows(), param.cols());
      v = Matrix::Zero(param.rows(), param.cols());
    } else if (m.rows() != param.rows() || m.cols() != param.cols()) {
      throw std::invalid_argument("optimizer: slot " + std::to_string(slot) + " changed shape");
    }
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(step_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(step_));
    const Scalar eps = static_cast<Scalar>(config_.eps);
    if (config_.weight_decay != 0.0) param *= Scalar(1) - lr * static_cast<Scalar>(config_.weight_decay);
    param -= (lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps)).matrix();
  }

  /// One full step on an Mlp. Uses slots [slot_offset, slot_offset + 2L).
  void step(BasicMlp<Scalar>& model, const BasicGradients<Scalar>& grads, const FreezeMask& mask = {},
            std::size_t slot_offset = 0) {
    if (!grads.congruent_with(model)) throw std::invalid_argument("optimizer: gradients not congruent with model");
    begin_step();
    apply(model, grads, mask, slot_offset);
  }

  /// Block updates for an Mlp without advancing the step counter.
  void apply(BasicMlp<Scalar>& model, const BasicGradients<Scalar>& grads, const FreezeMask& mask = {},
             std::size_t slot_offset = 0) {
    if (!grads.congruent_with(model)) throw std::invalid_argument("optimizer: gradients not congruent with model");
    for (Index l = 0; l < model.num_layers(); ++l) {
      if (mask.frozen(l)) continue;
      const std::size_t base = slot_offset + 2 * static_cast<std::size_t>(l);
      update(base, model.weights[l], grads.weights[l]);
      update(base + 1, model.biases[l], grads.biases[l]);
    }
  }

 private:
  OptimizerConfig config_;
  std::int64_t step_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

using Optimizer = BasicOptimizer<double>;

}  // namespace expertdg::nn
