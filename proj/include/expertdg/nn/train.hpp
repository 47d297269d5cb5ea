#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "expertdg/nn/loss.hpp"
#include "expertdg/nn/mlp.hpp"
#include "expertdg/nn/optimizer.hpp"
#include "expertdg/rng.hpp"

namespace expertdg::nn {

struct FitConfig {
  Index epochs = 1000;
  Index batch_size = 0;  // 0: full batch
  OptimizerConfig optimizer{};
};

/// Minimises the mean loss over `batch` with minibatches drawn in a seeded
/// order. history[e] is the full-batch mean loss at the start of epoch e.
inline std::vector<double> fit(Mlp& model, const Batch& batch, LossKind kind, const FitConfig& cfg, std::uint64_t seed,
                               const FreezeMask& mask = {}) {
  const Index n = batch.size();
  if (n == 0) throw std::invalid_argument("fit: empty batch");
  const Index bs = cfg.batch_size <= 0 ? n : std::min(cfg.batch_size, n);
  Optimizer opt(cfg.optimizer);
  Rng rng(seed);
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (bs == n) {
      const Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
      const auto r = backprop_grads(model, batch, kind, w);
      history.push_back(r.loss);
      opt.step(model, r.grads, mask);
    } else {
      history.push_back(batch_loss(model, batch, kind) / static_cast<double>(n));
      const auto order = rng.permutation(static_cast<std::size_t>(n));
      for (Index start = 0; start < n; start += bs) {
        const Index b = std::min(bs, n - start);
        Batch mb;
        mb.inputs.resize(batch.inputs.rows(), b);
        if (kind == LossKind::mse) mb.targets.resize(batch.targets.rows(), b);
        for (Index j = 0; j < b; ++j) {
          const auto src = static_cast<Index>(order[static_cast<std::size_t>(start + j)]);
          mb.inputs.col(j) = batch.inputs.col(src);
          if (kind == LossKind::mse)
            mb.targets.col(j) = batch.targets.col(src);
          else
            mb.labels.push_back(batch.labels[static_cast<std::size_t>(src)]);
        }
        const auto r = backprop_grads(model, mb, kind, Vector(Vector::Constant(b, 1.0 / static_cast<double>(b))));
        opt.step(model, r.grads, mask);
      }
    }
  }
  return history;
}

}  // namespace expertdg::nn
