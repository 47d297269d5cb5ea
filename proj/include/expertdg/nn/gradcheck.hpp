#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "expertdg/nn/loss.hpp"
#include "expertdg/nn/mlp.hpp"

namespace expertdg::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Index checked = 0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps parameters whose true
/// gradient is ~0 from reporting pure finite-difference noise as error.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of `loss_at(params)` compared with `analytic`
/// coordinate by coordinate.
template <typename LossAt>
GradCheckReport finite_difference_check(const Vector& params, const Vector& analytic, LossAt&& loss_at, double fd_step,
                                        double tol, double floor = 1e-6) {
  if (!(fd_step > 0)) throw std::invalid_argument("grad_check: fd_step must be positive");
  if (params.size() != analytic.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  GradCheckReport report;
  Vector probe = params;
  for (Index k = 0; k < params.size(); ++k) {
    probe(k) = params(k) + fd_step;
    const double up = loss_at(probe);
    probe(k) = params(k) - fd_step;
    const double down = loss_at(probe);
    probe(k) = params(k);
    const double numeric = (up - down) / (2.0 * fd_step);
    const double err = relative_error(analytic(k), numeric, floor);
    if (err > report.max_rel_error || report.worst_index < 0) {
      report.max_rel_error = err;
      report.worst_index = k;
      report.worst_analytic = analytic(k);
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

/// Smallest |pre-activation| over the hidden layers for this batch.
inline double min_hidden_preactivation(const Mlp& model, const Matrix& inputs) {
  const auto cache = forward_cached(model, inputs);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < cache.preactivations.size(); ++l)
    m = std::min(m, cache.preactivations[l].cwiseAbs().minCoeff());
  return m;
}

/// Checks backprop_grads against central differences for every parameter.
/// ReLU networks must be evaluated away from kinks: any hidden
/// pre-activation within 10 * fd_step of zero is rejected.
inline GradCheckReport grad_check(const Mlp& model, const Batch& batch, LossKind kind, double fd_step, double tol,
                                  double floor = 1e-6) {
  if (!(fd_step > 0)) throw std::invalid_argument("grad_check: fd_step must be positive");
  if (model.activation == Activation::relu && model.num_layers() > 1 &&
      min_hidden_preactivation(model, batch.inputs) < 10.0 * fd_step)
    throw std::invalid_argument("grad_check: relu pre-activation too close to a kink");
  const auto analytic = backprop_grads(model, batch, kind);
  Mlp probe = model;
  auto loss_at = [&](const Vector& flat) {
    assign_flat(probe, flat);
    return batch_loss(probe, batch, kind);
  };
  return finite_difference_check(flatten(model), flatten(analytic.grads), loss_at, fd_step, tol, floor);
}

}  // namespace expertdg::nn
