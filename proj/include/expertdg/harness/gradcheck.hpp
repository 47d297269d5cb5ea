#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace expertdg::harness {

using Eigen::Index;

struct GradcheckConfig {
  Index max_hidden_layers = 3;
  Index max_width = 64;
  Index batch_size = 8;
  Index joint_trials = 9;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  void validate() const;
};

struct GradcheckRow {
  std::string kind;          // "mlp" or "joint"
  Index trial = 0;
  std::string architecture;  // e.g. "5-17-3" or "vision 5-7-6 d=3"
  std::string activation;
  std::string loss;
  Index params = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// `trials` randomized MLPs (1..max_hidden_layers hidden layers, widths
/// 1..max_width, tanh/relu/identity, mse or cross-entropy) followed by
/// joint_trials checks of the Step-2 objective over the vision encoder and
/// CMAttn parameters, cycling through loss modes and regularizers.
std::vector<GradcheckRow> run_gradcheck(const GradcheckConfig& cfg, std::uint64_t seed, Index trials);

}  // namespace expertdg::harness
