#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "expertdg/clip/encoders.hpp"
#include "expertdg/data/dataset.hpp"
#include "expertdg/ensemble/cmattn.hpp"
#include "expertdg/ensemble/experts.hpp"
#include "expertdg/ensemble/regularizers.hpp"
#include "expertdg/nn/optimizer.hpp"

namespace expertdg::ensemble {

/// learnable: w(x) from CMAttn. uniform: w = 1/d, CMAttn untouched.
enum class WeightMode { learnable, uniform };

/// Which cross-entropy terms enter L_f for a sample x of domain i:
///   own_domain:  w_i(x) CE_i(x)
///   all_experts: sum_k w_k(x) CE_k(x)
///   ensemble:    CE of the weighted logits sum_k w_k(x) s^k(x) / tau
enum class Step2Loss { own_domain, all_experts, ensemble };

std::string to_string(WeightMode m);
WeightMode parse_weight_mode(std::string_view s);
std::string to_string(Step2Loss m);
Step2Loss parse_step2_loss(std::string_view s);

struct FinetuneConfig {
  Index epochs = 30;
  double learning_rate = 1e-3;
  WeightMode weight_mode = WeightMode::learnable;
  Step2Loss loss_mode = Step2Loss::own_domain;
  double attention_temperature = 1.0;
  RegularizerConfig reg;

  void validate() const;
};

/// Step-2 samples: inputs are columns, each tagged with its source domain.
struct Step2Batch {
  Matrix inputs;  // feature_dim x B
  std::vector<Index> labels;
  std::vector<int> domains;

  Index size() const { return inputs.cols(); }
};

Step2Batch make_step2_batch(const std::vector<data::DomainDataset>& domains);
Step2Batch select_columns(const Step2Batch& batch, const std::vector<std::size_t>& order, Index start, Index count);

struct Step2Gradients {
  nn::Gradients vision;
  CmattnParams cmattn;
};

struct Step2Result {
  double objective = 0.0;  // loss_f + alpha * loss_r
  double loss_f = 0.0;
  double loss_r = 0.0;
  Step2Gradients grads;  // filled only when requested
};

/// Joint objective L_f + alpha L_r over the trainable vision encoder and
/// CMAttn parameters; L_f sums over the batch. Throws if a sample's domain
/// has no expert.
Step2Result step2_objective(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params,
                            const Step2Batch& batch, const FinetuneConfig& cfg, bool with_grads = true);

/// Optimizer over vision slots [0, 2L) and CMAttn slots [2L, 2L + 4).
struct Step2State {
  nn::Optimizer optimizer;
  explicit Step2State(double learning_rate);
};

/// One optimisation step; mutates only pair.vision and (learnable mode) params.
Step2Result guided_finetune_step(clip::EncoderPair& pair, const ExpertSet& experts, CmattnParams& params,
                                 const Step2Batch& batch, const FinetuneConfig& cfg, Step2State& state);

struct FinetuneHistory {
  std::vector<double> loss_f;  // mean per-epoch minibatch L_f
  std::vector<double> loss_r;
  Index steps = 0;
};

/// Minibatch fine-tuning over the pooled step-2 data, with optional BMA or
/// WiSE-FT applied to the vision encoder and CMAttn parameters.
FinetuneHistory guided_finetune(clip::EncoderPair& pair, const ExpertSet& experts, CmattnParams& params,
                                const std::vector<data::DomainDataset>& step2, const FinetuneConfig& cfg,
                                std::uint64_t seed);

struct InferResult {
  Index predicted = 0;
  std::vector<Vector> expert_logits;  // cos(E_v(x), T^i_c) / tau, per expert
  Vector weights;
};

/// y = argmax_c sum_i w_i(x) cos(E_v(x), T^i_c) / tau.
InferResult ensemble_infer(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params,
                           const Vector& x, WeightMode mode = WeightMode::learnable, double attention_temperature = 1.0);

/// Same rule with caller-supplied weights.
Index weighted_argmax(const std::vector<Vector>& expert_logits, const Vector& weights);

struct EnsembleEval {
  double accuracy = 0.0;
  Vector mean_weights;
  std::vector<double> solo_accuracy;
};

EnsembleEval evaluate_ensemble(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params,
                               const data::DomainDataset& domain, WeightMode mode = WeightMode::learnable,
                               double attention_temperature = 1.0);

}  // namespace expertdg::ensemble
