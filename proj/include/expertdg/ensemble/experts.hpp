#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "expertdg/clip/encoders.hpp"
#include "expertdg/data/dataset.hpp"
#include "expertdg/nn/mlp.hpp"

namespace expertdg::ensemble {

using Eigen::Index;
using nn::Matrix;
using nn::Vector;

enum class ExpertMode { prompt, mlp };

/// Frozen domain experts. Prompt mode caches each expert's C x d_f text
/// features (experts and text encoder are frozen once step 1 ends).
struct ExpertSet {
  ExpertMode mode = ExpertMode::prompt;
  std::vector<clip::PromptExpert> prompts;
  std::vector<Matrix> text_features;
  std::vector<nn::Mlp> mlps;
  std::map<int, Index> domain_to_expert;

  Index size() const {
    return mode == ExpertMode::prompt ? static_cast<Index>(prompts.size()) : static_cast<Index>(mlps.size());
  }

  /// Throws std::invalid_argument for a domain without an expert.
  Index expert_for(int domain_id) const;
};

/// One expert per prompt, routed by the prompt's domain_id.
ExpertSet make_prompt_experts(const clip::EncoderPair& pair, std::vector<clip::PromptExpert> prompts);

/// A single prompt that every listed domain is routed to.
ExpertSet make_universal_expert(const clip::EncoderPair& pair, clip::PromptExpert prompt, const std::vector<int>& domain_ids);

ExpertSet make_mlp_experts(std::vector<nn::Mlp> models);

struct ExpertTrainConfig {
  Index epochs = 150;
  Index batch_size = 0;  // 0: full batch
  double learning_rate = 2e-3;
};

struct ExpertTrainResult {
  clip::PromptExpert expert;
  // loss_history[0] is the mean cross-entropy before training,
  // loss_history[e] after e epochs.
  std::vector<double> loss_history;
};

/// Prompt tuning on one domain with both encoders frozen: minimises the mean
/// cross-entropy of the zero-shot softmax over this expert's class prompts.
ExpertTrainResult train_domain_expert(const clip::EncoderPair& pair, const data::DomainDataset& domain,
                                      const clip::PromptExpert& init, const ExpertTrainConfig& cfg, std::uint64_t seed);

/// Mean cross-entropy of the expert's zero-shot predictions on a domain.
double expert_loss(const clip::EncoderPair& pair, const Matrix& texts, const data::DomainDataset& domain);

// Prompt experts as text: "expertdg-experts 1", "count <d>", then per expert
// "domain <id>" and its embedding matrix.
void save_prompts(const std::filesystem::path& path, const std::vector<clip::PromptExpert>& prompts);
std::vector<clip::PromptExpert> load_prompts(const std::filesystem::path& path);

}  // namespace expertdg::ensemble
