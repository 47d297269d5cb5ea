#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "expertdg/clip/encoders.hpp"
#include "expertdg/data/dataset.hpp"
#include "expertdg/ensemble/experts.hpp"
#include "expertdg/ensemble/finetune.hpp"

namespace expertdg::harness {

using Eigen::Index;
using nn::Vector;

struct DgConfig {
  data::SuiteConfig suite;
  Index samples_per_domain = 200;
  // feature_dim and n_classes follow the suite.
  clip::EncoderConfig encoder;
  clip::PretrainConfig pretrain;
  Index pool_size = 2000;  // identity-map pretraining samples
  Index k_shot = 16;
  double step2_fraction = 0.5;
  ensemble::ExpertTrainConfig expert;
  ensemble::FinetuneConfig finetune;

  DgConfig();
  /// Suite config with samples_per_domain expanded to every domain.
  data::SuiteConfig suite_config() const;
  clip::EncoderConfig encoder_config() const;
  /// min_domains: 3 for the benchmark; the ablation also accepts 2.
  void validate(Index min_domains = 3) const;
};

/// One leave-one-out evaluation: held-out `target`, experts for `sources`.
struct DgEvaluation {
  std::uint64_t seed = 0;
  Index seed_index = 0;
  int target = 0;
  std::vector<int> sources;
  double guidg_accuracy = 0.0;
  double erm_accuracy = 0.0;
  Vector mean_weights;
  std::vector<double> solo_accuracy;
  double best_solo() const;
  /// Some expert tied for the lowest solo accuracy also has the lowest mean weight.
  bool worst_gets_min_weight() const;
};

/// Per target domain, averaged over seeds.
struct WeightReportRow {
  int target = 0;
  std::vector<int> sources;
  Vector mean_weights;
  std::vector<double> solo_accuracy;
  double ensemble_accuracy = 0.0;
  double best_solo_accuracy = 0.0;
};

struct DgResult {
  std::vector<DgEvaluation> evaluations;  // sorted by (target, seed index)
  std::vector<WeightReportRow> weights;   // sorted by target
  double mean_guidg = 0.0;
  double mean_erm = 0.0;
  double mean_best_solo = 0.0;
  double worst_min_weight_rate = 0.0;
};

DgResult run_dg_benchmark(const DgConfig& cfg, std::uint64_t seed, Index n_seeds, unsigned threads = 1);

enum class AblationExperts { single, uniform, learnable };
enum class AblationData { disjoint, shared };

std::string to_string(AblationExperts e);
std::string to_string(AblationData d);

struct AblationRow {
  AblationExperts experts = AblationExperts::single;
  AblationData data = AblationData::disjoint;
  int target = 0;
  Index seed_index = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct AblationCell {
  AblationExperts experts = AblationExperts::single;
  AblationData data = AblationData::disjoint;
  double mean_accuracy = 0.0;
  Index evaluations = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;    // sorted by (experts, data, target, seed index)
  std::vector<AblationCell> cells;  // 3 x 2 grid in enum order
  double mean(AblationExperts e, AblationData d) const;
};

/// single: one prompt on the pooled Step-1 data, Step 2 without CMAttn.
/// uniform / learnable: one expert per source, Step 2 with w = 1/d or CMAttn.
/// disjoint: Step 1 and Step 2 use the two halves of the few-shot data;
/// shared: both steps use all of it.
AblationResult run_ablation(const DgConfig& cfg, std::uint64_t seed, Index n_seeds, unsigned threads = 1);

}  // namespace expertdg::harness
