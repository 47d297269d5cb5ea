#pragma once

#include <cstdint>
#include <vector>

#include "expertdg/data/dataset.hpp"
#include "expertdg/ensemble/experts.hpp"
#include "expertdg/nn/train.hpp"

namespace expertdg::ensemble {

/// Aggregator inputs: one row per expert output, plus x itself when
/// include_input is set. Columns are samples.
Matrix aggregator_inputs(const ExpertSet& experts, const Matrix& x, bool include_input = false);

struct AggregatorResult {
  nn::Mlp aggregator;
  std::vector<double> history;
};

/// Fits the aggregator by mse on the step-2 regression data; experts are
/// only evaluated. Training runs on standardised inputs and targets and the
/// returned network has the standardisation folded into its outer layers.
/// history is in the original target units.
AggregatorResult toy_aggregate_train(const ExpertSet& experts, const nn::Mlp& aggregator, const data::DomainDataset& step2,
                                     const nn::FitConfig& cfg, std::uint64_t seed, bool include_input = false);

/// f~(x) for every column of x.
Vector toy_aggregate_predict(const ExpertSet& experts, const nn::Mlp& aggregator, const Matrix& x,
                             bool include_input = false);

}  // namespace expertdg::ensemble
