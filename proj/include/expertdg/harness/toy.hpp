#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "expertdg/data/dataset.hpp"
#include "expertdg/nn/train.hpp"

namespace expertdg::harness {

using Eigen::Index;
using nn::Matrix;
using nn::Vector;

enum class ToySplit { sign, random };

std::string to_string(ToySplit s);
ToySplit parse_toy_split(const std::string& s);

struct ToyExperimentConfig {
  std::vector<long long> h1{60, 80, 100};
  Index repeats = 40;
  data::ToyConfig data;
  double step2_fraction = 0.5;
  ToySplit split = ToySplit::sign;  // how Step-1 samples are divided between the experts
  long long expert_hidden = 40;
  long long aggregator_hidden = 3;
  nn::Activation activation = nn::Activation::tanh;
  bool aggregator_include_input = false;
  nn::FitConfig universal_fit;
  nn::FitConfig expert_fit;
  nn::FitConfig aggregator_fit;
  double delta = 0.05;
  double c_L = 1.0;
  double C_const = 1.0;

  ToyExperimentConfig();
  void validate() const;
};

struct ToyRow {
  long long h1 = 0;
  double R_B = 0, R_O = 0, E_B = 0, E_O = 0, R = 0, r = 0;
};

/// Test risks of one repeat: R_B per h1 (same order as the config) and R_O
/// of the aggregated experts, which do not depend on h1.
struct ToyRepeat {
  Index repeat = 0;
  std::uint64_t seed = 0;
  std::vector<double> R_B;
  double R_O = 0;
};

struct ToyResult {
  std::vector<ToyRow> rows;  // sorted by h1
  std::vector<ToyRepeat> repeats;
};

/// Universal 1->h1->h1->1 on all training samples; two 1->h->h->1 experts on
/// the Step-1 half split by sign of x (or alternately with ToySplit::random); a 2->3->1 aggregator on the Step-2 half.
ToyRepeat run_toy_repeat(const ToyExperimentConfig& cfg, Index repeat, std::uint64_t seed);

/// Means over repeats; E = R - noise_sd^2, R = E_B / E_O, r from the bound
/// ratio. Repeats run on up to `threads` workers; results do not depend on it.
ToyResult run_toy_experiment(const ToyExperimentConfig& cfg, std::uint64_t seed, unsigned threads = 1);

}  // namespace expertdg::harness
