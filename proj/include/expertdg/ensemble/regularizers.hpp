#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "expertdg/nn/mlp.hpp"

namespace expertdg::ensemble {

using Eigen::Index;
using nn::Matrix;
using nn::Vector;

enum class RegularizerKind { none, entropy_ueo, mms };
enum class WeightAveraging { none, bma, wise };

std::string to_string(RegularizerKind k);
RegularizerKind parse_regularizer_kind(std::string_view s);
std::string to_string(WeightAveraging k);
WeightAveraging parse_weight_averaging(std::string_view s);

struct RegularizerConfig {
  RegularizerKind kind = RegularizerKind::none;
  double alpha = 0.1;
  double lambda_margin = 0.1;
  WeightAveraging averaging = WeightAveraging::none;
  double wise_alpha = 0.5;
  double bma_beta = 0.5;
  Index batch_size = 32;

  void validate() const;
};

/// sum_x (1/B) H(p(x)) - H(mean_x p(x)), natural log. Columns of `probs`
/// are per-sample distributions. If `d_probs` is given it receives
/// d L / d probs.
double entropy_ueo(const Matrix& probs, Matrix* d_probs = nullptr);

/// UEO on logits (columns), with d L / d logits through the softmax.
double entropy_ueo_logits(const Matrix& logits, Matrix* d_logits = nullptr);

/// Margin distances D(T_y, T_c) = 1 - cos(T_y, T_c) for every class c.
Vector mms_distances(const Matrix& texts, Index label);

/// -log( exp(S_y/tau) / sum_c exp((S_c + lambda D(T_y,T_c))/tau) ), where S
/// are cosine similarities. D(T_y,T_y) = 0, so this is the cross-entropy of
/// the margin-shifted logits. `d_sims` receives d L / d S when given.
double mms_loss(const Vector& sims, Index label, const Vector& distances, double lambda, double tau,
                Vector* d_sims = nullptr);

/// Inputs for regularizer_eval: per-sample columns.
struct RegularizerBatch {
  Matrix probs;         // C x B, used by entropy_ueo
  Matrix similarities;  // C x B cosine similarities, used by mms
  Matrix distances;     // C x B margin distances, used by mms
  std::vector<Index> labels;
};

/// L_r for the configured kind; mms is averaged over the batch.
double regularizer_eval(const RegularizerConfig& reg, const RegularizerBatch& batch, double tau);

/// (1 - alpha) * pretrained + alpha * finetuned.
Vector weight_space_blend(const Vector& pretrained, const Vector& finetuned, double wise_alpha);
nn::Mlp weight_space_blend(const nn::Mlp& pretrained, const nn::Mlp& finetuned, double wise_alpha);

/// Beta(beta, beta) probability density at x in (0, 1).
double beta_density(double x, double beta);

/// alpha_t = Beta(beta, beta) density at (t + 0.5) / (T + 1).
double bma_coefficient(Index t, Index horizon, double beta);

/// Running beta moving average over t = 0..T.
class BetaMovingAverage {
 public:
  BetaMovingAverage(Index horizon, double beta);

  /// Folds in theta_t for the next t; throws once t would exceed T.
  void update(const Vector& theta);

  const Vector& value() const { return value_; }
  Index next_step() const { return t_; }

 private:
  Index horizon_;
  double beta_;
  Index t_ = 0;
  double weight_sum_ = 0.0;
  Vector value_;
};

/// One BMA update: (S_{t-1} / S_t) theta_bma + (alpha_t / S_t) theta_t with
/// S_t = sum_{k<=t} alpha_k.
Vector bma_update(const Vector& theta_bma, const Vector& theta_t, Index t, Index horizon, double beta);

}  // namespace expertdg::ensemble
