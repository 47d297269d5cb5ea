#include "expertdg/ensemble/regularizers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "expertdg/clip/encoders.hpp"
#include "expertdg/nn/loss.hpp"

namespace expertdg::ensemble {

std::string to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::entropy_ueo: return "entropy_ueo";
    case RegularizerKind::mms: return "mms";
  }
  return "?";
}

RegularizerKind parse_regularizer_kind(std::string_view s) {
  if (s == "none") return RegularizerKind::none;
  if (s == "entropy_ueo") return RegularizerKind::entropy_ueo;
  if (s == "mms") return RegularizerKind::mms;
  throw std::invalid_argument("unknown regularizer: " + std::string(s));
}

std::string to_string(WeightAveraging k) {
  switch (k) {
    case WeightAveraging::none: return "none";
    case WeightAveraging::bma: return "bma";
    case WeightAveraging::wise: return "wise";
  }
  return "?";
}

WeightAveraging parse_weight_averaging(std::string_view s) {
  if (s == "none") return WeightAveraging::none;
  if (s == "bma") return WeightAveraging::bma;
  if (s == "wise") return WeightAveraging::wise;
  throw std::invalid_argument("unknown weight averaging: " + std::string(s));
}

void RegularizerConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("regularizer: alpha must be >= 0");
  if (!(wise_alpha >= 0.0 && wise_alpha <= 1.0)) throw std::invalid_argument("regularizer: wise_alpha must be in [0, 1]");
  if (!(bma_beta > 0.0)) throw std::invalid_argument("regularizer: bma_beta must be positive");
  if (!(lambda_margin >= 0.0)) throw std::invalid_argument("regularizer: lambda_margin must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("regularizer: batch size must be >= 1");
}

namespace {

void check_simplex(const Matrix& probs) {
  if (probs.cols() == 0 || probs.rows() == 0) throw std::invalid_argument("entropy_ueo: empty batch");
  for (Index j = 0; j < probs.cols(); ++j) {
    if (!probs.col(j).allFinite() || probs.col(j).minCoeff() < 0.0 || std::abs(probs.col(j).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("entropy_ueo: column " + std::to_string(j) + " is not a probability vector");
  }
}

// Column mean taken around the first column, so identical columns give their own value back.
Vector shifted_mean(const Matrix& m) {
  const Vector base = m.col(0);
  return base + (m.colwise() - base).rowwise().mean();
}

// (1/B) sum_x sum_c p_xc (log mean_c - log p_xc), which equals the UEO value.
double ueo_value(const Matrix& probs, const Vector& mean) {
  double loss = 0.0;
  for (Index j = 0; j < probs.cols(); ++j) {
    double s = 0.0;
    for (Index c = 0; c < probs.rows(); ++c)
      if (probs(c, j) > 0.0) s += probs(c, j) * (std::log(mean(c)) - std::log(probs(c, j)));
    loss += s;
  }
  return loss / static_cast<double>(probs.cols());
}

}  // namespace

double entropy_ueo(const Matrix& probs, Matrix* d_probs) {
  check_simplex(probs);
  const double b = static_cast<double>(probs.cols());
  const Vector mean = shifted_mean(probs);
  const double loss = ueo_value(probs, mean);
  if (d_probs) {
    d_probs->resize(probs.rows(), probs.cols());
    for (Index j = 0; j < probs.cols(); ++j)
      for (Index c = 0; c < probs.rows(); ++c) {
        const double lp = probs(c, j) > 0.0 ? std::log(probs(c, j)) : 0.0;
        const double lm = mean(c) > 0.0 ? std::log(mean(c)) : 0.0;
        (*d_probs)(c, j) = (lm - lp) / b;
      }
  }
  return loss;
}

double entropy_ueo_logits(const Matrix& logits, Matrix* d_logits) {
  if (logits.cols() == 0 || logits.rows() == 0) throw std::invalid_argument("entropy_ueo: empty batch");
  nn::require_finite(logits, "entropy_ueo");
  Matrix probs(logits.rows(), logits.cols());
  Matrix logp(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    logp.col(j) = nn::log_softmax(logits.col(j));
    probs.col(j) = logp.col(j).array().exp();
  }
  const double b = static_cast<double>(logits.cols());
  const Vector mean = shifted_mean(probs);
  const double loss = ueo_value(probs, mean);
  if (d_logits) {
    d_logits->resize(logits.rows(), logits.cols());
    const Vector log_mean = mean.array().log();
    for (Index j = 0; j < logits.cols(); ++j) {
      const Vector g = (log_mean - logp.col(j)) / b;
      const Vector p = probs.col(j);
      d_logits->col(j) = p.cwiseProduct(g.array().matrix() - Vector::Constant(p.size(), p.dot(g)));
    }
  }
  return loss;
}

Vector mms_distances(const Matrix& texts, Index label) {
  if (label < 0 || label >= texts.rows()) throw std::invalid_argument("mms: label out of range");
  Vector d(texts.rows());
  const Vector ty = texts.row(label).transpose();
  for (Index c = 0; c < texts.rows(); ++c) d(c) = c == label ? 0.0 : 1.0 - clip::cosine(ty, texts.row(c).transpose());
  return d;
}

double mms_loss(const Vector& sims, Index label, const Vector& distances, double lambda, double tau, Vector* d_sims) {
  if (sims.size() == 0) throw std::invalid_argument("mms: empty similarities");
  if (distances.size() != sims.size()) throw std::invalid_argument("mms: distance length mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("mms: temperature must be positive");
  if (label < 0 || label >= sims.size()) throw std::invalid_argument("mms: label out of range");
  Vector logits = (sims + lambda * distances) / tau;
  logits(label) = sims(label) / tau;
  const double loss = nn::cross_entropy_logits(logits, label);
  if (d_sims) *d_sims = nn::cross_entropy_grad(logits, label) / tau;
  return loss;
}

double regularizer_eval(const RegularizerConfig& reg, const RegularizerBatch& batch, double tau) {
  reg.validate();
  switch (reg.kind) {
    case RegularizerKind::none: return 0.0;
    case RegularizerKind::entropy_ueo: return entropy_ueo(batch.probs);
    case RegularizerKind::mms: {
      const Index b = batch.similarities.cols();
      if (b == 0) throw std::invalid_argument("mms: empty batch");
      if (static_cast<Index>(batch.labels.size()) != b || batch.distances.cols() != b)
        throw std::invalid_argument("mms: batch size mismatch");
      double total = 0.0;
      for (Index j = 0; j < b; ++j)
        total += mms_loss(batch.similarities.col(j), batch.labels[static_cast<std::size_t>(j)], batch.distances.col(j),
                          reg.lambda_margin, tau);
      return total / static_cast<double>(b);
    }
  }
  return 0.0;
}

Vector weight_space_blend(const Vector& pretrained, const Vector& finetuned, double wise_alpha) {
  if (pretrained.size() != finetuned.size()) throw std::invalid_argument("wise: parameter size mismatch");
  if (!(wise_alpha >= 0.0 && wise_alpha <= 1.0)) throw std::invalid_argument("wise: alpha must be in [0, 1]");
  if (wise_alpha == 0.0) return pretrained;
  if (wise_alpha == 1.0) return finetuned;
  return (1.0 - wise_alpha) * pretrained + wise_alpha * finetuned;
}

nn::Mlp weight_space_blend(const nn::Mlp& pretrained, const nn::Mlp& finetuned, double wise_alpha) {
  if (pretrained.layer_sizes != finetuned.layer_sizes) throw std::invalid_argument("wise: architectures differ");
  nn::Mlp out = pretrained;
  nn::assign_flat(out, weight_space_blend(nn::flatten(pretrained), nn::flatten(finetuned), wise_alpha));
  return out;
}

double beta_density(double x, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta density: parameter must be positive");
  if (!(x > 0.0 && x < 1.0)) throw std::invalid_argument("beta density: x must be in (0, 1)");
  const double log_norm = 2.0 * std::lgamma(beta) - std::lgamma(2.0 * beta);
  return std::exp((beta - 1.0) * (std::log(x) + std::log1p(-x)) - log_norm);
}

double bma_coefficient(Index t, Index horizon, double beta) {
  if (t < 0 || horizon < 0 || t > horizon) throw std::invalid_argument("bma: step outside [0, T]");
  return beta_density((static_cast<double>(t) + 0.5) / (static_cast<double>(horizon) + 1.0), beta);
}

BetaMovingAverage::BetaMovingAverage(Index horizon, double beta) : horizon_(horizon), beta_(beta) {
  if (horizon < 0) throw std::invalid_argument("bma: negative horizon");
  if (!(beta > 0.0)) throw std::invalid_argument("bma: beta must be positive");
}

void BetaMovingAverage::update(const Vector& theta) {
  const double a = bma_coefficient(t_, horizon_, beta_);
  const double total = weight_sum_ + a;
  if (t_ == 0) {
    value_ = theta;
  } else {
    if (theta.size() != value_.size()) throw std::invalid_argument("bma: parameter size changed");
    value_ = (weight_sum_ / total) * value_ + (a / total) * theta;
  }
  weight_sum_ = total;
  ++t_;
}

Vector bma_update(const Vector& theta_bma, const Vector& theta_t, Index t, Index horizon, double beta) {
  if (theta_bma.size() != theta_t.size()) throw std::invalid_argument("bma: parameter size mismatch");
  const double a = bma_coefficient(t, horizon, beta);
  double prior = 0.0;
  for (Index k = 0; k < t; ++k) prior += bma_coefficient(k, horizon, beta);
  if (t == 0) return theta_t;
  const double total = prior + a;
  return (prior / total) * theta_bma + (a / total) * theta_t;
}

}  // namespace expertdg::ensemble
