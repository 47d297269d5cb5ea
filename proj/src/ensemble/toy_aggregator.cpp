#include "expertdg/ensemble/toy_aggregator.hpp"

#include <cmath>
#include <stdexcept>

namespace expertdg::ensemble {

Matrix aggregator_inputs(const ExpertSet& experts, const Matrix& x, bool include_input) {
  if (experts.mode != ExpertMode::mlp || experts.mlps.empty()) throw std::invalid_argument("aggregator: mlp experts required");
  const Index d = experts.size();
  Matrix in(d + (include_input ? x.rows() : 0), x.cols());
  for (Index k = 0; k < d; ++k) {
    const nn::Mlp& e = experts.mlps[static_cast<std::size_t>(k)];
    if (e.output_size() != 1) throw std::invalid_argument("aggregator: experts must have scalar output");
    in.row(k) = nn::forward_batch(e, x);
  }
  if (include_input) in.bottomRows(x.rows()) = x;
  return in;
}

AggregatorResult toy_aggregate_train(const ExpertSet& experts, const nn::Mlp& aggregator, const data::DomainDataset& step2,
                                     const nn::FitConfig& cfg, std::uint64_t seed, bool include_input) {
  if (!step2.is_regression()) throw std::invalid_argument("aggregator: regression data required");
  const Matrix raw = aggregator_inputs(experts, step2.inputs(), include_input);
  if (aggregator.input_size() != raw.rows() || aggregator.output_size() != 1)
    throw std::invalid_argument("aggregator: input width must equal the expert count (plus x if included)");

  // Fit on standardised inputs and targets, then fold both affine maps into
  // the first and last layers.
  const Vector mu = raw.rowwise().mean();
  Vector sd = ((raw.colwise() - mu).rowwise().squaredNorm() / static_cast<double>(raw.cols())).cwiseSqrt();
  for (Index i = 0; i < sd.size(); ++i)
    if (!(sd(i) > 1e-12)) sd(i) = 1.0;
  const double y_mu = step2.targets.mean();
  double y_sd = std::sqrt((step2.targets.array() - y_mu).square().mean());
  if (!(y_sd > 1e-12)) y_sd = 1.0;

  nn::Batch batch;
  batch.inputs = (raw.colwise() - mu).array().colwise() / sd.array();
  batch.targets = ((step2.targets.array() - y_mu) / y_sd).matrix().transpose();
  AggregatorResult r{aggregator, {}};
  r.history = nn::fit(r.aggregator, batch, nn::LossKind::mse, cfg, seed);
  for (double& h : r.history) h *= y_sd * y_sd;

  nn::Mlp& a = r.aggregator;
  const Matrix w0 = a.weights.front() * sd.cwiseInverse().asDiagonal();
  a.biases.front() -= w0 * mu;
  a.weights.front() = w0;
  a.weights.back() *= y_sd;
  a.biases.back() = (a.biases.back() * y_sd).array() + y_mu;
  return r;
}

Vector toy_aggregate_predict(const ExpertSet& experts, const nn::Mlp& aggregator, const Matrix& x, bool include_input) {
  return nn::forward_batch(aggregator, aggregator_inputs(experts, x, include_input)).row(0).transpose();
}

}  // namespace expertdg::ensemble
