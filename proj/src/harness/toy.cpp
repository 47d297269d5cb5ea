#include "expertdg/harness/toy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "expertdg/bounds/bounds.hpp"
#include "expertdg/ensemble/toy_aggregator.hpp"
#include "expertdg/harness/parallel.hpp"

namespace expertdg::harness {

std::string to_string(ToySplit s) { return s == ToySplit::sign ? "sign" : "random"; }

ToySplit parse_toy_split(const std::string& s) {
  if (s == "sign") return ToySplit::sign;
  if (s == "random") return ToySplit::random;
  throw std::invalid_argument("unknown toy split '" + s + "' (expected sign|random)");
}

ToyExperimentConfig::ToyExperimentConfig() {
  universal_fit.epochs = 2000;
  expert_fit.epochs = 2000;
  aggregator_fit.epochs = 2000;
}

void ToyExperimentConfig::validate() const {
  if (h1.empty()) throw std::invalid_argument("toy.h1 must list at least one width");
  for (long long h : h1)
    if (h < 1) throw std::invalid_argument("toy.h1 entries must be >= 1");
  if (repeats < 1) throw std::invalid_argument("toy.repeats must be >= 1");
  if (data.n_train < 4 || data.n_test < 1) throw std::invalid_argument("toy: need n_train >= 4 and n_test >= 1");
  if (!(data.noise_sd >= 0)) throw std::invalid_argument("toy.noise_sd must be >= 0");
  if (!(data.x_lo < 0 && data.x_hi > 0)) throw std::invalid_argument("toy: x range must contain both signs");
  if (!(step2_fraction > 0 && step2_fraction < 1)) throw std::invalid_argument("toy.step2_fraction must be in (0, 1)");
  if (expert_hidden < 1 || aggregator_hidden < 1) throw std::invalid_argument("toy: hidden widths must be >= 1");
  for (const auto* f : {&universal_fit, &expert_fit, &aggregator_fit})
    if (f->epochs < 0 || !(f->optimizer.learning_rate > 0)) throw std::invalid_argument("toy: invalid training schedule");
  if (!(delta > 0 && delta < 1)) throw std::invalid_argument("toy.delta must be in (0, 1)");
}

namespace {

double test_mse(const Vector& pred, const Vector& target) {
  return (pred - target).squaredNorm() / static_cast<double>(target.size());
}

nn::Batch regression_batch(const data::DomainDataset& d) {
  nn::Batch b;
  b.inputs = d.inputs();
  b.targets = d.targets.transpose();
  return b;
}

nn::Mlp train_regressor(std::vector<Index> sizes, const data::DomainDataset& d, const ToyExperimentConfig& cfg,
                        const nn::FitConfig& fit, const Rng& rng) {
  Rng init = rng.child(0);
  nn::Mlp model = nn::make_random_mlp<double>(sizes, cfg.activation, init);
  nn::fit(model, regression_batch(d), nn::LossKind::mse, fit, rng.child(1).seed());
  return model;
}

}  // namespace

ToyRepeat run_toy_repeat(const ToyExperimentConfig& cfg, Index repeat, std::uint64_t seed) {
  cfg.validate();
  const Rng root(seed);
  const data::ToyData toy = data::gen_toy_regression(cfg.data, root.child(0).seed());
  const data::SplitPair split = data::split_step_data({toy.train}, cfg.step2_fraction, root.child(1).seed());
  const data::DomainDataset& step1 = split.step1.front();
  const data::DomainDataset& step2 = split.step2.front();

  std::vector<Index> neg, pos;
  for (Index r = 0; r < step1.size(); ++r) {
    const bool first = cfg.split == ToySplit::sign ? step1.features(r, 0) < 0 : r % 2 == 0;
    (first ? neg : pos).push_back(r);
  }
  if (neg.empty() || pos.empty()) throw std::runtime_error("toy: an expert received no Step-1 samples");
  const Index eh = static_cast<Index>(cfg.expert_hidden);

  std::vector<nn::Mlp> experts;
  experts.push_back(train_regressor({1, eh, eh, 1}, step1.subset(neg), cfg, cfg.expert_fit, root.child(2)));
  experts.push_back(train_regressor({1, eh, eh, 1}, step1.subset(pos), cfg, cfg.expert_fit, root.child(3)));
  const ensemble::ExpertSet set = ensemble::make_mlp_experts(std::move(experts));

  const Index agg_in = 2 + (cfg.aggregator_include_input ? 1 : 0);
  Rng agg_rng = root.child(4).child(0);
  const nn::Mlp agg0 =
      nn::make_random_mlp<double>({agg_in, static_cast<Index>(cfg.aggregator_hidden), 1}, cfg.activation, agg_rng);
  const auto agg = ensemble::toy_aggregate_train(set, agg0, step2, cfg.aggregator_fit, root.child(4).child(1).seed(),
                                                 cfg.aggregator_include_input);
  const Matrix test_x = toy.test.inputs();

  ToyRepeat out;
  out.repeat = repeat;
  out.seed = seed;
  out.R_O = test_mse(ensemble::toy_aggregate_predict(set, agg.aggregator, test_x, cfg.aggregator_include_input),
                     toy.test.targets);
  for (long long h : cfg.h1) {
    const Index hi = static_cast<Index>(h);
    const nn::Mlp universal =
        train_regressor({1, hi, hi, 1}, toy.train, cfg, cfg.universal_fit, root.child(100 + static_cast<std::uint64_t>(h)));
    out.R_B.push_back(test_mse(nn::forward_batch(universal, test_x).row(0).transpose(), toy.test.targets));
  }
  return out;
}

ToyResult run_toy_experiment(const ToyExperimentConfig& cfg, std::uint64_t seed, unsigned threads) {
  cfg.validate();
  ToyResult result;
  result.repeats.resize(static_cast<std::size_t>(cfg.repeats));
  parallel_for(cfg.repeats, threads, [&](long long k) {
    result.repeats[static_cast<std::size_t>(k)] = run_toy_repeat(cfg, k, derive_seed(seed, static_cast<std::uint64_t>(k)));
  });

  const double reps = static_cast<double>(cfg.repeats);
  const double bayes = cfg.data.noise_sd * cfg.data.noise_sd;
  double r_o = 0;
  for (const auto& rep : result.repeats) r_o += rep.R_O;
  r_o /= reps;
  for (std::size_t j = 0; j < cfg.h1.size(); ++j) {
    ToyRow row;
    row.h1 = cfg.h1[j];
    for (const auto& rep : result.repeats) row.R_B += rep.R_B[j];
    row.R_B /= reps;
    row.R_O = r_o;
    row.E_B = row.R_B - bayes;
    row.E_O = row.R_O - bayes;
    row.R = row.E_B / row.E_O;
    bounds::ToyBoundSpec spec;
    spec.h1 = row.h1;
    spec.expert_hidden = cfg.expert_hidden;
    spec.aggregator_hidden = cfg.aggregator_hidden;
    spec.m = std::round(static_cast<double>(cfg.data.n_train) * cfg.step2_fraction);
    spec.n = static_cast<double>(cfg.data.n_train) - spec.m;
    spec.aggregator_inputs = cfg.aggregator_include_input ? 3 : 2;
    spec.delta = cfg.delta;
    spec.c_L = cfg.c_L;
    spec.C_const = cfg.C_const;
    row.r = bounds::toy_bound_ratio(spec);
    result.rows.push_back(row);
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const ToyRow& a, const ToyRow& b) { return a.h1 < b.h1; });
  return result;
}

}  // namespace expertdg::harness
