#include "expertdg/harness/dg.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "expertdg/ensemble/cmattn.hpp"
#include "expertdg/harness/parallel.hpp"

namespace expertdg::harness {

using ensemble::WeightMode;

DgConfig::DgConfig() {
  suite.shift_strength = 0.5;
  finetune.epochs = 30;
  finetune.learning_rate = 1e-4;
}

data::SuiteConfig DgConfig::suite_config() const {
  data::SuiteConfig s = suite;
  s.samples_per_domain.assign(static_cast<std::size_t>(std::max<Index>(suite.n_domains, 0)), samples_per_domain);
  return s;
}

clip::EncoderConfig DgConfig::encoder_config() const {
  clip::EncoderConfig e = encoder;
  e.feature_dim = suite.feature_dim;
  e.n_classes = suite.n_classes;
  return e;
}

void DgConfig::validate(Index min_domains) const {
  if (suite.n_domains < min_domains)
    throw std::invalid_argument("dg.n_domains must be >= " + std::to_string(min_domains) + " for leave-one-out");
  if (suite.n_classes < 2 || suite.feature_dim < 1) throw std::invalid_argument("dg: need n_classes >= 2 and feature_dim >= 1");
  if (samples_per_domain < suite.n_classes) throw std::invalid_argument("dg.samples_per_domain must be >= n_classes");
  if (pool_size < 1) throw std::invalid_argument("dg.pool_size must be >= 1");
  if (k_shot < 2) throw std::invalid_argument("dg.k_shot must be >= 2 so both steps receive data");
  if (!(step2_fraction > 0 && step2_fraction < 1)) throw std::invalid_argument("dg.step2_fraction must be in (0, 1)");
  if (!(suite.shift_strength >= 0) || !(suite.within_class_sd > 0) || !(suite.prototype_sd > 0))
    throw std::invalid_argument("dg: invalid suite spread parameters");
  if (encoder.d_f < 1 || encoder.embed_dim < 1 || encoder.prompt_len < 1 || encoder.vision_hidden < 1 || encoder.text_hidden < 1)
    throw std::invalid_argument("dg: encoder sizes must be >= 1");
  if (!(encoder.temperature > 0)) throw std::invalid_argument("dg.temperature must be positive");
  if (pretrain.epochs < 0 || pretrain.batch_size < 1 || !(pretrain.learning_rate > 0))
    throw std::invalid_argument("dg: invalid pretraining schedule");
  if (expert.epochs < 0 || !(expert.learning_rate > 0)) throw std::invalid_argument("dg: invalid expert schedule");
  finetune.validate();
}

double DgEvaluation::best_solo() const { return *std::max_element(solo_accuracy.begin(), solo_accuracy.end()); }

bool DgEvaluation::worst_gets_min_weight() const {
  Index w = 0;
  mean_weights.minCoeff(&w);
  const double worst = *std::min_element(solo_accuracy.begin(), solo_accuracy.end());
  return solo_accuracy[static_cast<std::size_t>(w)] == worst;
}

std::string to_string(AblationExperts e) {
  switch (e) {
    case AblationExperts::single: return "single";
    case AblationExperts::uniform: return "uniform";
    case AblationExperts::learnable: return "learnable";
  }
  return "?";
}

std::string to_string(AblationData d) { return d == AblationData::disjoint ? "disjoint" : "shared"; }

double AblationResult::mean(AblationExperts e, AblationData d) const {
  for (const auto& c : cells)
    if (c.experts == e && c.data == d) return c.mean_accuracy;
  throw std::invalid_argument("ablation: no such cell");
}

namespace {

struct SeedSetup {
  data::DomainSuite suite;
  clip::EncoderPair pair;
};

SeedSetup prepare_seed(const DgConfig& cfg, std::uint64_t seed) {
  const Rng root(seed);
  SeedSetup s;
  s.suite = data::gen_domain_suite(cfg.suite_config(), root.child(0).seed());
  Rng pool_rng = root.child(1);
  const auto pool = data::sample_domain(s.suite, data::identity_map(cfg.suite.feature_dim), cfg.pool_size, -1, pool_rng);
  s.pair = clip::pretrain_mock_encoders({pool}, cfg.encoder_config(), cfg.pretrain, root.child(2).seed());
  return s;
}

data::DomainDataset concat(const std::vector<data::DomainDataset>& parts) {
  data::DomainDataset out;
  out.domain_id = parts.front().domain_id;
  Index rows = 0;
  for (const auto& p : parts) rows += p.size();
  out.features.resize(rows, parts.front().feature_dim());
  Index r = 0;
  for (const auto& p : parts) {
    out.features.middleRows(r, p.size()) = p.features;
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    r += p.size();
  }
  return out;
}

struct CellOutcome {
  double accuracy = 0.0;
  ensemble::EnsembleEval eval;
};

struct TargetOutcome {
  std::vector<int> sources;
  std::map<AblationExperts, CellOutcome> cells;
};

TargetOutcome run_target(const DgConfig& cfg, const SeedSetup& setup, std::uint64_t seed, int target, AblationData mode,
                         const std::vector<AblationExperts>& wanted) {
  const Rng root = Rng(seed).child(100 + static_cast<std::uint64_t>(target));
  TargetOutcome out;
  std::vector<data::DomainDataset> shots;
  for (const auto& d : setup.suite.domains) {
    if (d.domain_id == target) continue;
    out.sources.push_back(d.domain_id);
    shots.push_back(data::few_shot(d, cfg.k_shot, root.child(0).child(static_cast<std::uint64_t>(d.domain_id)).seed()));
  }
  std::vector<data::DomainDataset> step1 = shots, step2 = shots;
  if (mode == AblationData::disjoint) {
    auto split = data::split_step_data(shots, cfg.step2_fraction, root.child(1).seed());
    step1 = std::move(split.step1);
    step2 = std::move(split.step2);
  }
  const data::DomainDataset& held_out = setup.suite.domains[static_cast<std::size_t>(target)];
  const Rng expert_rng = root.child(2);
  const std::uint64_t finetune_seed = root.child(3).seed();

  auto finish = [&](const ensemble::ExpertSet& experts, WeightMode weights) {
    clip::EncoderPair pair = setup.pair;
    auto params = ensemble::init_cmattn(pair.d_f(), pair.n_classes());
    ensemble::FinetuneConfig fc = cfg.finetune;
    fc.weight_mode = weights;
    ensemble::guided_finetune(pair, experts, params, step2, fc, finetune_seed);
    CellOutcome c;
    c.eval = ensemble::evaluate_ensemble(pair, experts, params, held_out, weights, fc.attention_temperature);
    c.accuracy = c.eval.accuracy;
    return c;
  };

  auto want = [&](AblationExperts e) { return std::find(wanted.begin(), wanted.end(), e) != wanted.end(); };
  if (want(AblationExperts::single)) {
    const auto prompt = ensemble::train_domain_expert(setup.pair, concat(step1), clip::default_prompt(setup.pair),
                                                      cfg.expert, expert_rng.child(0).seed());
    out.cells[AblationExperts::single] =
        finish(ensemble::make_universal_expert(setup.pair, prompt.expert, out.sources), WeightMode::uniform);
  }
  if (want(AblationExperts::uniform) || want(AblationExperts::learnable)) {
    std::vector<clip::PromptExpert> prompts;
    for (std::size_t k = 0; k < step1.size(); ++k)
      prompts.push_back(ensemble::train_domain_expert(setup.pair, step1[k], clip::default_prompt(setup.pair), cfg.expert,
                                                      expert_rng.child(k).seed())
                            .expert);
    const auto experts = ensemble::make_prompt_experts(setup.pair, std::move(prompts));
    if (want(AblationExperts::uniform)) out.cells[AblationExperts::uniform] = finish(experts, WeightMode::uniform);
    if (want(AblationExperts::learnable)) out.cells[AblationExperts::learnable] = finish(experts, WeightMode::learnable);
  }
  return out;
}

}  // namespace

DgResult run_dg_benchmark(const DgConfig& cfg, std::uint64_t seed, Index n_seeds, unsigned threads) {
  cfg.validate(3);
  if (n_seeds < 1) throw std::invalid_argument("dg: need at least one seed");
  const Index d = cfg.suite.n_domains;
  std::vector<DgEvaluation> evals(static_cast<std::size_t>(n_seeds * d));
  parallel_for(n_seeds, threads, [&](long long s) {
    const std::uint64_t sd = derive_seed(seed, static_cast<std::uint64_t>(s));
    const SeedSetup setup = prepare_seed(cfg, sd);
    for (Index t = 0; t < d; ++t) {
      const auto o = run_target(cfg, setup, sd, static_cast<int>(t), AblationData::disjoint,
                                {AblationExperts::single, AblationExperts::learnable});
      DgEvaluation& e = evals[static_cast<std::size_t>(t * n_seeds + s)];
      e.seed = sd;
      e.seed_index = s;
      e.target = static_cast<int>(t);
      e.sources = o.sources;
      const auto& g = o.cells.at(AblationExperts::learnable);
      e.guidg_accuracy = g.accuracy;
      e.mean_weights = g.eval.mean_weights;
      e.solo_accuracy = g.eval.solo_accuracy;
      e.erm_accuracy = o.cells.at(AblationExperts::single).accuracy;
    }
  });

  DgResult res;
  res.evaluations = std::move(evals);
  const double n = static_cast<double>(res.evaluations.size());
  double hits = 0;
  for (const auto& e : res.evaluations) {
    res.mean_guidg += e.guidg_accuracy / n;
    res.mean_erm += e.erm_accuracy / n;
    res.mean_best_solo += e.best_solo() / n;
    hits += e.worst_gets_min_weight() ? 1.0 : 0.0;
  }
  res.worst_min_weight_rate = hits / n;
  for (Index t = 0; t < d; ++t) {
    WeightReportRow w;
    w.target = static_cast<int>(t);
    w.sources = res.evaluations[static_cast<std::size_t>(t * n_seeds)].sources;
    w.mean_weights = Vector::Zero(d - 1);
    w.solo_accuracy.assign(static_cast<std::size_t>(d - 1), 0.0);
    const double ns = static_cast<double>(n_seeds);
    for (Index s = 0; s < n_seeds; ++s) {
      const auto& e = res.evaluations[static_cast<std::size_t>(t * n_seeds + s)];
      w.mean_weights += e.mean_weights / ns;
      for (std::size_t k = 0; k < w.solo_accuracy.size(); ++k) w.solo_accuracy[k] += e.solo_accuracy[k] / ns;
      w.ensemble_accuracy += e.guidg_accuracy / ns;
      w.best_solo_accuracy += e.best_solo() / ns;
    }
    res.weights.push_back(std::move(w));
  }
  return res;
}

AblationResult run_ablation(const DgConfig& cfg, std::uint64_t seed, Index n_seeds, unsigned threads) {
  cfg.validate(2);
  if (n_seeds < 1) throw std::invalid_argument("ablate: need at least one seed");
  const Index d = cfg.suite.n_domains;
  const std::vector<AblationExperts> all{AblationExperts::single, AblationExperts::uniform, AblationExperts::learnable};
  const std::vector<AblationData> modes{AblationData::disjoint, AblationData::shared};
  // Slot layout: ((experts * 2 + data) * d + target) * n_seeds + seed.
  std::vector<AblationRow> rows(all.size() * modes.size() * static_cast<std::size_t>(d * n_seeds));
  parallel_for(n_seeds, threads, [&](long long s) {
    const std::uint64_t sd = derive_seed(seed, static_cast<std::uint64_t>(s));
    const SeedSetup setup = prepare_seed(cfg, sd);
    for (std::size_t m = 0; m < modes.size(); ++m)
      for (Index t = 0; t < d; ++t) {
        const auto o = run_target(cfg, setup, sd, static_cast<int>(t), modes[m], all);
        for (std::size_t e = 0; e < all.size(); ++e) {
          const std::size_t slot = ((e * modes.size() + m) * static_cast<std::size_t>(d) + static_cast<std::size_t>(t)) *
                                       static_cast<std::size_t>(n_seeds) +
                                   static_cast<std::size_t>(s);
          rows[slot] = AblationRow{all[e], modes[m], static_cast<int>(t), s, sd, o.cells.at(all[e]).accuracy};
        }
      }
  });

  AblationResult res;
  res.rows = std::move(rows);
  const std::size_t per_cell = static_cast<std::size_t>(d * n_seeds);
  for (std::size_t e = 0; e < all.size(); ++e)
    for (std::size_t m = 0; m < modes.size(); ++m) {
      AblationCell c{all[e], modes[m], 0.0, static_cast<Index>(per_cell)};
      const std::size_t base = (e * modes.size() + m) * per_cell;
      for (std::size_t k = 0; k < per_cell; ++k) c.mean_accuracy += res.rows[base + k].accuracy;
      c.mean_accuracy /= static_cast<double>(per_cell);
      res.cells.push_back(c);
    }
  return res;
}

}  // namespace expertdg::harness
