#include "expertdg/harness/gradcheck.hpp"

#include <stdexcept>

#include "expertdg/clip/encoders.hpp"
#include "expertdg/ensemble/cmattn.hpp"
#include "expertdg/ensemble/experts.hpp"
#include "expertdg/ensemble/finetune.hpp"
#include "expertdg/nn/gradcheck.hpp"
#include "expertdg/rng.hpp"

namespace expertdg::harness {

using nn::Matrix;
using nn::Vector;

void GradcheckConfig::validate() const {
  if (max_hidden_layers < 1) throw std::invalid_argument("gradcheck.max_hidden_layers must be >= 1");
  if (max_width < 2) throw std::invalid_argument("gradcheck.max_width must be >= 2");
  if (batch_size < 1) throw std::invalid_argument("gradcheck.batch_size must be >= 1");
  if (joint_trials < 0) throw std::invalid_argument("gradcheck.joint_trials must be >= 0");
  if (!(fd_step > 0)) throw std::invalid_argument("gradcheck.fd_step must be positive");
  if (!(tolerance > 0)) throw std::invalid_argument("gradcheck.tolerance must be positive");
}

namespace {

Index pick(Rng& rng, Index lo, Index hi) { return lo + static_cast<Index>(rng.index(static_cast<std::size_t>(hi - lo + 1))); }

std::string join_sizes(const std::vector<Index>& sizes) {
  std::string s;
  for (std::size_t i = 0; i < sizes.size(); ++i) s += (i ? "-" : "") + std::to_string(sizes[i]);
  return s;
}

GradcheckRow mlp_trial(const GradcheckConfig& cfg, Index trial, Rng rng) {
  const Index hidden = pick(rng, 1, cfg.max_hidden_layers);
  const nn::LossKind loss = rng.index(2) == 0 ? nn::LossKind::mse : nn::LossKind::cross_entropy_logits;
  std::vector<Index> sizes{pick(rng, 1, 8)};
  for (Index h = 0; h < hidden; ++h) sizes.push_back(pick(rng, 1, cfg.max_width));
  sizes.push_back(loss == nn::LossKind::mse ? pick(rng, 1, 4) : pick(rng, 2, 6));
  const nn::Activation acts[] = {nn::Activation::tanh, nn::Activation::relu, nn::Activation::identity};
  const nn::Activation act = acts[rng.index(3)];
  const nn::Mlp model = nn::make_random_mlp<double>(sizes, act, rng);

  GradcheckRow row{"mlp", trial, join_sizes(sizes), std::string(nn::to_string(act)), std::string(nn::to_string(loss)),
                   model.param_count(), 0.0, false};
  for (int attempt = 0; attempt < 100; ++attempt) {
    nn::Batch b;
    b.inputs.resize(sizes.front(), cfg.batch_size);
    rng.fill_normal(b.inputs);
    if (loss == nn::LossKind::mse) {
      b.targets.resize(sizes.back(), cfg.batch_size);
      rng.fill_normal(b.targets);
    } else {
      for (Index j = 0; j < cfg.batch_size; ++j) b.labels.push_back(static_cast<Index>(rng.index(static_cast<std::size_t>(sizes.back()))));
    }
    try {
      const auto rep = nn::grad_check(model, b, loss, cfg.fd_step, cfg.tolerance);
      row.max_rel_error = rep.max_rel_error;
      row.passed = rep.passed;
      return row;
    } catch (const std::invalid_argument&) {
      // relu kink within the probe radius; draw another batch
    }
  }
  throw std::runtime_error("gradcheck: could not draw a relu batch away from kinks");
}

GradcheckRow joint_trial(const GradcheckConfig& cfg, Index trial, Rng rng) {
  clip::EncoderConfig ec;
  ec.feature_dim = pick(rng, 2, 6);
  ec.d_f = pick(rng, 2, 8);
  ec.embed_dim = pick(rng, 2, 4);
  ec.n_classes = pick(rng, 2, 5);
  ec.prompt_len = pick(rng, 1, 3);
  ec.vision_hidden = pick(rng, 2, 10);
  ec.text_hidden = pick(rng, 2, 10);
  ec.temperature = 0.5;
  const clip::EncoderPair pair = clip::init_encoders(ec, rng.next_u64());
  const int d = static_cast<int>(pick(rng, 1, 4));

  std::vector<clip::PromptExpert> prompts;
  for (int i = 0; i < d; ++i) {
    auto p = clip::default_prompt(pair, i);
    rng.fill_normal(p.embeddings, 0.5);
    prompts.push_back(p);
  }
  const auto experts = ensemble::make_prompt_experts(pair, prompts);

  ensemble::CmattnParams params = ensemble::init_cmattn(pair.d_f(), pair.n_classes());
  Matrix noise(pair.d_f(), pair.d_f());
  rng.fill_normal(noise, 0.3);
  params.query_weight += noise;
  rng.fill_normal(params.query_bias, 0.2);
  rng.fill_normal(params.key_weight, 0.5);
  params.key_bias = 0.1;

  ensemble::Step2Batch batch;
  batch.inputs.resize(pair.feature_dim(), cfg.batch_size);
  rng.fill_normal(batch.inputs);
  for (Index j = 0; j < cfg.batch_size; ++j) {
    batch.labels.push_back(static_cast<Index>(rng.index(static_cast<std::size_t>(pair.n_classes()))));
    batch.domains.push_back(static_cast<int>(j % d));
  }

  const ensemble::Step2Loss losses[] = {ensemble::Step2Loss::own_domain, ensemble::Step2Loss::all_experts,
                                        ensemble::Step2Loss::ensemble};
  const ensemble::RegularizerKind regs[] = {ensemble::RegularizerKind::none, ensemble::RegularizerKind::entropy_ueo,
                                            ensemble::RegularizerKind::mms};
  ensemble::FinetuneConfig fc;
  fc.loss_mode = losses[trial % 3];
  fc.reg.kind = regs[(trial / 3) % 3];
  fc.reg.alpha = 0.3;

  const auto r = ensemble::step2_objective(pair, experts, params, batch, fc, true);
  const Index nv = pair.vision.param_count();
  Vector flat(nv + ensemble::param_count(params));
  flat << nn::flatten(pair.vision), ensemble::flatten(params);
  Vector analytic(flat.size());
  analytic << nn::flatten(r.grads.vision), ensemble::flatten(r.grads.cmattn);
  auto loss_at = [&](const Vector& theta) {
    clip::EncoderPair p = pair;
    ensemble::CmattnParams c = params;
    nn::assign_flat(p.vision, theta.head(nv));
    ensemble::assign_flat(c, theta.tail(theta.size() - nv));
    return ensemble::step2_objective(p, experts, c, batch, fc, false).objective;
  };
  const auto rep = nn::finite_difference_check(flat, analytic, loss_at, cfg.fd_step, cfg.tolerance);

  GradcheckRow row;
  row.kind = "joint";
  row.trial = trial;
  row.architecture = "vision " + join_sizes({ec.feature_dim, ec.vision_hidden, ec.d_f}) + " d=" + std::to_string(d);
  row.activation = std::string(nn::to_string(pair.vision.activation));
  row.loss = ensemble::to_string(fc.loss_mode) + "+" + ensemble::to_string(fc.reg.kind);
  row.params = flat.size();
  row.max_rel_error = rep.max_rel_error;
  row.passed = rep.passed;
  return row;
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(const GradcheckConfig& cfg, std::uint64_t seed, Index trials) {
  cfg.validate();
  if (trials < 0) throw std::invalid_argument("gradcheck: negative trial count");
  const Rng root(seed);
  std::vector<GradcheckRow> rows;
  for (Index t = 0; t < trials; ++t) rows.push_back(mlp_trial(cfg, t, root.child(0).child(static_cast<std::uint64_t>(t))));
  for (Index t = 0; t < cfg.joint_trials; ++t)
    rows.push_back(joint_trial(cfg, t, root.child(1).child(static_cast<std::uint64_t>(t))));
  return rows;
}

}  // namespace expertdg::harness
