#include "expertdg/ensemble/finetune.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "expertdg/nn/loss.hpp"
#include "expertdg/rng.hpp"

namespace expertdg::ensemble {

std::string to_string(WeightMode m) { return m == WeightMode::uniform ? "uniform" : "learnable"; }

WeightMode parse_weight_mode(std::string_view s) {
  if (s == "learnable") return WeightMode::learnable;
  if (s == "uniform") return WeightMode::uniform;
  throw std::invalid_argument("unknown weight mode: " + std::string(s));
}

std::string to_string(Step2Loss m) {
  switch (m) {
    case Step2Loss::own_domain: return "own_domain";
    case Step2Loss::all_experts: return "all_experts";
    case Step2Loss::ensemble: return "ensemble";
  }
  return "?";
}

Step2Loss parse_step2_loss(std::string_view s) {
  if (s == "own_domain") return Step2Loss::own_domain;
  if (s == "all_experts") return Step2Loss::all_experts;
  if (s == "ensemble") return Step2Loss::ensemble;
  throw std::invalid_argument("unknown step2 loss: " + std::string(s));
}

void FinetuneConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("finetune: negative epoch count");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("finetune: learning rate must be positive");
  if (!(attention_temperature > 0.0)) throw std::invalid_argument("finetune: attention temperature must be positive");
  reg.validate();
}

Step2Batch make_step2_batch(const std::vector<data::DomainDataset>& domains) {
  Index total = 0;
  for (const auto& d : domains) {
    if (d.is_regression()) throw std::invalid_argument("step2: classification domains required");
    total += d.size();
  }
  if (domains.empty() || total == 0) throw std::invalid_argument("step2: no samples");
  Step2Batch batch;
  batch.inputs.resize(domains.front().feature_dim(), total);
  Index col = 0;
  for (const auto& d : domains) {
    if (d.feature_dim() != batch.inputs.rows()) throw std::invalid_argument("step2: feature dimension mismatch");
    batch.inputs.middleCols(col, d.size()) = d.inputs();
    batch.labels.insert(batch.labels.end(), d.labels.begin(), d.labels.end());
    batch.domains.insert(batch.domains.end(), static_cast<std::size_t>(d.size()), d.domain_id);
    col += d.size();
  }
  return batch;
}

Step2Batch select_columns(const Step2Batch& batch, const std::vector<std::size_t>& order, Index start, Index count) {
  Step2Batch out;
  out.inputs.resize(batch.inputs.rows(), count);
  for (Index j = 0; j < count; ++j) {
    const std::size_t src = order[static_cast<std::size_t>(start + j)];
    out.inputs.col(j) = batch.inputs.col(static_cast<Index>(src));
    out.labels.push_back(batch.labels[src]);
    out.domains.push_back(batch.domains[src]);
  }
  return out;
}

namespace {

void check_experts(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params) {
  if (experts.mode != ExpertMode::prompt) throw std::invalid_argument("step2: prompt experts required");
  if (experts.size() == 0) throw std::invalid_argument("step2: no experts");
  if (experts.text_features.size() != experts.prompts.size()) throw std::invalid_argument("step2: text features not cached");
  if (params.d_f() != pair.d_f() || params.n_classes() != pair.n_classes())
    throw std::invalid_argument("step2: CMAttn shape does not match the encoder pair");
}

std::vector<Vector> expert_keys(const ExpertSet& experts, const CmattnParams& params) {
  std::vector<Vector> keys;
  keys.reserve(experts.text_features.size());
  for (const auto& t : experts.text_features) keys.push_back(cmattn_key(params, t));
  return keys;
}

Vector sample_weights(const ExpertSet& experts, const CmattnParams& params, const std::vector<Vector>& keys,
                      const Vector& feature, WeightMode mode, double attention_temperature, Vector* query) {
  const Index d = experts.size();
  if (mode == WeightMode::uniform) return Vector::Constant(d, 1.0 / static_cast<double>(d));
  const Vector q = cmattn_query(params, feature);
  if (query) *query = q;
  return attention_weights(q, keys, attention_temperature);
}

}  // namespace

Step2Result step2_objective(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params,
                            const Step2Batch& batch, const FinetuneConfig& cfg, bool with_grads) {
  check_experts(pair, experts, params);
  cfg.validate();
  const Index b = batch.size();
  if (b == 0) throw std::invalid_argument("step2: empty batch");
  if (static_cast<Index>(batch.labels.size()) != b || static_cast<Index>(batch.domains.size()) != b)
    throw std::invalid_argument("step2: batch labels/domains size mismatch");
  const Index d = experts.size();
  const Index classes = pair.n_classes();
  const double tau = pair.temperature;
  const bool learnable = cfg.weight_mode == WeightMode::learnable;

  std::vector<Index> own(static_cast<std::size_t>(b));
  for (Index j = 0; j < b; ++j) own[static_cast<std::size_t>(j)] = experts.expert_for(batch.domains[static_cast<std::size_t>(j)]);

  const auto vis = nn::forward_cached(pair.vision, batch.inputs);
  const Matrix& feats = vis.output();
  const std::vector<Vector> keys = learnable ? expert_keys(experts, params) : std::vector<Vector>{};

  // Forward pass per sample.
  std::vector<std::vector<Vector>> logits(static_cast<std::size_t>(b));
  std::vector<Vector> weights(static_cast<std::size_t>(b));
  std::vector<Vector> queries(static_cast<std::size_t>(b));
  Matrix mixed(classes, b);
  for (Index j = 0; j < b; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Vector f = feats.col(j);
    weights[sj] = sample_weights(experts, params, keys, f, cfg.weight_mode, cfg.attention_temperature, &queries[sj]);
    mixed.col(j).setZero();
    for (Index k = 0; k < d; ++k) {
      logits[sj].push_back(clip::similarity_logits(f, experts.text_features[static_cast<std::size_t>(k)], tau));
      mixed.col(j) += weights[sj](k) * logits[sj].back();
    }
  }

  Step2Result result;
  std::vector<Vector> d_w(static_cast<std::size_t>(b), Vector::Zero(d));
  std::vector<std::vector<Vector>> d_logits(static_cast<std::size_t>(b), std::vector<Vector>(static_cast<std::size_t>(d), Vector::Zero(classes)));

  for (Index j = 0; j < b; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index y = batch.labels[sj];
    const Vector& w = weights[sj];
    switch (cfg.loss_mode) {
      case Step2Loss::own_domain: {
        const Index i = own[sj];
        const auto si = static_cast<std::size_t>(i);
        const double ce = nn::cross_entropy_logits(logits[sj][si], y);
        result.loss_f += w(i) * ce;
        d_w[sj](i) += ce;
        d_logits[sj][si] += w(i) * nn::cross_entropy_grad(logits[sj][si], y);
        break;
      }
      case Step2Loss::all_experts:
        for (Index k = 0; k < d; ++k) {
          const auto sk = static_cast<std::size_t>(k);
          const double ce = nn::cross_entropy_logits(logits[sj][sk], y);
          result.loss_f += w(k) * ce;
          d_w[sj](k) += ce;
          d_logits[sj][sk] += w(k) * nn::cross_entropy_grad(logits[sj][sk], y);
        }
        break;
      case Step2Loss::ensemble: {
        result.loss_f += nn::cross_entropy_logits(mixed.col(j), y);
        const Vector dz = nn::cross_entropy_grad(Vector(mixed.col(j)), y);
        for (Index k = 0; k < d; ++k) {
          const auto sk = static_cast<std::size_t>(k);
          d_w[sj](k) += dz.dot(logits[sj][sk]);
          d_logits[sj][sk] += w(k) * dz;
        }
        break;
      }
    }
  }

  const double alpha = cfg.reg.alpha;
  if (cfg.reg.kind == RegularizerKind::entropy_ueo) {
    Matrix d_mixed;
    result.loss_r = entropy_ueo_logits(mixed, &d_mixed);
    for (Index j = 0; j < b; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const Vector dz = alpha * d_mixed.col(j);
      for (Index k = 0; k < d; ++k) {
        const auto sk = static_cast<std::size_t>(k);
        d_w[sj](k) += dz.dot(logits[sj][sk]);
        d_logits[sj][sk] += weights[sj](k) * dz;
      }
    }
  } else if (cfg.reg.kind == RegularizerKind::mms) {
    for (Index j = 0; j < b; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const auto si = static_cast<std::size_t>(own[sj]);
      const Index y = batch.labels[sj];
      const Matrix& texts = experts.text_features[si];
      Vector d_sims;
      result.loss_r += mms_loss(logits[sj][si] * tau, y, mms_distances(texts, y), cfg.reg.lambda_margin, tau, &d_sims) /
                       static_cast<double>(b);
      d_logits[sj][si] += (alpha * tau / static_cast<double>(b)) * d_sims;
    }
  }
  result.objective = result.loss_f + alpha * result.loss_r;
  if (!with_grads) return result;

  // Reverse pass.
  CmattnParams g = CmattnParams::zeros(params.d_f(), params.n_classes());
  std::vector<Vector> d_keys(static_cast<std::size_t>(d), Vector::Zero(params.d_f()));
  Matrix d_feats = Matrix::Zero(pair.d_f(), b);
  for (Index j = 0; j < b; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Vector f = feats.col(j);
    Vector df = Vector::Zero(pair.d_f());
    for (Index k = 0; k < d; ++k)
      clip::similarity_backward(f, experts.text_features[static_cast<std::size_t>(k)], tau, d_logits[sj][static_cast<std::size_t>(k)],
                                &df, nullptr);
    if (learnable && d > 1) {
      const Vector& w = weights[sj];
      const Vector d_a = w.cwiseProduct((d_w[sj].array() - w.dot(d_w[sj])).matrix()) / cfg.attention_temperature;
      const Vector& q = queries[sj];
      Vector dq = Vector::Zero(q.size());
      for (Index k = 0; k < d; ++k) {
        const auto sk = static_cast<std::size_t>(k);
        dq += d_a(k) * clip::cosine_grad(q, keys[sk]);
        d_keys[sk] += d_a(k) * clip::cosine_grad(keys[sk], q);
      }
      g.query_weight += dq * f.transpose();
      g.query_bias += dq;
      df += params.query_weight.transpose() * dq;
    }
    d_feats.col(j) = df;
  }
  for (Index k = 0; k < d; ++k) {
    const auto sk = static_cast<std::size_t>(k);
    g.key_weight += experts.text_features[sk] * d_keys[sk];
    g.key_bias += d_keys[sk].sum();
  }
  result.grads.vision = nn::backward(pair.vision, vis, d_feats).grads;
  result.grads.cmattn = std::move(g);
  return result;
}

Step2State::Step2State(double learning_rate) : optimizer([&] {
  nn::OptimizerConfig c;
  c.learning_rate = learning_rate;
  return c;
}()) {}

Step2Result guided_finetune_step(clip::EncoderPair& pair, const ExpertSet& experts, CmattnParams& params,
                                 const Step2Batch& batch, const FinetuneConfig& cfg, Step2State& state) {
  Step2Result r = step2_objective(pair, experts, params, batch, cfg, true);
  auto& opt = state.optimizer;
  opt.begin_step();
  opt.apply(pair.vision, r.grads.vision);
  if (cfg.weight_mode == WeightMode::learnable && experts.size() > 1) {
    const std::size_t base = 2 * static_cast<std::size_t>(pair.vision.num_layers());
    opt.update(base, params.query_weight, r.grads.cmattn.query_weight);
    opt.update(base + 1, params.query_bias, r.grads.cmattn.query_bias);
    opt.update(base + 2, params.key_weight, r.grads.cmattn.key_weight);
    Eigen::Map<Matrix> kb(&params.key_bias, 1, 1);
    const Matrix gkb = Matrix::Constant(1, 1, r.grads.cmattn.key_bias);
    opt.update(base + 3, kb, gkb);
  }
  return r;
}

namespace {

Vector joint_flat(const nn::Mlp& vision, const CmattnParams& params) {
  const Vector a = nn::flatten(vision);
  const Vector b = flatten(params);
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

void assign_joint(nn::Mlp& vision, CmattnParams& params, const Vector& flat) {
  const Index nv = vision.param_count();
  nn::assign_flat(vision, flat.head(nv));
  assign_flat(params, flat.tail(flat.size() - nv));
}

}  // namespace

FinetuneHistory guided_finetune(clip::EncoderPair& pair, const ExpertSet& experts, CmattnParams& params,
                                const std::vector<data::DomainDataset>& step2, const FinetuneConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate();
  check_experts(pair, experts, params);
  const Step2Batch all = make_step2_batch(step2);
  for (int dom : all.domains) experts.expert_for(dom);
  const Index n = all.size();
  const Index bs = std::min(cfg.reg.batch_size, n);
  const Index per_epoch = (n + bs - 1) / bs;
  const Index total_steps = cfg.epochs * per_epoch;

  FinetuneHistory hist;
  if (total_steps == 0) return hist;
  const Vector start = joint_flat(pair.vision, params);
  std::optional<BetaMovingAverage> bma;
  if (cfg.reg.averaging == WeightAveraging::bma) bma.emplace(total_steps - 1, cfg.reg.bma_beta);

  Step2State state(cfg.learning_rate);
  Rng rng(seed);
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(static_cast<std::size_t>(n));
    double lf = 0.0, lr = 0.0;
    for (Index s = 0; s < n; s += bs) {
      const Step2Batch mb = select_columns(all, order, s, std::min(bs, n - s));
      const Step2Result r = guided_finetune_step(pair, experts, params, mb, cfg, state);
      lf += r.loss_f;
      lr += r.loss_r;
      ++hist.steps;
      if (bma) bma->update(joint_flat(pair.vision, params));
    }
    hist.loss_f.push_back(lf / static_cast<double>(per_epoch));
    hist.loss_r.push_back(lr / static_cast<double>(per_epoch));
  }
  if (bma) assign_joint(pair.vision, params, bma->value());
  if (cfg.reg.averaging == WeightAveraging::wise)
    assign_joint(pair.vision, params, weight_space_blend(start, joint_flat(pair.vision, params), cfg.reg.wise_alpha));
  return hist;
}

Index weighted_argmax(const std::vector<Vector>& expert_logits, const Vector& weights) {
  if (expert_logits.empty() || static_cast<Index>(expert_logits.size()) != weights.size())
    throw std::invalid_argument("weighted_argmax: expert/weight count mismatch");
  Vector mixed = Vector::Zero(expert_logits.front().size());
  for (std::size_t k = 0; k < expert_logits.size(); ++k) mixed += weights(static_cast<Index>(k)) * expert_logits[k];
  Index best = 0;
  mixed.maxCoeff(&best);
  return best;
}

namespace {

InferResult infer_feature(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params,
                          const std::vector<Vector>& keys, const Vector& feature, WeightMode mode, double attention_temperature) {
  InferResult r;
  r.weights = sample_weights(experts, params, keys, feature, mode, attention_temperature, nullptr);
  for (const auto& t : experts.text_features) r.expert_logits.push_back(clip::similarity_logits(feature, t, pair.temperature));
  r.predicted = weighted_argmax(r.expert_logits, r.weights);
  return r;
}

}  // namespace

InferResult ensemble_infer(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params,
                           const Vector& x, WeightMode mode, double attention_temperature) {
  check_experts(pair, experts, params);
  const std::vector<Vector> keys = mode == WeightMode::learnable ? expert_keys(experts, params) : std::vector<Vector>{};
  return infer_feature(pair, experts, params, keys, nn::forward(pair.vision, x), mode, attention_temperature);
}

EnsembleEval evaluate_ensemble(const clip::EncoderPair& pair, const ExpertSet& experts, const CmattnParams& params,
                               const data::DomainDataset& domain, WeightMode mode, double attention_temperature) {
  check_experts(pair, experts, params);
  if (domain.size() == 0) throw std::invalid_argument("evaluate: empty domain");
  const std::vector<Vector> keys = mode == WeightMode::learnable ? expert_keys(experts, params) : std::vector<Vector>{};
  const Matrix feats = nn::forward_batch(pair.vision, domain.inputs());
  const Index d = experts.size();
  EnsembleEval ev;
  ev.mean_weights = Vector::Zero(d);
  std::vector<Index> solo_hits(static_cast<std::size_t>(d), 0);
  Index hits = 0;
  for (Index r = 0; r < domain.size(); ++r) {
    const Index y = domain.labels[static_cast<std::size_t>(r)];
    const InferResult ir = infer_feature(pair, experts, params, keys, feats.col(r), mode, attention_temperature);
    hits += ir.predicted == y;
    ev.mean_weights += ir.weights;
    for (Index k = 0; k < d; ++k) {
      Index best = 0;
      ir.expert_logits[static_cast<std::size_t>(k)].maxCoeff(&best);
      solo_hits[static_cast<std::size_t>(k)] += best == y;
    }
  }
  const double n = static_cast<double>(domain.size());
  ev.accuracy = static_cast<double>(hits) / n;
  ev.mean_weights /= n;
  for (Index h : solo_hits) ev.solo_accuracy.push_back(static_cast<double>(h) / n);
  return ev;
}

}  // namespace expertdg::ensemble
