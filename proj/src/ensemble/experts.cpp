#include "expertdg/ensemble/experts.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

#include "expertdg/nn/checkpoint.hpp"
#include "expertdg/nn/optimizer.hpp"
#include "expertdg/rng.hpp"

namespace expertdg::ensemble {

Index ExpertSet::expert_for(int domain_id) const {
  const auto it = domain_to_expert.find(domain_id);
  if (it == domain_to_expert.end()) throw std::invalid_argument("no expert for domain " + std::to_string(domain_id));
  return it->second;
}

ExpertSet make_prompt_experts(const clip::EncoderPair& pair, std::vector<clip::PromptExpert> prompts) {
  if (prompts.empty()) throw std::invalid_argument("expert set: no experts");
  ExpertSet set;
  set.mode = ExpertMode::prompt;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (!set.domain_to_expert.emplace(prompts[i].domain_id, static_cast<Index>(i)).second)
      throw std::invalid_argument("expert set: duplicate domain " + std::to_string(prompts[i].domain_id));
    set.text_features.push_back(clip::text_features(pair, prompts[i]));
  }
  set.prompts = std::move(prompts);
  return set;
}

ExpertSet make_universal_expert(const clip::EncoderPair& pair, clip::PromptExpert prompt, const std::vector<int>& domain_ids) {
  ExpertSet set;
  set.mode = ExpertMode::prompt;
  set.text_features.push_back(clip::text_features(pair, prompt));
  set.prompts.push_back(std::move(prompt));
  for (int id : domain_ids) set.domain_to_expert[id] = 0;
  return set;
}

ExpertSet make_mlp_experts(std::vector<nn::Mlp> models) {
  if (models.empty()) throw std::invalid_argument("expert set: no experts");
  ExpertSet set;
  set.mode = ExpertMode::mlp;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].input_size() != models.front().input_size() || models[i].output_size() != models.front().output_size())
      throw std::invalid_argument("expert set: experts disagree on input/output size");
    set.domain_to_expert[static_cast<int>(i)] = static_cast<Index>(i);
  }
  set.mlps = std::move(models);
  return set;
}

namespace {

double mean_loss(const clip::EncoderPair& pair, const Matrix& feats, const Matrix& texts, const std::vector<Index>& labels) {
  double total = 0.0;
  for (Index r = 0; r < feats.cols(); ++r)
    total += clip::similarity_cross_entropy(feats.col(r), texts, pair.temperature, labels[static_cast<std::size_t>(r)],
                                            nullptr, nullptr);
  return total / static_cast<double>(feats.cols());
}

}  // namespace

double expert_loss(const clip::EncoderPair& pair, const Matrix& texts, const data::DomainDataset& domain) {
  if (domain.size() == 0) throw std::invalid_argument("expert loss: empty domain");
  return mean_loss(pair, nn::forward_batch(pair.vision, domain.inputs()), texts, domain.labels);
}

ExpertTrainResult train_domain_expert(const clip::EncoderPair& pair, const data::DomainDataset& domain,
                                      const clip::PromptExpert& init, const ExpertTrainConfig& cfg, std::uint64_t seed) {
  if (domain.size() == 0) throw std::invalid_argument("train expert: empty domain");
  if (domain.is_regression()) throw std::invalid_argument("train expert: classification domain required");
  if (cfg.epochs < 0) throw std::invalid_argument("train expert: negative epoch count");
  const Matrix feats = nn::forward_batch(pair.vision, domain.inputs());
  const Index n = domain.size();
  const Index bs = cfg.batch_size <= 0 ? n : std::min(cfg.batch_size, n);

  ExpertTrainResult result;
  result.expert = init;
  result.expert.domain_id = domain.domain_id;
  nn::OptimizerConfig opt_cfg;
  opt_cfg.learning_rate = cfg.learning_rate;
  nn::Optimizer opt(opt_cfg);
  Rng rng(seed);

  clip::TextForward txt = clip::text_forward(pair, result.expert);
  result.loss_history.push_back(mean_loss(pair, feats, txt.features, domain.labels));
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(static_cast<std::size_t>(n));
    for (Index start = 0; start < n; start += bs) {
      const Index b = std::min(bs, n - start);
      Matrix d_texts = Matrix::Zero(pair.n_classes(), pair.d_f());
      for (Index j = 0; j < b; ++j) {
        const auto r = static_cast<Index>(order[static_cast<std::size_t>(start + j)]);
        clip::similarity_cross_entropy(feats.col(r), txt.features, pair.temperature,
                                       domain.labels[static_cast<std::size_t>(r)], nullptr, &d_texts);
      }
      d_texts /= static_cast<double>(b);
      const clip::TextBackward tb = clip::text_backward(pair, txt, d_texts);
      opt.begin_step();
      opt.update(0, result.expert.embeddings, tb.prompt_grad);
      txt = clip::text_forward(pair, result.expert);
    }
    result.loss_history.push_back(mean_loss(pair, feats, txt.features, domain.labels));
  }
  return result;
}

void save_prompts(const std::filesystem::path& path, const std::vector<clip::PromptExpert>& prompts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "expertdg-experts 1\ncount " << prompts.size() << '\n';
  for (const auto& p : prompts) {
    out << "domain " << p.domain_id << '\n';
    nn::save_matrix(out, p.embeddings);
  }
}

std::vector<clip::PromptExpert> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string tag, key;
  int version = 0;
  std::size_t count = 0;
  in >> tag >> version >> key >> count;
  if (tag != "expertdg-experts" || version != 1 || key != "count") throw std::runtime_error("experts: unsupported file");
  std::vector<clip::PromptExpert> prompts(count);
  for (auto& p : prompts) {
    in >> key >> p.domain_id;
    if (key != "domain") throw std::runtime_error("experts: malformed file");
    p.embeddings = nn::load_matrix(in);
  }
  return prompts;
}

}  // namespace expertdg::ensemble
