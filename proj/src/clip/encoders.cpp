#include "expertdg/clip/encoders.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "expertdg/nn/checkpoint.hpp"
#include "expertdg/nn/loss.hpp"
#include "expertdg/nn/optimizer.hpp"

namespace expertdg::clip {

PromptExpert default_prompt(const EncoderPair& pair, int domain_id) {
  return PromptExpert{domain_id, Matrix::Zero(pair.prompt_len, pair.embed_dim())};
}

double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw nn::NumericError("cosine: zero-norm vector");
  if (!std::isfinite(na) || !std::isfinite(nb)) throw nn::NumericError("cosine: non-finite vector");
  return a.dot(b) / (na * nb);
}

Vector cosine_grad(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw nn::NumericError("cosine: zero-norm vector");
  const double c = a.dot(b) / (na * nb);
  return b / (na * nb) - (c / (na * na)) * a;
}

Vector similarity_logits(const Vector& feature, const Matrix& texts, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("similarity: temperature must be positive");
  if (texts.rows() == 0) throw std::invalid_argument("similarity: no text features");
  if (texts.cols() != feature.size()) throw std::invalid_argument("similarity: feature dimension mismatch");
  Vector logits(texts.rows());
  for (Index c = 0; c < texts.rows(); ++c) logits(c) = cosine(feature, texts.row(c).transpose()) / temperature;
  return logits;
}

void similarity_backward(const Vector& feature, const Matrix& texts, double temperature, const Vector& d_logits,
                         Vector* d_feature, Matrix* d_texts) {
  for (Index c = 0; c < texts.rows(); ++c) {
    const double g = d_logits(c) / temperature;
    if (g == 0.0) continue;
    const Vector t = texts.row(c).transpose();
    if (d_feature) *d_feature += g * cosine_grad(feature, t);
    if (d_texts) d_texts->row(c) += g * cosine_grad(t, feature).transpose();
  }
}

double similarity_cross_entropy(const Vector& feature, const Matrix& texts, double temperature, Index label,
                                Vector* d_feature, Matrix* d_texts) {
  const Vector logits = similarity_logits(feature, texts, temperature);
  const double loss = nn::cross_entropy_logits(logits, label);
  if (d_feature || d_texts) similarity_backward(feature, texts, temperature, nn::cross_entropy_grad(logits, label), d_feature, d_texts);
  return loss;
}

Vector text_input(const PromptExpert& expert, const Eigen::Ref<const Vector>& class_embedding) {
  const Index m = expert.embeddings.rows();
  const Index e = expert.embeddings.cols();
  if (class_embedding.size() != e) throw std::invalid_argument("text_input: embedding width mismatch");
  Vector in(m * e + e);
  for (Index t = 0; t < m; ++t) in.segment(t * e, e) = expert.embeddings.row(t).transpose();
  in.tail(e) = class_embedding;
  return in;
}

namespace {

void check_prompt(const EncoderPair& pair, const PromptExpert& expert) {
  if (expert.embeddings.rows() != pair.prompt_len || expert.embeddings.cols() != pair.embed_dim())
    throw std::invalid_argument("prompt: shape does not match the encoder pair");
  if (!expert.embeddings.allFinite()) throw nn::NumericError("prompt: non-finite embedding");
}

}  // namespace

Vector build_prompt(const PromptExpert& expert, Index class_id, const EncoderPair& pair) {
  check_prompt(pair, expert);
  if (class_id < 0 || class_id >= pair.n_classes())
    throw std::invalid_argument("build_prompt: class " + std::to_string(class_id) + " out of range");
  return nn::forward(pair.text, text_input(expert, pair.class_embeddings.row(class_id).transpose()));
}

TextForward text_forward(const EncoderPair& pair, const PromptExpert& expert) {
  check_prompt(pair, expert);
  TextForward fwd;
  fwd.inputs.resize(pair.text.input_size(), pair.n_classes());
  for (Index c = 0; c < pair.n_classes(); ++c)
    fwd.inputs.col(c) = text_input(expert, pair.class_embeddings.row(c).transpose());
  fwd.cache = nn::forward_cached(pair.text, fwd.inputs);
  fwd.features = fwd.cache.output().transpose();
  return fwd;
}

Matrix text_features(const EncoderPair& pair, const PromptExpert& expert) { return text_forward(pair, expert).features; }

TextBackward text_backward(const EncoderPair& pair, const TextForward& fwd, const Matrix& d_features) {
  const Matrix input_grad = nn::backward(pair.text, fwd.cache, d_features.transpose()).input_grad;
  const Index m = pair.prompt_len;
  const Index e = pair.embed_dim();
  TextBackward out;
  out.prompt_grad = Matrix::Zero(m, e);
  out.class_embedding_grad.resize(pair.n_classes(), e);
  for (Index c = 0; c < pair.n_classes(); ++c) {
    for (Index t = 0; t < m; ++t) out.prompt_grad.row(t) += input_grad.col(c).segment(t * e, e).transpose();
    out.class_embedding_grad.row(c) = input_grad.col(c).tail(e).transpose();
  }
  return out;
}

Vector zero_shot_predict(const EncoderPair& pair, const Vector& x, const Matrix& texts) {
  const Vector feature = nn::forward(pair.vision, x);
  return nn::softmax(similarity_logits(feature, texts, pair.temperature));
}

Vector zero_shot_predict(const EncoderPair& pair, const Vector& x, const std::vector<Vector>& texts) {
  if (texts.empty()) throw std::invalid_argument("zero_shot_predict: no text features");
  Matrix t(static_cast<Index>(texts.size()), texts.front().size());
  for (std::size_t c = 0; c < texts.size(); ++c) t.row(static_cast<Index>(c)) = texts[c].transpose();
  return zero_shot_predict(pair, x, t);
}

double zero_shot_accuracy(const EncoderPair& pair, const Matrix& texts, const data::DomainDataset& domain) {
  const Matrix feats = nn::forward_batch(pair.vision, domain.inputs());
  Index hits = 0;
  for (Index r = 0; r < domain.size(); ++r) {
    Index best = 0;
    similarity_logits(feats.col(r), texts, pair.temperature).maxCoeff(&best);
    hits += best == domain.labels[static_cast<std::size_t>(r)];
  }
  return static_cast<double>(hits) / static_cast<double>(domain.size());
}

EncoderPair init_encoders(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.d_f < 2 || cfg.embed_dim < 2) throw std::invalid_argument("encoders: d_f and embed_dim must be >= 2");
  if (cfg.n_classes < 2 || cfg.prompt_len < 1 || cfg.feature_dim < 1)
    throw std::invalid_argument("encoders: invalid class count, prompt length or feature size");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("encoders: temperature must be positive");
  const Rng root(seed);
  EncoderPair pair;
  pair.temperature = cfg.temperature;
  pair.prompt_len = cfg.prompt_len;
  Rng vision_rng = root.child(0);
  pair.vision = nn::make_random_mlp<double>({cfg.feature_dim, cfg.vision_hidden, cfg.d_f}, nn::Activation::tanh, vision_rng);
  // Scale the text map so a unit-norm class embedding alone gives O(1)
  // hidden pre-activations despite the wide prompt input.
  const Index text_in = cfg.prompt_len * cfg.embed_dim + cfg.embed_dim;
  Rng text_rng = root.child(1);
  pair.text = nn::make_random_mlp<double>({text_in, cfg.text_hidden, cfg.d_f}, nn::Activation::tanh, text_rng,
                                          std::sqrt(static_cast<double>(text_in) / static_cast<double>(cfg.embed_dim)));
  Rng class_rng = root.child(2);
  pair.class_embeddings.resize(cfg.n_classes, cfg.embed_dim);
  class_rng.fill_normal(pair.class_embeddings);
  pair.class_embeddings.rowwise().normalize();
  return pair;
}

EncoderPair pretrain_mock_encoders(const std::vector<data::DomainDataset>& pool, const EncoderConfig& cfg,
                                   const PretrainConfig& train, std::uint64_t seed) {
  Index total = 0;
  for (const auto& d : pool) total += d.size();
  if (pool.empty() || total == 0) throw std::invalid_argument("pretrain: empty pool");
  if (train.epochs < 0 || train.batch_size < 1) throw std::invalid_argument("pretrain: invalid schedule");
  EncoderPair pair = init_encoders(cfg, seed);
  if (train.epochs == 0) return pair;

  Matrix inputs(cfg.feature_dim, total);
  std::vector<Index> labels;
  Index col = 0;
  for (const auto& d : pool) {
    if (d.feature_dim() != cfg.feature_dim) throw std::invalid_argument("pretrain: feature dimension mismatch");
    inputs.middleCols(col, d.size()) = d.inputs();
    labels.insert(labels.end(), d.labels.begin(), d.labels.end());
    col += d.size();
  }

  nn::OptimizerConfig opt_cfg;
  opt_cfg.learning_rate = train.learning_rate;
  nn::Optimizer opt(opt_cfg);
  const std::size_t class_slot = 2 * static_cast<std::size_t>(pair.vision.num_layers());
  Rng order_rng = Rng(seed).child(3);
  const PromptExpert ctx = default_prompt(pair);

  for (Index epoch = 0; epoch < train.epochs; ++epoch) {
    const auto order = order_rng.permutation(static_cast<std::size_t>(total));
    for (Index start = 0; start < total; start += train.batch_size) {
      const Index b = std::min(train.batch_size, total - start);
      Matrix xb(cfg.feature_dim, b);
      for (Index j = 0; j < b; ++j) xb.col(j) = inputs.col(static_cast<Index>(order[static_cast<std::size_t>(start + j)]));
      const auto vis = nn::forward_cached(pair.vision, xb);
      const TextForward txt = text_forward(pair, ctx);
      Matrix d_feats = Matrix::Zero(pair.d_f(), b);
      Matrix d_texts = Matrix::Zero(pair.n_classes(), pair.d_f());
      for (Index j = 0; j < b; ++j) {
        Vector df = Vector::Zero(pair.d_f());
        similarity_cross_entropy(vis.output().col(j), txt.features, pair.temperature,
                                 labels[order[static_cast<std::size_t>(start + j)]], &df, &d_texts);
        d_feats.col(j) = df / static_cast<double>(b);
      }
      d_texts /= static_cast<double>(b);
      const auto vis_grads = nn::backward(pair.vision, vis, d_feats).grads;
      const TextBackward tb = text_backward(pair, txt, d_texts);
      opt.step(pair.vision, vis_grads);
      opt.update(class_slot, pair.class_embeddings, tb.class_embedding_grad);
      pair.class_embeddings.rowwise().normalize();
    }
  }
  return pair;
}

void save_encoders(const std::filesystem::path& path, const EncoderPair& pair) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "expertdg-encoders 1\n";
  out << "d_f " << pair.d_f() << "\nembed_dim " << pair.embed_dim() << "\nn_classes " << pair.n_classes()
      << "\nprompt_len " << pair.prompt_len << "\ntemperature " << nn::format_hexfloat(pair.temperature) << '\n';
  nn::save_mlp(out, pair.vision);
  nn::save_mlp(out, pair.text);
  nn::save_matrix(out, pair.class_embeddings);
}

EncoderPair load_encoders(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "expertdg-encoders" || version != 1) throw std::runtime_error("encoders: unsupported checkpoint");
  EncoderPair pair;
  Index d_f = 0, embed = 0, classes = 0;
  std::string key, temp;
  in >> key >> d_f >> key >> embed >> key >> classes >> key >> pair.prompt_len >> key >> temp;
  pair.temperature = nn::parse_hexfloat(temp);
  pair.vision = nn::load_mlp(in);
  pair.text = nn::load_mlp(in);
  pair.class_embeddings = nn::load_matrix(in);
  if (pair.d_f() != d_f || pair.embed_dim() != embed || pair.n_classes() != classes)
    throw std::runtime_error("encoders: manifest disagrees with stored tensors");
  return pair;
}

}  // namespace expertdg::clip
