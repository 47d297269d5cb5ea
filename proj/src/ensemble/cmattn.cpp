#include "expertdg/ensemble/cmattn.hpp"

#include <stdexcept>

#include "expertdg/nn/loss.hpp"

namespace expertdg::ensemble {

CmattnParams CmattnParams::zeros(Index d_f, Index n_classes) {
  if (d_f < 1 || n_classes < 1) throw std::invalid_argument("cmattn: dimensions must be positive");
  return CmattnParams{Matrix::Zero(d_f, d_f), Vector::Zero(d_f), Vector::Zero(n_classes), 0.0};
}

CmattnParams init_cmattn(Index d_f, Index n_classes) {
  CmattnParams p = CmattnParams::zeros(d_f, n_classes);
  p.query_weight.setIdentity();
  p.key_weight.setConstant(1.0 / static_cast<double>(n_classes));
  return p;
}

Vector cmattn_query(const CmattnParams& params, const Vector& feature) {
  if (feature.size() != params.d_f()) throw std::invalid_argument("cmattn: feature dimension mismatch");
  return params.query_weight * feature + params.query_bias;
}

Vector cmattn_key(const CmattnParams& params, const Matrix& text_features) {
  if (text_features.rows() != params.n_classes() || text_features.cols() != params.d_f())
    throw std::invalid_argument("cmattn: text features must be C x d_f");
  return (text_features.transpose() * params.key_weight).array() + params.key_bias;
}

Vector attention_weights(const Vector& query, const std::vector<Vector>& keys, double attention_temperature) {
  if (keys.empty()) throw std::invalid_argument("cmattn: no experts");
  if (!(attention_temperature > 0.0)) throw std::invalid_argument("cmattn: attention temperature must be positive");
  if (keys.size() == 1) {
    clip::cosine(query, keys.front());
    return Vector::Ones(1);
  }
  Vector scores(static_cast<Index>(keys.size()));
  for (std::size_t i = 0; i < keys.size(); ++i)
    scores(static_cast<Index>(i)) = clip::cosine(query, keys[i]) / attention_temperature;
  return nn::softmax(scores);
}

Vector cmattn_weights(const CmattnParams& params, const clip::EncoderPair& pair, const Vector& x,
                      const std::vector<Matrix>& expert_text_feats, double attention_temperature) {
  if (params.d_f() != pair.d_f() || params.n_classes() != pair.n_classes())
    throw std::invalid_argument("cmattn: parameters do not match the encoder pair");
  std::vector<Vector> keys;
  keys.reserve(expert_text_feats.size());
  for (const auto& t : expert_text_feats) keys.push_back(cmattn_key(params, t));
  return attention_weights(cmattn_query(params, nn::forward(pair.vision, x)), keys, attention_temperature);
}

Index param_count(const CmattnParams& params) {
  return params.query_weight.size() + params.query_bias.size() + params.key_weight.size() + 1;
}

Vector flatten(const CmattnParams& params) {
  Vector flat(param_count(params));
  Index k = 0;
  for (Index r = 0; r < params.query_weight.rows(); ++r)
    for (Index c = 0; c < params.query_weight.cols(); ++c) flat(k++) = params.query_weight(r, c);
  flat.segment(k, params.query_bias.size()) = params.query_bias;
  k += params.query_bias.size();
  flat.segment(k, params.key_weight.size()) = params.key_weight;
  k += params.key_weight.size();
  flat(k) = params.key_bias;
  return flat;
}

void assign_flat(CmattnParams& params, const Vector& flat) {
  if (flat.size() != param_count(params)) throw std::invalid_argument("cmattn: flat parameter size mismatch");
  Index k = 0;
  for (Index r = 0; r < params.query_weight.rows(); ++r)
    for (Index c = 0; c < params.query_weight.cols(); ++c) params.query_weight(r, c) = flat(k++);
  params.query_bias = flat.segment(k, params.query_bias.size());
  k += params.query_bias.size();
  params.key_weight = flat.segment(k, params.key_weight.size());
  k += params.key_weight.size();
  params.key_bias = flat(k);
}

}  // namespace expertdg::ensemble
