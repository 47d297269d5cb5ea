#pragma once

#include <vector>

#include <Eigen/Dense>

#include "expertdg/clip/encoders.hpp"

namespace expertdg::ensemble {

using Eigen::Index;
using nn::Matrix;
using nn::Vector;

/// Cross-modal attention: a query map on vision features and a (C,1) map
/// that mixes an expert's C text features into one key.
///   q(x) = W_q E_v(x) + b_q
///   k_i  = sum_c W_k[c] T^i_c + b_k
///   w(x) = softmax(cos(q(x), k_i) / attention_temperature)
struct CmattnParams {
  Matrix query_weight;  // d_f x d_f
  Vector query_bias;    // d_f
  Vector key_weight;    // C
  double key_bias = 0.0;

  Index d_f() const { return query_weight.rows(); }
  Index n_classes() const { return key_weight.size(); }

  static CmattnParams zeros(Index d_f, Index n_classes);

  friend bool operator==(const CmattnParams& a, const CmattnParams& b) {
    return nn::bitwise_equal(a.query_weight, b.query_weight) && nn::bitwise_equal(a.query_bias, b.query_bias) &&
           nn::bitwise_equal(a.key_weight, b.key_weight) && a.key_bias == b.key_bias;
  }
};

/// W_q = I, b_q = 0, W_k = 1/C (class-mean key), b_k = 0.
CmattnParams init_cmattn(Index d_f, Index n_classes);

Vector cmattn_query(const CmattnParams& params, const Vector& feature);
Vector cmattn_key(const CmattnParams& params, const Matrix& text_features);

/// Weights from a precomputed vision feature and precomputed keys.
Vector attention_weights(const Vector& query, const std::vector<Vector>& keys, double attention_temperature = 1.0);

/// w(x) over the d experts whose C x d_f text-feature matrices are given.
Vector cmattn_weights(const CmattnParams& params, const clip::EncoderPair& pair, const Vector& x,
                      const std::vector<Matrix>& expert_text_feats, double attention_temperature = 1.0);

/// Flat parameter vector: W_q row-major, b_q, W_k, b_k.
Vector flatten(const CmattnParams& params);
void assign_flat(CmattnParams& params, const Vector& flat);
Index param_count(const CmattnParams& params);

}  // namespace expertdg::ensemble
