#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "expertdg/data/dataset.hpp"
#include "expertdg/nn/mlp.hpp"

namespace expertdg::clip {

using Eigen::Index;
using nn::Matrix;
using nn::Vector;

struct EncoderConfig {
  Index feature_dim = 16;
  Index d_f = 32;
  Index embed_dim = 16;
  Index n_classes = 10;
  Index prompt_len = 16;
  Index vision_hidden = 64;
  Index text_hidden = 64;
  double temperature = 0.01;
};

/// Frozen dual encoder. The text encoder reads a flattened prompt block
/// followed by one class embedding: (prompt_len * embed_dim + embed_dim) -> d_f.
struct EncoderPair {
  nn::Mlp vision;
  nn::Mlp text;
  Matrix class_embeddings;  // n_classes x embed_dim, unit-norm rows
  double temperature = 0.01;
  Index prompt_len = 16;

  Index n_classes() const { return class_embeddings.rows(); }
  Index embed_dim() const { return class_embeddings.cols(); }
  Index d_f() const { return vision.output_size(); }
  Index feature_dim() const { return vision.input_size(); }

  friend bool operator==(const EncoderPair& a, const EncoderPair& b) {
    return a.vision == b.vision && a.text == b.text && nn::bitwise_equal(a.class_embeddings, b.class_embeddings) &&
           a.temperature == b.temperature && a.prompt_len == b.prompt_len;
  }
};

/// Learnable prompt block p_i = [p_i1]...[p_im], one row per token.
struct PromptExpert {
  int domain_id = -1;
  Matrix embeddings;  // prompt_len x embed_dim

  friend bool operator==(const PromptExpert& a, const PromptExpert& b) {
    return a.domain_id == b.domain_id && nn::bitwise_equal(a.embeddings, b.embeddings);
  }
};

/// The all-zero prompt; zero-shot prediction and expert initialisation use it.
PromptExpert default_prompt(const EncoderPair& pair, int domain_id = -1);

// ---------------------------------------------------------------------------
// Cosine similarity

/// Throws nn::NumericError if either vector has zero norm.
double cosine(const Vector& a, const Vector& b);

/// d cos(a, b) / d a.
Vector cosine_grad(const Vector& a, const Vector& b);

/// cos(feature, texts.row(c)) / temperature for every class.
Vector similarity_logits(const Vector& feature, const Matrix& texts, double temperature);

/// Cross-entropy of similarity logits for one sample and its gradients with
/// respect to the image feature and every text row (either pointer may be null).
double similarity_cross_entropy(const Vector& feature, const Matrix& texts, double temperature, Index label,
                                Vector* d_feature, Matrix* d_texts);

/// Backpropagates d loss / d logits (logits = cos(feature, texts_c) / tau)
/// into the feature and the text rows. Accumulates into the outputs.
void similarity_backward(const Vector& feature, const Matrix& texts, double temperature, const Vector& d_logits,
                         Vector* d_feature, Matrix* d_texts);

// ---------------------------------------------------------------------------
// Prompt construction

/// [flatten(prompt) ; class embedding], row-major over prompt tokens.
Vector text_input(const PromptExpert& expert, const Eigen::Ref<const Vector>& class_embedding);

/// T^i_c = E_t([p_i][CLASS_c]).
Vector build_prompt(const PromptExpert& expert, Index class_id, const EncoderPair& pair);

/// Rows T^i_0 .. T^i_{C-1}.
Matrix text_features(const EncoderPair& pair, const PromptExpert& expert);

/// Text features with everything needed for a reverse pass.
struct TextForward {
  Matrix inputs;  // text_input per class, one column each
  nn::BasicForwardCache<double> cache;
  Matrix features;  // n_classes x d_f
};

TextForward text_forward(const EncoderPair& pair, const PromptExpert& expert);

struct TextBackward {
  Matrix prompt_grad;           // prompt_len x embed_dim
  Matrix class_embedding_grad;  // n_classes x embed_dim
};

/// Given d loss / d features (n_classes x d_f), returns the gradients of the
/// text encoder's inputs split into prompt and class-embedding parts.
TextBackward text_backward(const EncoderPair& pair, const TextForward& fwd, const Matrix& d_features);

// ---------------------------------------------------------------------------
// Prediction

/// softmax(cos(E_v(x), T_c) / tau) over classes.
Vector zero_shot_predict(const EncoderPair& pair, const Vector& x, const Matrix& texts);
Vector zero_shot_predict(const EncoderPair& pair, const Vector& x, const std::vector<Vector>& texts);

/// Fraction of samples whose argmax similarity matches the label.
double zero_shot_accuracy(const EncoderPair& pair, const Matrix& texts, const data::DomainDataset& domain);

// ---------------------------------------------------------------------------
// Construction

/// Seeded vision/text encoders and unit-norm class embeddings, no training.
EncoderPair init_encoders(const EncoderConfig& cfg, std::uint64_t seed);

struct PretrainConfig {
  Index epochs = 60;
  Index batch_size = 64;
  double learning_rate = 5e-3;
};

/// Contrastive-style pretraining of the vision encoder and class embeddings
/// (text encoder stays at its seeded map) with the zero-shot softmax over the
/// default prompt. epochs = 0 returns init_encoders(cfg, seed) unchanged.
EncoderPair pretrain_mock_encoders(const std::vector<data::DomainDataset>& pool, const EncoderConfig& cfg,
                                   const PretrainConfig& train, std::uint64_t seed);

// Checkpoint: "expertdg-encoders 1", manifest lines (d_f, embed_dim,
// n_classes, prompt_len, temperature), then vision, text and class matrix
// in the nn checkpoint encoding.
void save_encoders(const std::filesystem::path& path, const EncoderPair& pair);
EncoderPair load_encoders(const std::filesystem::path& path);

}  // namespace expertdg::clip
