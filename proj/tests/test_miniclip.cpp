#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "expertdg/clip/encoders.hpp"
#include "expertdg/nn/loss.hpp"

using namespace expertdg;
using namespace expertdg::clip;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.feature_dim = 6;
  cfg.d_f = 8;
  cfg.embed_dim = 4;
  cfg.n_classes = 3;
  cfg.prompt_len = 2;
  cfg.vision_hidden = 10;
  cfg.text_hidden = 10;
  return cfg;
}

// Pool drawn through the identity map so pretraining sees latent geometry.
std::vector<data::DomainDataset> identity_pool(const data::DomainSuite& suite, Index n, std::uint64_t seed) {
  Rng rng(seed);
  return {data::sample_domain(suite, data::identity_map(suite.config.feature_dim), n, 0, rng)};
}

}  // namespace

TEST_CASE("zero-shot: uniform output for identical texts") {
  const EncoderPair pair = init_encoders(small_config(), 1);
  Matrix texts(3, pair.d_f());
  Rng rng(9);
  Vector t(pair.d_f());
  rng.fill_normal(t);
  for (Index c = 0; c < 3; ++c) texts.row(c) = t.transpose();
  const Vector x = Vector::LinSpaced(pair.feature_dim(), -1.0, 1.0);
  const Vector p = zero_shot_predict(pair, x, texts);
  for (Index c = 0; c < 3; ++c) CHECK(p(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("zero-shot: simplex, scale invariance and argmax") {
  const EncoderPair pair = init_encoders(small_config(), 2);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix texts(pair.n_classes(), pair.d_f());
    rng.fill_normal(texts);
    Vector x(pair.feature_dim());
    rng.fill_normal(x);
    const Vector p = zero_shot_predict(pair, x, texts);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    CHECK(p.minCoeff() >= 0.0);

    const Vector feat = nn::forward(pair.vision, x);
    Matrix scaled = texts;
    for (Index c = 0; c < scaled.rows(); ++c) scaled.row(c) *= 0.5 + c;
    const Vector a = similarity_logits(feat, texts, pair.temperature);
    const Vector b = similarity_logits(3.7 * feat, scaled, pair.temperature);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);

    Vector raw(texts.rows());
    for (Index c = 0; c < texts.rows(); ++c) raw(c) = cosine(feat, texts.row(c).transpose());
    Index i1 = 0, i2 = 0, i3 = 0;
    raw.maxCoeff(&i1);
    p.maxCoeff(&i2);
    nn::softmax(similarity_logits(feat, texts, 1.0)).maxCoeff(&i3);
    CHECK(i1 == i2);
    CHECK(i1 == i3);
  }
}

TEST_CASE("zero-shot: two-class softmax at tau 0.01") {
  const Vector f = (Vector(2) << 1.0, 0.0).finished();
  Matrix texts(2, 2);
  texts << 0.8, std::sqrt(1 - 0.64), 0.2, std::sqrt(1 - 0.04);
  const Vector p = nn::softmax(similarity_logits(f, texts, 0.01));
  const double expected = 1.0 / (1.0 + std::exp(60.0));
  CHECK(p(1) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(p(1) == doctest::Approx(8.76e-27).epsilon(1e-3));
  CHECK(p(0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("cosine: zero norm rejected") {
  const Vector z = Vector::Zero(3);
  const Vector o = Vector::Ones(3);
  CHECK_THROWS_AS(cosine(z, o), nn::NumericError);
  CHECK_THROWS_AS(cosine(o, z), nn::NumericError);
  CHECK_THROWS_AS(similarity_logits(o, Matrix::Zero(2, 3), 0.01), nn::NumericError);
  CHECK_THROWS_AS(similarity_logits(o, Matrix::Ones(2, 3), 0.0), std::invalid_argument);
}

TEST_CASE("cosine gradient matches finite differences") {
  Rng rng(4);
  Vector a(5), b(5);
  rng.fill_normal(a);
  rng.fill_normal(b);
  const Vector g = cosine_grad(a, b);
  for (Index i = 0; i < 5; ++i) {
    Vector ap = a, am = a;
    ap(i) += 1e-6;
    am(i) -= 1e-6;
    CHECK(g(i) == doctest::Approx((cosine(ap, b) - cosine(am, b)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("build_prompt: injective in class, deterministic, zero-prompt composition") {
  const EncoderPair pair = init_encoders(small_config(), 5);
  const PromptExpert zero = default_prompt(pair, 0);
  const Vector t0 = build_prompt(zero, 0, pair);
  const Vector t1 = build_prompt(zero, 1, pair);
  CHECK((t0 - t1).norm() > 0.0);
  CHECK(nn::bitwise_equal(t0, build_prompt(zero, 0, pair)));

  Vector in = Vector::Zero(pair.text.input_size());
  in.tail(pair.embed_dim()) = pair.class_embeddings.row(1).transpose();
  CHECK(nn::bitwise_equal(t1, nn::forward(pair.text, in)));

  const Matrix feats = text_features(pair, zero);
  CHECK(nn::bitwise_equal(Vector(feats.row(1).transpose()), t1));

  CHECK_THROWS_AS(build_prompt(zero, 3, pair), std::invalid_argument);
  CHECK_THROWS_AS(build_prompt(zero, -1, pair), std::invalid_argument);
  PromptExpert bad{0, Matrix::Zero(3, pair.embed_dim())};
  CHECK_THROWS_AS(build_prompt(bad, 0, pair), std::invalid_argument);
}

TEST_CASE("text backward matches finite differences") {
  const EncoderPair pair = init_encoders(small_config(), 6);
  Rng rng(8);
  PromptExpert p = default_prompt(pair, 0);
  rng.fill_normal(p.embeddings, 0.3);
  Matrix upstream(pair.n_classes(), pair.d_f());
  rng.fill_normal(upstream);
  auto f = [&](const PromptExpert& q) { return (text_features(pair, q).array() * upstream.array()).sum(); };
  const TextBackward tb = text_backward(pair, text_forward(pair, p), upstream);
  for (Index r = 0; r < p.embeddings.rows(); ++r)
    for (Index c = 0; c < p.embeddings.cols(); ++c) {
      PromptExpert hi = p, lo = p;
      hi.embeddings(r, c) += 1e-5;
      lo.embeddings(r, c) -= 1e-5;
      const double fd = (f(hi) - f(lo)) / 2e-5;
      CHECK(tb.prompt_grad(r, c) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("pretraining: epochs 0 equals init, bad pool rejected") {
  const auto cfg = small_config();
  data::SuiteConfig sc;
  sc.n_domains = 2;
  sc.n_classes = 3;
  sc.feature_dim = 6;
  sc.samples_per_domain = {30, 30};
  const auto suite = data::gen_domain_suite(sc, 1);
  PretrainConfig none;
  none.epochs = 0;
  CHECK(pretrain_mock_encoders(suite.domains, cfg, none, 11) == init_encoders(cfg, 11));
  CHECK_THROWS_AS(pretrain_mock_encoders({}, cfg, none, 11), std::invalid_argument);
}

TEST_CASE("pretraining: zero-shot accuracy beats chance over 5 seeds") {
  EncoderConfig cfg;
  data::SuiteConfig sc;
  sc.samples_per_domain.assign(4, 200);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto suite = data::gen_domain_suite(sc, seed);
    const auto pool = identity_pool(suite, 1000, seed + 100);
    const auto held = identity_pool(suite, 500, seed + 200);
    PretrainConfig pc;
    pc.epochs = 20;
    const EncoderPair pair = pretrain_mock_encoders(pool, cfg, pc, seed);
    const double acc = zero_shot_accuracy(pair, text_features(pair, default_prompt(pair)), held[0]);
    MESSAGE("seed " << seed << " zero-shot accuracy " << acc);
    CHECK(acc > 1.0 / static_cast<double>(cfg.n_classes));
    CHECK((pair.class_embeddings.rowwise().norm().array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("encoder checkpoint round trip is bit exact") {
  const EncoderPair pair = init_encoders(small_config(), 12);
  const auto path = std::filesystem::temp_directory_path() / "expertdg_test_encoders.txt";
  save_encoders(path, pair);
  CHECK(load_encoders(path) == pair);
  std::filesystem::remove(path);
}
