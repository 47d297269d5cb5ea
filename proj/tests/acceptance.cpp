#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "expertdg/bounds/bounds.hpp"
#include "expertdg/ensemble/cmattn.hpp"
#include "expertdg/ensemble/experts.hpp"
#include "expertdg/ensemble/finetune.hpp"
#include "expertdg/ensemble/regularizers.hpp"
#include "expertdg/harness/commands.hpp"
#include "expertdg/harness/config.hpp"
#include "expertdg/harness/dg.hpp"
#include "expertdg/harness/gradcheck.hpp"
#include "expertdg/harness/toy.hpp"
#include "expertdg/nn/loss.hpp"
#include "expertdg/rng.hpp"

using namespace expertdg;
using namespace expertdg::harness;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::vector<std::string> failures;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
  }
};

int g_failed = 0;

void report(int id, const std::string& title, const Outcome& o, double secs) {
  std::printf("%s %d %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), secs);
  for (const auto& f : o.failures) std::printf("     - %s\n", f.c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failed;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1: toy table --------------------------------------------------------------

Outcome toy_trend() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  ToyExperimentConfig tc = cfg.toy;
  tc.repeats = cfg.repeats_for("toy");
  const ToyResult res = run_toy_experiment(tc, cfg.seed, cfg.threads);
  const double secs = seconds_since(t0);

  const double paper_RB[] = {0.689, 0.670, 0.659};
  const double paper_R[] = {1.118, 1.195, 1.368};
  const double paper_r[] = {1.120, 1.482, 1.843};
  std::printf("     h1      R_B      R_O      E_B      E_O        R        r |  ref R_B  ref R_O    ref R    ref r\n");
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& w = res.rows[i];
    std::printf("     %3lld %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f |", w.h1, w.R_B, w.R_O, w.E_B, w.E_O, w.R, w.r);
    if (i < 3)
      std::printf(" %8.3f %8.3f %8.3f %8.3f\n", paper_RB[i], 0.599, paper_R[i], paper_r[i]);
    else
      std::printf("\n");
  }

  Outcome o;
  const auto& rows = res.rows;
  for (const auto& w : rows)
    o.require(w.R_O < w.R_B, "h1=" + std::to_string(w.h1) + ": R_O " + fmt("%.4f", w.R_O) + " >= R_B " + fmt("%.4f", w.R_B));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    o.require(rows[i].R >= rows[i - 1].R, "R decreases from h1=" + std::to_string(rows[i - 1].h1) + " to " + std::to_string(rows[i].h1));
    o.require(rows[i].r > rows[i - 1].r, "r not strictly increasing at h1=" + std::to_string(rows[i].h1));
  }
  if (rows.size() >= 2) {
    const double gr = rows.back().r / rows.front().r, gR = rows.back().R / rows.front().R;
    o.require(gr > gR, "r growth " + fmt("%.4f", gr) + " <= R growth " + fmt("%.4f", gR));
  }
  for (const auto& w : rows)
    o.require(w.R <= w.r, "h1=" + std::to_string(w.h1) + ": R " + fmt("%.4f", w.R) + " > r " + fmt("%.4f", w.r));
  o.require(secs <= 600.0, "runtime " + fmt("%.1f", secs) + " s > 600 s");
  return o;
}

// 2: gradients --------------------------------------------------------------

Outcome gradients() {
  GradcheckConfig gc;
  const auto rows = run_gradcheck(gc, 1, 20);
  Outcome o;
  Index mlp = 0, joint = 0;
  double worst = 0.0;
  for (const auto& r : rows) {
    (r.kind == "mlp" ? mlp : joint) += 1;
    worst = std::max(worst, r.max_rel_error);
    o.require(r.max_rel_error <= 1e-4, r.kind + " " + r.architecture + " " + r.activation + " " + r.loss + ": " +
                                           fmt("%.3e", r.max_rel_error));
  }
  o.require(mlp >= 20, "only " + std::to_string(mlp) + " random architectures");
  o.require(joint >= 1, "no joint objective checks");
  std::printf("     %lld architectures, %lld joint checks, max relative error %.3e\n", static_cast<long long>(mlp),
              static_cast<long long>(joint), worst);
  return o;
}

// 3: bound arithmetic -------------------------------------------------------

std::vector<double> random_simplex(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double s = 0.0;
  for (auto& x : v) s += (x = 0.05 + rng.uniform());
  for (auto& x : v) x /= s;
  double head = 0.0;
  for (std::size_t i = 0; i + 1 < d; ++i) head += v[i];
  v.back() = 1.0 - head;
  return v;
}

bounds::BoundConfig random_bound_config(Rng& rng, bool equal_mn) {
  bounds::BoundConfig c;
  const std::size_t d = 1 + rng.index(5);
  c.pi = random_simplex(rng, d);
  c.pi_prime = random_simplex(rng, d);
  c.n = std::round(std::exp(rng.uniform(std::log(100.0), std::log(1e6))));
  c.m = equal_mn ? c.n : std::round(std::exp(rng.uniform(std::log(10.0), std::log(1e6))));
  c.d_i.resize(d);
  for (auto& v : c.d_i) v = std::exp(rng.uniform(0.0, std::log(1e5)));
  c.d0 = std::exp(rng.uniform(0.0, std::log(1e7)));
  c.d_tilde = std::exp(rng.uniform(0.0, std::log(1e3)));
  c.delta = rng.uniform(1e-4, 0.5);
  c.c_L = rng.uniform(0.1, 3.0);
  c.C_const = rng.uniform(0.1, 3.0);
  return c;
}

double brute_c_delta(const bounds::BoundConfig& c) {
  double best = 1e300;
  for (std::size_t i = 0; i < c.d(); ++i) {
    const double ni = c.pi[i] * c.n;
    const double v =
        std::sqrt((std::log(2 * c.n) + std::log(1 / c.delta) / c.d0) / (std::log(ni) + std::log(3 / c.delta) / c.d_i[i]));
    best = std::min(best, v);
  }
  return best;
}

Outcome bound_arithmetic() {
  using namespace expertdg::bounds;
  Outcome o;
  Rng rng(301);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const BoundConfig c = random_bound_config(rng, true);
    worst = std::max(worst, std::abs(c_delta(c) - brute_c_delta(c)));
  }
  o.require(worst <= 1e-12, "c_delta deviates from brute force by " + fmt("%.3e", worst));

  int mono_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const BoundConfig c = random_bound_config(rng, t % 2 == 0);
    BoundConfig bigger = c;
    bigger.n *= 2;
    bigger.m *= 2;
    BoundConfig dims = c;
    dims.d0 *= 1.5;
    dims.d_tilde *= 1.5;
    for (auto& v : dims.d_i) v *= 1.5;
    BoundConfig one = c;
    one.d_i[rng.index(c.d())] *= 2;
    const bool ok = upp_ensemble(bigger) <= upp_ensemble(c) && upp_universal(bigger) <= upp_universal(c) &&
                    upp_ensemble(dims) >= upp_ensemble(c) && upp_universal(dims) >= upp_universal(c) &&
                    upp_ensemble(one) >= upp_ensemble(c);
    mono_bad += ok ? 0 : 1;
  }
  o.require(mono_bad == 0, std::to_string(mono_bad) + " of 100 configs break a monotonicity sweep");

  int held = 0, violated = 0;
  for (int t = 0; t < 1000; ++t) {
    const BoundConfig c = random_bound_config(rng, true);
    if (!check_remark3(c).holds) continue;
    ++held;
    BoundConfig third = c;
    third.delta = c.delta / 3;
    if (!(upp_ensemble(third) <= upp_universal(c) + corollary_epsilon(c))) ++violated;
  }
  o.require(violated == 0, std::to_string(violated) + " configs violate the ensemble-vs-universal consequence");
  std::printf("     c_delta max deviation %.3e; condition held on %d of 1000 m=n configs\n", worst, held);
  return o;
}

// 4: simplex and reductions -------------------------------------------------

clip::EncoderConfig tiny_encoder() {
  clip::EncoderConfig cfg;
  cfg.feature_dim = 5;
  cfg.d_f = 6;
  cfg.embed_dim = 3;
  cfg.n_classes = 4;
  cfg.prompt_len = 2;
  cfg.vision_hidden = 7;
  cfg.text_hidden = 8;
  cfg.temperature = 0.5;
  return cfg;
}

std::vector<clip::PromptExpert> random_prompts(const clip::EncoderPair& pair, int d, Rng& rng) {
  std::vector<clip::PromptExpert> out;
  for (int i = 0; i < d; ++i) {
    auto p = clip::default_prompt(pair, i);
    rng.fill_normal(p.embeddings, 0.5);
    out.push_back(p);
  }
  return out;
}

ensemble::CmattnParams random_cmattn(const clip::EncoderPair& pair, Rng& rng) {
  auto p = ensemble::init_cmattn(pair.d_f(), pair.n_classes());
  nn::Matrix noise(pair.d_f(), pair.d_f());
  rng.fill_normal(noise, 0.3);
  p.query_weight += noise;
  rng.fill_normal(p.query_bias, 0.2);
  rng.fill_normal(p.key_weight, 0.5);
  p.key_bias = 0.1;
  return p;
}

Outcome simplex_and_reductions() {
  using namespace expertdg::ensemble;
  Outcome o;
  const auto pair = clip::init_encoders(tiny_encoder(), 401);
  Rng rng(402);

  double worst_sum = 0.0;
  bool negative = false;
  for (int t = 0; t < 1000; ++t) {
    const int d = 1 + static_cast<int>(rng.index(5));
    std::vector<nn::Matrix> feats;
    for (const auto& p : random_prompts(pair, d, rng)) feats.push_back(clip::text_features(pair, p));
    nn::Vector x(pair.feature_dim());
    rng.fill_normal(x, 2.0);
    const nn::Vector w = cmattn_weights(random_cmattn(pair, rng), pair, x, feats);
    worst_sum = std::max(worst_sum, std::abs(w.sum() - 1.0));
    negative = negative || w.minCoeff() < 0.0;
  }
  o.require(worst_sum <= 1e-9, "weights sum off by " + fmt("%.3e", worst_sum));
  o.require(!negative, "negative weight");

  int singleton_bad = 0;
  double worst_uniform = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto params = random_cmattn(pair, rng);
    nn::Vector x(pair.feature_dim());
    rng.fill_normal(x);
    const auto prompts = random_prompts(pair, 1, rng);
    const nn::Matrix tf = clip::text_features(pair, prompts[0]);
    const nn::Vector w1 = cmattn_weights(params, pair, x, {tf});
    singleton_bad += (w1.size() == 1 && w1(0) == 1.0) ? 0 : 1;
    const int d = 2 + static_cast<int>(rng.index(4));
    const nn::Vector wu = cmattn_weights(params, pair, x, std::vector<nn::Matrix>(static_cast<std::size_t>(d), tf));
    for (Index i = 0; i < wu.size(); ++i) worst_uniform = std::max(worst_uniform, std::abs(wu(i) - 1.0 / d));
  }
  o.require(singleton_bad == 0, std::to_string(singleton_bad) + " single-expert weights differ from 1.0");
  o.require(worst_uniform <= 1e-9, "equal keys off uniform by " + fmt("%.3e", worst_uniform));

  int onehot_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = 2 + static_cast<int>(rng.index(3));
    const auto experts = make_prompt_experts(pair, random_prompts(pair, d, rng));
    nn::Vector x(pair.feature_dim());
    rng.fill_normal(x);
    const InferResult r = ensemble_infer(pair, experts, random_cmattn(pair, rng), x);
    const nn::Vector f = nn::forward(pair.vision, x);
    for (int i = 0; i < d; ++i) {
      Index solo = 0;
      double best = -1e300;
      for (Index c = 0; c < pair.n_classes(); ++c) {
        const nn::Vector tc = experts.text_features[static_cast<std::size_t>(i)].row(c).transpose();
        const double s = clip::cosine(f, tc) / pair.temperature;
        if (s > best) {
          best = s;
          solo = c;
        }
      }
      onehot_bad += weighted_argmax(r.expert_logits, nn::Vector::Unit(d, i)) == solo ? 0 : 1;
    }
  }
  o.require(onehot_bad == 0, std::to_string(onehot_bad) + " one-hot predictions differ from the solo expert");
  std::printf("     max |sum w - 1| %.3e, max equal-key deviation %.3e\n", worst_sum, worst_uniform);
  return o;
}

// 5: miniature benchmark ----------------------------------------------------

Outcome dg_properties() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  const Index seeds = cfg.repeats_for("dg");
  const DgResult dg = run_dg_benchmark(cfg.dg, cfg.seed, seeds, cfg.threads);
  const AblationResult ab = run_ablation(cfg.dg, cfg.seed, seeds, cfg.threads);
  const double secs = seconds_since(t0);

  std::printf("     seeds %lld, evaluations %zu\n", static_cast<long long>(seeds), dg.evaluations.size());
  std::printf("     ensemble %.4f  universal %.4f  best solo %.4f  worst-gets-min-weight rate %.3f\n", dg.mean_guidg,
              dg.mean_erm, dg.mean_best_solo, dg.worst_min_weight_rate);
  for (const auto& c : ab.cells)
    std::printf("     ablation %-9s %-8s %.4f\n", to_string(c.experts).c_str(), to_string(c.data).c_str(), c.mean_accuracy);

  Outcome o;
  o.require(dg.mean_guidg >= dg.mean_best_solo,
            "ensemble " + fmt("%.4f", dg.mean_guidg) + " < best solo " + fmt("%.4f", dg.mean_best_solo));
  for (AblationData d : {AblationData::disjoint, AblationData::shared}) {
    const double s = ab.mean(AblationExperts::single, d), u = ab.mean(AblationExperts::uniform, d),
                 l = ab.mean(AblationExperts::learnable, d);
    o.require(l >= u, to_string(d) + ": learnable " + fmt("%.4f", l) + " < uniform " + fmt("%.4f", u));
    o.require(u >= s, to_string(d) + ": uniform " + fmt("%.4f", u) + " < single " + fmt("%.4f", s));
  }
  o.require(dg.worst_min_weight_rate >= 0.8, "worst expert gets the minimum weight in " +
                                                 fmt("%.3f", dg.worst_min_weight_rate) + " of evaluations");
  o.require(secs <= 900.0, "runtime " + fmt("%.1f", secs) + " s > 900 s");
  return o;
}

// 6: regularizer closed forms -----------------------------------------------

Outcome regularizers() {
  using namespace expertdg::ensemble;
  Outcome o;
  for (Index c : {2, 4, 5, 7}) {
    const nn::Matrix uniform = nn::Matrix::Constant(c, 9, 1.0 / static_cast<double>(c));
    const double v = entropy_ueo(uniform);
    o.require(v == 0.0, "uniform batch, C=" + std::to_string(c) + ": " + fmt("%.3e", v));
    nn::Matrix onehot = nn::Matrix::Zero(c, 6);
    onehot.row(c - 1).setOnes();
    const double h = entropy_ueo(onehot);
    o.require(h == 0.0, "one-hot batch, C=" + std::to_string(c) + ": " + fmt("%.3e", h));
  }

  Rng rng(601);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index c = 2 + static_cast<Index>(rng.index(8));
    nn::Vector sims(c), dist(c);
    for (Index k = 0; k < c; ++k) sims(k) = rng.uniform(-1, 1);
    for (Index k = 0; k < c; ++k) dist(k) = rng.uniform(0, 2);
    const Index y = static_cast<Index>(rng.index(static_cast<std::size_t>(c)));
    const double tau = rng.uniform(0.01, 1.0);
    // Plain cross-entropy written out: logsumexp(s/tau) - s_y/tau.
    const double m = sims.maxCoeff() / tau;
    const double lse = m + std::log(((sims.array() / tau) - m).exp().sum());
    worst = std::max(worst, std::abs(mms_loss(sims, y, dist, 0.0, tau) - (lse - sims(y) / tau)));
  }
  o.require(worst <= 1e-12, "margin loss at lambda=0 differs from cross-entropy by " + fmt("%.3e", worst));

  const double beta = beta_density(0.5, 0.5);
  o.require(std::abs(beta - 2.0 / std::numbers::pi) <= 1e-12, "Beta(0.5,0.5) at 0.5 = " + fmt("%.17g", beta));

  nn::Vector a(50), b(50);
  rng.fill_normal(a);
  rng.fill_normal(b);
  const nn::Vector at0 = weight_space_blend(a, b, 0.0), at1 = weight_space_blend(a, b, 1.0);
  o.require(std::memcmp(at0.data(), a.data(), sizeof(double) * 50) == 0, "blend at 0 is not the first endpoint");
  o.require(std::memcmp(at1.data(), b.data(), sizeof(double) * 50) == 0, "blend at 1 is not the second endpoint");
  std::printf("     margin loss max deviation %.3e\n", worst);
  return o;
}

// 7: determinism ------------------------------------------------------------

ExperimentConfig small_config(Format format, const fs::path& out) {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.format = format;
  cfg.out = out.string();
  const char* settings[][2] = {
      {"toy.h1", "6,8"},           {"toy.n_train", "40"},          {"toy.n_test", "200"},
      {"toy.expert_hidden", "6"},  {"toy.universal_epochs", "20"}, {"toy.expert_epochs", "20"},
      {"toy.aggregator_epochs", "20"},
      {"dg.n_domains", "3"},       {"dg.n_classes", "4"},          {"dg.feature_dim", "6"},
      {"dg.samples_per_domain", "60"}, {"dg.d_f", "8"},            {"dg.embed_dim", "4"},
      {"dg.prompt_len", "2"},      {"dg.vision_hidden", "16"},     {"dg.text_hidden", "16"},
      {"dg.pool_size", "300"},     {"dg.pretrain_epochs", "15"},   {"dg.k_shot", "6"},
      {"dg.expert_epochs", "30"},  {"dg.finetune_epochs", "3"},    {"dg.batch_size", "8"},
      {"gradcheck.joint_trials", "2"}, {"gradcheck.max_width", "12"}};
  for (const auto& kv : settings) set_config_value(cfg, kv[0], kv[1]);
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("expertdg_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  int compared = 0;
  for (Format format : {Format::csv, Format::jsonl})
    for (const auto& cmd : command_names()) {
      const std::string tag = cmd + "/" + to_string(format);
      std::vector<std::vector<fs::path>> written;
      for (int run = 0; run < 2; ++run) {
        const fs::path dir = root / (cmd + "_" + to_string(format) + "_" + std::to_string(run));
        ExperimentConfig cfg = small_config(format, dir);
        if (cmd != "bounds") cfg.repeats = 2;
        const auto out = run_command(cmd, cfg);
        written.push_back(write_command_output(cmd, cfg, out, utc_now(), 0.0));
      }
      std::vector<fs::path> data0, data1;
      for (const auto& p : written[0])
        if (p.string().find(".manifest.") == std::string::npos) data0.push_back(p);
      for (const auto& p : written[1])
        if (p.string().find(".manifest.") == std::string::npos) data1.push_back(p);
      o.require(!data0.empty() && data0.size() == data1.size(), tag + ": different file sets");
      for (std::size_t i = 0; i < std::min(data0.size(), data1.size()); ++i) {
        ++compared;
        const bool same = data0[i].filename() == data1[i].filename() && slurp(data0[i]) == slurp(data1[i]);
        o.require(same, tag + ": " + data0[i].filename().string() + " differs between runs");
      }
    }
  fs::remove_all(root);
  std::printf("     %d output files compared byte for byte\n", compared);
  return o;
}

struct Criterion {
  int id;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0)
      strict = true;
    else
      only.push_back(std::atoi(argv[i]));
  }

  const std::vector<Criterion> criteria{
      {1, "toy table trend", toy_trend},
      {2, "gradient checks", gradients},
      {3, "bound arithmetic", bound_arithmetic},
      {4, "attention simplex and reductions", simplex_and_reductions},
      {5, "miniature benchmark properties", dg_properties},
      {6, "regularizer closed forms", regularizers},
      {7, "output determinism", determinism},
  };

  try {
    for (const auto& c : criteria) {
      if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
      std::printf("---- %d %s\n", c.id, c.title.c_str());
      std::fflush(stdout);
      const auto t0 = Clock::now();
      const Outcome o = c.run();
      report(c.id, c.title, o, seconds_since(t0));
    }
  } catch (const std::exception& e) {
    std::printf("error: %s\n", e.what());
    return 3;
  }
  std::printf("%d criteria failed\n", g_failed);
  return strict && g_failed > 0 ? 1 : 0;
}
