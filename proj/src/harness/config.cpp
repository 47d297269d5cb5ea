#include "expertdg/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <stdexcept>

namespace expertdg::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

long long parse_int(const std::string& raw) {
  const std::string s = trim(raw);
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument("expected an integer, got '" + raw + "'");
  return v;
}

double parse_real(const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument("expected a number, got '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true|false, got '" + raw + "'");
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>)
      s += fmt_real(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

using Cfg = ExperimentConfig;

template <typename T>
using Ref = std::function<T&(Cfg&)>;

template <typename T>
T& at(const Ref<T>& ref, const Cfg& c) {
  return ref(const_cast<Cfg&>(c));
}

ConfigKey real_key(std::string name, std::string help, Ref<double> ref) {
  return {std::move(name), std::move(help), [ref](Cfg& c, const std::string& v) { ref(c) = parse_real(v); },
          [ref](const Cfg& c) { return fmt_real(at(ref, c)); }};
}

template <typename Int>
ConfigKey int_key(std::string name, std::string help, Ref<Int> ref) {
  return {std::move(name), std::move(help), [ref](Cfg& c, const std::string& v) { ref(c) = static_cast<Int>(parse_int(v)); },
          [ref](const Cfg& c) { return std::to_string(at(ref, c)); }};
}

ConfigKey bool_key(std::string name, std::string help, Ref<bool> ref) {
  return {std::move(name), std::move(help), [ref](Cfg& c, const std::string& v) { ref(c) = parse_bool(v); },
          [ref](const Cfg& c) { return std::string(at(ref, c) ? "true" : "false"); }};
}

ConfigKey real_list_key(std::string name, std::string help, Ref<std::vector<double>> ref) {
  return {std::move(name), std::move(help),
          [ref](Cfg& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& t : split_list(v)) out.push_back(parse_real(t));
            ref(c) = std::move(out);
          },
          [ref](const Cfg& c) { return fmt_list(at(ref, c)); }};
}

template <typename E, typename Parse, typename Show>
ConfigKey enum_key(std::string name, std::string help, Ref<E> ref, Parse parse, Show show) {
  return {std::move(name), std::move(help), [ref, parse](Cfg& c, const std::string& v) { ref(c) = parse(trim(v)); },
          [ref, show](const Cfg& c) { return std::string(show(at(ref, c))); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  // Run-wide settings; the CLI flags of the same name override these.
  k.push_back(int_key<std::uint64_t>("seed", "root seed", [](Cfg& c) -> std::uint64_t& { return c.seed; }));
  k.push_back({"repeats", "repeat / seed / trial count (default: per command)",
               [](Cfg& c, const std::string& v) {
                 if (trim(v) == "default") {
                   c.repeats.reset();
                   return;
                 }
                 c.repeats = parse_int(v);
               },
               [](const Cfg& c) { return c.repeats ? std::to_string(*c.repeats) : std::string("default"); }});
  k.push_back({"out", "output directory", [](Cfg& c, const std::string& v) { c.out = trim(v); },
               [](const Cfg& c) { return c.out; }});
  k.push_back(enum_key<Format>("format", "csv|jsonl", [](Cfg& c) -> Format& { return c.format; }, parse_format,
                               [](Format f) { return to_string(f); }));
  k.push_back(int_key<unsigned>("threads", "worker threads for repeats and seeds", [](Cfg& c) -> unsigned& { return c.threads; }));

  // toy
  k.push_back({"toy.h1", "universal hidden widths",
               [](Cfg& c, const std::string& v) {
                 std::vector<long long> out;
                 for (const auto& t : split_list(v)) out.push_back(parse_int(t));
                 c.toy.h1 = std::move(out);
               },
               [](const Cfg& c) { return fmt_list(c.toy.h1); }});
  k.push_back(int_key<Index>("toy.n_train", "training samples per repeat", [](Cfg& c) -> Index& { return c.toy.data.n_train; }));
  k.push_back(int_key<Index>("toy.n_test", "test samples per repeat", [](Cfg& c) -> Index& { return c.toy.data.n_test; }));
  k.push_back(real_key("toy.noise_sd", "Gaussian noise sd", [](Cfg& c) -> double& { return c.toy.data.noise_sd; }));
  k.push_back({"toy.x_range", "lo,hi",
               [](Cfg& c, const std::string& v) {
                 const auto parts = split_list(v);
                 if (parts.size() != 2) throw std::invalid_argument("expected lo,hi");
                 const double lo = parse_real(parts[0]), hi = parse_real(parts[1]);
                 if (!(lo < hi)) throw std::invalid_argument("x_range needs lo < hi");
                 c.toy.data.x_lo = lo;
                 c.toy.data.x_hi = hi;
               },
               [](const Cfg& c) { return fmt_real(c.toy.data.x_lo) + "," + fmt_real(c.toy.data.x_hi); }});
  k.push_back(real_key("toy.step2_fraction", "aggregator share of the training set",
                       [](Cfg& c) -> double& { return c.toy.step2_fraction; }));
  k.push_back(enum_key<ToySplit>("toy.split", "sign|random", [](Cfg& c) -> ToySplit& { return c.toy.split; }, parse_toy_split,
                                 [](ToySplit s) { return to_string(s); }));
  k.push_back(int_key<long long>("toy.expert_hidden", "expert hidden width", [](Cfg& c) -> long long& { return c.toy.expert_hidden; }));
  k.push_back(int_key<long long>("toy.aggregator_hidden", "aggregator hidden width",
                                 [](Cfg& c) -> long long& { return c.toy.aggregator_hidden; }));
  k.push_back(enum_key<nn::Activation>(
      "toy.activation", "tanh|relu|identity", [](Cfg& c) -> nn::Activation& { return c.toy.activation; },
      [](const std::string& s) { return nn::parse_activation(s); }, [](nn::Activation a) { return nn::to_string(a); }));
  k.push_back(bool_key("toy.aggregator_include_input", "feed x to the aggregator too",
                       [](Cfg& c) -> bool& { return c.toy.aggregator_include_input; }));
  k.push_back(int_key<Index>("toy.universal_epochs", "", [](Cfg& c) -> Index& { return c.toy.universal_fit.epochs; }));
  k.push_back(int_key<Index>("toy.expert_epochs", "", [](Cfg& c) -> Index& { return c.toy.expert_fit.epochs; }));
  k.push_back(int_key<Index>("toy.aggregator_epochs", "", [](Cfg& c) -> Index& { return c.toy.aggregator_fit.epochs; }));
  k.push_back(real_key("toy.universal_lr", "", [](Cfg& c) -> double& { return c.toy.universal_fit.optimizer.learning_rate; }));
  k.push_back(real_key("toy.expert_lr", "", [](Cfg& c) -> double& { return c.toy.expert_fit.optimizer.learning_rate; }));
  k.push_back(real_key("toy.aggregator_lr", "", [](Cfg& c) -> double& { return c.toy.aggregator_fit.optimizer.learning_rate; }));
  k.push_back(int_key<Index>("toy.universal_batch_size", "0: full batch", [](Cfg& c) -> Index& { return c.toy.universal_fit.batch_size; }));
  k.push_back(int_key<Index>("toy.expert_batch_size", "0: full batch", [](Cfg& c) -> Index& { return c.toy.expert_fit.batch_size; }));
  k.push_back(int_key<Index>("toy.aggregator_batch_size", "0: full batch",
                             [](Cfg& c) -> Index& { return c.toy.aggregator_fit.batch_size; }));
  k.push_back(real_key("toy.delta", "confidence for r", [](Cfg& c) -> double& { return c.toy.delta; }));
  k.push_back(real_key("toy.c_L", "", [](Cfg& c) -> double& { return c.toy.c_L; }));
  k.push_back(real_key("toy.C", "", [](Cfg& c) -> double& { return c.toy.C_const; }));

  // dg (also used by ablate)
  k.push_back(int_key<Index>("dg.n_domains", "", [](Cfg& c) -> Index& { return c.dg.suite.n_domains; }));
  k.push_back(int_key<Index>("dg.n_classes", "", [](Cfg& c) -> Index& { return c.dg.suite.n_classes; }));
  k.push_back(int_key<Index>("dg.feature_dim", "", [](Cfg& c) -> Index& { return c.dg.suite.feature_dim; }));
  k.push_back(int_key<Index>("dg.samples_per_domain", "", [](Cfg& c) -> Index& { return c.dg.samples_per_domain; }));
  k.push_back(real_key("dg.shift_strength", "domain shift; 0 gives identical domains",
                       [](Cfg& c) -> double& { return c.dg.suite.shift_strength; }));
  k.push_back(real_key("dg.prototype_sd", "", [](Cfg& c) -> double& { return c.dg.suite.prototype_sd; }));
  k.push_back(real_key("dg.within_class_sd", "", [](Cfg& c) -> double& { return c.dg.suite.within_class_sd; }));
  k.push_back(int_key<Index>("dg.d_f", "shared feature width", [](Cfg& c) -> Index& { return c.dg.encoder.d_f; }));
  k.push_back(int_key<Index>("dg.embed_dim", "", [](Cfg& c) -> Index& { return c.dg.encoder.embed_dim; }));
  k.push_back(int_key<Index>("dg.prompt_len", "", [](Cfg& c) -> Index& { return c.dg.encoder.prompt_len; }));
  k.push_back(int_key<Index>("dg.vision_hidden", "", [](Cfg& c) -> Index& { return c.dg.encoder.vision_hidden; }));
  k.push_back(int_key<Index>("dg.text_hidden", "", [](Cfg& c) -> Index& { return c.dg.encoder.text_hidden; }));
  k.push_back(real_key("dg.temperature", "similarity temperature", [](Cfg& c) -> double& { return c.dg.encoder.temperature; }));
  k.push_back(int_key<Index>("dg.pool_size", "pretraining samples", [](Cfg& c) -> Index& { return c.dg.pool_size; }));
  k.push_back(int_key<Index>("dg.pretrain_epochs", "", [](Cfg& c) -> Index& { return c.dg.pretrain.epochs; }));
  k.push_back(int_key<Index>("dg.pretrain_batch_size", "", [](Cfg& c) -> Index& { return c.dg.pretrain.batch_size; }));
  k.push_back(real_key("dg.pretrain_lr", "", [](Cfg& c) -> double& { return c.dg.pretrain.learning_rate; }));
  k.push_back(int_key<Index>("dg.k_shot", "samples per class per source", [](Cfg& c) -> Index& { return c.dg.k_shot; }));
  k.push_back(real_key("dg.step2_fraction", "", [](Cfg& c) -> double& { return c.dg.step2_fraction; }));
  k.push_back(int_key<Index>("dg.expert_epochs", "", [](Cfg& c) -> Index& { return c.dg.expert.epochs; }));
  k.push_back(int_key<Index>("dg.expert_batch_size", "0: full batch", [](Cfg& c) -> Index& { return c.dg.expert.batch_size; }));
  k.push_back(real_key("dg.expert_lr", "", [](Cfg& c) -> double& { return c.dg.expert.learning_rate; }));
  k.push_back(int_key<Index>("dg.finetune_epochs", "", [](Cfg& c) -> Index& { return c.dg.finetune.epochs; }));
  k.push_back(real_key("dg.finetune_lr", "", [](Cfg& c) -> double& { return c.dg.finetune.learning_rate; }));
  k.push_back(enum_key<ensemble::Step2Loss>(
      "dg.loss_mode", "own_domain|all_experts|ensemble", [](Cfg& c) -> ensemble::Step2Loss& { return c.dg.finetune.loss_mode; },
      [](const std::string& s) { return ensemble::parse_step2_loss(s); }, [](ensemble::Step2Loss l) { return ensemble::to_string(l); }));
  k.push_back(real_key("dg.attention_temperature", "", [](Cfg& c) -> double& { return c.dg.finetune.attention_temperature; }));
  k.push_back(enum_key<ensemble::RegularizerKind>(
      "dg.reg", "none|entropy_ueo|mms", [](Cfg& c) -> ensemble::RegularizerKind& { return c.dg.finetune.reg.kind; },
      [](const std::string& s) { return ensemble::parse_regularizer_kind(s); },
      [](ensemble::RegularizerKind r) { return ensemble::to_string(r); }));
  k.push_back(real_key("dg.alpha", "regularizer weight", [](Cfg& c) -> double& { return c.dg.finetune.reg.alpha; }));
  k.push_back(real_key("dg.lambda_margin", "", [](Cfg& c) -> double& { return c.dg.finetune.reg.lambda_margin; }));
  k.push_back(enum_key<ensemble::WeightAveraging>(
      "dg.averaging", "none|bma|wise", [](Cfg& c) -> ensemble::WeightAveraging& { return c.dg.finetune.reg.averaging; },
      [](const std::string& s) { return ensemble::parse_weight_averaging(s); },
      [](ensemble::WeightAveraging a) { return ensemble::to_string(a); }));
  k.push_back(real_key("dg.wise_alpha", "", [](Cfg& c) -> double& { return c.dg.finetune.reg.wise_alpha; }));
  k.push_back(real_key("dg.bma_beta", "", [](Cfg& c) -> double& { return c.dg.finetune.reg.bma_beta; }));
  k.push_back(int_key<Index>("dg.batch_size", "Step-2 minibatch", [](Cfg& c) -> Index& { return c.dg.finetune.reg.batch_size; }));

  // bounds
  k.push_back(real_key("bounds.n", "Step-1 samples", [](Cfg& c) -> double& { return c.bounds.n; }));
  k.push_back(real_key("bounds.m", "Step-2 samples", [](Cfg& c) -> double& { return c.bounds.m; }));
  k.push_back(real_list_key("bounds.pi", "", [](Cfg& c) -> std::vector<double>& { return c.bounds.pi; }));
  k.push_back(real_list_key("bounds.pi_prime", "", [](Cfg& c) -> std::vector<double>& { return c.bounds.pi_prime; }));
  k.push_back(real_key("bounds.d0", "", [](Cfg& c) -> double& { return c.bounds.d0; }));
  k.push_back(real_key("bounds.d_tilde", "", [](Cfg& c) -> double& { return c.bounds.d_tilde; }));
  k.push_back(real_list_key("bounds.d_i", "", [](Cfg& c) -> std::vector<double>& { return c.bounds.d_i; }));
  k.push_back(real_key("bounds.delta", "", [](Cfg& c) -> double& { return c.bounds.delta; }));
  k.push_back(real_key("bounds.c_L", "", [](Cfg& c) -> double& { return c.bounds.c_L; }));
  k.push_back(real_key("bounds.C", "", [](Cfg& c) -> double& { return c.bounds.C_const; }));

  // gradcheck
  k.push_back(int_key<Index>("gradcheck.max_hidden_layers", "", [](Cfg& c) -> Index& { return c.gradcheck.max_hidden_layers; }));
  k.push_back(int_key<Index>("gradcheck.max_width", "", [](Cfg& c) -> Index& { return c.gradcheck.max_width; }));
  k.push_back(int_key<Index>("gradcheck.batch_size", "", [](Cfg& c) -> Index& { return c.gradcheck.batch_size; }));
  k.push_back(int_key<Index>("gradcheck.joint_trials", "", [](Cfg& c) -> Index& { return c.gradcheck.joint_trials; }));
  k.push_back(real_key("gradcheck.fd_step", "", [](Cfg& c) -> double& { return c.gradcheck.fd_step; }));
  k.push_back(real_key("gradcheck.tolerance", "", [](Cfg& c) -> double& { return c.gradcheck.tolerance; }));
  return k;
}

}  // namespace

ExperimentConfig::ExperimentConfig() { bounds = bounds::toy_bound_configs(bounds::ToyBoundSpec{}).ensemble; }

Index ExperimentConfig::repeats_for(const std::string& command) const {
  if (repeats) return *repeats;
  if (command == "toy") return toy.repeats;
  if (command == "bounds") return 1;
  return 20;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      try {
        k.set(cfg, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(key + ": " + e.what());
      }
      return;
    }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_config_text(ExperimentConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    try {
      if (eq == std::string::npos) throw std::invalid_argument("expected 'key = value'");
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file " + path.string());
  apply_config_text(cfg, in, path.string());
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

}  // namespace expertdg::harness
