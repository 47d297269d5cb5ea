#pragma once

#include <optional>
#include <string>
#include <vector>

namespace expertdg::bounds {

/// Symbols of the ensemble/universal generalization bounds. Natural log
/// throughout; per-domain counts are n_i = pi_i * n.
struct BoundConfig {
  double n = 100;  // step-1 samples
  double m = 100;  // step-2 samples
  std::vector<double> pi{1.0};
  std::vector<double> pi_prime{1.0};
  double d0 = 1;       // VC-dim of the universal class
  double d_tilde = 1;  // VC-dim of the aggregator class
  std::vector<double> d_i{1.0};
  double delta = 0.05;
  double c_L = 1.0;
  double C_const = 1.0;

  std::size_t d() const { return pi.size(); }
  double N() const { return n + m; }
  double n_i(std::size_t i) const { return pi[i] * n; }

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;
};

/// n log n.
double vc_dim_approx(double n_params);

/// sum_i pi'_i / sqrt(pi_i).
double c_pi(const BoundConfig& cfg);

/// min_i sqrt((ln 2n + ln(1/delta) / d0) / (ln n_i + ln(3/delta) / d_i)); needs m = n.
double c_delta(const BoundConfig& cfg);

struct EnsembleTerms {
  double mixture = 0.0;     // c_pi * sqrt(c_L ln(1/delta) / (2m))
  double aggregator = 0.0;  // C sqrt((d~ ln m + ln(1/delta)) / m)
  double experts = 0.0;     // C sum_i pi'_i sqrt((d_i ln n_i + ln(1/delta)) / n_i)
  double total() const { return mixture + aggregator + experts; }
};

EnsembleTerms upp_ensemble_terms(const BoundConfig& cfg);
double upp_ensemble(const BoundConfig& cfg);

/// C sqrt((d0 ln N + ln(1/delta)) / N).
double upp_universal(const BoundConfig& cfg);

/// c_pi sqrt(c_L ln(3/delta) / N) + C sqrt((2 d~ ln(N/2) + 2 ln(3/delta)) / N); needs m = n.
double corollary_epsilon(const BoundConfig& cfg);

struct Remark3Result {
  bool holds = false;
  double lhs = 0.0;  // sum_i pi'_i sqrt(2 d_i) / sqrt(pi_i)
  double rhs = 0.0;  // c(delta) sqrt(d0)
  double c = 0.0;
  bool simplified_holds = false;
  double simplified_lhs = 0.0;  // 2 sum_i d_i
  double simplified_rhs = 0.0;  // d0
};

/// Expert-vs-universal condition; `c_override` replaces c(delta).
Remark3Result check_remark3(const BoundConfig& cfg, std::optional<double> c_override = std::nullopt);

/// upp_universal(universal at delta) / upp_ensemble(ensemble at delta / 3).
double bound_ratio(const BoundConfig& universal, const BoundConfig& ensemble);

struct ToyBoundSpec {
  long long h1 = 60;
  long long expert_hidden = 40;
  long long aggregator_hidden = 3;
  long long aggregator_inputs = 2;
  double n = 100;
  double m = 100;
  double delta = 0.05;
  double c_L = 1.0;
  double C_const = 1.0;
};

/// Exact parameter counts of the toy networks.
long long toy_universal_params(long long h1);
long long toy_expert_params(long long h);
long long toy_aggregator_params(long long hidden, long long inputs = 2);

struct ToyBoundConfigs {
  BoundConfig universal;
  BoundConfig ensemble;
};

/// Two equal-mixture experts; VC-dims from vc_dim_approx of exact counts.
ToyBoundConfigs toy_bound_configs(const ToyBoundSpec& spec);
double toy_bound_ratio(const ToyBoundSpec& spec);

/// key=value lines echoing every input and itemising every term.
std::string bounds_report(const BoundConfig& cfg);

}  // namespace expertdg::bounds
