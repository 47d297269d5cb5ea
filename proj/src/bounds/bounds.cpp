#include "expertdg/bounds/bounds.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace expertdg::bounds {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("bounds: " + what);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void require_m_equals_n(const BoundConfig& cfg) { require(cfg.m == cfg.n, "m = n is required"); }

void require_counts(const BoundConfig& cfg) {
  require(cfg.m >= 2, "m must be >= 2");
  for (std::size_t i = 0; i < cfg.d(); ++i)
    require(cfg.n_i(i) >= 2, "n_" + std::to_string(i) + " = pi_i * n must be >= 2");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

}  // namespace

void BoundConfig::validate() const {
  require(!pi.empty(), "at least one domain");
  require(pi_prime.size() == pi.size() && d_i.size() == pi.size(), "pi, pi_prime and d_i need one entry per domain");
  require(std::abs(sum(pi) - 1.0) <= 1e-12, "pi must sum to 1");
  require(std::abs(sum(pi_prime) - 1.0) <= 1e-12, "pi_prime must sum to 1");
  for (double p : pi) require(p > 0.0, "every pi_i must be positive");
  for (double p : pi_prime) require(p >= 0.0, "pi_prime entries must be nonnegative");
  for (double v : d_i) require(v > 0.0 && std::isfinite(v), "every d_i must be positive");
  require(d0 > 0.0 && std::isfinite(d0), "d0 must be positive");
  require(d_tilde > 0.0 && std::isfinite(d_tilde), "d_tilde must be positive");
  require(n > 0.0 && m > 0.0 && std::isfinite(n) && std::isfinite(m), "n and m must be positive");
  require(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
  require(c_L > 0.0 && C_const > 0.0, "c_L and C must be positive");
}

double vc_dim_approx(double n_params) {
  require(n_params >= 1.0 && std::isfinite(n_params), "parameter count must be >= 1");
  return n_params * std::log(n_params);
}

double c_pi(const BoundConfig& cfg) {
  double s = 0.0;
  for (std::size_t i = 0; i < cfg.d(); ++i) s += cfg.pi_prime[i] / std::sqrt(cfg.pi[i]);
  return s;
}

double c_delta(const BoundConfig& cfg) {
  cfg.validate();
  require_m_equals_n(cfg);
  const double top = std::log(2.0 * cfg.n) + std::log(1.0 / cfg.delta) / cfg.d0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cfg.d(); ++i) {
    require(cfg.n_i(i) >= 2, "n_i must be >= 2");
    best = std::min(best, std::sqrt(top / (std::log(cfg.n_i(i)) + std::log(3.0 / cfg.delta) / cfg.d_i[i])));
  }
  return best;
}

EnsembleTerms upp_ensemble_terms(const BoundConfig& cfg) {
  cfg.validate();
  require_counts(cfg);
  const double l = std::log(1.0 / cfg.delta);
  EnsembleTerms t;
  t.mixture = c_pi(cfg) * std::sqrt(cfg.c_L * l / (2.0 * cfg.m));
  t.aggregator = cfg.C_const * std::sqrt((cfg.d_tilde * std::log(cfg.m) + l) / cfg.m);
  for (std::size_t i = 0; i < cfg.d(); ++i) {
    const double ni = cfg.n_i(i);
    t.experts += cfg.pi_prime[i] * std::sqrt((cfg.d_i[i] * std::log(ni) + l) / ni);
  }
  t.experts *= cfg.C_const;
  return t;
}

double upp_ensemble(const BoundConfig& cfg) { return upp_ensemble_terms(cfg).total(); }

double upp_universal(const BoundConfig& cfg) {
  cfg.validate();
  const double big_n = cfg.N();
  require(big_n >= 2, "N must be >= 2");
  return cfg.C_const * std::sqrt((cfg.d0 * std::log(big_n) + std::log(1.0 / cfg.delta)) / big_n);
}

double corollary_epsilon(const BoundConfig& cfg) {
  cfg.validate();
  require_m_equals_n(cfg);
  const double big_n = cfg.N();
  const double l3 = std::log(3.0 / cfg.delta);
  return c_pi(cfg) * std::sqrt(cfg.c_L * l3 / big_n) +
         cfg.C_const * std::sqrt((2.0 * cfg.d_tilde * std::log(big_n / 2.0) + 2.0 * l3) / big_n);
}

Remark3Result check_remark3(const BoundConfig& cfg, std::optional<double> c_override) {
  cfg.validate();
  Remark3Result r;
  r.c = c_override ? *c_override : c_delta(cfg);
  for (std::size_t i = 0; i < cfg.d(); ++i) {
    r.lhs += cfg.pi_prime[i] * std::sqrt(2.0 * cfg.d_i[i]) / std::sqrt(cfg.pi[i]);
    r.simplified_lhs += 2.0 * cfg.d_i[i];
  }
  r.rhs = r.c * std::sqrt(cfg.d0);
  r.holds = r.lhs <= r.rhs;
  r.simplified_rhs = cfg.d0;
  r.simplified_holds = r.simplified_lhs <= r.simplified_rhs;
  return r;
}

double bound_ratio(const BoundConfig& universal, const BoundConfig& ensemble) {
  require(universal.N() == ensemble.N(), "universal and ensemble configs need the same N");
  require(universal.delta == ensemble.delta, "universal and ensemble configs need the same delta");
  BoundConfig e = ensemble;
  e.delta = ensemble.delta / 3.0;
  return upp_universal(universal) / upp_ensemble(e);
}

long long toy_universal_params(long long h1) { return h1 * h1 + 4 * h1 + 1; }
long long toy_expert_params(long long h) { return h * h + 4 * h + 1; }
long long toy_aggregator_params(long long hidden, long long inputs) { return inputs * hidden + hidden + hidden + 1; }

ToyBoundConfigs toy_bound_configs(const ToyBoundSpec& spec) {
  require(spec.h1 >= 1 && spec.expert_hidden >= 1 && spec.aggregator_hidden >= 1, "hidden widths must be >= 1");
  ToyBoundConfigs out;
  BoundConfig base;
  base.n = spec.n;
  base.m = spec.m;
  base.delta = spec.delta;
  base.c_L = spec.c_L;
  base.C_const = spec.C_const;
  base.pi = {0.5, 0.5};
  base.pi_prime = {0.5, 0.5};
  const double de = vc_dim_approx(static_cast<double>(toy_expert_params(spec.expert_hidden)));
  base.d_i = {de, de};
  base.d_tilde = vc_dim_approx(static_cast<double>(toy_aggregator_params(spec.aggregator_hidden, spec.aggregator_inputs)));
  base.d0 = vc_dim_approx(static_cast<double>(toy_universal_params(spec.h1)));
  out.universal = base;
  out.ensemble = base;
  return out;
}

double toy_bound_ratio(const ToyBoundSpec& spec) {
  const auto c = toy_bound_configs(spec);
  return bound_ratio(c.universal, c.ensemble);
}

std::string bounds_report(const BoundConfig& cfg) {
  cfg.validate();
  std::ostringstream out;
  out << "d=" << cfg.d() << '\n'
      << "n=" << fmt(cfg.n) << '\n'
      << "m=" << fmt(cfg.m) << '\n'
      << "N=" << fmt(cfg.N()) << '\n'
      << "pi=" << fmt_list(cfg.pi) << '\n'
      << "pi_prime=" << fmt_list(cfg.pi_prime) << '\n'
      << "d0=" << fmt(cfg.d0) << '\n'
      << "d_tilde=" << fmt(cfg.d_tilde) << '\n'
      << "d_i=" << fmt_list(cfg.d_i) << '\n'
      << "delta=" << fmt(cfg.delta) << '\n'
      << "c_L=" << fmt(cfg.c_L) << '\n'
      << "C=" << fmt(cfg.C_const) << '\n';
  std::vector<double> ni;
  for (std::size_t i = 0; i < cfg.d(); ++i) ni.push_back(cfg.n_i(i));
  out << "n_i=" << fmt_list(ni) << '\n' << "c_pi=" << fmt(c_pi(cfg)) << '\n';

  auto emit = [&out](const std::string& key, auto&& fn) {
    try {
      out << key << '=' << fmt(fn()) << '\n';
    } catch (const std::invalid_argument& e) {
      out << key << "=n/a\n";
    }
  };
  const auto terms = [&] {
    try {
      return std::optional<EnsembleTerms>(upp_ensemble_terms(cfg));
    } catch (const std::invalid_argument&) {
      return std::optional<EnsembleTerms>();
    }
  }();
  if (terms) {
    out << "upp_ensemble.mixture_term=" << fmt(terms->mixture) << '\n'
        << "upp_ensemble.aggregator_term=" << fmt(terms->aggregator) << '\n'
        << "upp_ensemble.expert_term=" << fmt(terms->experts) << '\n'
        << "upp_ensemble=" << fmt(terms->total()) << '\n';
  } else {
    out << "upp_ensemble=n/a\n";
  }
  emit("upp_universal", [&] { return upp_universal(cfg); });
  BoundConfig third = cfg;
  third.delta = cfg.delta / 3.0;
  emit("upp_ensemble_delta_over_3", [&] { return upp_ensemble(third); });
  emit("ratio_universal_over_ensemble_delta_over_3", [&] { return bound_ratio(cfg, cfg); });
  emit("c_delta", [&] { return c_delta(cfg); });
  emit("corollary_epsilon", [&] { return corollary_epsilon(cfg); });
  if (cfg.m == cfg.n) {
    const Remark3Result r = check_remark3(cfg);
    out << "remark3.lhs=" << fmt(r.lhs) << '\n'
        << "remark3.rhs=" << fmt(r.rhs) << '\n'
        << "remark3.holds=" << (r.holds ? "true" : "false") << '\n'
        << "remark3.simplified_lhs=" << fmt(r.simplified_lhs) << '\n'
        << "remark3.simplified_rhs=" << fmt(r.simplified_rhs) << '\n'
        << "remark3.simplified_holds=" << (r.simplified_holds ? "true" : "false") << '\n';
  } else {
    out << "remark3.holds=n/a\n";
  }
  return out.str();
}

}  // namespace expertdg::bounds
