#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"

#include "expertdg/bounds/bounds.hpp"
#include "expertdg/rng.hpp"

using namespace expertdg;
using namespace expertdg::bounds;

namespace {

const double kOneMinus = std::nextafter(1.0, 0.0);

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

BoundConfig random_config(Rng& rng, bool equal_mn = true) {
  BoundConfig c;
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

double brute_c_delta(const BoundConfig& c) {
  double best = 1e300;
  for (std::size_t i = 0; i < c.d(); ++i) {
    const double ni = c.pi[i] * c.n;
    const double v = std::sqrt((std::log(2 * c.n) + std::log(1 / c.delta) / c.d0) / (std::log(ni) + std::log(3 / c.delta) / c.d_i[i]));
    best = v < best ? v : best;
  }
  return best;
}

}  // namespace

TEST_CASE("vc_dim_approx") {
  CHECK(vc_dim_approx(1.0) == 0.0);
  CHECK(vc_dim_approx(std::numbers::e) == doctest::Approx(std::numbers::e).epsilon(1e-15));
  CHECK(vc_dim_approx(3841) == doctest::Approx(3841.0 * std::log(3841.0)).epsilon(1e-15));
  CHECK(vc_dim_approx(3841) == doctest::Approx(31701.648).epsilon(1e-7));
  CHECK(toy_universal_params(60) == 3841);
  CHECK(toy_expert_params(40) == 1761);
  CHECK(toy_aggregator_params(3) == 13);
  CHECK_THROWS_AS(vc_dim_approx(0.5), std::invalid_argument);
}

TEST_CASE("c_delta: single domain, limit and brute force") {
  BoundConfig c;
  c.n = c.m = 100;
  c.d0 = 50;
  c.d_i = {20};
  const double direct = std::sqrt((std::log(200.0) + std::log(1 / 0.05) / 50) / (std::log(100.0) + std::log(3 / 0.05) / 20));
  CHECK(c_delta(c) == doctest::Approx(direct).epsilon(1e-15));

  c.d0 = 1e12;
  c.d_i = {1e12};
  CHECK(c_delta(c) == doctest::Approx(1.0726).epsilon(1e-4));
  CHECK(c_delta(c) == doctest::Approx(std::sqrt(std::log(200.0) / std::log(100.0))).epsilon(1e-9));

  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const BoundConfig r = random_config(rng);
    const double v = c_delta(r);
    CHECK(std::abs(v - brute_c_delta(r)) <= 1e-12);
    for (std::size_t i = 0; i < r.d(); ++i) {
      const double term = std::sqrt((std::log(2 * r.n) + std::log(1 / r.delta) / r.d0) /
                                    (std::log(r.pi[i] * r.n) + std::log(3 / r.delta) / r.d_i[i]));
      CHECK(v <= term);
    }
  }

  BoundConfig bad = c;
  bad.m = 200;
  CHECK_THROWS_AS(c_delta(bad), std::invalid_argument);
}

TEST_CASE("upp_ensemble: vanishing delta terms and toy value") {
  BoundConfig c;
  c.n = c.m = 400;
  c.d_tilde = 7;
  c.d_i = {11};
  c.delta = kOneMinus;
  const double expect = std::sqrt(7 * std::log(400.0) / 400) + std::sqrt(11 * std::log(400.0) / 400);
  CHECK(upp_ensemble(c) == doctest::Approx(expect).epsilon(1e-9));

  const auto toy = toy_bound_configs(ToyBoundSpec{});
  const double de = 1761 * std::log(1761.0), dt = 13 * std::log(13.0), l = std::log(20.0);
  const double hand = std::sqrt(2.0) * std::sqrt(l / 200) + std::sqrt((dt * std::log(100.0) + l) / 100) +
                      std::sqrt((de * std::log(50.0) + l) / 50);
  CHECK(upp_ensemble(toy.ensemble) == doctest::Approx(hand).epsilon(1e-14));
  CHECK(upp_ensemble(toy.ensemble) == doctest::Approx(33.5146).epsilon(1e-5));
  const auto terms = upp_ensemble_terms(toy.ensemble);
  CHECK(terms.total() == upp_ensemble(toy.ensemble));
}

TEST_CASE("upp bounds: size and dimension monotonicity sweeps") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const BoundConfig c = random_config(rng, trial % 2 == 0);
    BoundConfig bigger = c;
    bigger.n *= 2;
    bigger.m *= 2;
    CHECK(upp_ensemble(bigger) < upp_ensemble(c));
    CHECK(upp_universal(bigger) < upp_universal(c));

    BoundConfig dims = c;
    dims.d0 *= 1.5;
    dims.d_tilde *= 1.5;
    for (auto& v : dims.d_i) v *= 1.5;
    CHECK(upp_ensemble(dims) > upp_ensemble(c));
    CHECK(upp_universal(dims) > upp_universal(c));

    BoundConfig one = c;
    one.d_i[rng.index(c.d())] *= 2;
    CHECK(upp_ensemble(one) >= upp_ensemble(c));
  }
}

TEST_CASE("upp_universal: units case, monotone in d0, ratio") {
  BoundConfig c;
  c.n = c.m = std::numbers::e / 2;
  c.d0 = 1;
  c.delta = kOneMinus;
  CHECK(upp_universal(c) == doctest::Approx(std::sqrt(1 / std::numbers::e)).epsilon(1e-12));
  CHECK(upp_universal(c) == doctest::Approx(0.60653).epsilon(1e-5));

  BoundConfig a;
  a.n = a.m = 100;
  double prev = 0.0;
  for (double d0 : {1.0, 10.0, 100.0, 1e4, 1e6}) {
    a.d0 = d0;
    CHECK(upp_universal(a) > prev);
    prev = upp_universal(a);
  }

  ToyBoundSpec s60, s100;
  s100.h1 = 100;
  const auto c60 = toy_bound_configs(s60), c100 = toy_bound_configs(s100);
  const double d60 = 3841 * std::log(3841.0), d100 = 10401 * std::log(10401.0), l = std::log(20.0);
  const double radicand_ratio = (d100 * std::log(200.0) + l) / (d60 * std::log(200.0) + l);
  CHECK(upp_universal(c100.universal) / upp_universal(c60.universal) ==
        doctest::Approx(std::sqrt(radicand_ratio)).epsilon(1e-14));
}

TEST_CASE("corollary_epsilon") {
  BoundConfig c;
  c.n = c.m = 100;
  CHECK(c_pi(c) == 1.0);
  c.delta = 3.0;
  CHECK_THROWS_AS(corollary_epsilon(c), std::invalid_argument);

  const auto toy = toy_bound_configs(ToyBoundSpec{});
  CHECK(toy.ensemble.d_tilde == doctest::Approx(33.3443).epsilon(1e-5));
  const double l3 = std::log(60.0), dt = 13 * std::log(13.0);
  const double hand = std::sqrt(2.0) * std::sqrt(l3 / 200) + std::sqrt((2 * dt * std::log(100.0) + 2 * l3) / 200);
  CHECK(corollary_epsilon(toy.ensemble) == doctest::Approx(hand).epsilon(1e-14));
  CHECK(corollary_epsilon(toy.ensemble) == doctest::Approx(1.45794).epsilon(1e-5));
}

TEST_CASE("remark 3: equality, single expert, toy, appendix chain") {
  BoundConfig c;
  c.n = c.m = 1000;
  c.pi = c.pi_prime = {0.5, 0.5};
  c.d0 = 4000;
  c.d_i = {1000, 1000};
  const auto eq = check_remark3(c, 1.0);
  CHECK(eq.simplified_lhs == eq.simplified_rhs);
  CHECK(eq.simplified_holds);
  // Equal mixtures and equal d_i: lhs = sqrt(2 sum d_i).
  CHECK(eq.lhs == doctest::Approx(std::sqrt(eq.simplified_lhs)).epsilon(1e-14));
  CHECK(eq.holds);

  // 2 sum d_i = 2 sum n_i ln n_i <= n(H) ln n(H) whenever n(H) >= 2 sum n_i.
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    double total = 0.0, lhs = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double ni = 2 + std::floor(rng.uniform(0, 5000));
      total += ni;
      lhs += 2 * vc_dim_approx(ni);
    }
    const double nh = 2 * total + std::floor(rng.uniform(0, 1000));
    CHECK(lhs <= vc_dim_approx(nh));
  }

  BoundConfig single;
  single.n = single.m = 500;
  single.d0 = 300;
  single.d_i = {300};
  const auto s = check_remark3(single);
  CHECK(s.lhs == doctest::Approx(std::sqrt(600.0)).epsilon(1e-14));
  REQUIRE(s.c < std::sqrt(2.0));
  CHECK_FALSE(s.holds);

  const auto toy = toy_bound_configs(ToyBoundSpec{});
  BoundConfig t = toy.ensemble;
  const auto tr = check_remark3(t);
  const double de = 1761 * std::log(1761.0);
  CHECK(tr.lhs == doctest::Approx(2 * 0.5 * std::sqrt(2 * de) / std::sqrt(0.5)).epsilon(1e-14));
  CHECK(tr.rhs == doctest::Approx(c_delta(t) * std::sqrt(3841 * std::log(3841.0))).epsilon(1e-14));
  CHECK(tr.holds == (tr.lhs <= tr.rhs));
  CHECK(tr.simplified_holds == (4 * de <= 3841 * std::log(3841.0)));
}

TEST_CASE("corollary 2 consistency on random m = n configs") {
  Rng rng(4);
  int held = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    BoundConfig c = random_config(rng);
    const auto r = check_remark3(c);
    if (!r.holds) continue;
    ++held;
    BoundConfig third = c;
    third.delta = c.delta / 3;
    CHECK(upp_ensemble(third) <= upp_universal(c) + corollary_epsilon(c));
  }
  MESSAGE("condition held in " << held << " of 1000 configs");
  CHECK(held > 100);
}

TEST_CASE("cauchy chain on random mixtures") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const BoundConfig c = random_config(rng);
    double lhs = 0, a = 0, b = 0, sum_inv = 0;
    for (std::size_t i = 0; i < c.d(); ++i) {
      lhs += c.pi_prime[i] * std::sqrt(2 * c.d_i[i]) / std::sqrt(c.pi[i]);
      a += c.pi_prime[i] * c.pi_prime[i] / c.pi[i];
      b += 2 * c.d_i[i];
      sum_inv += 1 / c.pi[i];
    }
    CHECK(lhs <= std::sqrt(a) * std::sqrt(b) * (1 + 1e-12));
    CHECK(std::sqrt(a) * std::sqrt(b) <= std::sqrt(sum_inv) * std::sqrt(b) * (1 + 1e-12));
    CHECK(check_remark3(c).lhs == doctest::Approx(lhs).epsilon(1e-12));
  }
}

TEST_CASE("bound ratio") {
  BoundConfig c;
  c.n = c.m = 100;
  c.d0 = c.d_tilde = 50;
  c.d_i = {50};
  BoundConfig third = c;
  third.delta = 0.05 / 3;
  const double l = std::log(20.0), l3 = std::log(60.0);
  const double num = std::sqrt((50 * std::log(200.0) + l) / 200);
  const double den = std::sqrt(l3 / 200) + std::sqrt((50 * std::log(100.0) + l3) / 100) * 2;
  CHECK(bound_ratio(c, c) == doctest::Approx(num / den).epsilon(1e-14));
  CHECK(bound_ratio(c, c) == doctest::Approx(upp_universal(c) / upp_ensemble(third)).epsilon(1e-15));

  double prev = 0.0;
  for (long long h : {20, 40, 60, 80, 100, 140}) {
    ToyBoundSpec s;
    s.h1 = h;
    const double r = toy_bound_ratio(s);
    CHECK(r > prev);
    prev = r;
  }
  ToyBoundSpec s60;
  CHECK(toy_bound_ratio(s60) == doctest::Approx(28.98002633876696 / 33.54859501682763).epsilon(1e-12));

  BoundConfig other = c;
  other.m = 300;
  CHECK_THROWS_AS(bound_ratio(c, other), std::invalid_argument);
}

TEST_CASE("validation and report") {
  BoundConfig c;
  c.pi = {0.5, 0.6};
  c.pi_prime = {0.5, 0.5};
  c.d_i = {1, 1};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.pi = {0.5, 0.5};
  c.n = 2;
  CHECK_THROWS_AS(upp_ensemble(c), std::invalid_argument);

  const auto toy = toy_bound_configs(ToyBoundSpec{});
  const std::string rep = bounds_report(toy.ensemble);
  for (const char* key : {"n=", "m=", "N=", "pi=", "pi_prime=", "d0=", "d_tilde=", "d_i=", "delta=", "c_L=", "C=",
                          "upp_ensemble.mixture_term=", "upp_ensemble.aggregator_term=", "upp_ensemble.expert_term=",
                          "upp_universal=", "c_delta=", "corollary_epsilon=", "remark3.holds=", "remark3.simplified_holds="})
    CHECK(rep.find(std::string("\n") + key) != std::string::npos);
}
