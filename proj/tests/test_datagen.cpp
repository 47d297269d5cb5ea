#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "doctest.h"

#include "expertdg/data/dataset.hpp"

using namespace expertdg;
using namespace expertdg::data;

namespace {

// Nearest-class-mean classifier fitted on one domain.
Matrix class_means(const DomainDataset& d, Index classes) {
  Matrix means = Matrix::Zero(classes, d.feature_dim());
  Vector counts = Vector::Zero(classes);
  for (Index r = 0; r < d.size(); ++r) {
    means.row(d.labels[r]) += d.features.row(r);
    counts(d.labels[r]) += 1;
  }
  for (Index c = 0; c < classes; ++c) means.row(c) /= counts(c);
  return means;
}

double accuracy(const Matrix& means, const DomainDataset& d) {
  Index hits = 0;
  for (Index r = 0; r < d.size(); ++r) {
    Index best = 0;
    (means.rowwise() - d.features.row(r)).rowwise().squaredNorm().minCoeff(&best);
    hits += best == d.labels[r];
  }
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("toy target: analytic values and oddness") {
  CHECK(toy_target(0.0) == 0.0);
  CHECK(toy_target(std::numbers::pi / 2) == doctest::Approx(3.0 + std::numbers::pi * std::numbers::pi / 8.0).epsilon(1e-12));
  CHECK(toy_target(std::numbers::pi / 2) == doctest::Approx(4.23370).epsilon(1e-5));
  for (int k = -40; k <= 40; ++k) {
    const double x = 0.1 * k + 0.013;
    CHECK(std::abs(toy_target(-x) + toy_target(x)) <= 1e-12);
  }
}

TEST_CASE("toy data: ranges, determinism, validation") {
  ToyConfig cfg;
  cfg.n_train = 300;
  cfg.n_test = 400;
  const auto a = gen_toy_regression(cfg, 5);
  const auto b = gen_toy_regression(cfg, 5);
  CHECK(a.train.features == b.train.features);
  CHECK(a.test.targets == b.test.targets);
  CHECK(a.train.size() == 300);
  CHECK(a.test.size() == 400);
  CHECK(a.train.features.minCoeff() >= -4.0);
  CHECK(a.train.features.maxCoeff() < 4.0);
  CHECK(a.train.features != a.test.features.topRows(300));

  cfg.noise_sd = 0.0;
  const auto clean = gen_toy_regression(cfg, 6);
  for (Index i = 0; i < clean.train.size(); ++i) CHECK(clean.train.targets(i) == toy_target(clean.train.features(i, 0)));

  ToyConfig bad = cfg;
  bad.x_lo = 1.0;
  bad.x_hi = 1.0;
  CHECK_THROWS_AS(gen_toy_regression(bad, 1), std::invalid_argument);
  bad = cfg;
  bad.n_train = 0;
  CHECK_THROWS_AS(gen_toy_regression(bad, 1), std::invalid_argument);
}

TEST_CASE("suite: class balance, mixture weights, shared labelling") {
  SuiteConfig cfg;
  cfg.n_domains = 3;
  cfg.samples_per_domain = {103, 50, 77};
  const auto suite = gen_domain_suite(cfg, 42);
  double pi_sum = 0.0;
  for (std::size_t i = 0; i < suite.domains.size(); ++i) {
    const auto& d = suite.domains[i];
    d.validate();
    pi_sum += d.pi;
    std::vector<Index> counts(static_cast<std::size_t>(cfg.n_classes), 0);
    for (Index l : d.labels) ++counts[static_cast<std::size_t>(l)];
    const double expected = static_cast<double>(d.size()) / static_cast<double>(cfg.n_classes);
    for (Index c : counts) CHECK(std::abs(static_cast<double>(c) - expected) <= 1.0);
    for (Index r = 0; r < d.size(); ++r) {
      const Vector latent = suite.maps[i].invert(d.features.row(r).transpose());
      CHECK(nearest_prototype(suite.prototypes, latent) == d.labels[static_cast<std::size_t>(r)]);
    }
  }
  CHECK(std::abs(pi_sum - 1.0) <= 1e-12);
}

TEST_CASE("suite: per-domain class means match the mapped prototypes") {
  SuiteConfig cfg;
  cfg.n_domains = 3;
  cfg.n_classes = 4;
  cfg.feature_dim = 6;
  cfg.samples_per_domain = {4000, 4000, 4000};
  cfg.within_class_sd = 0.3;
  const auto suite = gen_domain_suite(cfg, 8);
  for (std::size_t i = 0; i < 3; ++i) {
    const Matrix means = class_means(suite.domains[i], cfg.n_classes);
    const double tol = 3.0 / std::sqrt(1000.0);
    for (Index c = 0; c < cfg.n_classes; ++c) {
      const Vector mapped = suite.maps[i].apply(suite.prototypes.row(c).transpose());
      CHECK((means.row(c).transpose() - mapped).cwiseAbs().maxCoeff() <= tol);
    }
  }
}

TEST_CASE("suite: zero shift makes domains interchangeable") {
  SuiteConfig cfg;
  cfg.n_domains = 3;
  cfg.samples_per_domain = {2000, 2000, 2000};
  cfg.shift_strength = 0.0;
  cfg.within_class_sd = 1.2;
  const auto suite = gen_domain_suite(cfg, 19);
  for (const auto& m : suite.maps) {
    CHECK(m.rotation == Matrix::Identity(cfg.feature_dim, cfg.feature_dim));
    CHECK(m.shift.cwiseAbs().maxCoeff() == 0.0);
  }
  const Matrix means = class_means(suite.domains[0], cfg.n_classes);
  const double a1 = accuracy(means, suite.domains[1]);
  const double a2 = accuracy(means, suite.domains[2]);
  CHECK(std::abs(a1 - a2) < 0.04);
}

TEST_CASE("suite: validation") {
  SuiteConfig cfg;
  cfg.n_domains = 1;
  cfg.samples_per_domain = {100};
  CHECK_THROWS_AS(gen_domain_suite(cfg, 1), std::invalid_argument);
  cfg.n_domains = 2;
  cfg.samples_per_domain = {100, 5};
  CHECK_THROWS_AS(gen_domain_suite(cfg, 1), std::invalid_argument);
}

TEST_CASE("split: disjoint partition, determinism") {
  SuiteConfig cfg;
  cfg.n_domains = 2;
  cfg.samples_per_domain = {100, 120};
  const auto suite = gen_domain_suite(cfg, 3);
  const auto split = split_step_data(suite.domains, 0.5, 99);
  CHECK(split.step1[0].size() == 50);
  CHECK(split.step2[0].size() == 50);
  for (std::size_t i = 0; i < 2; ++i) {
    std::set<Index> a(split.step1_rows[i].begin(), split.step1_rows[i].end());
    std::set<Index> b(split.step2_rows[i].begin(), split.step2_rows[i].end());
    std::set<Index> all = a;
    all.insert(b.begin(), b.end());
    CHECK(all.size() == static_cast<std::size_t>(suite.domains[i].size()));
    CHECK(a.size() + b.size() == all.size());
    CHECK(split.step1[i].domain_id == suite.domains[i].domain_id);
    CHECK(split.step2[i].pi == suite.domains[i].pi);
  }
  const auto again = split_step_data(suite.domains, 0.5, 99);
  CHECK(again.step1_rows == split.step1_rows);
  const auto other = split_step_data(suite.domains, 0.5, 100);
  CHECK(other.step1_rows != split.step1_rows);

  CHECK_THROWS_AS(split_step_data(suite.domains, 1.0, 1), std::invalid_argument);
  DomainDataset tiny = suite.domains[0].subset({0});
  CHECK_THROWS_AS(split_step_data({tiny}, 0.5, 1), std::invalid_argument);
}

TEST_CASE("few_shot keeps at most k per class") {
  SuiteConfig cfg;
  cfg.n_domains = 2;
  cfg.samples_per_domain = {300, 300};
  const auto suite = gen_domain_suite(cfg, 4);
  const auto fs = few_shot(suite.domains[0], 16, 1);
  CHECK(fs.size() == 16 * cfg.n_classes);
}

TEST_CASE("csv export/import keeps values and recomputes weights") {
  SuiteConfig cfg;
  cfg.n_domains = 2;
  cfg.samples_per_domain = {30, 20};
  const auto suite = gen_domain_suite(cfg, 12);
  std::stringstream ss;
  export_csv(ss, suite.domains);
  const auto back = import_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].features == suite.domains[0].features);
  CHECK(back[1].labels == suite.domains[1].labels);
  CHECK(back[0].pi == doctest::Approx(0.6));

  const auto toy = gen_toy_regression(ToyConfig{5, 5, 0.5, -4, 4}, 1);
  std::stringstream ts;
  export_csv(ts, {toy.train});
  CHECK(import_csv(ts)[0].targets == toy.train.targets);

  std::stringstream broken("domain_id,label,f0\n0,1,nan\n");
  CHECK_THROWS_AS(import_csv(broken), std::invalid_argument);
  std::stringstream ragged("domain_id,label,f0\n0,1\n");
  CHECK_THROWS_AS(import_csv(ragged), std::invalid_argument);
}
