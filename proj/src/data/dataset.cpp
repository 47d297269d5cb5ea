#include "expertdg/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace expertdg::data {

void DomainDataset::validate() const {
  if (size() < 1) throw std::invalid_argument("domain " + std::to_string(domain_id) + ": no samples");
  if (!features.allFinite()) throw std::invalid_argument("domain " + std::to_string(domain_id) + ": non-finite feature");
  if (is_regression()) {
    if (targets.size() != size()) throw std::invalid_argument("domain: target count mismatch");
    if (!targets.allFinite()) throw std::invalid_argument("domain: non-finite target");
  } else if (static_cast<Index>(labels.size()) != size()) {
    throw std::invalid_argument("domain " + std::to_string(domain_id) + ": label count mismatch");
  }
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("domain: mixture weight outside [0,1]");
}

DomainDataset DomainDataset::subset(const std::vector<Index>& rows) const {
  DomainDataset out;
  out.domain_id = domain_id;
  out.pi = pi;
  out.features.resize(static_cast<Index>(rows.size()), feature_dim());
  if (is_regression()) out.targets.resize(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index r = rows[k];
    if (r < 0 || r >= size()) throw std::out_of_range("subset: row index out of range");
    out.features.row(static_cast<Index>(k)) = features.row(r);
    if (is_regression())
      out.targets(static_cast<Index>(k)) = targets(r);
    else
      out.labels.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

double toy_target(double x) {
  const double sign = (x > 0.0) - (x < 0.0);
  return sign * (3.0 * std::abs(std::cos(x)) + x * x / 2.0 + 3.0);
}

namespace {

DomainDataset draw_toy(Index n, const ToyConfig& cfg, Rng rng) {
  DomainDataset d;
  d.features.resize(n, 1);
  d.targets.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x = rng.uniform(cfg.x_lo, cfg.x_hi);
    d.features(i, 0) = x;
    d.targets(i) = toy_target(x) + cfg.noise_sd * rng.normal();
  }
  return d;
}

}  // namespace

ToyData gen_toy_regression(const ToyConfig& cfg, std::uint64_t seed) {
  if (cfg.n_train < 1 || cfg.n_test < 1) throw std::invalid_argument("toy: sample counts must be >= 1");
  if (!(cfg.noise_sd >= 0.0)) throw std::invalid_argument("toy: noise_sd must be >= 0");
  if (!(cfg.x_lo < cfg.x_hi)) throw std::invalid_argument("toy: degenerate x range");
  const Rng root(seed);
  return ToyData{draw_toy(cfg.n_train, cfg, root.child(0)), draw_toy(cfg.n_test, cfg, root.child(1))};
}

AffineMap identity_map(Index dim) { return AffineMap{Matrix::Identity(dim, dim), Vector::Zero(dim)}; }

Index nearest_prototype(const Matrix& prototypes, const Vector& latent) {
  Index best = 0;
  (prototypes.rowwise() - latent.transpose()).rowwise().squaredNorm().minCoeff(&best);
  return best;
}

namespace {

// Cayley transform of a scaled random skew-symmetric matrix: orthogonal, and
// exactly the identity at strength 0.
Matrix seeded_rotation(Index dim, double strength, Rng& rng) {
  Matrix g(dim, dim);
  rng.fill_normal(g);
  const Matrix skew = strength * (g - g.transpose()) / (2.0 * std::sqrt(static_cast<double>(dim)));
  const Matrix eye = Matrix::Identity(dim, dim);
  return (eye - skew).partialPivLu().solve(eye + skew);
}

Vector draw_latent(const DomainSuite& suite, Index cls, Rng& rng) {
  const Index dim = suite.prototypes.cols();
  for (int attempt = 0; attempt < 100000; ++attempt) {
    Vector z(dim);
    for (Index k = 0; k < dim; ++k) z(k) = suite.prototypes(cls, k) + suite.config.within_class_sd * rng.normal();
    if (nearest_prototype(suite.prototypes, z) == cls) return z;
  }
  throw std::runtime_error("suite: rejection sampling failed; within_class_sd too large for prototype spread");
}

}  // namespace

DomainDataset sample_domain(const DomainSuite& suite, const AffineMap& map, Index n, int domain_id, Rng& rng) {
  const Index classes = suite.prototypes.rows();
  DomainDataset d;
  d.domain_id = domain_id;
  d.features.resize(n, suite.prototypes.cols());
  d.labels.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const Index cls = j % classes;
    d.features.row(j) = map.apply(draw_latent(suite, cls, rng)).transpose();
    d.labels.push_back(cls);
  }
  return d;
}

void assign_mixture_weights(std::vector<DomainDataset>& domains) {
  double total = 0.0;
  for (const auto& d : domains) total += static_cast<double>(d.size());
  if (total <= 0.0) throw std::invalid_argument("mixture weights: empty suite");
  for (auto& d : domains) d.pi = static_cast<double>(d.size()) / total;
}

DomainSuite gen_domain_suite(const SuiteConfig& cfg, std::uint64_t seed) {
  if (cfg.n_domains < 2) throw std::invalid_argument("suite: need at least 2 domains");
  if (cfg.n_classes < 2) throw std::invalid_argument("suite: need at least 2 classes");
  if (cfg.feature_dim < 1) throw std::invalid_argument("suite: feature_dim must be positive");
  if (static_cast<Index>(cfg.samples_per_domain.size()) != cfg.n_domains)
    throw std::invalid_argument("suite: samples_per_domain must list one count per domain");
  for (Index n : cfg.samples_per_domain)
    if (n < cfg.n_classes) throw std::invalid_argument("suite: every domain needs at least n_classes samples");
  if (!(cfg.shift_strength >= 0.0)) throw std::invalid_argument("suite: shift strength must be >= 0");
  if (!(cfg.within_class_sd > 0.0) || !(cfg.prototype_sd > 0.0)) throw std::invalid_argument("suite: sd must be > 0");

  const Rng root(seed);
  DomainSuite suite;
  suite.config = cfg;
  Rng proto_rng = root.child(0);
  suite.prototypes.resize(cfg.n_classes, cfg.feature_dim);
  proto_rng.fill_normal(suite.prototypes, cfg.prototype_sd);

  for (Index i = 0; i < cfg.n_domains; ++i) {
    Rng map_rng = root.child(100 + static_cast<std::uint64_t>(i));
    AffineMap map;
    map.rotation = seeded_rotation(cfg.feature_dim, cfg.shift_strength, map_rng);
    map.shift.resize(cfg.feature_dim);
    for (Index k = 0; k < cfg.feature_dim; ++k) map.shift(k) = cfg.shift_strength * 0.5 * cfg.prototype_sd * map_rng.normal();
    suite.maps.push_back(std::move(map));
  }
  for (Index i = 0; i < cfg.n_domains; ++i) {
    Rng sample_rng = root.child(200 + static_cast<std::uint64_t>(i));
    suite.domains.push_back(sample_domain(suite, suite.maps[static_cast<std::size_t>(i)],
                                          cfg.samples_per_domain[static_cast<std::size_t>(i)], static_cast<int>(i),
                                          sample_rng));
  }
  assign_mixture_weights(suite.domains);
  return suite;
}

DomainDataset few_shot(const DomainDataset& domain, Index k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("few_shot: k must be >= 1");
  if (domain.is_regression()) throw std::invalid_argument("few_shot: classification data required");
  Rng rng(seed);
  const auto order = rng.permutation(static_cast<std::size_t>(domain.size()));
  std::map<Index, Index> taken;
  std::vector<Index> rows;
  for (std::size_t r : order) {
    const Index cls = domain.labels[r];
    if (taken[cls] < k) {
      ++taken[cls];
      rows.push_back(static_cast<Index>(r));
    }
  }
  std::sort(rows.begin(), rows.end());
  return domain.subset(rows);
}

SplitPair split_step_data(const std::vector<DomainDataset>& suite, double step2_fraction, std::uint64_t seed) {
  if (!(step2_fraction > 0.0 && step2_fraction < 1.0)) throw std::invalid_argument("split: fraction must be in (0,1)");
  const Rng root(seed);
  SplitPair out;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto& d = suite[i];
    const Index n = d.size();
    const auto n2 = static_cast<Index>(std::llround(step2_fraction * static_cast<double>(n)));
    if (n2 < 1 || n - n2 < 1)
      throw std::invalid_argument("split: domain " + std::to_string(d.domain_id) + " too small to split");
    Rng rng = root.child(i);
    const auto perm = rng.permutation(static_cast<std::size_t>(n));
    std::vector<Index> a(perm.begin(), perm.begin() + (n - n2));
    std::vector<Index> b(perm.begin() + (n - n2), perm.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    out.step1.push_back(d.subset(a));
    out.step2.push_back(d.subset(b));
    out.step1_rows.push_back(std::move(a));
    out.step2_rows.push_back(std::move(b));
  }
  return out;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("csv: bad number '" + s + "'");
  }
  if (used != s.size()) throw std::invalid_argument("csv: bad number '" + s + "'");
  return v;
}

}  // namespace

void export_csv(std::ostream& out, const std::vector<DomainDataset>& domains) {
  if (domains.empty()) throw std::invalid_argument("csv: nothing to export");
  const bool regression = domains.front().is_regression();
  const Index dim = domains.front().feature_dim();
  out << "domain_id," << (regression ? "target" : "label");
  for (Index k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  for (const auto& d : domains) {
    if (d.is_regression() != regression || d.feature_dim() != dim)
      throw std::invalid_argument("csv: domains disagree on layout");
    for (Index r = 0; r < d.size(); ++r) {
      out << d.domain_id << ',';
      if (regression)
        out << g17(d.targets(r));
      else
        out << d.labels[static_cast<std::size_t>(r)];
      for (Index k = 0; k < dim; ++k) out << ',' << g17(d.features(r, k));
      out << '\n';
    }
  }
}

std::vector<DomainDataset> import_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header");
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "domain_id" || (header[1] != "label" && header[1] != "target"))
    throw std::invalid_argument("csv: header must start with domain_id,label|target and list features");
  const bool regression = header[1] == "target";
  const Index dim = static_cast<Index>(header.size()) - 2;

  std::map<int, std::vector<std::vector<double>>> rows;
  std::map<int, std::vector<double>> ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (static_cast<Index>(cells.size()) != dim + 2)
      throw std::invalid_argument("csv: line " + std::to_string(line_no) + " has wrong column count");
    const int id = std::stoi(cells[0]);
    const double y = to_double(cells[1]);
    if (!regression && (y < 0 || y != std::floor(y)))
      throw std::invalid_argument("csv: line " + std::to_string(line_no) + " has a non-integer label");
    std::vector<double> f;
    for (Index k = 0; k < dim; ++k) f.push_back(to_double(cells[static_cast<std::size_t>(k + 2)]));
    rows[id].push_back(std::move(f));
    ys[id].push_back(y);
  }
  std::vector<DomainDataset> out;
  for (auto& [id, feats] : rows) {
    DomainDataset d;
    d.domain_id = id;
    d.features.resize(static_cast<Index>(feats.size()), dim);
    for (std::size_t r = 0; r < feats.size(); ++r)
      for (Index k = 0; k < dim; ++k) d.features(static_cast<Index>(r), k) = feats[r][static_cast<std::size_t>(k)];
    const auto& y = ys[id];
    if (regression) {
      d.targets = Eigen::Map<const Vector>(y.data(), static_cast<Index>(y.size()));
    } else {
      for (double v : y) d.labels.push_back(static_cast<Index>(v));
    }
    out.push_back(std::move(d));
  }
  if (out.empty()) throw std::invalid_argument("csv: no samples");
  assign_mixture_weights(out);
  if (!regression) {
    std::set<Index> reference;
    for (const auto& d : out) {
      std::set<Index> classes(d.labels.begin(), d.labels.end());
      if (&d == &out.front())
        reference = classes;
      else if (classes != reference)
        throw std::invalid_argument("csv: domains do not share a label space");
    }
  }
  for (const auto& d : out) d.validate();
  return out;
}

void export_csv(const std::filesystem::path& path, const std::vector<DomainDataset>& domains) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  export_csv(out, domains);
}

std::vector<DomainDataset> import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return import_csv(in);
}

}  // namespace expertdg::data
