#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "expertdg/nn/mlp.hpp"
#include "expertdg/rng.hpp"

namespace expertdg::data {

using Eigen::Index;
using nn::Matrix;
using nn::Vector;

/// One source or target domain. Features are stored one sample per row.
/// Classification sets use `labels`; regression sets use `targets`.
struct DomainDataset {
  int domain_id = 0;
  Matrix features;
  std::vector<Index> labels;
  Vector targets;
  double pi = 1.0;

  Index size() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
  bool is_regression() const { return targets.size() > 0; }

  // Column-major batch (feature_dim x n) as consumed by the Mlp routines.
  Matrix inputs() const { return features.transpose(); }

  // Throws std::invalid_argument on an empty set, non-finite features or
  // inconsistent label/target counts.
  void validate() const;

  DomainDataset subset(const std::vector<Index>& rows) const;
};

// ---------------------------------------------------------------------------
// Toy regression

/// sgn(x) (3|cos x| + x^2/2 + 3), with sgn(0) = 0.
double toy_target(double x);

struct ToyConfig {
  Index n_train = 200;
  Index n_test = 5000;
  double noise_sd = 0.5;
  double x_lo = -4.0;
  double x_hi = 4.0;
};

struct ToyData {
  DomainDataset train;
  DomainDataset test;
};

/// x ~ U[x_lo, x_hi), y = toy_target(x) + N(0, noise_sd^2). Train and test
/// draw from independent child streams of `seed`.
ToyData gen_toy_regression(const ToyConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Multi-domain classification suite

struct SuiteConfig {
  Index n_domains = 4;
  Index n_classes = 10;
  Index feature_dim = 16;
  std::vector<Index> samples_per_domain{200, 200, 200, 200};
  double shift_strength = 1.0;
  double prototype_sd = 1.0;
  double within_class_sd = 0.8;
};

/// feature = rotation * latent + shift. Rotations are orthogonal so the map
/// is inverted exactly by rotation^T (feature - shift).
struct AffineMap {
  Matrix rotation;
  Vector shift;

  Vector apply(const Vector& latent) const { return rotation * latent + shift; }
  Vector invert(const Vector& feature) const { return rotation.transpose() * (feature - shift); }
};

struct DomainSuite {
  SuiteConfig config;
  Matrix prototypes;  // n_classes x feature_dim, latent space
  std::vector<AffineMap> maps;
  std::vector<DomainDataset> domains;
};

/// Class prototypes shared by every domain; each domain pushes latent samples
/// through its own seeded affine map. Labels are fixed in latent space (a
/// sample is kept only if its nearest prototype is its class), so the
/// labelling rule is the same in every domain.
DomainSuite gen_domain_suite(const SuiteConfig& cfg, std::uint64_t seed);

/// Fresh samples from an arbitrary map over the suite's prototypes; used for
/// the identity-map pretraining pool and for held-out evaluation sets.
DomainDataset sample_domain(const DomainSuite& suite, const AffineMap& map, Index n, int domain_id, Rng& rng);

AffineMap identity_map(Index dim);

/// Nearest latent prototype of a latent point.
Index nearest_prototype(const Matrix& prototypes, const Vector& latent);

/// Per-class subsample of at most k samples per class.
DomainDataset few_shot(const DomainDataset& domain, Index k, std::uint64_t seed);

/// Sets pi_i proportional to sample counts.
void assign_mixture_weights(std::vector<DomainDataset>& domains);

// ---------------------------------------------------------------------------
// Step-1 / step-2 split

struct SplitPair {
  std::vector<DomainDataset> step1;
  std::vector<DomainDataset> step2;
  std::vector<std::vector<Index>> step1_rows;
  std::vector<std::vector<Index>> step2_rows;
};

/// Per-domain random partition without replacement. Both halves keep
/// domain_id and pi.
SplitPair split_step_data(const std::vector<DomainDataset>& suite, double step2_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Delimited-text exchange: header "domain_id,label,f0,..." for classification
// or "domain_id,target,f0,..." for regression; values printed with %.17g.

void export_csv(std::ostream& out, const std::vector<DomainDataset>& domains);
std::vector<DomainDataset> import_csv(std::istream& in);

void export_csv(const std::filesystem::path& path, const std::vector<DomainDataset>& domains);
std::vector<DomainDataset> import_csv(const std::filesystem::path& path);

}  // namespace expertdg::data
