#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mdopt/error.hpp"

namespace mdopt {

enum class Split { Train, Val, Test };

Split split_from_string(const std::string& s);
std::string to_string(Split s);

struct Interaction {
  std::int64_t user_id = 0;
  std::int64_t item_id = 0;
  int label = 0;  // 0 or 1

  bool operator==(const Interaction&) const = default;
};

struct DomainData {
  int domain_id = 0;
  std::vector<Interaction> interactions;
  // Disjoint index sets covering all interactions, each kept sorted
  // ascending (canonical form, preserved by file round trips).
  std::vector<std::size_t> train, val, test;

  const std::vector<std::size_t>& indices(Split s) const;
  std::vector<std::size_t>& indices(Split s);
  std::size_t n_pos() const;
  std::size_t n_neg() const;
  void validate() const;

  bool operator==(const DomainData&) const = default;
};

// #positives / #negatives over all interactions.
double ctr_ratio(const DomainData& domain);

struct MultiDomainDataset {
  std::vector<DomainData> domains;
  std::int64_t num_users = 0;
  std::int64_t num_items = 0;

  std::size_t n_domains() const { return domains.size(); }
  std::size_t total_rows() const;
  void validate() const;

  bool operator==(const MultiDomainDataset&) const = default;
};

enum class NegativeSampling { PerUser, Global };

struct SyntheticSpec {
  int n_domains = 6;
  std::int64_t users_per_domain = 400;
  std::int64_t items_per_domain = 300;
  // Fraction of each domain's users/items drawn from a pool shared by all
  // domains; the rest are domain-exclusive.
  double overlap_fraction = 0.5;
  // 0: all domains score with one shared latent model; 1: fully private.
  double conflict_strength = 0.8;
  double ctr_lo = 0.2;
  double ctr_hi = 0.5;
  std::int64_t positives_per_domain = 2500;
  int latent_dim = 8;
  NegativeSampling negative_sampling = NegativeSampling::PerUser;
  std::int64_t seed = 0;

  void validate() const;
};

// Bundled 6-domain high-conflict preset (~60k rows) used by the
// acceptance runs and as the CLI default.
SyntheticSpec conflict6_spec();

// Deterministic synthetic multi-domain click log. Each domain labels its
// top-scoring user-item pairs positive under a latent bilinear scorer whose
// private share is conflict_strength, then samples negatives until the
// domain's CTR ratio (drawn from [ctr_lo, ctr_hi]) is met. All rows land in
// the train split; call split() to partition.
MultiDomainDataset generate(const SyntheticSpec& spec);

// Per-domain stratified-by-label random split. Fractions must be
// non-negative and sum to 1.
MultiDomainDataset split(const MultiDomainDataset& dataset,
                         const std::array<double, 3>& fractions,
                         std::int64_t seed);

void save(const MultiDomainDataset& dataset, const std::string& path);
MultiDomainDataset load(const std::string& path);

struct DomainMeta {
  int domain_id = 0;
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  double ctr_ratio = 0.0;
};

void save_metadata(const MultiDomainDataset& dataset, const std::string& path);
std::vector<DomainMeta> load_metadata(const std::string& path);

}  // namespace mdopt
