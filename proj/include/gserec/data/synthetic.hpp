#pragma once

#include <cstdint>
#include <vector>

#include "gserec/data/dataset.hpp"

namespace gserec::data {

/// Latent-cluster generator standing in for real S&R logs at desk scale.
/// Items and query words belong to clusters; each user has one interest
/// cluster and draws rec clicks and (query, clicks) pairs mostly from it. A
/// `sparse_fraction` of users gets at most `sparse_cap` search records.
struct SynthConfig {
  int users = 200;
  int items = 500;
  int clusters = 4;
  std::uint64_t seed = 7;
  int words_per_cluster = 12;
  int generic_words = 6;
  int min_rec = 6;
  int max_rec = 16;
  int max_search = 20;
  double sparse_fraction = 0.5;
  int sparse_cap = 2;
  double rec_in_cluster = 0.85;
  double search_in_cluster = 0.95;
  int max_query_words = 3;
  int max_clicks = 2;
};

struct SyntheticCorpus {
  Dataset dataset;
  std::vector<int> user_cluster;
  std::vector<int> item_cluster;
  std::vector<int> word_cluster;  ///< -1 for generic words
  std::vector<bool> sparse_user;
};

/// Deterministic in the config (including the seed). Histories come back
/// split leave-one-out.
SyntheticCorpus generate_synthetic_dataset(const SynthConfig& config);

}  // namespace gserec::data
