#pragma once

#include <span>
#include <string>
#include <vector>

#include "gserec/data/dataset.hpp"

namespace gserec::data {

/// Partition of users by search-history length. Group g holds users whose
/// count c satisfies boundaries[g-1] < c <= boundaries[g] (open ends at
/// either side).
struct SparsityGrouping {
  std::vector<int> boundaries;
  std::vector<int> assignment;  ///< user id -> group
  std::vector<std::string> warnings;

  int num_groups() const { return static_cast<int>(boundaries.size()) + 1; }
  int group_of(int search_count) const;
  /// Human-readable count range, e.g. "0-2", "3-7", ">=8".
  std::string label(int group) const;
};

/// Boundaries at the empirical j/G quantiles of the counts (lower order
/// statistic), so a boundary value belongs to the lower group. Duplicate
/// boundaries collapse, with a warning when fewer than `num_groups` remain.
SparsityGrouping group_by_counts(std::span<const int> counts, int num_groups);

SparsityGrouping group_users_by_search_count(const Dataset& dataset, int num_groups);

}  // namespace gserec::data
