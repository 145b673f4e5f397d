#include "gserec/data/grouping.hpp"

#include <algorithm>
#include <stdexcept>

namespace gserec::data {

int SparsityGrouping::group_of(int search_count) const {
  return static_cast<int>(std::lower_bound(boundaries.begin(), boundaries.end(), search_count) - boundaries.begin());
}

std::string SparsityGrouping::label(int group) const {
  if (group < 0 || group >= num_groups()) throw std::out_of_range("group index");
  const int lo = group == 0 ? 0 : boundaries[static_cast<std::size_t>(group - 1)] + 1;
  if (group == num_groups() - 1) return ">=" + std::to_string(lo);
  const int hi = boundaries[static_cast<std::size_t>(group)];
  return lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi);
}

SparsityGrouping group_by_counts(std::span<const int> counts, int num_groups) {
  if (num_groups < 2) throw std::invalid_argument("group_by_counts: num_groups must be at least 2");
  SparsityGrouping grouping;
  if (!counts.empty()) {
    std::vector<int> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<long>(sorted.size());
    for (int j = 1; j < num_groups; ++j) {
      const long idx = (j * n + num_groups - 1) / num_groups - 1;
      const int b = sorted[static_cast<std::size_t>(std::max(0L, idx))];
      if (b < sorted.back() && (grouping.boundaries.empty() || grouping.boundaries.back() < b)) {
        grouping.boundaries.push_back(b);
      }
    }
  }
  if (grouping.num_groups() < num_groups) {
    grouping.warnings.push_back("requested " + std::to_string(num_groups) + " groups but search counts support only " +
                                std::to_string(grouping.num_groups()) + "; groups collapsed to distinct values");
  }
  grouping.assignment.reserve(counts.size());
  for (int c : counts) grouping.assignment.push_back(grouping.group_of(c));
  return grouping;
}

SparsityGrouping group_users_by_search_count(const Dataset& dataset, int num_groups) {
  std::vector<int> counts;
  counts.reserve(dataset.users.size());
  for (const auto& u : dataset.users) counts.push_back(u.num_search());
  return group_by_counts(counts, num_groups);
}

}  // namespace gserec::data
