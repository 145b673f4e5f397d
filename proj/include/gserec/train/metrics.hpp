#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace gserec::train {

/// 1-based rank of candidate `truth` among `scores`. Higher scores rank
/// first; equal scores are ordered by ascending item id.
int rank_of(std::span<const double> scores, std::span<const int> items, std::size_t truth);

/// HR@{1,5,10} and NDCG@{5,10} for one ranked row, or averaged over rows.
struct MetricSet {
  double hr1 = 0, hr5 = 0, hr10 = 0, ndcg5 = 0, ndcg10 = 0;

  static MetricSet from_rank(int rank);
  MetricSet& operator+=(const MetricSet& o);
  MetricSet divided(double n) const;
  double get(const std::string& name) const;
  nlohmann::json to_json() const;
  static MetricSet from_json(const nlohmann::json& j);
};

inline const std::vector<std::string> kMetricNames{"HR@1", "HR@5", "HR@10", "NDCG@5", "NDCG@10"};

struct GroupMetrics {
  std::string label;
  int rows = 0;
  MetricSet metrics;
};

struct MetricsReport {
  std::string split;
  int rows = 0;
  MetricSet overall;
  std::vector<GroupMetrics> groups;
  std::vector<int> group_boundaries;
  std::vector<std::string> warnings;
  std::uint64_t negative_seed = 0;
  int candidate_list_size = 0;      ///< truth + requested negatives
  int short_candidate_rows = 0;     ///< rows that had fewer eligible negatives
  int min_candidates = 0;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Per-group relative change (b - a) / a for every metric; null where the
/// group is empty or a's metric is zero.
struct GroupImprovement {
  std::string label;
  bool empty = false;
  std::vector<std::optional<double>> relative;  ///< parallel to kMetricNames
};

std::vector<GroupImprovement> group_report(const MetricsReport& a, const MetricsReport& b);

}  // namespace gserec::train
