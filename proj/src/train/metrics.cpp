#include "gserec/train/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace gserec::train {

int rank_of(std::span<const double> scores, std::span<const int> items, std::size_t truth) {
  if (scores.size() != items.size() || truth >= scores.size()) throw std::invalid_argument("rank_of: bad input");
  int ahead = 0;
  const double s = scores[truth];
  const int id = items[truth];
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j == truth) continue;
    if (scores[j] > s || (scores[j] == s && items[j] < id)) ++ahead;
  }
  return ahead + 1;
}

MetricSet MetricSet::from_rank(int rank) {
  MetricSet m;
  const double gain = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  m.hr1 = rank <= 1;
  m.hr5 = rank <= 5;
  m.hr10 = rank <= 10;
  m.ndcg5 = rank <= 5 ? gain : 0.0;
  m.ndcg10 = rank <= 10 ? gain : 0.0;
  return m;
}

MetricSet& MetricSet::operator+=(const MetricSet& o) {
  hr1 += o.hr1;
  hr5 += o.hr5;
  hr10 += o.hr10;
  ndcg5 += o.ndcg5;
  ndcg10 += o.ndcg10;
  return *this;
}

MetricSet MetricSet::divided(double n) const { return {hr1 / n, hr5 / n, hr10 / n, ndcg5 / n, ndcg10 / n}; }

double MetricSet::get(const std::string& name) const {
  if (name == "HR@1") return hr1;
  if (name == "HR@5") return hr5;
  if (name == "HR@10") return hr10;
  if (name == "NDCG@5") return ndcg5;
  if (name == "NDCG@10") return ndcg10;
  throw std::invalid_argument("unknown metric " + name);
}

nlohmann::json MetricSet::to_json() const {
  return {{"HR@1", hr1}, {"HR@5", hr5}, {"HR@10", hr10}, {"NDCG@5", ndcg5}, {"NDCG@10", ndcg10}};
}

MetricSet MetricSet::from_json(const nlohmann::json& j) {
  return {j.at("HR@1"), j.at("HR@5"), j.at("HR@10"), j.at("NDCG@5"), j.at("NDCG@10")};
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json groups_json = nlohmann::json::array();
  for (const auto& g : groups) {
    groups_json.push_back({{"label", g.label}, {"rows", g.rows}, {"metrics", g.metrics.to_json()}});
  }
  return {{"split", split},
          {"rows", rows},
          {"overall", overall.to_json()},
          {"groups", groups_json},
          {"group_boundaries", group_boundaries},
          {"warnings", warnings},
          {"negative_seed", negative_seed},
          {"candidate_list_size", candidate_list_size},
          {"short_candidate_rows", short_candidate_rows},
          {"min_candidates", min_candidates},
          {"config", config}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.split = j.at("split");
  r.rows = j.at("rows");
  r.overall = MetricSet::from_json(j.at("overall"));
  for (const auto& g : j.at("groups")) {
    r.groups.push_back({g.at("label"), g.at("rows"), MetricSet::from_json(g.at("metrics"))});
  }
  r.group_boundaries = j.at("group_boundaries").get<std::vector<int>>();
  r.warnings = j.value("warnings", std::vector<std::string>{});
  r.negative_seed = j.at("negative_seed");
  r.candidate_list_size = j.at("candidate_list_size");
  r.short_candidate_rows = j.value("short_candidate_rows", 0);
  r.min_candidates = j.value("min_candidates", 0);
  r.config = j.value("config", nlohmann::json::object());
  return r;
}

std::vector<GroupImprovement> group_report(const MetricsReport& a, const MetricsReport& b) {
  if (a.groups.size() != b.groups.size()) throw std::invalid_argument("group_report: reports use different groupings");
  std::vector<GroupImprovement> out;
  for (std::size_t g = 0; g < a.groups.size(); ++g) {
    GroupImprovement imp;
    imp.label = a.groups[g].label;
    imp.empty = a.groups[g].rows == 0 || b.groups[g].rows == 0;
    for (const auto& name : kMetricNames) {
      const double va = a.groups[g].metrics.get(name);
      const double vb = b.groups[g].metrics.get(name);
      if (imp.empty || va == 0.0) {
        imp.relative.push_back(std::nullopt);
      } else {
        imp.relative.push_back((vb - va) / va);
      }
    }
    out.push_back(std::move(imp));
  }
  return out;
}

}  // namespace gserec::train
