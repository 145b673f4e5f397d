#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gserec/data/dataset.hpp"
#include "gserec/data/grouping.hpp"
#include "gserec/train/metrics.hpp"
#include "gserec/train/pipeline.hpp"

namespace gserec::train {

/// Users and search interactions per sparsity group, optionally with a
/// report's per-group NDCG@5. Writes fig1_groups.csv and fig1_groups.svg.
void write_fig1(const std::filesystem::path& dir, const data::Dataset& dataset,
                const data::SparsityGrouping& grouping, const MetricsReport* report = nullptr);

/// Relative improvement of every named report over `base`, per group and
/// metric. Writes fig2_improvements.csv and fig2_improvements.svg (NDCG@5).
void write_fig2(const std::filesystem::path& dir, const MetricsReport& base,
                const std::vector<NamedReport>& others);

/// NDCG@5 and HR@5 along a sweep. Writes fig7_<param>.csv and .svg.
void write_fig7(const std::filesystem::path& dir, SweepParam param, const std::vector<SweepPoint>& points);

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Grouped bar chart; one bar per series within each category.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series);
/// Line chart over evenly spaced x labels.
std::string line_chart_svg(const std::string& title, const std::vector<std::string>& x_labels,
                           const std::vector<Series>& series);

}  // namespace gserec::train
