#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gserec/data/dataset.hpp"
#include "gserec/data/grouping.hpp"
#include "gserec/model/recommender.hpp"
#include "gserec/train/metrics.hpp"

namespace gserec::train {

/// Up to `count` distinct items the user never touched in either channel,
/// drawn from Rng({seed, user, split}). Fewer are returned when fewer exist.
std::vector<int> sample_negatives(const data::Dataset& dataset, int user, data::Split split, int count,
                                  std::uint64_t seed);

struct EvalOptions {
  int negatives = 99;
  std::uint64_t seed = 2024;
  int workers = 1;
  int batch_size = 256;
  int num_groups = 5;
  /// Overrides the search-count grouping when set.
  std::optional<data::SparsityGrouping> grouping;
};

/// One ranked row: the candidate list (truth first) and its scores.
struct EvalRow {
  int user = 0;
  int target = 0;
  std::vector<int> candidates;
};

/// Rows for every user with a `split` event.
std::vector<EvalRow> build_eval_rows(const data::Dataset& dataset, data::Split split, const EvalOptions& options);

/// Scores a block of rows, returning one score vector per row.
using Scorer = std::function<std::vector<std::vector<double>>(std::span<const EvalRow>)>;

/// Ranks the truth of every row and aggregates overall and per-group
/// metrics. The scorer is called on contiguous blocks of rows, possibly
/// from several threads at once.
MetricsReport evaluate_scorer(const data::Dataset& dataset, data::Split split, const Scorer& scorer,
                              const EvalOptions& options);

MetricsReport evaluate(const model::Recommender& model, const data::Dataset& dataset, data::Split split,
                       const EvalOptions& options);

/// Scorer backed by a trained recommender.
Scorer model_scorer(const model::Recommender& model, const data::Dataset& dataset);

}  // namespace gserec::train
