#include "gserec/train/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "gserec/util/rng.hpp"

namespace gserec::train {

std::vector<int> sample_negatives(const data::Dataset& dataset, int user, data::Split split, int count,
                                  std::uint64_t seed) {
  const auto touched = data::interacted_items(dataset.users.at(static_cast<std::size_t>(user)));
  const int n = dataset.num_items();
  const int eligible = n - static_cast<int>(touched.size());
  util::Rng rng({seed, static_cast<std::uint64_t>(user), static_cast<std::uint64_t>(split)});
  std::vector<int> out;
  if (eligible <= count) {
    for (int i = 0; i < n; ++i) {
      if (!std::binary_search(touched.begin(), touched.end(), i)) out.push_back(i);
    }
    rng.shuffle(out.begin(), out.end());
    return out;
  }
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (int t : touched) taken[static_cast<std::size_t>(t)] = true;
  while (static_cast<int>(out.size()) < count) {
    const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (taken[static_cast<std::size_t>(i)]) continue;
    taken[static_cast<std::size_t>(i)] = true;
    out.push_back(i);
  }
  return out;
}

std::vector<EvalRow> build_eval_rows(const data::Dataset& dataset, data::Split split, const EvalOptions& options) {
  if (split == data::Split::kTrain) throw std::invalid_argument("evaluate: split must be valid or test");
  std::vector<EvalRow> rows;
  for (const auto& u : dataset.users) {
    const int target = u.rec_index(split);
    if (target < 0) continue;
    EvalRow row{u.id, target, {u.rec[static_cast<std::size_t>(target)].item}};
    const auto negs = sample_negatives(dataset, u.id, split, options.negatives, options.seed);
    row.candidates.insert(row.candidates.end(), negs.begin(), negs.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

MetricsReport evaluate_scorer(const data::Dataset& dataset, data::Split split, const Scorer& scorer,
                              const EvalOptions& options) {
  const auto rows = build_eval_rows(dataset, split, options);
  if (rows.empty()) throw std::invalid_argument(std::string("evaluate: no ") + data::to_string(split) + " rows");

  const data::SparsityGrouping grouping =
      options.grouping ? *options.grouping : data::group_users_by_search_count(dataset, options.num_groups);

  const std::size_t block = static_cast<std::size_t>(std::max(1, options.batch_size));
  const std::size_t blocks = (rows.size() + block - 1) / block;
  std::vector<int> ranks(rows.size(), 0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t b = next++; b < blocks; b = next++) {
      try {
        const std::size_t lo = b * block;
        const std::size_t hi = std::min(rows.size(), lo + block);
        const std::span<const EvalRow> part(rows.data() + lo, hi - lo);
        const auto scores = scorer(part);
        if (scores.size() != part.size()) throw std::runtime_error("evaluate: scorer returned wrong row count");
        for (std::size_t r = 0; r < part.size(); ++r) {
          ranks[lo + r] = rank_of(scores[r], part[r].candidates, 0);
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(blocks)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  MetricsReport report;
  report.split = data::to_string(split);
  report.rows = static_cast<int>(rows.size());
  report.negative_seed = options.seed;
  report.candidate_list_size = options.negatives + 1;
  report.group_boundaries = grouping.boundaries;
  report.warnings = grouping.warnings;
  report.min_candidates = report.candidate_list_size;
  report.groups.resize(static_cast<std::size_t>(grouping.num_groups()));
  for (int g = 0; g < grouping.num_groups(); ++g) report.groups[static_cast<std::size_t>(g)].label = grouping.label(g);

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto m = MetricSet::from_rank(ranks[r]);
    report.overall += m;
    auto& group = report.groups[static_cast<std::size_t>(grouping.assignment[static_cast<std::size_t>(rows[r].user)])];
    group.metrics += m;
    ++group.rows;
    const int size = static_cast<int>(rows[r].candidates.size());
    if (size < report.candidate_list_size) ++report.short_candidate_rows;
    report.min_candidates = std::min(report.min_candidates, size);
  }
  report.overall = report.overall.divided(report.rows);
  for (auto& g : report.groups) {
    if (g.rows > 0) g.metrics = g.metrics.divided(g.rows);
  }
  if (report.short_candidate_rows > 0) {
    report.warnings.push_back(std::to_string(report.short_candidate_rows) +
                              " rows had fewer eligible negatives than requested");
  }
  return report;
}

Scorer model_scorer(const model::Recommender& model, const data::Dataset& dataset) {
  return [&model, &dataset](std::span<const EvalRow> rows) {
    model::FeatureBuilder builder(dataset, model.config().max_len_search, model.config().max_len_rec);
    std::vector<model::Example> examples;
    examples.reserve(rows.size());
    for (const auto& row : rows) examples.push_back({row.user, row.target, row.candidates, {}});
    const auto features = builder.build(examples);
    const auto flat = model.score(features);
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto begin = flat.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(features.cand_rows));
      out.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(rows[r].candidates.size()));
    }
    return out;
  };
}

MetricsReport evaluate(const model::Recommender& model, const data::Dataset& dataset, data::Split split,
                       const EvalOptions& options) {
  auto report = evaluate_scorer(dataset, split, model_scorer(model, dataset), options);
  report.config = {{"model", model.config().to_json()}};
  return report;
}

}  // namespace gserec::train
