#include "gserec/model/features.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace gserec::model {

namespace {

std::shared_ptr<const SparseMatrix> make_sparse(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& t) {
  auto s = std::make_shared<SparseMatrix>(rows, cols);
  s->setFromTriplets(t.begin(), t.end());
  return s;
}

}  // namespace

FeatureBuilder::FeatureBuilder(const data::Dataset& dataset, int max_len_search, int max_len_rec)
    : dataset_(&dataset), max_len_s_(max_len_search), max_len_r_(max_len_rec) {
  if (max_len_search < 1 || max_len_rec < 1) throw std::invalid_argument("history lengths must be >= 1");
}

BatchFeatures FeatureBuilder::build(std::span<const Example> examples) const {
  const auto& ds = *dataset_;
  BatchFeatures f;
  f.batch = static_cast<int>(examples.size());
  if (f.batch == 0) throw std::invalid_argument("empty batch");

  std::vector<data::HistoryContext> contexts;
  contexts.reserve(examples.size());
  bool has_labels = !examples.front().labels.empty();
  for (const auto& ex : examples) {
    const auto& user = ds.users.at(static_cast<std::size_t>(ex.user));
    contexts.push_back(ex.target >= 0 ? data::context_before(user, ex.target) : data::training_view(user));
    const auto& c = contexts.back();
    f.users.push_back(ex.user);
    f.search_len.push_back(std::min<int>(max_len_s_, static_cast<int>(c.search.size())));
    f.rec_len.push_back(std::min<int>(max_len_r_, static_cast<int>(c.rec_items.size())));
    f.cand_len.push_back(static_cast<int>(ex.candidates.size()));
    if (ex.candidates.empty()) throw std::invalid_argument("example without candidates");
    if (has_labels != !ex.labels.empty() || (has_labels && ex.labels.size() != ex.candidates.size())) {
      throw std::invalid_argument("labels must be given for every candidate of every example or none");
    }
  }
  f.search_rows = std::max(1, *std::max_element(f.search_len.begin(), f.search_len.end()));
  f.rec_rows = std::max(1, *std::max_element(f.rec_len.begin(), f.rec_len.end()));
  f.cand_rows = *std::max_element(f.cand_len.begin(), f.cand_len.end());

  std::vector<Triplet> rec_items, rec_pos, words, clicks, search_pos;
  auto smask = std::make_shared<Vector>(Vector::Zero(f.batch * f.search_rows));
  auto rmask = std::make_shared<Vector>(Vector::Zero(f.batch * f.rec_rows));
  auto cmask = std::make_shared<Vector>(Vector::Zero(f.batch * f.cand_rows));
  auto labels = std::make_shared<Vector>(Vector::Zero(f.batch * f.cand_rows));
  f.candidates.assign(static_cast<std::size_t>(f.batch * f.cand_rows), 0);

  std::unordered_set<int> seen;
  for (int b = 0; b < f.batch; ++b) {
    const auto& c = contexts[static_cast<std::size_t>(b)];
    const auto& ex = examples[static_cast<std::size_t>(b)];
    if (seen.insert(ex.user).second) f.unique_examples.push_back(b);

    const int nr = f.rec_len[static_cast<std::size_t>(b)];
    const int r0 = static_cast<int>(c.rec_items.size()) - nr;
    for (int j = 0; j < nr; ++j) {
      const int row = b * f.rec_rows + j;
      rec_items.emplace_back(row, c.rec_items[static_cast<std::size_t>(r0 + j)], 1.0);
      rec_pos.emplace_back(row, recency_position(j, nr), 1.0);
      (*rmask)(row) = 1.0;
    }

    const int ns = f.search_len[static_cast<std::size_t>(b)];
    const int s0 = static_cast<int>(c.search.size()) - ns;
    for (int j = 0; j < ns; ++j) {
      const int row = b * f.search_rows + j;
      const auto* rec = c.search[static_cast<std::size_t>(s0 + j)];
      const auto& q = ds.queries.at(static_cast<std::size_t>(rec->query));
      for (int w : q.words) words.emplace_back(row, w, 1.0 / static_cast<double>(q.words.size()));
      const auto& cl = c.search_clicks[static_cast<std::size_t>(s0 + j)];
      for (int it : cl) clicks.emplace_back(row, it, 1.0 / static_cast<double>(cl.size()));
      search_pos.emplace_back(row, recency_position(j, ns), 1.0);
      (*smask)(row) = 1.0;
    }

    for (std::size_t k = 0; k < ex.candidates.size(); ++k) {
      const int row = b * f.cand_rows + static_cast<int>(k);
      if (ex.candidates[k] < 0 || ex.candidates[k] >= ds.num_items()) throw std::out_of_range("candidate item id");
      f.candidates[static_cast<std::size_t>(row)] = ex.candidates[k];
      (*cmask)(row) = 1.0;
      if (has_labels) (*labels)(row) = ex.labels[k];
    }
  }

  const auto br = static_cast<Eigen::Index>(f.batch) * f.rec_rows;
  const auto bs = static_cast<Eigen::Index>(f.batch) * f.search_rows;
  f.rec_items = make_sparse(br, ds.num_items(), rec_items);
  f.rec_pos = make_sparse(br, max_len_r_, rec_pos);
  f.search_words = make_sparse(bs, std::max(1, ds.num_words()), words);
  f.search_clicks = make_sparse(bs, ds.num_items(), clicks);
  f.search_pos = make_sparse(bs, max_len_s_, search_pos);
  f.search_mask = smask;
  f.rec_mask = rmask;
  f.cand_mask = cmask;
  if (has_labels) f.labels = labels;
  return f;
}

}  // namespace gserec::model
