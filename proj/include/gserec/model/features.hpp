#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gserec/data/dataset.hpp"
#include "gserec/util/matrix.hpp"

namespace gserec::model {

/// One prediction context: a user, the rec position being predicted (its
/// history is everything visible before it) and the candidate items scored
/// against that history. target < 0 means the user's training view.
struct Example {
  int user = 0;
  int target = -1;
  std::vector<int> candidates;
  std::vector<double> labels;  ///< empty when only scoring
};

/// Padded batch layout. History rows are stored as `batch` blocks of
/// `search_rows` (or `rec_rows`) rows, chronological, padding at the end.
/// Sparse matrices turn table lookups and means into products.
struct BatchFeatures {
  int batch = 0;
  int search_rows = 1;
  int rec_rows = 1;
  int cand_rows = 1;
  std::vector<int> users;
  std::vector<int> search_len, rec_len, cand_len;

  std::shared_ptr<const SparseMatrix> rec_items;       ///< (B*Nr) x |I|
  std::shared_ptr<const SparseMatrix> rec_pos;         ///< (B*Nr) x max_len_r
  std::shared_ptr<const SparseMatrix> search_words;    ///< (B*Ns) x |W|, query word means
  std::shared_ptr<const SparseMatrix> search_clicks;   ///< (B*Ns) x |I|, clicked item means
  std::shared_ptr<const SparseMatrix> search_pos;      ///< (B*Ns) x max_len_s
  std::shared_ptr<const Vector> search_mask, rec_mask;

  std::vector<int> candidates;                         ///< B*C, padded with item 0
  std::shared_ptr<const Vector> labels;                ///< B*C, null when scoring
  std::shared_ptr<const Vector> cand_mask;

  /// Index of the first example of every distinct user, in order of appearance.
  std::vector<int> unique_examples;
};

/// Recency position of the j-th of n chronological events: the most recent
/// event gets position 0.
inline int recency_position(int j, int n) { return n - 1 - j; }

class FeatureBuilder {
 public:
  FeatureBuilder(const data::Dataset& dataset, int max_len_search, int max_len_rec);

  BatchFeatures build(std::span<const Example> examples) const;

  const data::Dataset& dataset() const { return *dataset_; }
  int max_len_search() const { return max_len_s_; }
  int max_len_rec() const { return max_len_r_; }

 private:
  const data::Dataset* dataset_;
  int max_len_s_;
  int max_len_r_;
};

}  // namespace gserec::model
