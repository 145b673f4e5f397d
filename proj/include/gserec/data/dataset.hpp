#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gserec::data {

using Timestamp = std::int64_t;

struct Item {
  int id = 0;
  std::string key;   ///< external identifier
  std::string text;  ///< title/description, may be empty
};

struct Query {
  int id = 0;
  std::string text;
  std::vector<int> words;  ///< non-empty, indices into Dataset::vocab
};

struct SearchRecord {
  int query = 0;             ///< index into Dataset::queries
  std::vector<int> clicked;  ///< distinct item ids
  Timestamp ts = 0;
};

struct RecEvent {
  int item = 0;
  Timestamp ts = 0;
};

enum class Split : std::uint8_t { kTrain, kValid, kTest };

const char* to_string(Split split);

/// Both channels sorted by timestamp; equal timestamps keep file order.
struct UserHistory {
  int id = 0;
  std::string key;
  std::vector<RecEvent> rec;
  std::vector<SearchRecord> search;
  std::vector<Split> rec_split;  ///< parallel to `rec` once split

  int num_rec() const { return static_cast<int>(rec.size()); }
  int num_search() const { return static_cast<int>(search.size()); }
  int total_interactions() const { return num_rec() + num_search(); }
  /// Index into `rec` of the event labelled `split`, or -1.
  int rec_index(Split split) const;
};

/// Dense-id corpus. Immutable after construction; share freely for reading.
struct Dataset {
  std::vector<UserHistory> users;
  std::vector<Item> items;
  std::vector<std::string> vocab;
  std::vector<Query> queries;

  int num_users() const { return static_cast<int>(users.size()); }
  int num_items() const { return static_cast<int>(items.size()); }
  int num_words() const { return static_cast<int>(vocab.size()); }
  int num_queries() const { return static_cast<int>(queries.size()); }

  /// Checks id ranges, ordering and split invariants; throws DataError.
  void validate() const;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetStats {
  int users = 0;
  int items = 0;
  int queries = 0;
  int words = 0;
  long search_interactions = 0;
  long rec_interactions = 0;
  int test_rows = 0;
  int valid_rows = 0;
};

DatasetStats compute_stats(const Dataset& dataset);

/// Every item the user touched in either channel, sorted and unique.
std::vector<int> interacted_items(const UserHistory& user);

/// Search and recommendation events visible when predicting a target.
struct HistoryContext {
  std::vector<int> rec_items;                ///< chronological
  std::vector<const SearchRecord*> search;   ///< chronological
  std::vector<std::vector<int>> search_clicks;  ///< clicks per record after exclusions
};

/// Context for predicting `user.rec[target]`: rec events before it, search
/// records with strictly earlier timestamps. Items the user holds out at or
/// after the target's split (valid/test for a training target, test for a
/// validation target) are removed from both channels.
HistoryContext context_before(const UserHistory& user, int target);

/// Everything the model may learn from for this user: the context of the
/// validation target (or the whole history for train-only users) with both
/// held-out items removed.
HistoryContext training_view(const UserHistory& user);

}  // namespace gserec::data
