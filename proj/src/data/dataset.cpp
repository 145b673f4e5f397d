#include "gserec/data/dataset.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace gserec::data {

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

int UserHistory::rec_index(Split split) const {
  for (std::size_t i = 0; i < rec_split.size(); ++i) {
    if (rec_split[i] == split) return static_cast<int>(i);
  }
  return -1;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id != static_cast<int>(i)) throw DataError("item ids are not dense");
  }
  for (const auto& q : queries) {
    if (q.words.empty()) throw DataError("query '" + q.text + "' has no words");
    for (int w : q.words) {
      if (w < 0 || w >= num_words()) throw DataError("query word id out of range");
    }
  }
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto& user = users[u];
    if (user.id != static_cast<int>(u)) throw DataError("user ids are not dense");
    for (std::size_t i = 0; i < user.rec.size(); ++i) {
      if (user.rec[i].item < 0 || user.rec[i].item >= num_items()) throw DataError("rec item out of range");
      if (i > 0 && user.rec[i].ts < user.rec[i - 1].ts) throw DataError("rec history not time-sorted");
    }
    for (std::size_t i = 0; i < user.search.size(); ++i) {
      const auto& s = user.search[i];
      if (s.query < 0 || s.query >= num_queries()) throw DataError("query id out of range");
      if (i > 0 && s.ts < user.search[i - 1].ts) throw DataError("search history not time-sorted");
      std::set<int> seen;
      for (int it : s.clicked) {
        if (it < 0 || it >= num_items()) throw DataError("clicked item out of range");
        if (!seen.insert(it).second) throw DataError("duplicate clicked item in one search record");
      }
    }
    if (!user.rec_split.empty() && user.rec_split.size() != user.rec.size()) {
      throw DataError("split labels do not match rec history of user " + user.key);
    }
  }
}

DatasetStats compute_stats(const Dataset& dataset) {
  DatasetStats s;
  s.users = dataset.num_users();
  s.items = dataset.num_items();
  s.queries = dataset.num_queries();
  s.words = dataset.num_words();
  for (const auto& u : dataset.users) {
    s.search_interactions += u.num_search();
    s.rec_interactions += u.num_rec();
    if (u.rec_index(Split::kTest) >= 0) ++s.test_rows;
    if (u.rec_index(Split::kValid) >= 0) ++s.valid_rows;
  }
  return s;
}

std::vector<int> interacted_items(const UserHistory& user) {
  std::vector<int> items;
  for (const auto& r : user.rec) items.push_back(r.item);
  for (const auto& s : user.search) items.insert(items.end(), s.clicked.begin(), s.clicked.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

namespace {

HistoryContext collect(const UserHistory& user, int rec_end, Timestamp cutoff, const std::vector<int>& excluded) {
  auto is_excluded = [&](int item) { return std::find(excluded.begin(), excluded.end(), item) != excluded.end(); };
  HistoryContext ctx;
  for (int i = 0; i < rec_end; ++i) {
    if (!is_excluded(user.rec[i].item)) ctx.rec_items.push_back(user.rec[i].item);
  }
  for (const auto& s : user.search) {
    if (s.ts >= cutoff) break;
    std::vector<int> clicks;
    for (int it : s.clicked) {
      if (!is_excluded(it)) clicks.push_back(it);
    }
    ctx.search.push_back(&s);
    ctx.search_clicks.push_back(std::move(clicks));
  }
  return ctx;
}

std::vector<int> held_out_from(const UserHistory& user, Split from) {
  std::vector<int> out;
  for (std::size_t i = 0; i < user.rec_split.size(); ++i) {
    const auto s = user.rec_split[i];
    if (s == Split::kTrain) continue;
    if (from == Split::kTrain || (from == Split::kValid && s == Split::kTest)) out.push_back(user.rec[i].item);
  }
  return out;
}

}  // namespace

HistoryContext context_before(const UserHistory& user, int target) {
  if (target < 0 || target >= user.num_rec()) throw std::out_of_range("context_before: bad target index");
  const Split split = user.rec_split.empty() ? Split::kTrain : user.rec_split[static_cast<std::size_t>(target)];
  return collect(user, target, user.rec[static_cast<std::size_t>(target)].ts, held_out_from(user, split));
}

HistoryContext training_view(const UserHistory& user) {
  const int valid = user.rec_index(Split::kValid);
  const auto excluded = held_out_from(user, Split::kTrain);
  if (valid < 0) {
    return collect(user, user.num_rec(), std::numeric_limits<Timestamp>::max(), excluded);
  }
  return collect(user, valid, user.rec[static_cast<std::size_t>(valid)].ts, excluded);
}

}  // namespace gserec::data
