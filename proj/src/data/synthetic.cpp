#include "gserec/data/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

#include "gserec/data/split.hpp"
#include "gserec/util/rng.hpp"

namespace gserec::data {

namespace {

// Two-syllable pseudo-words, unique per index.
std::string pseudo_word(int index) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  const int syllables = static_cast<int>(consonants.size() * vowels.size());
  auto syllable = [&](int s) {
    return std::string{consonants[static_cast<std::size_t>(s) / vowels.size()],
                       vowels[static_cast<std::size_t>(s) % vowels.size()]};
  };
  std::string word = syllable(index % syllables) + syllable((index / syllables) % syllables);
  if (index >= syllables * syllables) word += std::to_string(index / (syllables * syllables));
  return word;
}

int other_cluster(int home, int clusters, util::Rng& rng) {
  if (clusters == 1) return home;
  const int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(clusters - 1)));
  return pick >= home ? pick + 1 : pick;
}

int choose(int lo, int hi, util::Rng& rng) {
  if (hi <= lo) return lo;
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

SyntheticCorpus generate_synthetic_dataset(const SynthConfig& c) {
  if (c.clusters < 1) throw std::invalid_argument("synthetic: need at least one cluster");
  if (c.clusters > c.items) throw std::invalid_argument("synthetic: cluster count exceeds item count");
  if (c.users < 1 || c.min_rec < 0 || c.max_rec < c.min_rec || c.sparse_cap < 0 ||
      c.max_search < c.sparse_cap || c.words_per_cluster < 1 || c.max_query_words < 1 || c.max_clicks < 1) {
    throw std::invalid_argument("synthetic: inconsistent size settings");
  }
  util::Rng rng(c.seed);
  SyntheticCorpus out;
  auto& ds = out.dataset;

  const int cluster_words = c.clusters * c.words_per_cluster;
  for (int w = 0; w < cluster_words + c.generic_words; ++w) {
    ds.vocab.push_back(pseudo_word(w));
    out.word_cluster.push_back(w < cluster_words ? w / c.words_per_cluster : -1);
  }
  auto cluster_word = [&](int cluster) {
    return cluster * c.words_per_cluster + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.words_per_cluster)));
  };

  out.item_cluster.resize(static_cast<std::size_t>(c.items));
  for (int i = 0; i < c.items; ++i) out.item_cluster[static_cast<std::size_t>(i)] = i % c.clusters;
  rng.shuffle(out.item_cluster.begin(), out.item_cluster.end());
  std::vector<std::vector<int>> members(static_cast<std::size_t>(c.clusters));
  for (int i = 0; i < c.items; ++i) {
    const int cl = out.item_cluster[static_cast<std::size_t>(i)];
    members[static_cast<std::size_t>(cl)].push_back(i);
    std::set<int> words;
    while (static_cast<int>(words.size()) < std::min(3, c.words_per_cluster)) words.insert(cluster_word(cl));
    std::string text;
    for (int w : words) text += ds.vocab[static_cast<std::size_t>(w)] + " ";
    if (c.generic_words > 0) {
      text += ds.vocab[static_cast<std::size_t>(cluster_words + static_cast<int>(rng.below(
                                                                     static_cast<std::uint64_t>(c.generic_words))))];
    } else {
      text.pop_back();
    }
    ds.items.push_back(Item{i, "i" + std::to_string(i), text});
  }

  std::vector<int> query_of_text_index;
  for (int u = 0; u < c.users; ++u) {
    const int home = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.clusters)));
    const bool sparse = rng.uniform() < c.sparse_fraction;
    const int n_rec = choose(c.min_rec, c.max_rec, rng);
    const int n_search = sparse ? choose(0, c.sparse_cap, rng) : choose(c.sparse_cap + 1, c.max_search, rng);
    out.user_cluster.push_back(home);
    out.sparse_user.push_back(sparse);

    std::vector<bool> is_search(static_cast<std::size_t>(n_rec + n_search), false);
    std::fill(is_search.begin(), is_search.begin() + n_search, true);
    rng.shuffle(is_search.begin(), is_search.end());

    std::set<int> used;
    // Draws an unused item, preferring the given cluster.
    auto draw_item = [&](int cluster) {
      const auto& pool = members[static_cast<std::size_t>(cluster)];
      for (int attempt = 0; attempt < 64; ++attempt) {
        const int it = pool[static_cast<std::size_t>(rng.below(pool.size()))];
        if (used.insert(it).second) return it;
      }
      for (int it = 0; it < c.items; ++it) {
        if (used.insert(it).second) return it;
      }
      return -1;
    };

    UserHistory user;
    user.id = u;
    user.key = "u" + std::to_string(u);
    for (std::size_t e = 0; e < is_search.size(); ++e) {
      const Timestamp ts = static_cast<Timestamp>(e + 1);
      if (!is_search[e]) {
        const int cl = rng.uniform() < c.rec_in_cluster ? home : other_cluster(home, c.clusters, rng);
        const int it = draw_item(cl);
        if (it >= 0) user.rec.push_back(RecEvent{it, ts});
        continue;
      }
      const int cl = rng.uniform() < c.search_in_cluster ? home : other_cluster(home, c.clusters, rng);
      std::set<int> words;
      const int n_words = choose(1, std::min(c.max_query_words, c.words_per_cluster), rng);
      while (static_cast<int>(words.size()) < n_words) words.insert(cluster_word(cl));
      std::string text;
      for (int w : words) text += (text.empty() ? "" : " ") + ds.vocab[static_cast<std::size_t>(w)];
      int qid = -1;
      for (const auto& q : ds.queries) {
        if (q.text == text) {
          qid = q.id;
          break;
        }
      }
      if (qid < 0) {
        qid = ds.num_queries();
        ds.queries.push_back(Query{qid, text, std::vector<int>(words.begin(), words.end())});
      }
      SearchRecord rec{qid, {}, ts};
      const int n_clicks = choose(1, c.max_clicks, rng);
      for (int k = 0; k < n_clicks; ++k) {
        const int it = draw_item(cl);
        if (it >= 0) rec.clicked.push_back(it);
      }
      user.search.push_back(std::move(rec));
    }
    ds.users.push_back(std::move(user));
  }

  ds = leave_one_out_split(std::move(ds));
  ds.validate();
  return out;
}

}  // namespace gserec::data
