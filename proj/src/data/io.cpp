#include "gserec/data/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "gserec/data/split.hpp"

namespace gserec::data {

namespace {

using nlohmann::json;

class Interner {
 public:
  int find(const std::string& key) const {
    auto it = ids_.find(key);
    return it == ids_.end() ? -1 : it->second;
  }
  std::pair<int, bool> intern(const std::string& key) {
    auto [it, inserted] = ids_.emplace(key, static_cast<int>(ids_.size()));
    return {it->second, inserted};
  }

 private:
  std::unordered_map<std::string, int> ids_;
};

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

std::filesystem::path sibling_items_path(const std::filesystem::path& records) {
  auto out = records.parent_path() / records.stem();
  out += ".items.jsonl";
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat /*format*/,
                     std::optional<std::filesystem::path> items_path) {
  Dataset ds;
  Interner items, users, words, queries;

  const auto table = items_path.value_or(sibling_items_path(path));
  const bool declared = std::filesystem::exists(table);
  if (items_path && !declared) throw DataError("item table not found: " + table.string());
  if (declared) {
    std::ifstream in(table);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = json::parse(line);
        const auto key = j.at("item").get<std::string>();
        auto [id, inserted] = items.intern(key);
        if (!inserted) fail(table, line_no, "duplicate item '" + key + "'");
        ds.items.push_back(Item{id, key, j.value("text", std::string{})});
      } catch (const json::exception& e) {
        fail(table, line_no, e.what());
      }
    }
  }

  auto item_ref = [&](const std::string& key, std::size_t line_no) {
    if (declared) {
      const int id = items.find(key);
      if (id < 0) fail(path, line_no, "reference to undeclared item '" + key + "'");
      return id;
    }
    auto [id, inserted] = items.intern(key);
    if (inserted) ds.items.push_back(Item{id, key, {}});
    return id;
  };

  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(path, line_no, std::string("parse error: ") + e.what());
    }
    try {
      UserHistory user;
      user.key = j.at("user").get<std::string>();
      auto [uid, fresh] = users.intern(user.key);
      if (!fresh) fail(path, line_no, "duplicate user '" + user.key + "'");
      user.id = uid;
      for (const auto& r : j.value("rec", json::array())) {
        user.rec.push_back(RecEvent{item_ref(r.at("item").get<std::string>(), line_no), r.at("ts").get<Timestamp>()});
      }
      for (const auto& s : j.value("search", json::array())) {
        const auto text_words = split_words(s.at("query").get<std::string>());
        if (text_words.empty()) fail(path, line_no, "query with no words");
        std::string text;
        for (const auto& w : text_words) text += (text.empty() ? "" : " ") + w;
        auto [qid, new_query] = queries.intern(text);
        if (new_query) {
          Query q{qid, text, {}};
          for (const auto& w : text_words) {
            auto [wid, new_word] = words.intern(w);
            if (new_word) ds.vocab.push_back(w);
            q.words.push_back(wid);
          }
          ds.queries.push_back(std::move(q));
        }
        SearchRecord rec{qid, {}, s.at("ts").get<Timestamp>()};
        for (const auto& c : s.value("clicked", json::array())) {
          const int id = item_ref(c.get<std::string>(), line_no);
          if (std::find(rec.clicked.begin(), rec.clicked.end(), id) != rec.clicked.end()) {
            fail(path, line_no, "duplicate clicked item '" + c.get<std::string>() + "' in one search record");
          }
          rec.clicked.push_back(id);
        }
        user.search.push_back(std::move(rec));
      }
      std::stable_sort(user.rec.begin(), user.rec.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });
      std::stable_sort(user.search.begin(), user.search.end(),
                       [](const auto& a, const auto& b) { return a.ts < b.ts; });
      ds.users.push_back(std::move(user));
    } catch (const json::exception& e) {
      fail(path, line_no, e.what());
    }
  }

  ds = leave_one_out_split(std::move(ds));
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& u : dataset.users) {
    json j;
    j["user"] = u.key;
    j["rec"] = json::array();
    for (const auto& r : u.rec) j["rec"].push_back({{"item", dataset.items[r.item].key}, {"ts", r.ts}});
    j["search"] = json::array();
    for (const auto& s : u.search) {
      json clicked = json::array();
      for (int it : s.clicked) clicked.push_back(dataset.items[it].key);
      j["search"].push_back({{"query", dataset.queries[s.query].text}, {"clicked", clicked}, {"ts", s.ts}});
    }
    out << j.dump() << '\n';
  }
  std::ofstream items(sibling_items_path(path), std::ios::trunc);
  if (!items) throw DataError("cannot write item table next to " + path.string());
  for (const auto& it : dataset.items) items << json{{"item", it.key}, {"text", it.text}}.dump() << '\n';
}

}  // namespace gserec::data
