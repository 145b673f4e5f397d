#include "gserec/prefs/clients.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "httplib.h"
#include "json.hpp"

#include "gserec/prefs/cache.hpp"
#include "gserec/prefs/prompt.hpp"
#include "gserec/util/hash.hpp"

namespace gserec::prefs {

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const std::set<std::string>& excluded_words() {
  static const std::set<std::string> words = [] {
    std::set<std::string> w{"a",    "an",   "and",   "are",  "as",   "at",  "be",   "by",
                            "for",  "from", "has",   "have", "in",   "is",  "it",   "its",
                            "of",   "on",   "or",    "that", "the",  "this", "to",  "was",
                            "with", "query", "clicked", "no", "search", "recommendation",
                            "history", "s"};
    for (auto kind : {PrefKind::kSearch, PrefKind::kRec}) {
      // Render an empty history to collect every template word.
      data::Dataset empty;
      data::UserHistory user;
      for (auto& t : tokenize(render_prompt(empty, user, kind).text)) w.insert(t);
    }
    return w;
  }();
  return words;
}

bool all_digits(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

struct SplitUrl {
  std::string origin;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ClientError("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body) {
  const auto parts = split_url(endpoint.url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  client.set_write_timeout(endpoint.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);
  auto res = client.Post(parts.path, headers, body.dump(), "application/json");
  if (!res) throw ClientError("request to " + endpoint.url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ClientError("request to " + endpoint.url + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ClientError("malformed response from " + endpoint.url + ": " + e.what());
  }
}

}  // namespace

std::string MockSummaryClient::summarize(const std::string& prompt) {
  const auto& skip = excluded_words();
  std::map<std::string, int> counts;
  for (auto& t : tokenize(prompt)) {
    if (t.size() < 2 || all_digits(t) || skip.count(t)) continue;
    ++counts[t];
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.empty()) return "no preference signal";
  std::string out;
  for (std::size_t i = 0; i < std::min<std::size_t>(5, ranked.size()); ++i) {
    if (i) out += ' ';
    out += ranked[i].first;
  }
  return out;
}

HashEmbeddingClient::HashEmbeddingClient(int dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("embedding dimension must be positive");
}

std::string HashEmbeddingClient::id() const { return "hash-trigram-" + std::to_string(dim_); }

std::vector<float> HashEmbeddingClient::embed(const std::string& text) {
  std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
  for (const auto& token : tokenize(text)) {
    const std::string padded = "#" + token + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      const auto h = util::fnv1a64(std::string_view(padded).substr(i, 3));
      const auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
      acc[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = norm > 0 ? static_cast<float>(acc[i] / norm) : 0.0f;
  return out;
}

ReplaySummaryClient::ReplaySummaryClient(std::filesystem::path cache_dir, std::string recorded_id)
    : cache_dir_(std::move(cache_dir)), recorded_id_(std::move(recorded_id)) {}

std::string ReplaySummaryClient::summarize(const std::string& prompt) {
  const PreferenceCache cache(cache_dir_);
  auto hit = cache.load_summary(PreferenceCache::key(recorded_id_, prompt));
  if (!hit) throw ClientError("replay cache has no summary for this prompt");
  return *hit;
}

ReplayEmbeddingClient::ReplayEmbeddingClient(std::filesystem::path cache_dir, std::string recorded_id)
    : cache_dir_(std::move(cache_dir)), recorded_id_(std::move(recorded_id)) {}

std::vector<float> ReplayEmbeddingClient::embed(const std::string& text) {
  const PreferenceCache cache(cache_dir_);
  auto hit = cache.load_embedding(PreferenceCache::key(recorded_id_, text));
  if (!hit) throw ClientError("replay cache has no embedding for this summary");
  return *hit;
}

HttpEndpoint HttpEndpoint::from_env(const std::string& prefix) {
  auto get = [&](const char* suffix) {
    const char* v = std::getenv((prefix + suffix).c_str());
    return std::string(v ? v : "");
  };
  HttpEndpoint e;
  e.url = get("_URL");
  e.model = get("_MODEL");
  e.api_key = get("_KEY");
  if (e.url.empty() || e.model.empty()) {
    throw ClientError(prefix + "_URL and " + prefix + "_MODEL must be set");
  }
  return e;
}

HttpSummaryClient::HttpSummaryClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string HttpSummaryClient::summarize(const std::string& prompt) {
  nlohmann::json body = {{"model", endpoint_.model},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  const auto reply = post_json(endpoint_, body);
  try {
    auto text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (text.empty()) throw ClientError("empty completion");
    return text;
  } catch (const nlohmann::json::exception& e) {
    throw ClientError(std::string("unexpected completion payload: ") + e.what());
  }
}

HttpEmbeddingClient::HttpEmbeddingClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::vector<float> HttpEmbeddingClient::embed(const std::string& text) {
  nlohmann::json body = {{"model", endpoint_.model}, {"input", text}};
  const auto reply = post_json(endpoint_, body);
  try {
    return reply.at("data").at(0).at("embedding").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw ClientError(std::string("unexpected embedding payload: ") + e.what());
  }
}

}  // namespace gserec::prefs
