#include "gserec/prefs/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include "json.hpp"

#include "gserec/prefs/cache.hpp"
#include "gserec/util/archive.hpp"

namespace gserec::prefs {

namespace {

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

SummarizeResult summarize_preferences(SummaryClient& client, std::span<const PromptText> prompts,
                                      const std::filesystem::path& cache_dir,
                                      const PipelineOptions& options) {
  const PreferenceCache cache(cache_dir);
  const std::string client_id = client.id();
  std::vector<std::optional<std::string>> summaries(prompts.size());
  std::vector<std::optional<FailedPrompt>> failed(prompts.size());
  std::atomic<int> hits{0}, calls{0};

  parallel_for(prompts.size(), options.workers, [&](std::size_t i) {
    const auto& p = prompts[i];
    const auto key = PreferenceCache::key(client_id, p.text);
    if (auto hit = cache.load_summary(key)) {
      ++hits;
      summaries[i] = std::move(*hit);
      return;
    }
    std::string last_error;
    const int attempts = 1 + std::max(0, options.retries);
    for (int a = 0; a < attempts; ++a) {
      ++calls;
      try {
        auto text = client.summarize(p.text);
        if (text.empty()) throw ClientError("empty summary");
        cache.store_summary(key, text);
        summaries[i] = std::move(text);
        return;
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    failed[i] = FailedPrompt{p.user_id, p.kind, attempts, last_error};
  });

  SummarizeResult result;
  result.cache_hits = hits;
  result.client_calls = calls;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (summaries[i]) {
      result.records.push_back(PreferenceRecord{prompts[i].user_id, prompts[i].kind, *summaries[i], {}});
    } else {
      result.failures.push_back(*failed[i]);
    }
  }
  return result;
}

EmbedResult embed_preferences(EmbeddingClient& embedder, std::vector<PreferenceRecord> records,
                              const std::filesystem::path& cache_dir, const PipelineOptions& options) {
  const PreferenceCache cache(cache_dir);
  const std::string embedder_id = embedder.id();
  for (const auto& r : records) {
    if (r.summary.empty()) {
      throw PrefsError("empty summary for user " + std::to_string(r.user_id) + " (" + to_string(r.kind) + ")");
    }
  }
  std::atomic<int> hits{0}, calls{0};
  std::mutex error_mutex;
  std::string first_error;

  parallel_for(records.size(), options.workers, [&](std::size_t i) {
    auto& r = records[i];
    const auto key = PreferenceCache::key(embedder_id, r.summary);
    try {
      if (auto hit = cache.load_embedding(key)) {
        ++hits;
        r.embedding = std::move(*hit);
        return;
      }
      ++calls;
      r.embedding = embedder.embed(r.summary);
      for (float v : r.embedding) {
        if (!std::isfinite(v)) throw PrefsError("embedder returned a non-finite value");
      }
      cache.store_embedding(key, r.embedding);
    } catch (const std::exception& e) {
      std::lock_guard lock(error_mutex);
      if (first_error.empty()) {
        first_error = "user " + std::to_string(r.user_id) + " (" + to_string(r.kind) + "): " + e.what();
      }
    }
  });
  if (!first_error.empty()) throw PrefsError("embedding failed for " + first_error);

  if (!records.empty()) {
    const auto width = records.front().embedding.size();
    for (const auto& r : records) {
      if (r.embedding.size() != width || width == 0) {
        throw PrefsError("embedding width mismatch: user " + std::to_string(r.user_id) + " (" +
                         to_string(r.kind) + ") has " + std::to_string(r.embedding.size()) +
                         ", expected " + std::to_string(width));
      }
    }
  }
  return EmbedResult{std::move(records), hits, calls};
}

void write_preferences(const std::filesystem::path& path, std::span<const PreferenceRecord> records,
                       std::span<const std::string> user_keys) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json line = {{"user", user_keys[static_cast<std::size_t>(r.user_id)]},
                           {"kind", to_string(r.kind)},
                           {"summary", r.summary},
                           {"embedding", r.embedding}};
    out += line.dump();
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

std::vector<PreferenceRecord> read_preferences(const std::filesystem::path& path,
                                               std::span<const std::string> user_keys) {
  std::unordered_map<std::string, int> ids;
  for (std::size_t i = 0; i < user_keys.size(); ++i) ids.emplace(user_keys[i], static_cast<int>(i));
  std::ifstream in(path);
  if (!in) throw PrefsError("cannot open " + path.string());
  std::vector<PreferenceRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto key = j.at("user").get<std::string>();
      const auto it = ids.find(key);
      if (it == ids.end()) throw PrefsError("unknown user " + key);
      records.push_back(PreferenceRecord{it->second, parse_pref_kind(j.at("kind").get<std::string>()),
                                         j.at("summary").get<std::string>(),
                                         j.value("embedding", std::vector<float>{})});
    } catch (const std::exception& e) {
      throw PrefsError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_failure_manifest(const std::filesystem::path& path, std::span<const FailedPrompt> failures,
                            std::span<const std::string> user_keys) {
  std::string out;
  for (const auto& f : failures) {
    nlohmann::json line = {{"user", user_keys[static_cast<std::size_t>(f.user_id)]},
                           {"kind", to_string(f.kind)},
                           {"attempts", f.attempts},
                           {"error", f.error}};
    out += line.dump();
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

PreferenceMatrices preference_matrices(std::span<const PreferenceRecord> records, int num_users) {
  if (records.empty()) throw PrefsError("no preference records");
  const auto width = static_cast<Eigen::Index>(records.front().embedding.size());
  if (width == 0) throw PrefsError("preference records have not been embedded");
  PreferenceMatrices m{Matrix::Zero(num_users, width), Matrix::Zero(num_users, width)};
  std::vector<char> seen(static_cast<std::size_t>(num_users) * 2, 0);
  for (const auto& r : records) {
    if (r.user_id < 0 || r.user_id >= num_users) throw PrefsError("preference record for unknown user");
    if (static_cast<Eigen::Index>(r.embedding.size()) != width) throw PrefsError("embedding width mismatch");
    auto& target = r.kind == PrefKind::kSearch ? m.search : m.rec;
    for (Eigen::Index c = 0; c < width; ++c) target(r.user_id, c) = r.embedding[static_cast<std::size_t>(c)];
    seen[static_cast<std::size_t>(r.user_id) * 2 + (r.kind == PrefKind::kRec)] = 1;
  }
  for (int u = 0; u < num_users; ++u) {
    for (int k = 0; k < 2; ++k) {
      if (!seen[static_cast<std::size_t>(u) * 2 + k]) {
        throw PrefsError("user " + std::to_string(u) + " lacks a " + (k ? "rec" : "search") + " preference");
      }
    }
  }
  return m;
}

}  // namespace gserec::prefs
