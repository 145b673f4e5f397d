#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gserec::prefs {

/// Content-addressed store: <dir>/<sha256(client id, NUL, input)>.summary.txt
/// for summaries and <...>.emb.f32 (u64 count + little-endian f32) for
/// embeddings. Writes go through temp-file + rename, so concurrent writers
/// of the same key are safe.
class PreferenceCache {
 public:
  explicit PreferenceCache(std::filesystem::path dir);

  static std::string key(const std::string& client_id, const std::string& input);

  std::optional<std::string> load_summary(const std::string& key) const;
  void store_summary(const std::string& key, const std::string& summary) const;
  std::optional<std::vector<float>> load_embedding(const std::string& key) const;
  void store_embedding(const std::string& key, const std::vector<float>& embedding) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace gserec::prefs
