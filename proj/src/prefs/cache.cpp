#include "gserec/prefs/cache.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gserec/util/archive.hpp"
#include "gserec/util/hash.hpp"

namespace gserec::prefs {

PreferenceCache::PreferenceCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string PreferenceCache::key(const std::string& client_id, const std::string& input) {
  std::string material = client_id;
  material.push_back('\0');
  material += input;
  return util::sha256_hex(material);
}

std::optional<std::string> PreferenceCache::load_summary(const std::string& key) const {
  std::ifstream in(dir_ / (key + ".summary.txt"), std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void PreferenceCache::store_summary(const std::string& key, const std::string& summary) const {
  util::write_file_atomic(dir_ / (key + ".summary.txt"), summary);
}

std::optional<std::vector<float>> PreferenceCache::load_embedding(const std::string& key) const {
  const auto path = dir_ / (key + ".emb.f32");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  const auto count = util::read_u64_le(in);
  const auto expected = 8 + count * 4;
  if (std::filesystem::file_size(path) != expected) {
    throw std::runtime_error("corrupt embedding cache entry: " + path.string());
  }
  return util::read_f32_le(in, count);
}

void PreferenceCache::store_embedding(const std::string& key, const std::vector<float>& embedding) const {
  std::ostringstream out(std::ios::binary);
  util::write_u64_le(out, embedding.size());
  util::write_f32_le(out, embedding);
  util::write_file_atomic(dir_ / (key + ".emb.f32"), out.str());
}

}  // namespace gserec::prefs
