#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace gserec::prefs {

class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Turns a prompt into a free-text preference summary. Implementations must
/// tolerate concurrent calls.
class SummaryClient {
 public:
  virtual ~SummaryClient() = default;
  /// Stable identifier; part of every cache key.
  virtual std::string id() const = 0;
  virtual std::string summarize(const std::string& prompt) = 0;
};

/// Frozen text encoder producing fixed-width vectors.
class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  virtual std::string id() const = 0;
  virtual std::vector<float> embed(const std::string& text) = 0;
};

/// Top-5 most frequent content words of the history part of the prompt,
/// ties broken lexicographically.
class MockSummaryClient : public SummaryClient {
 public:
  std::string id() const override { return "mock"; }
  std::string summarize(const std::string& prompt) override;
};

/// Bag of character trigrams hashed into `dim` signed buckets, L2-normalized.
class HashEmbeddingClient : public EmbeddingClient {
 public:
  explicit HashEmbeddingClient(int dim);
  std::string id() const override;
  std::vector<float> embed(const std::string& text) override;
  int dim() const { return dim_; }

 private:
  int dim_;
};

/// Serves summaries from a recorded cache under the original client id.
/// A miss is a hard error.
class ReplaySummaryClient : public SummaryClient {
 public:
  ReplaySummaryClient(std::filesystem::path cache_dir, std::string recorded_id);
  std::string id() const override { return recorded_id_; }
  std::string summarize(const std::string& prompt) override;

 private:
  std::filesystem::path cache_dir_;
  std::string recorded_id_;
};

class ReplayEmbeddingClient : public EmbeddingClient {
 public:
  ReplayEmbeddingClient(std::filesystem::path cache_dir, std::string recorded_id);
  std::string id() const override { return recorded_id_; }
  std::vector<float> embed(const std::string& text) override;

 private:
  std::filesystem::path cache_dir_;
  std::string recorded_id_;
};

struct HttpEndpoint {
  std::string url;  ///< full URL, e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string api_key;
  int timeout_seconds = 120;

  /// Reads <prefix>_URL, <prefix>_MODEL and <prefix>_KEY; URL and model are required.
  static HttpEndpoint from_env(const std::string& prefix);
};

/// OpenAI-style chat completions endpoint, single user turn.
class HttpSummaryClient : public SummaryClient {
 public:
  explicit HttpSummaryClient(HttpEndpoint endpoint);
  std::string id() const override { return "http:" + endpoint_.model; }
  std::string summarize(const std::string& prompt) override;

 private:
  HttpEndpoint endpoint_;
};

/// OpenAI-style embeddings endpoint.
class HttpEmbeddingClient : public EmbeddingClient {
 public:
  explicit HttpEmbeddingClient(HttpEndpoint endpoint);
  std::string id() const override { return "http:" + endpoint_.model; }
  std::vector<float> embed(const std::string& text) override;

 private:
  HttpEndpoint endpoint_;
};

}  // namespace gserec::prefs
