#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gserec/prefs/clients.hpp"
#include "gserec/prefs/prompt.hpp"
#include "gserec/util/matrix.hpp"

namespace gserec::prefs {

class PrefsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PreferenceRecord {
  int user_id = 0;
  PrefKind kind = PrefKind::kSearch;
  std::string summary;
  std::vector<float> embedding;  ///< empty until embedded
};

struct FailedPrompt {
  int user_id = 0;
  PrefKind kind = PrefKind::kSearch;
  int attempts = 0;
  std::string error;
};

struct PipelineOptions {
  int retries = 3;  ///< extra attempts after the first failure
  int workers = 1;
};

struct SummarizeResult {
  std::vector<PreferenceRecord> records;  ///< successful prompts, input order
  std::vector<FailedPrompt> failures;
  int cache_hits = 0;
  int client_calls = 0;
};

/// Cached, retrying summarization. A prompt either yields a cached summary
/// or lands in `failures`; other prompts are unaffected.
SummarizeResult summarize_preferences(SummaryClient& client, std::span<const PromptText> prompts,
                                      const std::filesystem::path& cache_dir,
                                      const PipelineOptions& options = {});

struct EmbedResult {
  std::vector<PreferenceRecord> records;
  int cache_hits = 0;
  int client_calls = 0;
};

/// Fills `embedding` for each record; cached by (embedder id, summary).
/// Throws PrefsError on empty summaries, non-finite values or a width
/// mismatch within the batch.
EmbedResult embed_preferences(EmbeddingClient& embedder, std::vector<PreferenceRecord> records,
                              const std::filesystem::path& cache_dir,
                              const PipelineOptions& options = {});

/// One JSON object per line: user (key), kind, summary, embedding.
void write_preferences(const std::filesystem::path& path, std::span<const PreferenceRecord> records,
                       std::span<const std::string> user_keys);
/// Maps user keys back to ids through `user_keys`.
std::vector<PreferenceRecord> read_preferences(const std::filesystem::path& path,
                                               std::span<const std::string> user_keys);

void write_failure_manifest(const std::filesystem::path& path, std::span<const FailedPrompt> failures,
                            std::span<const std::string> user_keys);

/// Dense v_s / v_r matrices (num_users x d_e); every user needs both kinds.
struct PreferenceMatrices {
  Matrix search;
  Matrix rec;
};
PreferenceMatrices preference_matrices(std::span<const PreferenceRecord> records, int num_users);

}  // namespace gserec::prefs
