#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gserec/rq/rqvae.hpp"

namespace gserec::rq {

/// Per-user code sequences, indexed [user][level].
struct CodeAssignments {
  int levels = 0;
  int codebook_size = 0;
  std::vector<std::vector<int>> search;
  std::vector<std::vector<int>> rec;

  int num_users() const { return static_cast<int>(search.size()); }
  void validate() const;
};

/// Deterministic: quantizes every user's v_s / v_r with the frozen model.
CodeAssignments export_codes(const RqVae& model, const Matrix& vs, const Matrix& vr);

/// JSONL, one {"user", "s", "r"} object per user in id order.
void write_codes(const std::filesystem::path& path, const CodeAssignments& codes,
                 std::span<const std::string> user_keys);
/// Every user in `user_keys` must appear exactly once. `codebook_size` of 0
/// infers it as the largest index + 1.
CodeAssignments read_codes(const std::filesystem::path& path, std::span<const std::string> user_keys,
                           int codebook_size = 0);

/// exp(entropy) of the code histogram at one level.
double code_perplexity(const std::vector<std::vector<int>>& codes, int level);

}  // namespace gserec::rq
