#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gserec/util/matrix.hpp"

namespace gserec::util {

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Self-describing checkpoint: an 8-byte magic, a little-endian u64 header
/// length, a JSON header (kind, metadata, tensor table) and then each tensor
/// as row-major little-endian f32.
struct Archive {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Matrix& tensor(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

void write_f32_le(std::ostream& out, std::span<const float> values);
std::vector<float> read_f32_le(std::istream& in, std::size_t count);
void write_u64_le(std::ostream& out, std::uint64_t value);
std::uint64_t read_u64_le(std::istream& in);

/// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Rounds every entry to the nearest f32, matching what an archive stores.
void round_to_f32(Matrix& m);

}  // namespace gserec::util
