#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace gserec::util {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace gserec::util
