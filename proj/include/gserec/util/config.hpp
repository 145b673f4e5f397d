#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace gserec::util {

/// Flat `key = value` settings. Lines starting with '#' are comments; later
/// assignments override earlier ones.
using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);

/// Applies a single "key=value" override.
void apply_override(KeyValues& kv, std::string_view assignment);

}  // namespace gserec::util
