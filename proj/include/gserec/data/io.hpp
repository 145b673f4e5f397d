#pragma once

#include <filesystem>
#include <optional>

#include "gserec/data/dataset.hpp"

namespace gserec::data {

enum class DatasetFormat { kJsonl };

/// `<dir>/<stem>.items.jsonl` for `<dir>/<stem>.jsonl`.
std::filesystem::path sibling_items_path(const std::filesystem::path& records);

/// Loads user records, one JSON object per line:
///   {"user": str, "rec": [{"item": str, "ts": int}],
///    "search": [{"query": str, "clicked": [str], "ts": int}]}
/// and, when present, the item table {"item": str, "text": str} per line.
/// With an item table every referenced item must be declared in it; without
/// one, items are declared by first appearance. Histories are time-sorted
/// (stable) and leave-one-out labels are attached.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format = DatasetFormat::kJsonl,
                     std::optional<std::filesystem::path> items_path = std::nullopt);

/// Writes the records file and its sibling item table.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace gserec::data
