#pragma once

#include <string>
#include <vector>

#include "gserec/data/dataset.hpp"

namespace gserec::prefs {

enum class PrefKind { kSearch, kRec };

const char* to_string(PrefKind kind);
PrefKind parse_pref_kind(const std::string& text);

struct PromptText {
  PrefKind kind = PrefKind::kSearch;
  int user_id = 0;
  std::string text;
};

inline constexpr int kDefaultPromptWindow = 50;

/// Fixed instruction text placed before the history for each kind.
const std::string& prompt_instruction(PrefKind kind);

/// Numbered lines, one per event, keeping only the last `window` events.
/// Search lines read "N. query: <text>; clicked: <a; b>", rec lines
/// "N. <item text>". Items without text fall back to their key.
std::string serialize_history(const data::Dataset& dataset, const data::HistoryContext& context,
                              PrefKind kind, int window = kDefaultPromptWindow);

/// Renders the prompt from the user's training view, so held-out
/// validation/test items never reach the summarizer.
PromptText render_prompt(const data::Dataset& dataset, const data::UserHistory& user, PrefKind kind,
                         int window = kDefaultPromptWindow);

/// Two prompts per user, search first.
std::vector<PromptText> render_all_prompts(const data::Dataset& dataset,
                                           int window = kDefaultPromptWindow);

}  // namespace gserec::prefs
