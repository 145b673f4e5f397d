#include "gserec/prefs/prompt.hpp"

#include <algorithm>
#include <stdexcept>

namespace gserec::prefs {

namespace {

const std::string kSearchInstruction =
    "Please analyze the queries and clicked items in the user's search history, and summarize the "
    "user's interest topics, areas of focus, style tendencies, or preference types.";
const std::string kSearchBody =
    "Here is the user's search history {history}, where each record contains the user's query and "
    "the items the user clicked on under that query.";
const std::string kRecInstruction =
    "Please analyze the provided user recommendation history and summarize the user's possible "
    "interests, style tendencies, and preferred item types.";
const std::string kRecBody =
    "Here is the user's recommendation history {history}, where each record represents an item the "
    "user has clicked on.";

const std::string& item_label(const data::Dataset& dataset, int item) {
  const auto& it = dataset.items.at(static_cast<std::size_t>(item));
  return it.text.empty() ? it.key : it.text;
}

}  // namespace

const char* to_string(PrefKind kind) { return kind == PrefKind::kSearch ? "search" : "rec"; }

PrefKind parse_pref_kind(const std::string& text) {
  if (text == "search") return PrefKind::kSearch;
  if (text == "rec") return PrefKind::kRec;
  throw std::invalid_argument("unknown preference kind: " + text);
}

const std::string& prompt_instruction(PrefKind kind) {
  return kind == PrefKind::kSearch ? kSearchInstruction : kRecInstruction;
}

std::string serialize_history(const data::Dataset& dataset, const data::HistoryContext& context,
                              PrefKind kind, int window) {
  if (window < 1) throw std::invalid_argument("prompt window must be positive");
  std::string out;
  if (kind == PrefKind::kSearch) {
    const std::size_t n = context.search.size();
    if (n == 0) return "(no search history)";
    const std::size_t start = n > static_cast<std::size_t>(window) ? n - static_cast<std::size_t>(window) : 0;
    for (std::size_t i = start; i < n; ++i) {
      if (!out.empty()) out += '\n';
      out += std::to_string(i - start + 1) + ". query: ";
      out += dataset.queries.at(static_cast<std::size_t>(context.search[i]->query)).text;
      out += "; clicked: ";
      const auto& clicks = context.search_clicks[i];
      for (std::size_t c = 0; c < clicks.size(); ++c) {
        if (c) out += "; ";
        out += item_label(dataset, clicks[c]);
      }
    }
  } else {
    const std::size_t n = context.rec_items.size();
    if (n == 0) return "(no recommendation history)";
    const std::size_t start = n > static_cast<std::size_t>(window) ? n - static_cast<std::size_t>(window) : 0;
    for (std::size_t i = start; i < n; ++i) {
      if (!out.empty()) out += '\n';
      out += std::to_string(i - start + 1) + ". " + item_label(dataset, context.rec_items[i]);
    }
  }
  return out;
}

PromptText render_prompt(const data::Dataset& dataset, const data::UserHistory& user, PrefKind kind,
                         int window) {
  const auto context = data::training_view(user);
  std::string body = kind == PrefKind::kSearch ? kSearchBody : kRecBody;
  const auto pos = body.find("{history}");
  body.replace(pos, 9, "\n" + serialize_history(dataset, context, kind, window) + "\n");
  return PromptText{kind, user.id, prompt_instruction(kind) + "\n" + body};
}

std::vector<PromptText> render_all_prompts(const data::Dataset& dataset, int window) {
  std::vector<PromptText> prompts;
  prompts.reserve(dataset.users.size() * 2);
  for (const auto& user : dataset.users) {
    prompts.push_back(render_prompt(dataset, user, PrefKind::kSearch, window));
    prompts.push_back(render_prompt(dataset, user, PrefKind::kRec, window));
  }
  return prompts;
}

}  // namespace gserec::prefs
