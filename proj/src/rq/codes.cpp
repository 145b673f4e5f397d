#include "gserec/rq/codes.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

#include "gserec/util/archive.hpp"

namespace gserec::rq {

void CodeAssignments::validate() const {
  if (search.size() != rec.size()) throw std::runtime_error("codes: channel user counts differ");
  for (const auto* channel : {&search, &rec}) {
    for (const auto& row : *channel) {
      if (static_cast<int>(row.size()) != levels) throw std::runtime_error("codes: wrong number of levels");
      for (int k : row) {
        if (k < 0 || k >= codebook_size) throw std::runtime_error("codes: index out of range");
      }
    }
  }
}

CodeAssignments export_codes(const RqVae& model, const Matrix& vs, const Matrix& vr) {
  if (vs.rows() != vr.rows()) throw std::invalid_argument("export_codes: every user needs both channels");
  CodeAssignments out;
  out.levels = model.config().levels;
  out.codebook_size = model.config().codebook_size;
  out.search = model.quantize(Channel::kSearch, vs).codes;
  out.rec = model.quantize(Channel::kRec, vr).codes;
  return out;
}

void write_codes(const std::filesystem::path& path, const CodeAssignments& codes,
                 std::span<const std::string> user_keys) {
  if (user_keys.size() != codes.search.size()) throw std::invalid_argument("write_codes: user count mismatch");
  std::string out;
  for (std::size_t u = 0; u < codes.search.size(); ++u) {
    out += nlohmann::json{{"user", user_keys[u]}, {"s", codes.search[u]}, {"r", codes.rec[u]}}.dump();
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

CodeAssignments read_codes(const std::filesystem::path& path, std::span<const std::string> user_keys,
                           int codebook_size) {
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < user_keys.size(); ++i) ids.emplace(user_keys[i], i);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CodeAssignments codes;
  codes.search.resize(user_keys.size());
  codes.rec.resize(user_keys.size());
  std::vector<char> seen(user_keys.size(), 0);
  std::string line;
  int line_no = 0;
  int max_code = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + e.what());
    }
    const auto key = j.at("user").get<std::string>();
    const auto it = ids.find(key);
    if (it == ids.end()) throw std::runtime_error(where + "unknown user " + key);
    if (seen[it->second]) throw std::runtime_error(where + "duplicate user " + key);
    seen[it->second] = 1;
    auto s = j.at("s").get<std::vector<int>>();
    auto r = j.at("r").get<std::vector<int>>();
    if (codes.levels == 0) codes.levels = static_cast<int>(s.size());
    if (static_cast<int>(s.size()) != codes.levels || static_cast<int>(r.size()) != codes.levels) {
      throw std::runtime_error(where + "inconsistent number of levels");
    }
    for (int k : s) max_code = std::max(max_code, k);
    for (int k : r) max_code = std::max(max_code, k);
    codes.search[it->second] = std::move(s);
    codes.rec[it->second] = std::move(r);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw std::runtime_error(path.string() + ": no codes for user " + user_keys[i]);
  }
  codes.codebook_size = codebook_size > 0 ? codebook_size : max_code + 1;
  codes.validate();
  return codes;
}

double code_perplexity(const std::vector<std::vector<int>>& codes, int level) {
  std::map<int, long> hist;
  for (const auto& row : codes) ++hist[row.at(static_cast<std::size_t>(level))];
  const double n = static_cast<double>(codes.size());
  double entropy = 0.0;
  for (const auto& [code, count] : hist) {
    const double p = static_cast<double>(count) / n;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

}  // namespace gserec::rq
