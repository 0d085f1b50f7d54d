#include "ccd/vocab.hpp"

#include <algorithm>

#include "ccd/rng.hpp"

namespace ccd {

namespace {
const std::vector<std::string> kReservedTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocab::Vocab() {
  for (const auto& t : kReservedTokens) {
    to_id_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < static_cast<size_t>(kReserved) + 1)
    throw DataError("vocab token list too small (need 4 reserved + at least 1 token)");
  for (int i = 0; i < kReserved; ++i) {
    if (tokens[static_cast<size_t>(i)] != kReservedTokens[static_cast<size_t>(i)])
      throw DataError("vocab token list does not start with the reserved symbols");
  }
  Vocab v;
  for (size_t i = static_cast<size_t>(kReserved); i < tokens.size(); ++i) {
    if (v.to_id_.count(tokens[i])) throw DataError("duplicate token in vocab list: " + tokens[i]);
    v.to_id_[tokens[i]] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(tokens[i]);
  }
  return v;
}

Vocab Vocab::from_counts(const std::map<std::string, long>& counts) {
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, cnt] : items) {
    (void)cnt;
    for (const auto& r : kReservedTokens)
      if (tok == r) throw DataError("corpus text contains a reserved symbol: " + tok);
    v.to_id_[tok] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  if (v.size() < 5) throw DataError("vocabulary too small (needs at least one content token)");
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = to_id_.find(token);
  return it == to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw InputError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

uint64_t Vocab::hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\x1f", h);
  }
  return h;
}

}  // namespace ccd
