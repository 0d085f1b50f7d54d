#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccd/errors.hpp"

namespace ccd {

// Token table with four reserved ids. Non-reserved ids are assigned by
// descending frequency, ties broken lexicographically.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocab();
  // Rebuild from an explicit token list (e.g. a corpus file header). The
  // first four entries must be the reserved symbols.
  static Vocab from_tokens(const std::vector<std::string>& tokens);
  // Assigns ids 4.. to `counts` keys by frequency desc, then lexicographic.
  static Vocab from_counts(const std::map<std::string, long>& counts);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return to_id_.count(token) > 0; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> to_id_;
};

}  // namespace ccd
