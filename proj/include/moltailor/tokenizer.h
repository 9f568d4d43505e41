#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "moltailor/error.h"

namespace moltailor {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;

// Token <-> id table. Ids 0..4 are [PAD] [UNK] [CLS] [SEP] [MASK].
class Vocab {
 public:
  Vocab();

  // Tokens seen at least min_frequency times, most frequent first, ties by
  // byte order.
  static Vocab build(const std::vector<std::vector<std::string>>& token_lists, int min_frequency = 1);

  int id(const std::string& token) const;  // kUnkId when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line in id order.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

struct Encoded {
  std::vector<int> ids;
  std::vector<std::string> tokens;
  // Text: index of the whitespace-delimited word each token came from.
  // SMILES: atom index in parse order. -1 for specials and non-atom tokens.
  std::vector<int> source;
  bool truncated = false;
};

// Lowercased words (letters, digits, '_') and single punctuation marks.
std::vector<std::string> split_text(std::string_view text);
// Bracket atoms, Cl/Br, %nn, then single characters.
std::vector<std::string> split_smiles(std::string_view smiles);

// [CLS] tokens [SEP], cut to max_len while keeping the closing [SEP].
Encoded tokenize_text(std::string_view text, const Vocab& vocab, int max_len);
// [CLS] tokens, cut to max_len.
Encoded tokenize_smiles(std::string_view smiles, const Vocab& vocab, int max_len);

}  // namespace moltailor
