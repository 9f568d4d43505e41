#include "moltailor/tokenizer.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_map>

namespace moltailor {

namespace {

const char* const kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

bool word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_atom_token(const std::string& t) {
  if (t.empty()) return false;
  if (t[0] == '[') return true;
  if (t == "Cl" || t == "Br") return true;
  static const std::string organic = "BCNOPSFIbcnops";
  return t.size() == 1 && organic.find(t[0]) != std::string::npos;
}

}  // namespace

Vocab::Vocab() {
  for (const char* s : kSpecials) push(s);
}

void Vocab::push(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& token_lists, int min_frequency) {
  std::unordered_map<std::string, int> freq;
  for (const auto& list : token_lists)
    for (const auto& t : list) ++freq[t];
  std::vector<std::pair<std::string, int>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, n] : items)
    if (n >= min_frequency && !v.contains(tok)) v.push(tok);
  return v;
}

int Vocab::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  if (lines.size() < 5) throw Error(path.string() + ": vocabulary too short");
  for (int i = 0; i < 5; ++i)
    if (lines[i] != kSpecials[i]) throw Error(path.string() + ": special tokens out of place");
  Vocab v;
  for (std::size_t i = 5; i < lines.size(); ++i) {
    if (v.contains(lines[i])) throw Error(path.string() + ": duplicate token " + lines[i]);
    v.push(lines[i]);
  }
  return v;
}

std::vector<std::string> split_text(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    if (!std::isspace(c)) out.emplace_back(1, static_cast<char>(c));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_smiles(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t len = 1;
    if (s[i] == '[') {
      const auto close = s.find(']', i);
      len = close == std::string_view::npos ? s.size() - i : close - i + 1;
    } else if (s.substr(i, 2) == "Cl" || s.substr(i, 2) == "Br") {
      len = 2;
    } else if (s[i] == '%' && i + 2 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])) &&
               std::isdigit(static_cast<unsigned char>(s[i + 2]))) {
      len = 3;
    }
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

Encoded tokenize_text(std::string_view text, const Vocab& vocab, int max_len) {
  if (max_len < 2) throw Error("max_text_len must be at least 2");
  Encoded e;
  e.tokens.push_back("[CLS]");
  e.source.push_back(-1);
  int word = -1;
  bool in_word = false;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) e.tokens.push_back(std::move(cur)), e.source.push_back(word), cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
      in_word = false;
      continue;
    }
    if (!in_word) ++word, in_word = true;
    if (word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      e.tokens.emplace_back(1, static_cast<char>(c));
      e.source.push_back(word);
    }
  }
  flush();
  if (static_cast<int>(e.tokens.size()) + 1 > max_len) {
    e.tokens.resize(max_len - 1);
    e.source.resize(max_len - 1);
    e.truncated = true;
  }
  e.tokens.push_back("[SEP]");
  e.source.push_back(-1);
  for (const auto& t : e.tokens) e.ids.push_back(vocab.id(t));
  return e;
}

Encoded tokenize_smiles(std::string_view smiles, const Vocab& vocab, int max_len) {
  if (max_len < 1) throw Error("max_smiles_len must be at least 1");
  Encoded e;
  e.tokens.push_back("[CLS]");
  e.source.push_back(-1);
  int atom = 0;
  for (auto& t : split_smiles(smiles)) {
    e.source.push_back(is_atom_token(t) ? atom++ : -1);
    e.tokens.push_back(std::move(t));
  }
  if (static_cast<int>(e.tokens.size()) > max_len) {
    e.tokens.resize(max_len);
    e.source.resize(max_len);
    e.truncated = true;
  }
  for (const auto& t : e.tokens) e.ids.push_back(vocab.id(t));
  return e;
}

}  // namespace moltailor
