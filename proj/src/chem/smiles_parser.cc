#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "moltailor/chem/elements.h"
#include "moltailor/chem/rings.h"
#include "moltailor/chem/smiles.h"

namespace moltailor::chem {
namespace {

struct RingOpening {
  int atom;
  std::optional<BondOrder> order;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  MolGraph run() {
    if (text_.empty()) throw SmilesSyntaxError("empty SMILES");
    mol_.set_source(std::string(text_));
    std::vector<int> branch_stack;
    int prev = -1;
    std::optional<BondOrder> pending;
    bool pending_set = false;  // a bond symbol was read since the last atom

    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(') {
        if (prev < 0) fail("branch opened before any atom");
        if (pending_set) fail("bond symbol before '('");
        branch_stack.push_back(prev);
        ++pos_;
      } else if (c == ')') {
        if (branch_stack.empty()) fail("unbalanced ')'");
        if (pending_set) fail("bond symbol before ')'");
        if (text_[pos_ - 1] == '(') fail("empty branch");
        prev = branch_stack.back();
        branch_stack.pop_back();
        ++pos_;
      } else if (c == '.') {
        if (pending_set) fail("bond symbol before '.'");
        if (!branch_stack.empty()) fail("'.' inside a branch");
        prev = -1;
        ++pos_;
      } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' || c == '\\') {
        if (pending_set) fail("two consecutive bond symbols");
        if (prev < 0) fail("bond symbol without a preceding atom");
        if (c == '/' || c == '\\') {
          warn_stereo();
          pending = BondOrder::kSingle;
        } else {
          pending = c == '-'   ? BondOrder::kSingle
                    : c == '=' ? BondOrder::kDouble
                    : c == '#' ? BondOrder::kTriple
                               : BondOrder::kAromatic;
        }
        pending_set = true;
        ++pos_;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        if (prev < 0) fail("ring closure without a preceding atom");
        const int digit = read_ring_number();
        ring_closure(prev, digit, pending_set ? pending : std::nullopt);
        pending.reset();
        pending_set = false;
      } else {
        const int atom = read_atom();
        if (prev >= 0) {
          add_bond(prev, atom, pending_set ? pending : std::nullopt);
        } else if (pending_set) {
          fail("bond symbol at start of component");
        }
        pending.reset();
        pending_set = false;
        prev = atom;
      }
    }
    if (pending_set) fail("dangling bond symbol at end of input");
    if (!branch_stack.empty()) fail("unbalanced '('");
    if (!open_rings_.empty()) {
      throw SmilesSyntaxError("unclosed ring-closure digit " +
                              std::to_string(open_rings_.begin()->first) + " in \"" +
                              std::string(text_) + "\"");
    }
    // An unmarked bond between two aromatic atoms is aromatic only inside a
    // ring; between rings (biphenyl) it is single.
    if (!implicit_aromatic_.empty()) {
      const RingInfo rings = ring_info(mol_);
      for (int b : implicit_aromatic_) {
        if (!rings.bond_in_ring[b]) mol_.set_bond_order(b, BondOrder::kSingle);
      }
    }
    mol_.perceive();
    return std::move(mol_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw SmilesSyntaxError(what + " at position " + std::to_string(pos_) + " in \"" +
                            std::string(text_) + "\"");
  }

  void warn_stereo() {
    if (!stereo_warned_) {
      mol_.add_warning("stereo markers ignored");
      stereo_warned_ = true;
    }
  }

  int read_ring_number() {
    if (text_[pos_] == '%') {
      if (pos_ + 2 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
        fail("malformed %nn ring closure");
      }
      const int v = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
      pos_ += 3;
      return v;
    }
    return text_[pos_++] - '0';
  }

  void ring_closure(int atom, int digit, std::optional<BondOrder> order) {
    auto it = open_rings_.find(digit);
    if (it == open_rings_.end()) {
      open_rings_[digit] = RingOpening{atom, order};
      return;
    }
    RingOpening open = it->second;
    open_rings_.erase(it);
    if (open.atom == atom) fail("ring closure to the same atom");
    if (open.order && order && *open.order != *order) fail("conflicting ring-closure bond orders");
    add_bond(open.atom, atom, order ? order : open.order);
  }

  void add_bond(int a, int b, std::optional<BondOrder> order) {
    BondOrder o;
    if (order) {
      o = *order;
    } else {
      o = (mol_.atom(a).aromatic && mol_.atom(b).aromatic) ? BondOrder::kAromatic
                                                           : BondOrder::kSingle;
    }
    if (o == BondOrder::kAromatic && !(mol_.atom(a).aromatic && mol_.atom(b).aromatic)) {
      fail("aromatic bond between non-aromatic atoms");
    }
    if (mol_.find_bond(a, b)) fail("duplicate bond");
    const int index = mol_.add_bond(a, b, o);
    if (!order && o == BondOrder::kAromatic) implicit_aromatic_.push_back(index);
  }

  int read_atom() {
    const char c = text_[pos_];
    if (c == '[') return read_bracket_atom();
    if (c == '*') fail("wildcard atoms are not supported");
    Atom atom;
    // Two-letter organic symbols first.
    if (c == 'C' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'l') {
      atom.atomic_number = kChlorine;
      pos_ += 2;
    } else if (c == 'B' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 'r') {
      atom.atomic_number = kBromine;
      pos_ += 2;
    } else {
      switch (c) {
        case 'B': atom.atomic_number = kBoron; break;
        case 'C': atom.atomic_number = kCarbon; break;
        case 'N': atom.atomic_number = kNitrogen; break;
        case 'O': atom.atomic_number = kOxygen; break;
        case 'P': atom.atomic_number = kPhosphorus; break;
        case 'S': atom.atomic_number = kSulfur; break;
        case 'F': atom.atomic_number = kFluorine; break;
        case 'I': atom.atomic_number = kIodine; break;
        case 'b': atom.atomic_number = kBoron; atom.aromatic = true; break;
        case 'c': atom.atomic_number = kCarbon; atom.aromatic = true; break;
        case 'n': atom.atomic_number = kNitrogen; atom.aromatic = true; break;
        case 'o': atom.atomic_number = kOxygen; atom.aromatic = true; break;
        case 'p': atom.atomic_number = kPhosphorus; atom.aromatic = true; break;
        case 's': atom.atomic_number = kSulfur; atom.aromatic = true; break;
        default: fail(std::string("unknown symbol '") + c + "'");
      }
      ++pos_;
    }
    return mol_.add_atom(atom);
  }

  int read_bracket_atom() {
    const std::size_t start = pos_;
    const std::size_t close = text_.find(']', pos_);
    if (close == std::string_view::npos) fail("unbalanced '['");
    ++pos_;
    Atom atom;
    // isotope
    if (pos_ < close && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      int iso = 0;
      while (pos_ < close && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        iso = iso * 10 + (text_[pos_++] - '0');
      }
      atom.isotope = iso;
    }
    // symbol
    if (pos_ >= close) fail("bracket atom without element");
    if (text_[pos_] == '*') fail("wildcard atoms are not supported");
    const ElementInfo* info = nullptr;
    if (std::islower(static_cast<unsigned char>(text_[pos_]))) {
      // aromatic: se, as are two-letter; b c n o p s one-letter
      if (text_.substr(pos_, 2) == "se") {
        info = find_element("Se");
        pos_ += 2;
      } else {
        const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(text_[pos_])));
        info = find_element(std::string(1, up));
        ++pos_;
      }
      if (info == nullptr || !aromatic_capable(info->atomic_number)) {
        pos_ = start;
        fail("unknown aromatic bracket symbol");
      }
      atom.aromatic = true;
    } else {
      if (pos_ + 1 < close && std::islower(static_cast<unsigned char>(text_[pos_ + 1]))) {
        info = find_element(text_.substr(pos_, 2));
        if (info != nullptr) pos_ += 2;
      }
      if (info == nullptr) {
        info = find_element(text_.substr(pos_, 1));
        if (info == nullptr) fail("unknown element in bracket atom");
        ++pos_;
      }
    }
    atom.atomic_number = info->atomic_number;
    // chirality
    if (pos_ < close && text_[pos_] == '@') {
      warn_stereo();
      while (pos_ < close && (text_[pos_] == '@' || std::isupper(static_cast<unsigned char>(text_[pos_])) ||
                              std::isdigit(static_cast<unsigned char>(text_[pos_])))) {
        // @, @@, @TH1 and friends; stop before H count.
        if (text_[pos_] == 'H') break;
        ++pos_;
      }
    }
    // hydrogens
    int h = 0;
    if (pos_ < close && text_[pos_] == 'H') {
      ++pos_;
      h = 1;
      if (pos_ < close && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        h = 0;
        while (pos_ < close && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
          h = h * 10 + (text_[pos_++] - '0');
        }
      }
    }
    atom.explicit_h = h;
    // charge
    if (pos_ < close && (text_[pos_] == '+' || text_[pos_] == '-')) {
      const char sign = text_[pos_++];
      int magnitude = 1;
      if (pos_ < close && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        magnitude = 0;
        while (pos_ < close && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
          magnitude = magnitude * 10 + (text_[pos_++] - '0');
        }
      } else {
        while (pos_ < close && text_[pos_] == sign) {
          ++magnitude;
          ++pos_;
        }
      }
      atom.formal_charge = sign == '+' ? magnitude : -magnitude;
    }
    // atom class, ignored
    if (pos_ < close && text_[pos_] == ':') {
      ++pos_;
      while (pos_ < close && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    if (pos_ != close) fail("unexpected character in bracket atom");
    pos_ = close + 1;
    return mol_.add_atom(atom);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  MolGraph mol_;
  std::map<int, RingOpening> open_rings_;
  std::vector<int> implicit_aromatic_;
  bool stereo_warned_ = false;
};

}  // namespace

MolGraph parse_smiles(std::string_view text) { return Parser(text).run(); }

}  // namespace moltailor::chem
