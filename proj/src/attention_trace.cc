#include "moltailor/attention_trace.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "moltailor/chem/smiles.h"

namespace moltailor {

namespace {

// Head-averaged row of the [CLS] query: probs (1, h, q, k) -> k values.
std::vector<double> cls_row(const Tensor& probs) {
  const int h = probs.dim(1), q = probs.dim(2), k = probs.dim(3);
  std::vector<double> row(k, 0.0);
  for (int head = 0; head < h; ++head)
    for (int j = 0; j < k; ++j) row[j] += probs.data()[(static_cast<std::size_t>(head) * q) * k + j] / h;
  return row;
}

std::vector<double> merge_words(const std::vector<double>& token_w, const Encoded& enc, int words) {
  std::vector<double> w(words, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < enc.source.size(); ++i)
    if (enc.source[i] >= 0) w[enc.source[i]] += token_w[i], total += token_w[i];
  if (total > 0)
    for (double& x : w) x /= total;
  return w;
}

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else if (c == '"') o += "&quot;";
    else o += c;
  }
  return o;
}

// white -> red
std::string heat(double v, double vmax) {
  const double t = vmax > 0 ? std::clamp(v / vmax, 0.0, 1.0) : 0.0;
  const int g = static_cast<int>(std::lround(255 * (1 - t)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#ff%02x%02x", g, g);
  return buf;
}

// Springs on bonds, ring chords pulling rings into regular polygons,
// pairwise repulsion. Deterministic start on a circle.
std::vector<std::pair<double, double>> layout(const chem::MolGraph& mol) {
  const int n = mol.atom_count();
  std::vector<std::pair<double, double>> p(n);
  for (int i = 0; i < n; ++i) {
    const double a = 2 * M_PI * i / std::max(1, n);
    p[i] = {std::cos(a) * n * 0.3, std::sin(a) * n * 0.3};
  }
  struct Spring {
    int a, b;
    double len, k;
  };
  std::vector<Spring> springs;
  for (const auto& b : mol.bonds()) springs.push_back({b.a, b.b, 1.0, 1.0});
  for (const auto& ring : mol.rings()) {
    const int m = static_cast<int>(ring.size());
    for (int i = 0; i < m; ++i)
      for (int j = i + 2; j < m; ++j) {
        const int step = std::min(j - i, m - (j - i));
        if (step < 2) continue;
        springs.push_back({ring[i], ring[j], std::sin(M_PI * step / m) / std::sin(M_PI / m), 0.5});
      }
  }
  for (int it = 0; it < 600; ++it) {
    std::vector<std::pair<double, double>> f(n, {0.0, 0.0});
    for (const auto& s : springs) {
      const double dx = p[s.b].first - p[s.a].first, dy = p[s.b].second - p[s.a].second;
      const double d = std::max(1e-6, std::hypot(dx, dy));
      const double m = s.k * (d - s.len) / d;
      f[s.a].first += m * dx, f[s.a].second += m * dy;
      f[s.b].first -= m * dx, f[s.b].second -= m * dy;
    }
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        const double dx = p[b].first - p[a].first, dy = p[b].second - p[a].second;
        const double d2 = std::max(1e-4, dx * dx + dy * dy);
        const double m = 0.3 / (d2 * std::sqrt(d2));
        f[a].first -= m * dx, f[a].second -= m * dy;
        f[b].first += m * dx, f[b].second += m * dy;
      }
    const double step = 0.1 * (1.0 - it / 700.0);
    for (int i = 0; i < n; ++i) {
      p[i].first += step * std::clamp(f[i].first, -5.0, 5.0);
      p[i].second += step * std::clamp(f[i].second, -5.0, 5.0);
    }
  }
  return p;
}

}  // namespace

AttnTrace extract_cls_attention(const Model& model, const std::string& smiles, const std::string& description,
                                bool mask_molecule) {
  if (model.config().architecture != Architecture::kMolTailor)
    throw Error("attention export needs the two-tower model");
  NoGradGuard guard;
  Batch b = model.batch({smiles}, {description});
  AttentionCapture cap;
  const Tensor x_t = model.encode_text_unimodal(b, &cap);
  const Tensor x_m = model.encode_molecule(b);
  // hidden from the text side only; the molecule tower still needs its keys
  if (mask_molecule) b.mol_mask = KeyMask::none_valid(1, b.mol_len);
  model.fuse(x_t, x_m, b, &cap);

  const Encoded text = tokenize_text(description, model.text_vocab(), model.config().max_text_len);
  const Encoded mol = tokenize_smiles(smiles, model.smiles_vocab(), model.config().max_smiles_len);
  AttnTrace t;
  t.smiles = smiles;
  t.description = description;
  int words = 0;
  for (int s : text.source) words = std::max(words, s + 1);
  t.words.assign(words, "");
  for (std::size_t i = 0; i < text.source.size(); ++i)
    if (text.source[i] >= 0) t.words[text.source[i]] += text.tokens[i];

  t.unimodal_words = merge_words(cls_row(cap.last_unimodal), text, words);
  const std::vector<double> mt = cls_row(cap.last_multimodal);
  const int n_t = b.text_len;
  t.multimodal_words = merge_words(std::vector<double>(mt.begin(), mt.begin() + n_t), text, words);

  const chem::MolGraph g = chem::parse_smiles(smiles);
  for (const auto& a : g.atoms()) t.atoms.emplace_back(a.symbol());
  t.multimodal_atoms.assign(g.atom_count(), 0.0);
  for (int j = 0; j < b.mol_len; ++j) {
    const double w = mt[n_t + j];
    t.molecule_mass += w;
    if (mol.source[j] >= 0) t.multimodal_atoms[mol.source[j]] += w;
  }
  return t;
}

std::string trace_to_json(const AttnTrace& t) {
  nlohmann::json j{{"smiles", t.smiles},
                   {"description", t.description},
                   {"words", t.words},
                   {"unimodal_last_layer", t.unimodal_words},
                   {"multimodal_last_layer_words", t.multimodal_words},
                   {"atoms", t.atoms},
                   {"multimodal_last_layer_atoms", t.multimodal_atoms},
                   {"molecule_mass", t.molecule_mass}};
  return j.dump(2);
}

std::string trace_to_svg(const AttnTrace& t) {
  const chem::MolGraph g = chem::parse_smiles(t.smiles);
  const auto pos = layout(g);
  std::ostringstream o;
  const int cell_w = 90, cell_h = 22, per_row = 8;
  const int rows = (static_cast<int>(t.words.size()) + per_row - 1) / per_row;
  const int heat_h = 2 * (rows * cell_h + 30);
  double minx = 0, maxx = 1, miny = 0, maxy = 1;
  if (!pos.empty()) {
    minx = maxx = pos[0].first;
    miny = maxy = pos[0].second;
    for (auto [x, y] : pos) minx = std::min(minx, x), maxx = std::max(maxx, x), miny = std::min(miny, y), maxy = std::max(maxy, y);
  }
  const double scale = 40.0;
  const int mol_w = static_cast<int>((maxx - minx) * scale) + 80, mol_h = static_cast<int>((maxy - miny) * scale) + 80;
  const int width = std::max(per_row * cell_w + 20, mol_w), height = heat_h + mol_h + 30;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  int y0 = 0;
  auto panel = [&](const char* title, const std::vector<double>& w) {
    const double vmax = w.empty() ? 0 : *std::max_element(w.begin(), w.end());
    o << "<text x=\"10\" y=\"" << y0 + 16 << "\" font-weight=\"bold\">" << title << "</text>\n";
    for (std::size_t i = 0; i < t.words.size(); ++i) {
      const int x = 10 + static_cast<int>(i % per_row) * cell_w, y = y0 + 24 + static_cast<int>(i / per_row) * cell_h;
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w - 2 << "\" height=\"" << cell_h - 2
        << "\" fill=\"" << heat(w[i], vmax) << "\"><title>" << w[i] << "</title></rect>";
      o << "<text x=\"" << x + 4 << "\" y=\"" << y + 14 << "\">" << esc(t.words[i]) << "</text>\n";
    }
    y0 += rows * cell_h + 30;
  };
  panel("[CLS] attention, last unimodal layer", t.unimodal_words);
  panel("[CLS] attention, last multimodal layer (text keys)", t.multimodal_words);
  o << "<text x=\"10\" y=\"" << y0 + 16 << "\" font-weight=\"bold\">[CLS] attention on atoms, last multimodal layer"
    << " (total " << t.molecule_mass << ")</text>\n";
  auto X = [&](int i) { return 40 + (pos[i].first - minx) * scale; };
  auto Y = [&](int i) { return y0 + 50 + (pos[i].second - miny) * scale; };
  for (const auto& b : g.bonds())
    o << "<line x1=\"" << X(b.a) << "\" y1=\"" << Y(b.a) << "\" x2=\"" << X(b.b) << "\" y2=\"" << Y(b.b)
      << "\" stroke=\"#444\" stroke-width=\"" << (b.order == chem::BondOrder::kSingle ? 1.5 : 3) << "\"/>\n";
  const double amax = t.multimodal_atoms.empty() ? 0 : *std::max_element(t.multimodal_atoms.begin(), t.multimodal_atoms.end());
  for (int i = 0; i < g.atom_count(); ++i) {
    o << "<circle cx=\"" << X(i) << "\" cy=\"" << Y(i) << "\" r=\"11\" stroke=\"#444\" fill=\""
      << heat(t.multimodal_atoms[i], amax) << "\"><title>" << t.multimodal_atoms[i] << "</title></circle>";
    o << "<text x=\"" << X(i) << "\" y=\"" << Y(i) + 4 << "\" text-anchor=\"middle\">" << esc(t.atoms[i]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace moltailor
