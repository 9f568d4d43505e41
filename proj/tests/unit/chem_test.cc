#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "moltailor/chem/canonical.h"
#include "moltailor/chem/pattern.h"
#include "moltailor/chem/rings.h"
#include "moltailor/chem/smiles.h"

using namespace moltailor;
using namespace moltailor::chem;

namespace {

std::vector<std::string> test_set(std::size_t limit = 500) {
  std::ifstream in(MOLTAILOR_DATA_DIR "/test_molecules.smi");
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line) && out.size() < limit;) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line.substr(0, line.find_first_of(" \t")));
  }
  return out;
}

MolGraph shuffled(const MolGraph& mol, Rng& rng) {
  std::vector<int> perm(mol.atom_count());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<int>(perm));
  return renumbered(mol, perm);
}

int total_h(const MolGraph& mol) {
  int h = 0;
  for (const Atom& a : mol.atoms()) h += a.total_h();
  return h;
}

}  // namespace

TEST(ParseSmiles, Ethanol) {
  const MolGraph mol = parse_smiles("CCO");
  ASSERT_EQ(mol.atom_count(), 3);
  ASSERT_EQ(mol.bond_count(), 2);
  EXPECT_EQ(mol.atom(0).implicit_h, 3);
  EXPECT_EQ(mol.atom(1).implicit_h, 2);
  EXPECT_EQ(mol.atom(2).implicit_h, 1);
  for (const Bond& b : mol.bonds()) EXPECT_EQ(b.order, BondOrder::kSingle);
}

TEST(ParseSmiles, Benzene) {
  const MolGraph mol = parse_smiles("c1ccccc1");
  EXPECT_EQ(mol.atom_count(), 6);
  for (const Atom& a : mol.atoms()) {
    EXPECT_TRUE(a.aromatic);
    EXPECT_EQ(a.implicit_h, 1);
  }
  for (const Bond& b : mol.bonds()) EXPECT_EQ(b.order, BondOrder::kAromatic);
  ASSERT_EQ(mol.rings().size(), 1u);
  EXPECT_EQ(mol.rings()[0].size(), 6u);
}

TEST(ParseSmiles, Ammonium) {
  const MolGraph mol = parse_smiles("[NH4+]");
  ASSERT_EQ(mol.atom_count(), 1);
  EXPECT_EQ(mol.atom(0).formal_charge, 1);
  EXPECT_EQ(mol.atom(0).explicit_h, 4);
  EXPECT_EQ(mol.atom(0).implicit_h, 0);
}

TEST(ParseSmiles, SyntaxErrors) {
  for (const char* bad : {"C(", "C)", "[NH4+", "C1CC", "Xx", "C%1", "*", "C==C", "c1ccccC1x"}) {
    EXPECT_THROW(parse_smiles(bad), SmilesSyntaxError) << bad;
  }
  EXPECT_THROW(parse_smiles(""), SmilesSyntaxError);
}

TEST(ParseSmiles, AromaticOutsideRingRejected) {
  EXPECT_THROW(parse_smiles("cc"), SmilesSyntaxError);
}

TEST(ParseSmiles, ValenceErrors) {
  EXPECT_THROW(parse_smiles("C(C)(C)(C)(C)C"), ValenceError);
  EXPECT_THROW(parse_smiles("O=O=O"), ValenceError);
  EXPECT_THROW(parse_smiles("FCl(C)"), ValenceError);
}

TEST(ParseSmiles, StereoDroppedWithWarning) {
  const MolGraph mol = parse_smiles("F/C=C/F");
  EXPECT_EQ(mol.atom_count(), 4);
  EXPECT_FALSE(mol.warnings().empty());
  const MolGraph chiral = parse_smiles("N[C@@H](C)C(=O)O");
  EXPECT_FALSE(chiral.warnings().empty());
  EXPECT_EQ(canonicalize(chiral), canonical_smiles("NC(C)C(=O)O"));
}

TEST(ParseSmiles, IsotopeKept) {
  const MolGraph mol = parse_smiles("[13CH4]");
  ASSERT_TRUE(mol.atom(0).isotope.has_value());
  EXPECT_EQ(*mol.atom(0).isotope, 13);
  EXPECT_NE(canonical_smiles("[13CH4]"), canonical_smiles("C"));
}

TEST(ParseSmiles, MultiComponent) {
  const MolGraph mol = parse_smiles("[Na+].[Cl-]");
  EXPECT_EQ(mol.atom_count(), 2);
  EXPECT_EQ(mol.component_count(), 2);
}

TEST(ImplicitHydrogens, ValenceTable) {
  EXPECT_EQ(parse_smiles("C").atom(0).implicit_h, 4);
  EXPECT_EQ(parse_smiles("CCO").atom(2).implicit_h, 1);
  EXPECT_EQ(parse_smiles("B").atom(0).implicit_h, 3);
  EXPECT_EQ(parse_smiles("P").atom(0).implicit_h, 3);
  EXPECT_EQ(parse_smiles("CP(C)(C)(C)C").atom(1).implicit_h, 0);
  EXPECT_EQ(parse_smiles("CS(=O)C").atom(1).implicit_h, 0);
  EXPECT_EQ(parse_smiles("S(=O)(=O)=O").atom(0).implicit_h, 0);
  EXPECT_EQ(parse_smiles("Cl").atom(0).implicit_h, 1);
}

TEST(ImplicitHydrogens, DirectFormula) {
  Atom c;
  c.atomic_number = 6;
  EXPECT_EQ(implicit_hydrogen_count(c, 0), 4);
  EXPECT_EQ(implicit_hydrogen_count(c, 3), 1);
  EXPECT_THROW(implicit_hydrogen_count(c, 5), ValenceError);
  Atom s;
  s.atomic_number = 16;
  EXPECT_EQ(implicit_hydrogen_count(s, 3), 1);  // next valence up is 4
}

// Pyridine nitrogen carries no H; the Kekule form agrees atom for atom.
TEST(ImplicitHydrogens, PyridineMatchesKekule) {
  const MolGraph aromatic = parse_smiles("c1ccncc1");
  const MolGraph kekule = parse_smiles("C1=CC=NC=C1");
  EXPECT_EQ(aromatic.atom(3).implicit_h, 0);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(aromatic.atom(i).implicit_h, kekule.atom(i).implicit_h) << i;
}

TEST(ImplicitHydrogens, FiveMemberedHeteroaromatics) {
  EXPECT_EQ(total_h(parse_smiles("c1ccoc1")), 4);
  EXPECT_EQ(total_h(parse_smiles("c1ccsc1")), 4);
  EXPECT_EQ(total_h(parse_smiles("c1cc[nH]c1")), 5);
  EXPECT_EQ(total_h(parse_smiles("Cn1cccc1")), 7);
}

TEST(Rings, Counts) {
  EXPECT_TRUE(ring_info(parse_smiles("CCO")).cycles.empty());
  EXPECT_EQ(ring_info(parse_smiles("c1ccccc1")).cycles.size(), 1u);
  const RingInfo naph = ring_info(parse_smiles("c1ccc2ccccc2c1"));
  ASSERT_EQ(naph.cycles.size(), 2u);
  for (const auto& c : naph.cycles) EXPECT_EQ(c.size(), 6u);
  // cubane: 12 - 8 + 1 = 5 independent cycles
  EXPECT_EQ(ring_info(parse_smiles("C12C3C4C1C5C2C3C45")).cycles.size(), 5u);
}

TEST(Rings, SmallestCyclesChosen) {
  // bicyclo[2.2.2]octane: three 6-cycles exist, any two form a basis
  const RingInfo r = ring_info(parse_smiles("C1CC2CCC1CC2"));
  ASSERT_EQ(r.cycles.size(), 2u);
  for (const auto& c : r.cycles) EXPECT_EQ(c.size(), 6u);
  // spiro: 3- and 4-ring sharing one atom
  const RingInfo s = ring_info(parse_smiles("C1CC12CCC2"));
  ASSERT_EQ(s.cycles.size(), 2u);
}

TEST(Rings, FlagsMatchBasis) {
  const MolGraph mol = parse_smiles("c1ccccc1CCC1CC1");
  const RingInfo r = ring_info(mol);
  std::vector<bool> in(mol.atom_count(), false);
  for (const auto& c : r.cycles)
    for (int a : c) in[a] = true;
  for (int i = 0; i < mol.atom_count(); ++i) {
    EXPECT_EQ(bool(r.atom_in_ring[i]), bool(in[i]));
    EXPECT_EQ(mol.atom(i).in_ring, bool(in[i]));
  }
}

TEST(Canonical, EthanolAllOrderings) {
  const std::string expected = canonical_smiles("CCO");
  const MolGraph mol = parse_smiles("CCO");
  std::vector<int> perm{0, 1, 2};
  do {
    EXPECT_EQ(canonicalize(renumbered(mol, perm)), expected);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_EQ(canonical_smiles("OCC"), expected);
  EXPECT_EQ(canonical_smiles("C(O)C"), expected);
}

TEST(Canonical, BenzeneRenumberings) {
  const MolGraph mol = parse_smiles("c1ccccc1");
  const std::string expected = canonicalize(mol);
  Rng rng(11);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(canonicalize(shuffled(mol, rng)), expected);
}

TEST(Canonical, SingleAtom) { EXPECT_EQ(canonical_smiles("C"), "C"); }

TEST(Canonical, DistinguishesIsomers) {
  EXPECT_NE(canonical_smiles("CCCO"), canonical_smiles("CC(C)O"));
  EXPECT_NE(canonical_smiles("Cc1ccccc1C"), canonical_smiles("Cc1cccc(C)c1"));
  EXPECT_EQ(canonical_smiles("Cc1ccccc1C"), canonical_smiles("c1cccc(C)c1C"));
}

TEST(CanonicalProperty, PermutationInvarianceOnTestSet) {
  Rng rng(5);
  for (const auto& s : test_set(120)) {
    const MolGraph mol = parse_smiles(s);
    const std::string expected = canonicalize(mol);
    for (int k = 0; k < 10; ++k) {
      const MolGraph p = shuffled(mol, rng);
      ASSERT_EQ(canonicalize(p), expected) << s;
      ASSERT_EQ(canonical_smiles(random_smiles(mol, rng)), expected) << s;
    }
  }
}

TEST(CanonicalProperty, RoundTripAndInvariants) {
  Rng rng(8);
  for (const auto& s : test_set()) {
    const MolGraph mol = parse_smiles(s);
    const std::string canon = canonicalize(mol);
    const MolGraph back = parse_smiles(canon);
    EXPECT_EQ(canonicalize(back), canon) << s;
    EXPECT_EQ(back.atom_count(), mol.atom_count());
    EXPECT_EQ(back.bond_count(), mol.bond_count());
    EXPECT_EQ(total_h(back), total_h(mol)) << s;
    EXPECT_EQ(total_h(shuffled(mol, rng)), total_h(mol));
    EXPECT_EQ(static_cast<int>(mol.rings().size()),
              mol.bond_count() - mol.atom_count() + mol.component_count())
        << s;
  }
}

TEST(Patterns, TableLoads) {
  const auto& pats = bundled_patterns();
  EXPECT_EQ(pats.size(), 8u);
  for (const auto& p : pats) EXPECT_LE(static_cast<int>(p.atoms.size()), kMaxPatternAtoms);
  EXPECT_THROW(parse_pattern_table("x | C O C | 0-1:single"), Error);  // disconnected
}

TEST(Patterns, Examples) {
  EXPECT_EQ(count_matches(parse_smiles("CC(=O)O"), bundled_pattern("fr_carboxylic_acid")), 1);
  EXPECT_EQ(count_matches(parse_smiles("OCCO"), bundled_pattern("fr_hydroxyl")), 2);
  EXPECT_EQ(count_matches(parse_smiles("CC(=O)O"), bundled_pattern("fr_ether")), 0);
  EXPECT_EQ(count_matches(parse_smiles("CC(=O)O"), bundled_pattern("fr_hydroxyl")), 0);
  EXPECT_EQ(count_matches(parse_smiles("COC"), bundled_pattern("fr_ether")), 1);
  EXPECT_EQ(count_matches(parse_smiles("CC(=O)OC"), bundled_pattern("fr_ester")), 1);
  EXPECT_EQ(count_matches(parse_smiles("CC(=O)OC"), bundled_pattern("fr_ether")), 0);
  EXPECT_EQ(count_matches(parse_smiles("C[N+](=O)[O-]"), bundled_pattern("fr_nitro")), 1);
  EXPECT_EQ(count_matches(parse_smiles("CS(=O)(=O)N"), bundled_pattern("fr_sulfonamide")), 1);
  EXPECT_EQ(count_matches(parse_smiles("CCN"), bundled_pattern("fr_amine")), 1);
  EXPECT_EQ(count_matches(parse_smiles("CC(=O)N"), bundled_pattern("fr_amine")), 0);
  EXPECT_EQ(count_matches(parse_smiles("OC(=O)CC(=O)O"), bundled_pattern("fr_carbonyl")), 2);
}

TEST(PatternProperty, CountsPermutationInvariant) {
  Rng rng(3);
  for (const auto& s : test_set(200)) {
    const MolGraph mol = parse_smiles(s);
    const MolGraph p = shuffled(mol, rng);
    for (const auto& pat : bundled_patterns()) {
      ASSERT_EQ(count_matches(mol, pat), count_matches(p, pat)) << s << " " << pat.name;
    }
  }
}
