#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "moltailor/chem/elements.h"
#include "moltailor/chem/smiles.h"
#include "moltailor/descriptors.h"

using namespace moltailor;

namespace {

double d(const char* smiles, const char* name) { return compute_descriptor(chem::parse_smiles(smiles), name); }

std::vector<std::string> test_set() {
  std::ifstream in(MOLTAILOR_DATA_DIR "/test_molecules.smi");
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') out.push_back(line.substr(0, line.find_first_of(" \t")));
  }
  return out;
}

}  // namespace

TEST(Registry, Shape) {
  const auto& reg = registry();
  ASSERT_EQ(reg.size(), 24u);
  std::set<std::string> names;
  double min_plain = 1e9, max_fr = 0;
  for (const auto& s : reg) {
    names.insert(s.name);
    EXPECT_GE(s.phrase_bank.size(), 2u);
    EXPECT_LE(s.phrase_bank.size(), 4u);
    for (const auto& p : s.phrase_bank) EXPECT_NE(p.find(s.name), std::string::npos);
    if (s.name.rfind("fr_", 0) == 0) {
      max_fr = std::max(max_fr, s.sampling_weight);
      EXPECT_LT(s.sampling_weight, 1.0);
      EXPECT_EQ(s.kind, DescriptorKind::kCount);
    } else {
      min_plain = std::min(min_plain, s.sampling_weight);
    }
  }
  EXPECT_EQ(names.size(), 24u);
  EXPECT_LT(max_fr, min_plain);
  EXPECT_EQ(reg.front().name, "MolWt");
  EXPECT_EQ(reg.back().name, "fr_sulfonamide");
}

TEST(Registry, ParseErrors) {
  EXPECT_THROW(parse_registry("descriptor A count 1\n- A one\n"), Error);  // one phrase
  EXPECT_THROW(parse_registry("descriptor A count 1\n- A one\n- two\n"), Error);  // name missing
  EXPECT_THROW(parse_registry("descriptor A count 0\n- A one\n- A two\n"), Error);
  EXPECT_THROW(parse_registry("descriptor A blob 1\n- A one\n- A two\n"), Error);
  EXPECT_THROW(parse_registry("descriptor A count 1\n- A x\n- A y\ndescriptor A count 1\n- A x\n- A y\n"), Error);
  EXPECT_NO_THROW(parse_registry("descriptor A count 1\n- A x\n- A y\n"));
}

TEST(Descriptors, UnknownName) {
  EXPECT_THROW(d("C", "TPSA"), UnknownDescriptor);
  EXPECT_THROW(descriptor_index("fr_ketone"), UnknownDescriptor);
}

TEST(Descriptors, Water) {
  EXPECT_NEAR(d("O", "MolWt"), 18.015, 0.01);
  EXPECT_NEAR(d("O", "ExactMolWt"), 18.0106, 1e-3);
  const DescriptorVector v = compute_all(chem::parse_smiles("O"));
  EXPECT_EQ(v.get("RingCount"), 0);
  EXPECT_EQ(v.get("NumHDonors"), 1);
  EXPECT_EQ(v.get("HalogenCount"), 0);
  EXPECT_EQ(v.get("NumValenceElectrons"), 8);
}

TEST(Descriptors, SmallExamples) {
  EXPECT_EQ(d("CCO", "HeavyAtomCount"), 3);
  EXPECT_DOUBLE_EQ(d("CCO", "FractionCSP3"), 1.0);
  EXPECT_EQ(d("CC(=O)O", "fr_carboxylic_acid"), 1);
  const DescriptorVector benzene = compute_all(chem::parse_smiles("c1ccccc1"));
  EXPECT_EQ(benzene.get("NumAromaticRings"), 1);
  EXPECT_EQ(benzene.get("NumAromaticAtoms"), 6);
  EXPECT_EQ(benzene.get("FractionCSP3"), 0);
  const DescriptorVector salt = compute_all(chem::parse_smiles("[Na+].[Cl-]"));
  EXPECT_EQ(salt.get("FractionCSP3"), 0);
  EXPECT_EQ(salt.get("HalogenCount"), 1);
  EXPECT_EQ(salt.get("FormalChargeSum"), 0);
}

// Aspirin, C9H8O4, every entry worked by hand.
TEST(Descriptors, Aspirin) {
  const DescriptorVector v = compute_all(chem::parse_smiles("CC(=O)Oc1ccccc1C(=O)O"));
  EXPECT_NEAR(v.get("MolWt"), 9 * 12.011 + 8 * 1.008 + 4 * 15.999, 1e-9);
  EXPECT_EQ(v.get("HeavyAtomCount"), 13);
  EXPECT_EQ(v.get("NumHeteroatoms"), 4);
  EXPECT_EQ(v.get("NumHDonors"), 1);
  EXPECT_EQ(v.get("NumHAcceptors"), 4);
  EXPECT_EQ(v.get("NumRotatableBonds"), 3);
  EXPECT_EQ(v.get("RingCount"), 1);
  EXPECT_EQ(v.get("NumAromaticRings"), 1);
  EXPECT_EQ(v.get("NumAromaticAtoms"), 6);
  EXPECT_NEAR(v.get("FractionCSP3"), 1.0 / 9.0, 1e-15);
  EXPECT_EQ(v.get("NumValenceElectrons"), 68);
  EXPECT_EQ(v.get("MaxRingSize"), 6);
  EXPECT_EQ(v.get("LongestCarbonChain"), 2);
  EXPECT_EQ(v.get("fr_ester"), 1);
  EXPECT_EQ(v.get("fr_carboxylic_acid"), 1);
  EXPECT_EQ(v.get("fr_carbonyl"), 2);
  EXPECT_EQ(v.get("fr_ether"), 0);
  EXPECT_EQ(v.get("fr_hydroxyl"), 0);
}

TEST(Descriptors, RuleTables) {
  EXPECT_EQ(d("CC(=O)NC", "NumRotatableBonds"), 0);  // amide C-N excluded
  EXPECT_EQ(d("CC(=O)NC", "NumHAcceptors"), 1);
  EXPECT_EQ(d("CCCC", "NumRotatableBonds"), 1);
  EXPECT_EQ(d("c1ccncc1", "NumHAcceptors"), 1);
  EXPECT_EQ(d("c1cc[nH]c1", "NumHAcceptors"), 0);
  EXPECT_EQ(d("c1cc[nH]c1", "NumHDonors"), 1);
  EXPECT_EQ(d("[NH4+]", "NumHAcceptors"), 0);
  EXPECT_EQ(d("[NH4+]", "NumValenceElectrons"), 8);
  EXPECT_EQ(d("CCCCCC", "LongestCarbonChain"), 6);
  EXPECT_EQ(d("CC(C)C", "LongestCarbonChain"), 3);
  EXPECT_EQ(d("CCCC1CCCCC1CC", "LongestCarbonChain"), 3);
  EXPECT_EQ(d("C1CC1c1ccccc1", "MaxRingSize"), 6);
  EXPECT_EQ(d("C1CC1c1ccccc1", "RingCount"), 2);
  EXPECT_EQ(d("FC(Cl)(Br)I", "HalogenCount"), 4);
  EXPECT_EQ(d("C(=O)[O-].[NH4+]", "FormalChargeSum"), 0);
  EXPECT_EQ(d("C(=O)[O-]", "FormalChargeSum"), -1);
  EXPECT_DOUBLE_EQ(d("C=CC", "FractionCSP3"), 1.0 / 3.0);
  EXPECT_EQ(d("[Na+].[Cl-]", "FractionCSP3"), 0);
}

TEST(DescriptorProperty, InvariantsOverTestSet) {
  const auto& reg = registry();
  Rng rng(17);
  const auto& h = chem::element(chem::kHydrogen);
  for (const auto& s : test_set()) {
    const chem::MolGraph mol = chem::parse_smiles(s);
    const DescriptorVector v = compute_all(mol);
    ASSERT_EQ(v.values.size(), reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
      ASSERT_TRUE(std::isfinite(v.values[i]));
      if (reg[i].kind == DescriptorKind::kCount && reg[i].name != "FormalChargeSum") {
        EXPECT_GE(v.values[i], 0) << s << " " << reg[i].name;
        EXPECT_EQ(v.values[i], std::round(v.values[i]));
      }
    }
    EXPECT_GT(v.get("MolWt"), 0);
    EXPECT_GE(v.get("FractionCSP3"), 0);
    EXPECT_LE(v.get("FractionCSP3"), 1);
    for (const auto& ring : mol.rings()) {
      bool all = true;
      for (int a : ring) all = all && mol.atom(a).aromatic;
      if (all) EXPECT_GE(v.get("NumAromaticAtoms"), static_cast<double>(ring.size()));
    }
    // Mass gap bounded by the per-atom gap of the element table.
    double tol = 0;
    for (const auto& a : mol.atoms()) {
      const auto& e = chem::element(a.atomic_number);
      tol += std::abs(e.weight - e.monoisotopic) + a.total_h() * std::abs(h.weight - h.monoisotopic);
    }
    EXPECT_LE(std::abs(v.get("ExactMolWt") - v.get("MolWt")), tol + 1e-9) << s;

    std::vector<int> perm(mol.atom_count());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    EXPECT_EQ(compute_all(chem::renumbered(mol, perm)).values, v.values) << s;
  }
}
