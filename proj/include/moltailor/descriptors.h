#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "moltailor/chem/mol_graph.h"
#include "moltailor/error.h"

namespace moltailor {

class UnknownDescriptor : public Error {
 public:
  using Error::Error;
};

enum class DescriptorKind { kContinuous, kCount };

struct DescriptorSpec {
  std::string name;
  DescriptorKind kind = DescriptorKind::kContinuous;
  std::vector<std::string> phrase_bank;
  double sampling_weight = 1.0;
};

// Parses the registry format of data/descriptors.txt and validates it: unique
// names, 2-4 phrases naming their descriptor, positive weights.
std::vector<DescriptorSpec> parse_registry(std::string_view text);

// The bundled 24-entry registry, in label-vector order.
const std::vector<DescriptorSpec>& registry();

// Position in the registry. Throws UnknownDescriptor.
int descriptor_index(std::string_view name);

// Values in registry order.
struct DescriptorVector {
  std::vector<double> values;

  double get(std::string_view name) const { return values.at(descriptor_index(name)); }
};

// Throws UnknownDescriptor for names outside the registry.
double compute_descriptor(const chem::MolGraph& mol, std::string_view name);

// Every registry entry. A non-finite value is an internal fault and throws.
DescriptorVector compute_all(const chem::MolGraph& mol);

// Individual rules, exposed for tests.
namespace descriptor_rules {
bool is_h_donor(const chem::MolGraph& mol, int atom);
bool is_h_acceptor(const chem::MolGraph& mol, int atom);
bool is_rotatable(const chem::MolGraph& mol, int bond);
bool is_sp3_carbon(const chem::MolGraph& mol, int atom);
}  // namespace descriptor_rules

}  // namespace moltailor
