#pragma once

#include <string_view>

// Text tables compiled into the library from data/ (see cmake/EmbedData.cmake).
namespace moltailor::data {
extern const std::string_view k_elements;
extern const std::string_view k_patterns;
extern const std::string_view k_descriptors;
extern const std::string_view k_framing;
extern const std::string_view k_test_molecules;
}  // namespace moltailor::data
