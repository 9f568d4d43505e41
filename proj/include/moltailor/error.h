#pragma once

#include <stdexcept>
#include <string>

namespace moltailor {

// Root of every exception thrown by the library. Subsystems derive their own
// named errors from it so callers can catch either the family or the case.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace moltailor
