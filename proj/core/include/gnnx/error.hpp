#pragma once

#include <stdexcept>
#include <string>

namespace gnnx {

// Invalid inputs, malformed files, violated invariants. The CLI maps these
// to exit code 2; everything else is a programming error.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gnnx
