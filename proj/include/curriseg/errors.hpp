#pragma once

#include <stdexcept>
#include <string>

namespace curriseg {

// Bad or missing input data (files, masks, shapes). The CLI maps this to
// exit code 2; everything else unexpected maps to 3.
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace curriseg
