#pragma once

#include <stdexcept>
#include <string>

namespace dre {

/// Invalid user input: bad flags, malformed files, out-of-domain arguments.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a usable result.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dre
