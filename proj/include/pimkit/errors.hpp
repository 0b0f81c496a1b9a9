#pragma once

#include <stdexcept>
#include <string>

namespace pimkit {

/// An event has zero conditional intensity under the model, so its log term
/// (and every derivative or attribution built on it) is undefined.
class ZeroIntensityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace pimkit
