#pragma once

#include <stdexcept>
#include <string>

namespace bsgen {

/// Invalid model or experiment configuration (bad parameter domain, unknown key).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A function argument outside its documented domain.
class ArgumentError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Request exceeds what the implementation supports (state space too large, explosion cap).
class CapabilityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace bsgen
