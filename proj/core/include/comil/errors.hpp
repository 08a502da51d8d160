#pragma once

#include <stdexcept>
#include <string>

namespace comil {

// Violated precondition or invariant on a public contract.
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor dimension mismatch; the message names both shapes.
class ShapeError : public ContractError {
public:
    using ContractError::ContractError;
};

// Malformed or truncated serialized input.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss encountered while training.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad run configuration (CLI / config file).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace comil
