#pragma once

#include <stdexcept>
#include <string>

namespace ionlock {

// Exit code 2 at the CLI.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Exit code 3 at the CLI.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InsufficientDataError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateFitError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class CoverageError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SelectionRuleError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

} // namespace ionlock
