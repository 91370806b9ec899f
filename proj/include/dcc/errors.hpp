#pragma once

#include <stdexcept>
#include <string>

namespace dcc {

/// Argument outside the mathematical domain of an operation (e.g. n < 1 for the penalty).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller broke a documented precondition (e.g. offloading while a task is pending).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Enumerated state space larger than the configured cap.
class SizeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Something that cannot happen for valid inputs (singular discounted system, infeasible LP).
class InternalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dcc
