#pragma once

#include <stdexcept>
#include <string>

namespace fedcip {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument or violated precondition.
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

/// Malformed file contents (IDX, JSON checkpoint, logs).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

/// Watermark does not fit into the available parameter region.
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& msg) : Error(msg) {}
};

/// Invalid run configuration, detected before any round executes.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Violation of the federation protocol, e.g. leaking a model the
/// client never received.
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

/// A leaked model that cannot be checked against the logs at all
/// (wrong architecture, slot indices out of range).
class IncompatibleModelError : public Error {
public:
    explicit IncompatibleModelError(const std::string& msg) : Error(msg) {}
};

/// Evidence contradicts the single-traitor model (e.g. disjoint
/// suspect sets). Surfaced to the caller, never swallowed.
class InconsistencyError : public Error {
public:
    explicit InconsistencyError(const std::string& msg) : Error(msg) {}
};

/// A scenario that cannot be generated as requested.
class ScenarioError : public Error {
public:
    explicit ScenarioError(const std::string& msg) : Error(msg) {}
};

}  // namespace fedcip
