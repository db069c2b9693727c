#pragma once

#include <stdexcept>
#include <string>

namespace flownet {

// Exit codes used by the CLI. Library code throws, the CLI maps.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitProvenance = 3;
inline constexpr int kExitNumeric = 4;

// Malformed or inconsistent user input (files, tables, arguments).
class InputError : public std::runtime_error {
  public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid run configuration (bad MCMC settings, missing fields).
class ConfigError : public InputError {
  public:
    explicit ConfigError(const std::string& what) : InputError(what) {}
};

// Stage-2 inputs whose stage-1 lineage violates the exclusion rules.
class ProvenanceError : public std::runtime_error {
  public:
    explicit ProvenanceError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite likelihoods or degenerate matrices encountered mid-run.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flownet
