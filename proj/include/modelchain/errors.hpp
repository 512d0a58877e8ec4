#pragma once

#include <stdexcept>
#include <string>

namespace modelchain {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transaction or block construction broke an invariant.
class LedgerError : public Error {
 public:
  using Error::Error;
};

class MiningError : public Error {
 public:
  using Error::Error;
};

// Malformed chain dump or trace file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Model bytes failed to decode, or dimensions disagree.
class ModelError : public Error {
 public:
  using Error::Error;
};

class MetadataBudgetError : public Error {
 public:
  MetadataBudgetError(std::size_t actual, std::size_t allowed)
      : Error("model payload of " + std::to_string(actual) +
              " bytes exceeds metadata budget of " + std::to_string(allowed) +
              " bytes"),
        actual_(actual),
        allowed_(allowed) {}

  std::size_t actual() const noexcept { return actual_; }
  std::size_t allowed() const noexcept { return allowed_; }

 private:
  std::size_t actual_;
  std::size_t allowed_;
};

// The chain contradicts the protocol (e.g. a TRANSFER naming a model
// that was never published). Halts a run.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Invalid lifecycle request against the simulated world.
class SimulationError : public Error {
 public:
  using Error::Error;
};

// Bad scenario configuration, dataset, or scripted-error table.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace modelchain
