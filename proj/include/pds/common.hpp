#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace pds {

// Invalid shapes, invalid configuration values, mismatched dimensions.
// CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Inputs that a correctly configured model cannot process (too short,
// degenerate batch, all-masked attention row). CLI maps this to exit code 1.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, diverged training, failed numerical verification.
// CLI maps this to exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

}  // namespace pds
