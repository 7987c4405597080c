#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace apop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Every failure mode maps onto one of these so the CLI can translate
// exceptions into its documented exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension disagreement between values that must be conformable.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed external bytes (model files, IDX, CSV). Messages carry the
// byte offset or row/column of the first violation.
struct FormatError : Error {
  using Error::Error;
};

// A caller broke an operation's precondition.
struct ContractError : Error {
  using Error::Error;
};

// Invalid run configuration (bad key, bad value, inconsistent settings).
struct ConfigError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct DivergedError : Error {
  using Error::Error;
};

// splitmix64; used to derive independent child seeds from one run seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream));
}

}  // namespace apop
