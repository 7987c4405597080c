#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "apop/common.hpp"

namespace apop {

// Codes double as the on-disk activation byte in model files.
enum class ActivationKind : std::uint8_t { Sigmoid = 0, Relu = 1, Linear = 2 };

inline double activate(ActivationKind kind, double z) {
  switch (kind) {
    case ActivationKind::Sigmoid:
      // branch on sign so exp never overflows
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      {
        const double e = std::exp(z);
        return e / (1.0 + e);
      }
    case ActivationKind::Relu:
      return z > 0.0 ? z : 0.0;
    case ActivationKind::Linear:
      return z;
  }
  throw ContractError("unknown activation kind");
}

// Derivative from the cached pre/post pair. ReLU's subgradient at 0 is 0.
inline double activate_derivative(ActivationKind kind, double z, double a) {
  switch (kind) {
    case ActivationKind::Sigmoid:
      return a * (1.0 - a);
    case ActivationKind::Relu:
      return z > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Linear:
      return 1.0;
  }
  throw ContractError("unknown activation kind");
}

inline const char* activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Linear: return "linear";
  }
  return "?";
}

inline ActivationKind activation_from_name(const std::string& name) {
  if (name == "sigmoid") return ActivationKind::Sigmoid;
  if (name == "relu") return ActivationKind::Relu;
  if (name == "linear") return ActivationKind::Linear;
  throw ConfigError("unknown activation '" + name + "' (expected sigmoid, relu or linear)");
}

}  // namespace apop
