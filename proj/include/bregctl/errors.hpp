#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bregctl {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point lies outside the effective domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// sup_x xᵀξ − φ(x) is +∞ (φ grows sub-linearly along ξ).
class UnboundedDualError : public Error {
 public:
  using Error::Error;
};

/// ξ is outside the range of ∇φ and no boundary point resolves it.
class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class LinearAlgebraError : public Error {
 public:
  using Error::Error;
};

/// Fixed-point DARE iteration did not settle; usually a non-stabilizable pair.
class DareDivergenceError : public Error {
 public:
  using Error::Error;
};

class UnsupportedConfigurationError : public Error {
 public:
  using Error::Error;
};

class InfeasibleDerivationError : public Error {
 public:
  InfeasibleDerivationError(const std::string& what, double worst_violation)
      : Error(what), worst_violation_(worst_violation) {}
  double worst_violation() const { return worst_violation_; }

 private:
  double worst_violation_;
};

class InsufficientHypothesesError : public Error {
 public:
  using Error::Error;
};

/// No M satisfied the feasibility conditions; carries the best margins seen.
class InfeasibleSynthesisError : public Error {
 public:
  InfeasibleSynthesisError(const std::string& what, std::vector<double> best_margins)
      : Error(what), best_margins_(std::move(best_margins)) {}
  const std::vector<double>& best_margins() const { return best_margins_; }

 private:
  std::vector<double> best_margins_;
};

class FamilyInfeasibilityError : public Error {
 public:
  using Error::Error;
};

class MalformedTrajectoryError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bregctl
