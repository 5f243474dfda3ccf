#pragma once

#include <stdexcept>
#include <string>

namespace spit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lattice basis is rank deficient or violates the configured cell bounds.
class SingularBasis : public Error {
 public:
  explicit SingularBasis(const std::string& what = "singular basis") : Error(what) {}
};

class DegenerateCell : public Error {
 public:
  explicit DegenerateCell(const std::string& what) : Error(what) {}
};

/// A slack that must be strictly positive was not.
class InfeasibleSlack : public Error {
 public:
  explicit InfeasibleSlack(const std::string& what = "infeasible slack") : Error(what) {}
};

/// The barrier gradient could not be evaluated at the half-step position.
class MidpointInfeasible : public Error {
 public:
  MidpointInfeasible() : Error("midpoint infeasible") {}
};

class LinearizedInfeasible : public Error {
 public:
  LinearizedInfeasible() : Error("linearized infeasible") {}
};

class StepUnderflow : public Error {
 public:
  explicit StepUnderflow(const std::string& what) : Error(what) {}
};

}  // namespace spit
