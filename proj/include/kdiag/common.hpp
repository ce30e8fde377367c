#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdiag {

using Real = double;
using Complex = std::complex<double>;

// Invalid inputs (bad psi data, malformed grammar, precondition violations
// detectable from the arguments alone).
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Two operators from structurally different algebras were combined.
struct AlgebraMismatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A tuple failed the commutation / joint-diagonalization residual test.
struct NonCommutingError : std::runtime_error {
  double residual;
  NonCommutingError(const std::string& msg, double res)
      : std::runtime_error(msg), residual(res) {}
};

// No dyadic level within the cap satisfies the requested bound.
struct UnreachableLevelError : std::runtime_error {
  int m_cap;
  double bound_at_cap;
  UnreachableLevelError(const std::string& msg, int cap, double bound)
      : std::runtime_error(msg), m_cap(cap), bound_at_cap(bound) {}
};

// The windowed embedding test did not establish the required non-embedding.
struct EmbeddingPreconditionError : std::runtime_error {
  std::vector<double> ratios;
  EmbeddingPreconditionError(const std::string& msg, std::vector<double> r)
      : std::runtime_error(msg), ratios(std::move(r)) {}
};

// A banded-calculus operation was asked to proceed without the certificate
// that makes it well defined.
struct CertificateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kdiag
