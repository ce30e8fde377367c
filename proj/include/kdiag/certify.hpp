#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kdiag/construct.hpp"
#include "kdiag/joint_spectrum.hpp"
#include "kdiag/space_spec.hpp"

namespace kdiag {

// Two-sided bookkeeping for the quasicentral modulus on one model: measured
// commutator norms of an approximate-unit schedule on the upper side, a dual
// certificate value on the lower side when one exists.  Whenever both sides
// are reported on the same model, lower <= upper must hold.
struct ModulusEstimate {
  SpaceSpec space;
  std::vector<int> ms;
  std::vector<double> values;          // ||[p_m, alpha]||_{E(M)} per level
  std::vector<double> upper_envelope;  // running minimum, nonincreasing
  std::optional<double> lower;
  std::string metadata;
};

// r_m = p_m from the dyadic construction; reports ||[r_m, alpha]||_{E(M)}
// per requested level.  On a finite model with a generating q the values
// reach zero at full resolution.
ModulusEstimate modulus_upper_schedule(const HermTuple& alpha, const MatOp& q,
                                       const SpaceSpec& E,
                                       const std::vector<int>& m_list);

struct StepSchedule {
  enum class Kind { InvSqrt, Polyak };
  Kind kind = Kind::InvSqrt;
  double base = 1.0;

  static StepSchedule inv_sqrt(double base = 1.0) {
    return {Kind::InvSqrt, base};
  }
  static StepSchedule polyak() { return {Kind::Polyak, 1.0}; }
};

struct OptimizeResult {
  double value = 0.0;
  std::vector<Eigen::MatrixXcd> argmin;  // per-block best feasible point
  int iterations = 0;
  double projection_residual = 0.0;
};

// Minimize r -> max_j ||[r, alpha_j]||_{E(M)} over the spectral order
// interval {a0 <= r <= 1} by projected subgradient descent (Dykstra
// alternating spectral clippings for the projection, at most 50 rounds to
// residual 1e-8).  The descent also line-searches along the feasible segment
// toward the identity, which always scales the commutator down.  In finite
// dimensions r = 1 is feasible, so the true infimum is zero; the contract is
// convergence quality, not a positive modulus.
OptimizeResult modulus_inf_optimize(const HermTuple& alpha, const MatOp& a0,
                                    const SpaceSpec& E, int iters = 400,
                                    StepSchedule schedule = {},
                                    double stop_tol = 1e-4);

// Stress variant: r(c) = r_base + sum_i c_i span_i with the coefficients
// confined to the box [-halfwidth, halfwidth]^s (span directions are meant
// to be taken from the orthocomplement of the commutant of alpha, where the
// objective has no flat zero).  Pure projected subgradient in c, sup-norm
// objective.
OptimizeResult modulus_inf_optimize_restricted(
    const HermTuple& alpha, const MatOp& r_base,
    const std::vector<MatOp>& span, double halfwidth, int iters);

}  // namespace kdiag
