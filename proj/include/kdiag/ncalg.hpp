#pragma once

#include "kdiag/space_spec.hpp"
#include "kdiag/step_function.hpp"
#include "kdiag/traced_algebra.hpp"

namespace kdiag {

// tau(x) = sum_b weight_b * tr(x_b).
Complex trace(const MatOp& x);

// Generalized singular value function mu(x) with respect to the weighted
// trace: singular values of block b each carry width weight_b, merged and
// sorted nonincreasing.
StepFunction singular_value_function(const MatOp& x);

// ||x||_{E(M)} = || mu(x) ||_E.
double symmetric_norm(const MatOp& x, const SpaceSpec& space);

// Left support l(x): orthogonal projection onto the column space, blockwise,
// by singular value thresholding.  rank_tol < 0 selects the default
// machine_eps * max_dim * sigma_max (sigma_max over all blocks).  The right
// support is range_projection of the adjoint.
MatOp range_projection(const MatOp& x, double rank_tol = -1.0);

MatOp commutator(const MatOp& x, const MatOp& y);

// p <= q as projections, up to tol: || p - q p ||_max <= tol.
bool projection_leq(const MatOp& p, const MatOp& q, double tol = 1e-9);

}  // namespace kdiag
