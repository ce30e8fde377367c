#pragma once

#include <string>

#include "kdiag/joint_spectrum.hpp"
#include "kdiag/traced_algebra.hpp"

namespace kdiag {

// JSON operator format: an algebra header (blocks with dim and weight) plus
// per-block row-major complex entries as [re, im] pairs.
std::string algebra_to_json(const TracedAlgebra& alg);
AlgebraPtr algebra_from_json(const std::string& text);

std::string matop_to_json(const MatOp& x);
MatOp matop_from_json(const std::string& text);

std::string tuple_to_json(const HermTuple& alpha);
HermTuple tuple_from_json(const std::string& text);

// Debug dump of the joint eigenvalues: block,col,lambda_1..lambda_n.
std::string eigen_tuples_csv(const JointSpectrum& J);

}  // namespace kdiag
