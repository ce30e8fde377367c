#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "kdiag/common.hpp"

namespace kdiag {

struct BlockSpec {
  Eigen::Index dim;
  double weight;
};

// Finite model of a semifinite algebra: a direct sum of full matrix blocks,
// the trace on block b weighted by weight_b.  The weight plays the role of a
// measure mesh, so singular value functions become weighted step functions.
class TracedAlgebra {
 public:
  explicit TracedAlgebra(std::vector<BlockSpec> blocks);

  const std::vector<BlockSpec>& blocks() const { return blocks_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  Eigen::Index dim(int b) const { return blocks_[static_cast<size_t>(b)].dim; }
  double weight(int b) const { return blocks_[static_cast<size_t>(b)].weight; }
  Eigen::Index total_dim() const { return total_dim_; }
  double total_trace() const { return total_trace_; }

  bool same_as(const TracedAlgebra& other) const;

 private:
  std::vector<BlockSpec> blocks_;
  Eigen::Index total_dim_ = 0;
  double total_trace_ = 0.0;
};

using AlgebraPtr = std::shared_ptr<const TracedAlgebra>;

inline AlgebraPtr make_algebra(std::vector<BlockSpec> blocks) {
  return std::make_shared<TracedAlgebra>(std::move(blocks));
}
// Single full matrix block of dimension d with trace weight w.
inline AlgebraPtr make_simple_algebra(Eigen::Index d, double w) {
  return make_algebra({BlockSpec{d, w}});
}

// Element of a traced block algebra: one dense complex matrix per block.
// Hermiticity is verified once at construction and cached; idempotency
// (projection) is verified on first query and cached.
class MatOp {
 public:
  MatOp(AlgebraPtr algebra, std::vector<Eigen::MatrixXcd> blocks);

  static MatOp zero(const AlgebraPtr& algebra);
  static MatOp identity(const AlgebraPtr& algebra);
  // Hermitian diagonal operator with the given per-block real diagonals.
  static MatOp diagonal(const AlgebraPtr& algebra,
                        const std::vector<Eigen::VectorXd>& diags);
  // Projection onto span(v) inside one block; v need not be normalized.
  static MatOp rank_one(const AlgebraPtr& algebra, int block,
                        const Eigen::VectorXcd& v);

  const AlgebraPtr& algebra() const { return algebra_; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const Eigen::MatrixXcd& block(int b) const {
    return blocks_[static_cast<size_t>(b)];
  }
  Eigen::MatrixXcd& mutable_block(int b) {
    return blocks_[static_cast<size_t>(b)];
  }

  bool is_hermitian() const { return hermitian_; }
  bool is_projection() const;

  MatOp adjoint() const;
  double max_abs_entry() const;
  // Operator norm.  Uses the cheapest exact route available: diagonal reads
  // off the diagonal, hermitian/skew-hermitian go through a self-adjoint
  // eigensolver, everything else through an SVD.
  double sup_norm() const;

  MatOp operator+(const MatOp& o) const;
  MatOp operator-(const MatOp& o) const;
  MatOp operator*(const MatOp& o) const;
  MatOp operator*(Complex c) const;
  MatOp operator*(double c) const { return (*this) * Complex(c, 0.0); }

 private:
  AlgebraPtr algebra_;
  std::vector<Eigen::MatrixXcd> blocks_;
  bool hermitian_ = false;
  mutable int projection_state_ = -1;  // -1 unknown, 0 no, 1 yes
  friend MatOp with_known_projection_flag(MatOp op, bool flag);

  void check_same_algebra(const MatOp& o) const;
};

// Internal: tag an operator whose idempotency is exact by construction.
MatOp with_known_projection_flag(MatOp op, bool flag);

// Commuting self-adjoint n-tuple; the max commutator sup-norm over pairs is
// recorded at construction and must stay below ctol * (1 + max||alpha_j||)^2.
class HermTuple {
 public:
  explicit HermTuple(std::vector<MatOp> entries, double ctol = 1e-10);

  int n() const { return static_cast<int>(entries_.size()); }
  const MatOp& entry(int j) const { return entries_[static_cast<size_t>(j)]; }
  const std::vector<MatOp>& entries() const { return entries_; }
  const AlgebraPtr& algebra() const { return entries_.front().algebra(); }
  double commutation_residual() const { return commutation_residual_; }
  double max_sup_norm() const { return max_sup_norm_; }

 private:
  std::vector<MatOp> entries_;
  double commutation_residual_ = 0.0;
  double max_sup_norm_ = 0.0;
};

}  // namespace kdiag
