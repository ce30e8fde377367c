#include "kdiag/traced_algebra.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace kdiag {

TracedAlgebra::TracedAlgebra(std::vector<BlockSpec> blocks)
    : blocks_(std::move(blocks)) {
  if (blocks_.empty())
    throw ValidationError("TracedAlgebra needs at least one block");
  for (const BlockSpec& b : blocks_) {
    if (b.dim < 1) throw ValidationError("block dimensions must be positive");
    if (!(b.weight > 0.0) || !std::isfinite(b.weight))
      throw ValidationError("trace weights must be positive and finite");
    total_dim_ += b.dim;
    total_trace_ += b.weight * static_cast<double>(b.dim);
  }
}

bool TracedAlgebra::same_as(const TracedAlgebra& other) const {
  if (this == &other) return true;
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].dim != other.blocks_[i].dim ||
        blocks_[i].weight != other.blocks_[i].weight)
      return false;
  return true;
}

namespace {

bool detect_hermitian(const std::vector<Eigen::MatrixXcd>& blocks) {
  double scale = 0.0, diff = 0.0;
  for (const auto& m : blocks) {
    scale = std::max(scale, m.norm());  // Frobenius, an upper bound for the
                                        // operator norm at flag granularity
    diff = std::max(diff, (m - m.adjoint()).cwiseAbs().maxCoeff());
  }
  return diff <= 1e-12 * std::max(1.0, scale);
}

bool exactly_diagonal(const Eigen::MatrixXcd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != Complex(0, 0)) return false;
  return true;
}

}  // namespace

MatOp::MatOp(AlgebraPtr algebra, std::vector<Eigen::MatrixXcd> blocks)
    : algebra_(std::move(algebra)), blocks_(std::move(blocks)) {
  if (!algebra_) throw ValidationError("MatOp needs an algebra");
  if (static_cast<int>(blocks_.size()) != algebra_->num_blocks())
    throw ValidationError("MatOp: block count mismatch");
  for (int b = 0; b < algebra_->num_blocks(); ++b) {
    const auto& m = blocks_[static_cast<size_t>(b)];
    if (m.rows() != algebra_->dim(b) || m.cols() != algebra_->dim(b))
      throw ValidationError("MatOp: block dimension mismatch");
  }
  hermitian_ = detect_hermitian(blocks_);
}

MatOp MatOp::zero(const AlgebraPtr& algebra) {
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < algebra->num_blocks(); ++b)
    blocks.push_back(Eigen::MatrixXcd::Zero(algebra->dim(b), algebra->dim(b)));
  return with_known_projection_flag(MatOp(algebra, std::move(blocks)), true);
}

MatOp MatOp::identity(const AlgebraPtr& algebra) {
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < algebra->num_blocks(); ++b)
    blocks.push_back(
        Eigen::MatrixXcd::Identity(algebra->dim(b), algebra->dim(b)));
  return with_known_projection_flag(MatOp(algebra, std::move(blocks)), true);
}

MatOp MatOp::diagonal(const AlgebraPtr& algebra,
                      const std::vector<Eigen::VectorXd>& diags) {
  if (static_cast<int>(diags.size()) != algebra->num_blocks())
    throw ValidationError("diagonal: block count mismatch");
  std::vector<Eigen::MatrixXcd> blocks;
  bool idem = true;
  for (int b = 0; b < algebra->num_blocks(); ++b) {
    const auto& d = diags[static_cast<size_t>(b)];
    if (d.size() != algebra->dim(b))
      throw ValidationError("diagonal: length mismatch");
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (d[i] != 0.0 && d[i] != 1.0) idem = false;
    blocks.push_back(d.cast<Complex>().asDiagonal());
  }
  MatOp out(algebra, std::move(blocks));
  if (idem) out = with_known_projection_flag(std::move(out), true);
  return out;
}

MatOp MatOp::rank_one(const AlgebraPtr& algebra, int block,
                      const Eigen::VectorXcd& v) {
  if (block < 0 || block >= algebra->num_blocks())
    throw ValidationError("rank_one: bad block index");
  if (v.size() != algebra->dim(block))
    throw ValidationError("rank_one: vector length mismatch");
  double nrm = v.norm();
  if (nrm == 0.0) throw ValidationError("rank_one: zero vector");
  Eigen::VectorXcd u = v / nrm;
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < algebra->num_blocks(); ++b) {
    if (b == block)
      blocks.push_back(u * u.adjoint());
    else
      blocks.push_back(
          Eigen::MatrixXcd::Zero(algebra->dim(b), algebra->dim(b)));
  }
  return with_known_projection_flag(MatOp(algebra, std::move(blocks)), true);
}

MatOp with_known_projection_flag(MatOp op, bool flag) {
  op.projection_state_ = flag ? 1 : 0;
  return op;
}

bool MatOp::is_projection() const {
  if (projection_state_ < 0) {
    bool ok = hermitian_;
    if (ok) {
      for (const auto& m : blocks_) {
        if ((m * m - m).cwiseAbs().maxCoeff() > 1e-10) {
          ok = false;
          break;
        }
      }
    }
    projection_state_ = ok ? 1 : 0;
  }
  return projection_state_ == 1;
}

MatOp MatOp::adjoint() const {
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(blocks_.size());
  for (const auto& m : blocks_) blocks.push_back(m.adjoint());
  return MatOp(algebra_, std::move(blocks));
}

double MatOp::max_abs_entry() const {
  double v = 0.0;
  for (const auto& m : blocks_)
    if (m.size() > 0) v = std::max(v, m.cwiseAbs().maxCoeff());
  return v;
}

double MatOp::sup_norm() const {
  double v = 0.0;
  for (const auto& m : blocks_) {
    if (exactly_diagonal(m)) {
      v = std::max(v, m.diagonal().cwiseAbs().maxCoeff());
    } else if (hermitian_) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
          m, Eigen::EigenvaluesOnly);
      v = std::max(v, es.eigenvalues().cwiseAbs().maxCoeff());
    } else if ((m + m.adjoint()).cwiseAbs().maxCoeff() <=
               1e-12 * std::max(1.0, m.norm())) {
      // skew-hermitian: i*m is hermitian with the same singular values
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
          Complex(0, 1) * m, Eigen::EigenvaluesOnly);
      v = std::max(v, es.eigenvalues().cwiseAbs().maxCoeff());
    } else {
      Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
      if (svd.singularValues().size() > 0)
        v = std::max(v, svd.singularValues()(0));
    }
  }
  return v;
}

void MatOp::check_same_algebra(const MatOp& o) const {
  if (!algebra_->same_as(*o.algebra_))
    throw AlgebraMismatchError("operators from different traced algebras");
}

MatOp MatOp::operator+(const MatOp& o) const {
  check_same_algebra(o);
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    blocks.push_back(blocks_[b] + o.blocks_[b]);
  return MatOp(algebra_, std::move(blocks));
}

MatOp MatOp::operator-(const MatOp& o) const {
  check_same_algebra(o);
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    blocks.push_back(blocks_[b] - o.blocks_[b]);
  return MatOp(algebra_, std::move(blocks));
}

MatOp MatOp::operator*(const MatOp& o) const {
  check_same_algebra(o);
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    blocks.push_back(blocks_[b] * o.blocks_[b]);
  return MatOp(algebra_, std::move(blocks));
}

MatOp MatOp::operator*(Complex c) const {
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(blocks_.size());
  for (const auto& m : blocks_) blocks.push_back(c * m);
  return MatOp(algebra_, std::move(blocks));
}

HermTuple::HermTuple(std::vector<MatOp> entries, double ctol)
    : entries_(std::move(entries)) {
  if (entries_.empty()) throw ValidationError("HermTuple: n >= 1 required");
  const AlgebraPtr& alg = entries_.front().algebra();
  for (const MatOp& e : entries_) {
    if (!e.algebra()->same_as(*alg))
      throw AlgebraMismatchError("HermTuple: mixed algebras");
    if (!e.is_hermitian())
      throw ValidationError("HermTuple: entries must be hermitian");
    max_sup_norm_ = std::max(max_sup_norm_, e.sup_norm());
  }
  for (std::size_t i = 0; i < entries_.size(); ++i)
    for (std::size_t j = i + 1; j < entries_.size(); ++j) {
      MatOp c = entries_[i] * entries_[j] - entries_[j] * entries_[i];
      commutation_residual_ = std::max(commutation_residual_, c.sup_norm());
    }
  double allowed = ctol * (1.0 + max_sup_norm_) * (1.0 + max_sup_norm_);
  if (commutation_residual_ > allowed)
    throw NonCommutingError("HermTuple: commutation residual too large",
                            commutation_residual_);
}

}  // namespace kdiag
