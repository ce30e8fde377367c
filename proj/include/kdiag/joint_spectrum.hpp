#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "kdiag/traced_algebra.hpp"

namespace kdiag {

// Product of real intervals; each axis carries inclusivity flags, half-open
// [lo, hi) by default.
struct Box {
  Eigen::VectorXd lo, hi;
  std::vector<bool> lo_closed, hi_closed;

  static Box half_open(Eigen::VectorXd lo, Eigen::VectorXd hi);
  bool contains(const Eigen::VectorXd& x) const;
  int n() const { return static_cast<int>(lo.size()); }
};

// Half-open dyadic cube prod_j [k_j/2^m, (k_j+1)/2^m) at level m >= 0,
// restricted to [0,1)^n, so k_j in {0, ..., 2^m - 1}.
struct DyadicAtom {
  int m = 0;
  std::vector<std::int64_t> k;

  Box box() const;
  Eigen::VectorXd centre() const;
  bool operator<(const DyadicAtom& o) const {
    if (m != o.m) return m < o.m;
    return k < o.k;
  }
  bool operator==(const DyadicAtom& o) const { return m == o.m && k == o.k; }
};

// Eigenvalues within 2^-45 of a dyadic cut are snapped onto the cut before
// flooring, so atom membership is reproducible across platforms; a value on
// the cut belongs to the atom whose left endpoint it is.
std::int64_t dyadic_index(double lambda, int m);

struct EigenTupleEntry {
  Eigen::VectorXd lambda;  // joint eigenvalue, one entry per tuple slot
  int block = 0;
  int col = 0;
};

// Shared eigenbasis of a commuting hermitian tuple together with the joint
// eigenvalues; the finite realisation of the joint spectral measure.
class JointSpectrum {
 public:
  JointSpectrum(AlgebraPtr algebra, std::vector<Eigen::MatrixXcd> basis,
                std::vector<EigenTupleEntry> tuples, double residual, int n,
                double lambda_merge_tol);

  // Spectrum of an exactly diagonal tuple: identity basis, zero residual.
  // axis_block_diags[j][b] is the diagonal of entry j in block b.
  static JointSpectrum from_diagonal(
      const AlgebraPtr& algebra,
      const std::vector<std::vector<Eigen::VectorXd>>& axis_block_diags);

  int n() const { return n_; }
  const AlgebraPtr& algebra() const { return algebra_; }
  const std::vector<Eigen::MatrixXcd>& basis() const { return basis_; }
  const std::vector<EigenTupleEntry>& tuples() const { return tuples_; }
  double residual() const { return residual_; }
  bool identity_basis() const { return identity_basis_; }
  double lambda_merge_tol() const { return lambda_merge_tol_; }

  // Reconstruction of the model operators (exactly commuting by build).
  MatOp op(int j) const;
  HermTuple tuple_model() const;

  // Transform a matrix given in eigencoordinates of block b back to the
  // original coordinates (skips the multiplication for identity bases).
  Eigen::MatrixXcd from_eigencoords(int b, const Eigen::MatrixXcd& m) const;

  // Groups of tuple indices with equal joint eigenvalue (within the merge
  // tolerance, per axis); these index the joint eigenprojections.
  std::vector<std::vector<int>> eigenvalue_groups() const;

 private:
  AlgebraPtr algebra_;
  std::vector<Eigen::MatrixXcd> basis_;
  std::vector<EigenTupleEntry> tuples_;
  double residual_ = 0.0;
  int n_ = 1;
  double lambda_merge_tol_ = 0.0;
  bool identity_basis_ = false;
};

// Simultaneous diagonalization of a commuting tuple: a seeded generic linear
// combination is diagonalized first, its eigenvalue clusters are refined by
// diagonalizing each entry in turn, and the final off-diagonal residual must
// stay below dtol * (1 + max||alpha_j||); up to three fresh seeds are tried.
JointSpectrum joint_diagonalize(const HermTuple& alpha, double dtol = 1e-8);

// e^alpha(B): sum of the rank-one projectors onto eigencolumns with joint
// eigenvalue inside B.
MatOp spectral_projection(const JointSpectrum& J, const Box& B);

// Occupied level-m dyadic atoms of the rescaled spectrum, each with the tuple
// indices it contains.  All eigenvalues must lie in [0,1)^n.
std::map<DyadicAtom, std::vector<int>> atom_partition(const JointSpectrum& J,
                                                      int m);

// Per-axis affine change x' = (x + offset) / scale and its inverse.
struct AffineAxisMap {
  double offset = 0.0;
  double scale = 1.0;
  double forward(double x) const { return (x + offset) / scale; }
  double inverse(double y) const { return y * scale - offset; }
};

// Shift and rescale each axis so the spectrum lands in [0, 1 - 2^-40],
// keeping the margin clear of the dyadic snapping radius.  A zero-spread
// axis gets scale 1 and offset only.  Norm bounds transport by 1/scale.
std::pair<std::vector<AffineAxisMap>, HermTuple> rescale_to_unit_cube(
    const HermTuple& alpha);

}  // namespace kdiag
