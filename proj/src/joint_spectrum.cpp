#include "kdiag/joint_spectrum.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

namespace kdiag {

Box Box::half_open(Eigen::VectorXd lo, Eigen::VectorXd hi) {
  if (lo.size() != hi.size()) throw ValidationError("Box: dimension mismatch");
  for (Eigen::Index j = 0; j < lo.size(); ++j)
    if (lo[j] > hi[j]) throw ValidationError("Box: lo <= hi required");
  Box b;
  b.lo = std::move(lo);
  b.hi = std::move(hi);
  b.lo_closed.assign(static_cast<size_t>(b.lo.size()), true);
  b.hi_closed.assign(static_cast<size_t>(b.lo.size()), false);
  return b;
}

bool Box::contains(const Eigen::VectorXd& x) const {
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    auto ju = static_cast<size_t>(j);
    if (lo_closed[ju] ? x[j] < lo[j] : x[j] <= lo[j]) return false;
    if (hi_closed[ju] ? x[j] > hi[j] : x[j] >= hi[j]) return false;
  }
  return true;
}

Box DyadicAtom::box() const {
  Eigen::Index n = static_cast<Eigen::Index>(k.size());
  Eigen::VectorXd lo(n), hi(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    lo[j] = std::ldexp(static_cast<double>(k[static_cast<size_t>(j)]), -m);
    hi[j] = std::ldexp(static_cast<double>(k[static_cast<size_t>(j)] + 1), -m);
  }
  return Box::half_open(std::move(lo), std::move(hi));
}

Eigen::VectorXd DyadicAtom::centre() const {
  Eigen::Index n = static_cast<Eigen::Index>(k.size());
  Eigen::VectorXd c(n);
  for (Eigen::Index j = 0; j < n; ++j)
    c[j] = std::ldexp(static_cast<double>(k[static_cast<size_t>(j)]) + 0.5, -m);
  return c;
}

std::int64_t dyadic_index(double lambda, int m) {
  double s = std::ldexp(lambda, m);
  double r = std::round(s);
  if (std::abs(lambda - std::ldexp(r, -m)) <= std::ldexp(1.0, -45)) s = r;
  return static_cast<std::int64_t>(std::floor(s));
}

JointSpectrum::JointSpectrum(AlgebraPtr algebra,
                             std::vector<Eigen::MatrixXcd> basis,
                             std::vector<EigenTupleEntry> tuples,
                             double residual, int n, double lambda_merge_tol)
    : algebra_(std::move(algebra)),
      basis_(std::move(basis)),
      tuples_(std::move(tuples)),
      residual_(residual),
      n_(n),
      lambda_merge_tol_(lambda_merge_tol) {
  identity_basis_ = true;
  for (int b = 0; b < algebra_->num_blocks(); ++b)
    if (!basis_[static_cast<size_t>(b)].isIdentity(0.0)) {
      identity_basis_ = false;
      break;
    }
}

JointSpectrum JointSpectrum::from_diagonal(
    const AlgebraPtr& algebra,
    const std::vector<std::vector<Eigen::VectorXd>>& axis_block_diags) {
  int n = static_cast<int>(axis_block_diags.size());
  if (n < 1) throw ValidationError("from_diagonal: n >= 1 required");
  std::vector<Eigen::MatrixXcd> basis;
  std::vector<EigenTupleEntry> tuples;
  double max_abs = 0.0;
  for (int b = 0; b < algebra->num_blocks(); ++b) {
    Eigen::Index d = algebra->dim(b);
    basis.push_back(Eigen::MatrixXcd::Identity(d, d));
    for (Eigen::Index i = 0; i < d; ++i) {
      EigenTupleEntry e;
      e.lambda.resize(n);
      for (int j = 0; j < n; ++j) {
        e.lambda[j] = axis_block_diags[static_cast<size_t>(j)]
                                      [static_cast<size_t>(b)][i];
        max_abs = std::max(max_abs, std::abs(e.lambda[j]));
      }
      e.block = b;
      e.col = static_cast<int>(i);
      tuples.push_back(std::move(e));
    }
  }
  return JointSpectrum(algebra, std::move(basis), std::move(tuples), 0.0, n,
                       1e-7 * (1.0 + max_abs));
}

MatOp JointSpectrum::op(int j) const {
  std::vector<Eigen::VectorXd> diags;
  for (int b = 0; b < algebra_->num_blocks(); ++b)
    diags.push_back(Eigen::VectorXd::Zero(algebra_->dim(b)));
  for (const auto& e : tuples_)
    diags[static_cast<size_t>(e.block)][e.col] = e.lambda[j];
  if (identity_basis_) return MatOp::diagonal(algebra_, diags);
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < algebra_->num_blocks(); ++b) {
    const auto& U = basis_[static_cast<size_t>(b)];
    blocks.push_back(U * diags[static_cast<size_t>(b)].cast<Complex>().asDiagonal() *
                     U.adjoint());
  }
  return MatOp(algebra_, std::move(blocks));
}

HermTuple JointSpectrum::tuple_model() const {
  std::vector<MatOp> entries;
  for (int j = 0; j < n_; ++j) entries.push_back(op(j));
  return HermTuple(std::move(entries));
}

Eigen::MatrixXcd JointSpectrum::from_eigencoords(
    int b, const Eigen::MatrixXcd& m) const {
  if (identity_basis_) return m;
  const auto& U = basis_[static_cast<size_t>(b)];
  return U * m * U.adjoint();
}

namespace {

// Recursive grouping of tuple indices by their lambda coordinates, axis by
// axis, splitting at gaps larger than tol.
void group_by_axis(const std::vector<EigenTupleEntry>& tuples,
                   std::vector<int> idx, int axis, int n, double tol,
                   std::vector<std::vector<int>>& out) {
  if (axis == n) {
    out.push_back(std::move(idx));
    return;
  }
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return tuples[static_cast<size_t>(a)].lambda[axis] <
           tuples[static_cast<size_t>(b)].lambda[axis];
  });
  std::size_t start = 0;
  for (std::size_t i = 1; i <= idx.size(); ++i) {
    bool split =
        i == idx.size() ||
        tuples[static_cast<size_t>(idx[i])].lambda[axis] -
                tuples[static_cast<size_t>(idx[i - 1])].lambda[axis] >
            tol;
    if (split) {
      group_by_axis(tuples,
                    std::vector<int>(idx.begin() + static_cast<long>(start),
                                     idx.begin() + static_cast<long>(i)),
                    axis + 1, n, tol, out);
      start = i;
    }
  }
}

}  // namespace

std::vector<std::vector<int>> JointSpectrum::eigenvalue_groups() const {
  std::vector<std::vector<int>> out;
  // blocks never mix: group within each block separately
  for (int b = 0; b < algebra_->num_blocks(); ++b) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < tuples_.size(); ++i)
      if (tuples_[i].block == b) idx.push_back(static_cast<int>(i));
    if (!idx.empty())
      group_by_axis(tuples_, std::move(idx), 0, n_, lambda_merge_tol_, out);
  }
  return out;
}

namespace {

bool exactly_diagonal(const Eigen::MatrixXcd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != Complex(0, 0)) return false;
  return true;
}

// Diagonalize ops[axis], ops[axis+1], ... restricted to span(cols); write the
// refined columns into U at pos.
void refine(const std::vector<const Eigen::MatrixXcd*>& ops,
            const Eigen::MatrixXcd& cols, std::size_t axis, Eigen::MatrixXcd& U,
            Eigen::Index& pos) {
  if (axis == ops.size() || cols.cols() == 1) {
    U.middleCols(pos, cols.cols()) = cols;
    pos += cols.cols();
    return;
  }
  Eigen::MatrixXcd B = cols.adjoint() * (*ops[axis]) * cols;
  B = (0.5 * (B + B.adjoint())).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(B);
  const Eigen::VectorXd& vals = es.eigenvalues();
  double spread = vals[vals.size() - 1] - vals[0];
  double gap_tol = 1e-7 * spread;
  Eigen::Index start = 0;
  for (Eigen::Index i = 1; i <= vals.size(); ++i) {
    if (i == vals.size() || vals[i] - vals[i - 1] > gap_tol) {
      Eigen::MatrixXcd sub =
          cols * es.eigenvectors().middleCols(start, i - start);
      refine(ops, sub, axis + 1, U, pos);
      start = i;
    }
  }
}

}  // namespace

JointSpectrum joint_diagonalize(const HermTuple& alpha, double dtol) {
  const AlgebraPtr& alg = alpha.algebra();
  const int n = alpha.n();

  // exactly diagonal input: identity basis, residual zero
  bool all_diagonal = true;
  for (int j = 0; j < n && all_diagonal; ++j)
    for (int b = 0; b < alg->num_blocks() && all_diagonal; ++b)
      if (!exactly_diagonal(alpha.entry(j).block(b))) all_diagonal = false;
  if (all_diagonal) {
    std::vector<std::vector<Eigen::VectorXd>> diags(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
      for (int b = 0; b < alg->num_blocks(); ++b)
        diags[static_cast<size_t>(j)].push_back(
            alpha.entry(j).block(b).diagonal().real());
    return JointSpectrum::from_diagonal(alg, diags);
  }

  const double scale = 1.0 + alpha.max_sup_norm();
  double best_residual = 0.0;
  for (int attempt = 0; attempt < 3; ++attempt) {
    std::mt19937_64 rng(0x6b646961ULL + static_cast<unsigned>(attempt));
    std::normal_distribution<double> nd;
    Eigen::VectorXd c(n);
    for (int j = 0; j < n; ++j) c[j] = nd(rng);
    c.normalize();

    std::vector<Eigen::MatrixXcd> basis;
    double residual = 0.0;
    std::vector<EigenTupleEntry> tuples;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      Eigen::Index d = alg->dim(b);
      Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(d, d);
      for (int j = 0; j < n; ++j) M += c[j] * alpha.entry(j).block(b);
      std::vector<const Eigen::MatrixXcd*> ops;
      for (int j = 0; j < n; ++j) ops.push_back(&alpha.entry(j).block(b));

      Eigen::MatrixXcd U(d, d);
      Eigen::Index pos = 0;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M);
      const Eigen::VectorXd& vals = es.eigenvalues();
      double spread = vals[d - 1] - vals[0];
      double gap_tol = 1e-7 * spread;
      Eigen::Index start = 0;
      for (Eigen::Index i = 1; i <= d; ++i) {
        if (i == d || vals[i] - vals[i - 1] > gap_tol) {
          refine(ops, es.eigenvectors().middleCols(start, i - start), 0, U,
                 pos);
          start = i;
        }
      }
      basis.push_back(U);
    }

    // read eigenvalues and the off-diagonal residual
    for (int b = 0; b < alg->num_blocks(); ++b) {
      Eigen::Index d = alg->dim(b);
      std::vector<Eigen::VectorXd> lams;
      for (int j = 0; j < n; ++j) {
        Eigen::MatrixXcd T = basis[static_cast<size_t>(b)].adjoint() *
                             alpha.entry(j).block(b) *
                             basis[static_cast<size_t>(b)];
        Eigen::MatrixXcd off = T;
        off.diagonal().setZero();
        if (d > 1) residual = std::max(residual, off.cwiseAbs().maxCoeff());
        lams.push_back(T.diagonal().real());
      }
      for (Eigen::Index i = 0; i < d; ++i) {
        EigenTupleEntry e;
        e.lambda.resize(n);
        for (int j = 0; j < n; ++j)
          e.lambda[j] = lams[static_cast<size_t>(j)][i];
        e.block = b;
        e.col = static_cast<int>(i);
        tuples.push_back(std::move(e));
      }
    }

    best_residual = residual;
    if (residual <= dtol * scale)
      return JointSpectrum(alg, std::move(basis), std::move(tuples), residual,
                           n, 1e-7 * scale);
  }
  throw NonCommutingError(
      "joint_diagonalize: off-diagonal residual exceeds tolerance",
      best_residual);
}

MatOp spectral_projection(const JointSpectrum& J, const Box& B) {
  if (B.n() != J.n())
    throw ValidationError("spectral_projection: box dimension mismatch");
  const AlgebraPtr& alg = J.algebra();
  std::vector<std::vector<int>> selected(
      static_cast<size_t>(alg->num_blocks()));
  for (const auto& e : J.tuples())
    if (B.contains(e.lambda))
      selected[static_cast<size_t>(e.block)].push_back(e.col);

  if (J.identity_basis()) {
    std::vector<Eigen::VectorXd> diags;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(alg->dim(b));
      for (int col : selected[static_cast<size_t>(b)]) d[col] = 1.0;
      diags.push_back(std::move(d));
    }
    return MatOp::diagonal(alg, diags);
  }
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < alg->num_blocks(); ++b) {
    const auto& cols = selected[static_cast<size_t>(b)];
    Eigen::MatrixXcd sel(alg->dim(b), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i)
      sel.col(static_cast<Eigen::Index>(i)) =
          J.basis()[static_cast<size_t>(b)].col(cols[i]);
    blocks.push_back(sel * sel.adjoint());
  }
  return with_known_projection_flag(MatOp(alg, std::move(blocks)), true);
}

std::map<DyadicAtom, std::vector<int>> atom_partition(const JointSpectrum& J,
                                                      int m) {
  if (m < 0) throw ValidationError("atom_partition: level m >= 0 required");
  std::map<DyadicAtom, std::vector<int>> out;
  const std::int64_t cells = std::int64_t{1} << std::min(m, 62);
  for (std::size_t i = 0; i < J.tuples().size(); ++i) {
    const auto& e = J.tuples()[i];
    DyadicAtom a;
    a.m = m;
    a.k.resize(static_cast<size_t>(J.n()));
    for (int j = 0; j < J.n(); ++j) {
      std::int64_t k = dyadic_index(e.lambda[j], m);
      if (k < 0 || k >= cells)
        throw ValidationError(
            "atom_partition: eigenvalue outside [0,1)^n; apply "
            "rescale_to_unit_cube first");
      a.k[static_cast<size_t>(j)] = k;
    }
    out[a].push_back(static_cast<int>(i));
  }
  return out;
}

std::pair<std::vector<AffineAxisMap>, HermTuple> rescale_to_unit_cube(
    const HermTuple& alpha) {
  const double margin = std::ldexp(1.0, -40);
  std::vector<AffineAxisMap> maps;
  std::vector<MatOp> entries;
  for (int j = 0; j < alpha.n(); ++j) {
    const MatOp& a = alpha.entry(j);
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int b = 0; b < a.num_blocks(); ++b) {
      const auto& blk = a.block(b);
      double bl, bh;
      if (exactly_diagonal(blk)) {
        bl = blk.diagonal().real().minCoeff();
        bh = blk.diagonal().real().maxCoeff();
      } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
            blk, Eigen::EigenvaluesOnly);
        bl = es.eigenvalues().minCoeff();
        bh = es.eigenvalues().maxCoeff();
      }
      lo = first ? bl : std::min(lo, bl);
      hi = first ? bh : std::max(hi, bh);
      first = false;
    }
    AffineAxisMap map;
    map.offset = -lo;
    map.scale = hi > lo ? (hi - lo) / (1.0 - margin) : 1.0;
    maps.push_back(map);

    std::vector<Eigen::MatrixXcd> blocks;
    for (int b = 0; b < a.num_blocks(); ++b) {
      Eigen::Index d = a.algebra()->dim(b);
      blocks.push_back(
          (a.block(b) + map.offset * Eigen::MatrixXcd::Identity(d, d)) /
          map.scale);
    }
    entries.emplace_back(a.algebra(), std::move(blocks));
  }
  return {std::move(maps), HermTuple(std::move(entries))};
}

}  // namespace kdiag
