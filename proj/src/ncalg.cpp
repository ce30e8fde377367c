#include "kdiag/ncalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

namespace kdiag {

Complex trace(const MatOp& x) {
  Complex acc(0, 0);
  for (int b = 0; b < x.num_blocks(); ++b)
    acc += x.algebra()->weight(b) * x.block(b).trace();
  return acc;
}

namespace {

bool exactly_diagonal(const Eigen::MatrixXcd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != Complex(0, 0)) return false;
  return true;
}

Eigen::VectorXd block_singular_values(const Eigen::MatrixXcd& m,
                                      bool hermitian) {
  if (exactly_diagonal(m)) return m.diagonal().cwiseAbs();
  if (hermitian) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m,
                                                       Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs();
  }
  if ((m + m.adjoint()).cwiseAbs().maxCoeff() <=
      1e-12 * std::max(1.0, m.norm())) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Complex(0, 1) * m,
                                                       Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs();
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
  return svd.singularValues();
}

}  // namespace

StepFunction singular_value_function(const MatOp& x) {
  std::vector<Step> pairs;
  if (x.is_projection()) {
    // spectrum is {0,1} within the flag tolerance; block ranks are traces
    for (int b = 0; b < x.num_blocks(); ++b) {
      auto rank = static_cast<Eigen::Index>(
          std::llround(x.block(b).trace().real()));
      for (Eigen::Index i = 0; i < rank; ++i)
        pairs.push_back({x.algebra()->weight(b), 1.0});
    }
    return StepFunction::from_weighted_values(std::move(pairs));
  }
  for (int b = 0; b < x.num_blocks(); ++b) {
    Eigen::VectorXd sv = block_singular_values(x.block(b), x.is_hermitian());
    double w = x.algebra()->weight(b);
    for (Eigen::Index i = 0; i < sv.size(); ++i) pairs.push_back({w, sv[i]});
  }
  return StepFunction::from_weighted_values(std::move(pairs));
}

double symmetric_norm(const MatOp& x, const SpaceSpec& space) {
  return space_norm(singular_value_function(x), space);
}

MatOp range_projection(const MatOp& x, double rank_tol) {
  std::vector<Eigen::BDCSVD<Eigen::MatrixXcd>> svds;
  double sigma_max = 0.0;
  Eigen::Index max_dim = 0;
  for (int b = 0; b < x.num_blocks(); ++b) {
    svds.emplace_back(x.block(b), Eigen::ComputeThinU);
    if (svds.back().singularValues().size() > 0)
      sigma_max = std::max(sigma_max, svds.back().singularValues()(0));
    max_dim = std::max(max_dim, x.algebra()->dim(b));
  }
  double tol = rank_tol >= 0.0
                   ? rank_tol
                   : std::numeric_limits<double>::epsilon() *
                         static_cast<double>(max_dim) * sigma_max;
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < x.num_blocks(); ++b) {
    const auto& sv = svds[static_cast<size_t>(b)].singularValues();
    Eigen::Index r = 0;
    while (r < sv.size() && sv[r] > tol) ++r;
    const Eigen::MatrixXcd U =
        svds[static_cast<size_t>(b)].matrixU().leftCols(r);
    blocks.push_back(U * U.adjoint());
  }
  return with_known_projection_flag(MatOp(x.algebra(), std::move(blocks)),
                                    true);
}

MatOp commutator(const MatOp& x, const MatOp& y) { return x * y - y * x; }

bool projection_leq(const MatOp& p, const MatOp& q, double tol) {
  return (p - q * p).max_abs_entry() <= tol;
}

}  // namespace kdiag
