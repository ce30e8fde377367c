#include "kdiag/construct.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace kdiag {

namespace {

bool exactly_diagonal(const Eigen::MatrixXcd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != Complex(0, 0)) return false;
  return true;
}

// Thin orthonormal basis of the column space of a projection block.  Low
// ranks go through a seeded range finder (p * Omega spans the range unless
// Omega is pathologically aligned, which the residual check below catches);
// anything else falls back to a rank-revealing QR.
Eigen::MatrixXcd projection_range_basis(const Eigen::MatrixXcd& p) {
  const Eigen::Index d = p.rows();
  const auto rank_est =
      static_cast<Eigen::Index>(std::llround(p.trace().real()));
  const Eigen::Index probes = std::min(d, rank_est + 8);
  if (rank_est >= 0 && 4 * probes < d) {
    std::mt19937_64 rng(0x72616e67ULL ^ static_cast<std::uint64_t>(d));
    std::normal_distribution<double> nd;
    Eigen::MatrixXcd omega(d, probes);
    for (Eigen::Index j = 0; j < probes; ++j)
      for (Eigen::Index i = 0; i < d; ++i)
        omega(i, j) = Complex(nd(rng), nd(rng));
    Eigen::MatrixXcd Y = p * omega;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Y, Eigen::ComputeThinU);
    double smax =
        svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    double tol = std::numeric_limits<double>::epsilon() *
                 static_cast<double>(d) * smax;
    Eigen::Index r = 0;
    while (r < svd.singularValues().size() && svd.singularValues()(r) > tol)
      ++r;
    Eigen::MatrixXcd B = svd.matrixU().leftCols(r);
    // certify the capture: B must reproduce p
    if ((p - B * (B.adjoint() * p)).cwiseAbs().maxCoeff() <= 1e-8) return B;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(p);
  qr.setThreshold(1e-9);
  Eigen::Index r = qr.rank();
  Eigen::MatrixXcd Q = qr.householderQ();
  return Q.leftCols(r);
}

// Singular values of [B B^*, D] for a thin orthonormal B and real diagonal
// D: the commutator is skew-hermitian with range inside span[B, DB], so it
// reduces exactly to that subspace.
Eigen::VectorXd lowrank_commutator_svs(const Eigen::MatrixXcd& B,
                                       const Eigen::VectorXd& d) {
  const Eigen::Index s = B.rows(), r = B.cols();
  Eigen::MatrixXcd DB = d.asDiagonal() * B;
  if (6 * r >= s) {
    Eigen::MatrixXcd C = B * DB.adjoint() - DB * B.adjoint();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Complex(0, 1) * C,
                                                       Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs();
  }
  Eigen::MatrixXcd U(s, 2 * r);
  U.leftCols(r) = B;
  U.rightCols(r) = DB;
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(U);
  Eigen::MatrixXcd Q =
      qr.householderQ() * Eigen::MatrixXcd::Identity(s, 2 * r);
  Eigen::MatrixXcd Bq = Q.adjoint() * B;
  Eigen::MatrixXcd DBq = Q.adjoint() * DB;
  // C compressed to span(U): note B (DB)^* - (DB) B^* with D real
  Eigen::MatrixXcd Chat = Bq * DBq.adjoint() - DBq * Bq.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Complex(0, 1) * Chat,
                                                     Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs();
}

// q expressed in the eigencoordinates of J: per block W_b = U_b^* V_b with
// V_b a thin range basis of q_b.
struct PreparedGenerator {
  std::vector<Eigen::MatrixXcd> W;
  double tau_q = 0.0;
};

PreparedGenerator prepare_generator(const JointSpectrum& J, const MatOp& q) {
  if (!q.algebra()->same_as(*J.algebra()))
    throw AlgebraMismatchError("generator lives in a different algebra");
  if (!q.is_projection())
    throw ValidationError("the generator q must be a projection");
  PreparedGenerator out;
  for (int b = 0; b < J.algebra()->num_blocks(); ++b) {
    Eigen::MatrixXcd V = projection_range_basis(q.block(b));
    if (!J.identity_basis())
      V = (J.basis()[static_cast<size_t>(b)].adjoint() * V).eval();
    out.W.push_back(std::move(V));
  }
  out.tau_q = trace(q).real();
  return out;
}

// Orthonormal basis of the span of the given rows of W, restricted to those
// rows (an |rows| x rank matrix).
Eigen::MatrixXcd row_restricted_basis(const Eigen::MatrixXcd& W,
                                      const std::vector<int>& rows) {
  Eigen::MatrixXcd M(static_cast<Eigen::Index>(rows.size()), W.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    M.row(static_cast<Eigen::Index>(i)) = W.row(rows[i]);
  if (M.cols() == 0) return Eigen::MatrixXcd(M.rows(), 0);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M, Eigen::ComputeThinU);
  double smax =
      svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  double tol = std::numeric_limits<double>::epsilon() *
               static_cast<double>(std::max(M.rows(), M.cols())) * smax;
  Eigen::Index r = 0;
  while (r < svd.singularValues().size() && svd.singularValues()(r) > tol)
    ++r;
  return svd.matrixU().leftCols(r);
}

// p_m assembled per occupied atom, in eigencoordinates.
struct AtomPart {
  int block = 0;
  std::vector<int> cols;      // eigencolumn indices within the block
  Eigen::MatrixXcd basis;     // |cols| x rank, orthonormal
};

struct UnitStructure {
  int m = 0;
  std::vector<std::pair<DyadicAtom, std::vector<AtomPart>>> parts;
  std::vector<Eigen::MatrixXcd> P;  // eigencoord projector blocks
  double tau_p = 0.0;
};

UnitStructure build_unit_structure(const JointSpectrum& J,
                                   const PreparedGenerator& gen, int m) {
  UnitStructure out;
  out.m = m;
  const AlgebraPtr& alg = J.algebra();
  for (int b = 0; b < alg->num_blocks(); ++b)
    out.P.push_back(Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));

  for (const auto& [atom, tuple_idx] : atom_partition(J, m)) {
    std::vector<std::vector<int>> per_block(
        static_cast<size_t>(alg->num_blocks()));
    for (int ti : tuple_idx) {
      const auto& e = J.tuples()[static_cast<size_t>(ti)];
      per_block[static_cast<size_t>(e.block)].push_back(e.col);
    }
    std::vector<AtomPart> parts;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      auto& cols = per_block[static_cast<size_t>(b)];
      if (cols.empty()) continue;
      std::sort(cols.begin(), cols.end());
      Eigen::MatrixXcd basis =
          row_restricted_basis(gen.W[static_cast<size_t>(b)], cols);
      if (basis.cols() == 0) continue;
      out.tau_p += alg->weight(b) * static_cast<double>(basis.cols());
      auto& P = out.P[static_cast<size_t>(b)];
      Eigen::MatrixXcd local = basis * basis.adjoint();
      for (std::size_t i = 0; i < cols.size(); ++i)
        for (std::size_t k = 0; k < cols.size(); ++k)
          P(cols[i], cols[k]) += local(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(k));
      parts.push_back(AtomPart{b, cols, std::move(basis)});
    }
    out.parts.emplace_back(atom, std::move(parts));
  }
  return out;
}

MatOp assemble_projection(const JointSpectrum& J, const UnitStructure& us) {
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < J.algebra()->num_blocks(); ++b)
    blocks.push_back(J.from_eigencoords(b, us.P[static_cast<size_t>(b)]));
  return with_known_projection_flag(MatOp(J.algebra(), std::move(blocks)),
                                    true);
}

// mu([p_m, D_j]) for diagonal model operators: the commutator is
// atom-block-diagonal, so its singular values are the union of the per-atom
// block values.  diags[j][b] is the diagonal of axis j in block b.
std::vector<StepFunction> structure_commutator_mu(
    const JointSpectrum& J, const UnitStructure& us,
    const std::vector<std::vector<Eigen::VectorXd>>& diags) {
  const AlgebraPtr& alg = J.algebra();
  int n = static_cast<int>(diags.size());
  std::vector<std::vector<Step>> pairs(static_cast<size_t>(n));
  for (const auto& [atom, parts] : us.parts) {
    for (const AtomPart& part : parts) {
      Eigen::Index s = static_cast<Eigen::Index>(part.cols.size());
      Eigen::MatrixXcd Ploc = part.basis * part.basis.adjoint();
      double w = alg->weight(part.block);
      for (int j = 0; j < n; ++j) {
        Eigen::VectorXd d(s);
        for (Eigen::Index i = 0; i < s; ++i)
          d[i] = diags[static_cast<size_t>(j)][static_cast<size_t>(part.block)]
                      [part.cols[static_cast<size_t>(i)]];
        Eigen::MatrixXcd C =
            Ploc * d.cast<Complex>().asDiagonal() -
            d.cast<Complex>().asDiagonal().toDenseMatrix() * Ploc;
        // skew-hermitian: singular values are |eigenvalues| of iC
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
            Complex(0, 1) * C, Eigen::EigenvaluesOnly);
        for (Eigen::Index i = 0; i < s; ++i) {
          double sv = std::abs(es.eigenvalues()[i]);
          if (sv > 0.0) pairs[static_cast<size_t>(j)].push_back({w, sv});
        }
      }
    }
  }
  std::vector<StepFunction> out;
  for (int j = 0; j < n; ++j)
    out.push_back(
        StepFunction::from_weighted_values(std::move(pairs[static_cast<size_t>(j)])));
  return out;
}

std::vector<std::vector<Eigen::VectorXd>> model_diagonals(
    const JointSpectrum& J) {
  const AlgebraPtr& alg = J.algebra();
  std::vector<std::vector<Eigen::VectorXd>> diags(
      static_cast<size_t>(J.n()));
  for (int j = 0; j < J.n(); ++j)
    for (int b = 0; b < alg->num_blocks(); ++b)
      diags[static_cast<size_t>(j)].push_back(
          Eigen::VectorXd::Zero(alg->dim(b)));
  for (const auto& e : J.tuples())
    for (int j = 0; j < J.n(); ++j)
      diags[static_cast<size_t>(j)][static_cast<size_t>(e.block)][e.col] =
          e.lambda[j];
  return diags;
}

}  // namespace

ApproxUnitReport build_approx_unit(const JointSpectrum& J, const MatOp& q,
                                   int m) {
  PreparedGenerator gen = prepare_generator(J, q);
  UnitStructure us = build_unit_structure(J, gen, m);
  ApproxUnitReport report{m,
                          J.n(),
                          assemble_projection(J, us),
                          0.0,
                          us.tau_p,
                          gen.tau_q,
                          std::ldexp(1.0, -m),
                          std::ldexp(gen.tau_q, m * J.n()),
                          structure_commutator_mu(J, us, model_diagonals(J))};
  for (const auto& mu : report.comm_mu)
    report.inf_comm = std::max(report.inf_comm, mu.sup());
  return report;
}

HermTuple midpoint_quantize(const JointSpectrum& J, int m) {
  const AlgebraPtr& alg = J.algebra();
  std::vector<std::vector<Eigen::VectorXd>> diags(
      static_cast<size_t>(J.n()));
  for (int j = 0; j < J.n(); ++j)
    for (int b = 0; b < alg->num_blocks(); ++b)
      diags[static_cast<size_t>(j)].push_back(
          Eigen::VectorXd::Zero(alg->dim(b)));
  for (const auto& e : J.tuples())
    for (int j = 0; j < J.n(); ++j) {
      std::int64_t k = dyadic_index(e.lambda[j], m);
      if (k < 0 || k >= (std::int64_t{1} << std::min(m, 62)))
        throw ValidationError(
            "midpoint_quantize: eigenvalue outside [0,1)^n; apply "
            "rescale_to_unit_cube first");
      diags[static_cast<size_t>(j)][static_cast<size_t>(e.block)][e.col] =
          std::ldexp(static_cast<double>(k) + 0.5, -m);
    }
  std::vector<MatOp> entries;
  for (int j = 0; j < J.n(); ++j) {
    if (J.identity_basis()) {
      entries.push_back(MatOp::diagonal(alg, diags[static_cast<size_t>(j)]));
    } else {
      std::vector<Eigen::MatrixXcd> blocks;
      for (int b = 0; b < alg->num_blocks(); ++b)
        blocks.push_back(J.from_eigencoords(
            b, Eigen::MatrixXcd(diags[static_cast<size_t>(j)]
                                     [static_cast<size_t>(b)]
                                         .cast<Complex>()
                                         .asDiagonal())));
      entries.emplace_back(alg, std::move(blocks));
    }
  }
  return HermTuple(std::move(entries));
}

namespace {

// Hull of q in eigencoordinates: per eigenvalue group, the span of the
// group-restricted columns of W.
std::vector<Eigen::MatrixXcd> hull_blocks(const JointSpectrum& J,
                                          const PreparedGenerator& gen,
                                          double* rank_out) {
  const AlgebraPtr& alg = J.algebra();
  std::vector<Eigen::MatrixXcd> E;
  for (int b = 0; b < alg->num_blocks(); ++b)
    E.push_back(Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));
  double rank = 0.0;
  for (const auto& group : J.eigenvalue_groups()) {
    int b = J.tuples()[static_cast<size_t>(group.front())].block;
    std::vector<int> cols;
    for (int ti : group)
      cols.push_back(J.tuples()[static_cast<size_t>(ti)].col);
    std::sort(cols.begin(), cols.end());
    Eigen::MatrixXcd basis =
        row_restricted_basis(gen.W[static_cast<size_t>(b)], cols);
    if (basis.cols() == 0) continue;
    rank += static_cast<double>(basis.cols());
    Eigen::MatrixXcd local = basis * basis.adjoint();
    for (std::size_t i = 0; i < cols.size(); ++i)
      for (std::size_t k = 0; k < cols.size(); ++k)
        E[static_cast<size_t>(b)](cols[i], cols[k]) +=
            local(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  }
  if (rank_out) *rank_out = rank;
  return E;
}

}  // namespace

MatOp generating_hull(const JointSpectrum& J, const MatOp& q) {
  PreparedGenerator gen = prepare_generator(J, q);
  std::vector<Eigen::MatrixXcd> E = hull_blocks(J, gen, nullptr);
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < J.algebra()->num_blocks(); ++b)
    blocks.push_back(J.from_eigencoords(b, E[static_cast<size_t>(b)]));
  return with_known_projection_flag(MatOp(J.algebra(), std::move(blocks)),
                                    true);
}

namespace {

// One summand of the greedy decomposition: a rank-one generator (given in
// eigencoordinates of its block) and the per-group columns of its hull.
struct HullColumn {
  int block = 0;
  Eigen::VectorXcd vec;  // eigencoord unit vector supported on one group
  int group = 0;         // index into J.eigenvalue_groups()
};

struct HullPart {
  int block = 0;
  Eigen::VectorXcd generator;  // eigencoord unit vector
  std::vector<HullColumn> cols;
};

std::vector<HullPart> decomposition_structure(const JointSpectrum& J) {
  const AlgebraPtr& alg = J.algebra();
  const auto groups = J.eigenvalue_groups();
  // group memberships per block, as column index lists
  std::vector<std::vector<std::pair<int, std::vector<int>>>> per_block(
      static_cast<size_t>(alg->num_blocks()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    int b = J.tuples()[static_cast<size_t>(groups[g].front())].block;
    std::vector<int> cols;
    for (int ti : groups[g])
      cols.push_back(J.tuples()[static_cast<size_t>(ti)].col);
    std::sort(cols.begin(), cols.end());
    per_block[static_cast<size_t>(b)].emplace_back(static_cast<int>(g),
                                                   std::move(cols));
  }

  std::vector<Eigen::MatrixXcd> acc;
  for (int b = 0; b < alg->num_blocks(); ++b)
    acc.push_back(Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));

  std::vector<HullPart> out;
  for (int b = 0; b < alg->num_blocks(); ++b) {
    for (Eigen::Index i = 0; i < alg->dim(b); ++i) {
      // standard basis vector e_i of the original coordinates, expressed in
      // eigencoordinates
      Eigen::VectorXcd w;
      if (J.identity_basis()) {
        w = Eigen::VectorXcd::Zero(alg->dim(b));
        w[i] = 1.0;
      } else {
        w = J.basis()[static_cast<size_t>(b)].row(i).adjoint();
      }
      Eigen::VectorXcd r = w - acc[static_cast<size_t>(b)] * w;
      double nr = r.norm();
      if (nr * nr <= 1e-12) continue;  // already covered
      r /= nr;

      HullPart part;
      part.block = b;
      part.generator = r;
      for (const auto& [g, cols] : per_block[static_cast<size_t>(b)]) {
        Eigen::VectorXcd seg = Eigen::VectorXcd::Zero(alg->dim(b));
        double nseg = 0.0;
        for (int c : cols) {
          seg[c] = r[c];
          nseg += std::norm(r[c]);
        }
        nseg = std::sqrt(nseg);
        if (nseg <= 1e-12) continue;
        seg /= nseg;
        acc[static_cast<size_t>(b)] += seg * seg.adjoint();
        part.cols.push_back(HullColumn{b, std::move(seg), g});
      }
      out.push_back(std::move(part));
    }
  }
  return out;
}

}  // namespace

std::vector<std::pair<MatOp, MatOp>> generating_decomposition(
    const JointSpectrum& J) {
  const AlgebraPtr& alg = J.algebra();
  std::vector<std::pair<MatOp, MatOp>> out;
  for (const HullPart& part : decomposition_structure(J)) {
    Eigen::VectorXcd gen_orig =
        J.identity_basis()
            ? part.generator
            : (J.basis()[static_cast<size_t>(part.block)] * part.generator)
                  .eval();
    MatOp q = MatOp::rank_one(alg, part.block, gen_orig);
    std::vector<Eigen::MatrixXcd> blocks;
    for (int b = 0; b < alg->num_blocks(); ++b)
      blocks.push_back(Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));
    for (const HullColumn& col : part.cols)
      blocks[static_cast<size_t>(col.block)] += col.vec * col.vec.adjoint();
    for (int b = 0; b < alg->num_blocks(); ++b)
      blocks[static_cast<size_t>(b)] =
          J.from_eigencoords(b, blocks[static_cast<size_t>(b)]);
    out.emplace_back(std::move(q),
                     with_known_projection_flag(
                         MatOp(alg, std::move(blocks)), true));
  }
  return out;
}

namespace {

int select_mk_impl(const std::function<double(double)>& G, double tau_q, int k,
                   int n, int m_cap) {
  if (k < 0) throw ValidationError("select_mk: k >= 0 required");
  if (n < 1) throw ValidationError("select_mk: n >= 1 required");
  const double factor = std::max(2.0 * tau_q, 1.0);
  auto bound_at = [&](int m) {
    return factor * std::ldexp(G(std::ldexp(1.0, m * n)), -m);
  };
  int m_prev = -1;
  for (int j = 0; j <= k; ++j) {
    double threshold = std::ldexp(1.0, -j);
    int m = m_prev + 1;
    while (true) {
      if (m > m_cap)
        throw UnreachableLevelError(
            "select_mk: no level within the cap meets 2^-" +
                std::to_string(j) + "; bound at the cap is " +
                std::to_string(bound_at(m_cap)),
            m_cap, bound_at(m_cap));
      if (bound_at(m) <= threshold) break;
      ++m;
    }
    m_prev = m;
  }
  return m_prev;
}

}  // namespace

int select_mk(const PsiFunction& psi, double tau_q, int k, int n, int m_cap) {
  return select_mk_impl([&](double t) { return psi(t); }, tau_q, k, n, m_cap);
}

int select_mk(const SpaceSpec& space, double tau_q, int k, int n, int m_cap) {
  return select_mk_impl([&](double t) { return fundamental_function(space, t); },
                        tau_q, k, n, m_cap);
}

LorentzCommutatorReport lorentz_commutator_report(const JointSpectrum& J,
                                                  const MatOp& q,
                                                  const HermTuple& alpha,
                                                  const PsiFunction& psi,
                                                  int m) {
  if (alpha.n() != J.n())
    throw ValidationError("lorentz_commutator_report: tuple size mismatch");
  PreparedGenerator gen = prepare_generator(J, q);
  UnitStructure us = build_unit_structure(J, gen, m);

  LorentzCommutatorReport report;
  report.m = m;
  report.rhs = std::max(2.0 * gen.tau_q, 1.0) *
               std::ldexp(psi(std::ldexp(1.0, m * J.n())), -m);

  // fast exact path: diagonal operators in the identity basis keep the
  // commutator atom-block-diagonal
  bool structured = J.identity_basis();
  for (int j = 0; j < alpha.n() && structured; ++j)
    for (int b = 0; b < alpha.entry(j).num_blocks() && structured; ++b)
      if (!exactly_diagonal(alpha.entry(j).block(b))) structured = false;

  if (structured) {
    std::vector<std::vector<Eigen::VectorXd>> diags(
        static_cast<size_t>(alpha.n()));
    for (int j = 0; j < alpha.n(); ++j)
      for (int b = 0; b < alpha.entry(j).num_blocks(); ++b)
        diags[static_cast<size_t>(j)].push_back(
            alpha.entry(j).block(b).diagonal().real());
    for (const auto& mu : structure_commutator_mu(J, us, diags))
      report.lhs.push_back(lorentz_norm(mu, psi));
    return report;
  }
  MatOp p = assemble_projection(J, us);
  for (int j = 0; j < alpha.n(); ++j)
    report.lhs.push_back(symmetric_norm(commutator(p, alpha.entry(j)),
                                        SpaceSpec::lorentz(psi)));
  return report;
}

MatOp DiagonalBasis::projection(std::size_t member_index) const {
  const Member& mem = members[member_index];
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < algebra->num_blocks(); ++b)
    blocks.push_back(Eigen::MatrixXcd::Zero(algebra->dim(b), algebra->dim(b)));
  Eigen::MatrixXcd sel(algebra->dim(mem.block),
                       static_cast<Eigen::Index>(mem.cols.size()));
  for (std::size_t i = 0; i < mem.cols.size(); ++i)
    sel.col(static_cast<Eigen::Index>(i)) =
        basis[static_cast<size_t>(mem.block)].col(mem.cols[i]);
  blocks[static_cast<size_t>(mem.block)] = sel * sel.adjoint();
  return with_known_projection_flag(MatOp(algebra, std::move(blocks)), true);
}

MatOp DiagonalBasis::assemble_entry(int j) const {
  std::vector<Eigen::VectorXd> vals;
  for (int b = 0; b < algebra->num_blocks(); ++b)
    vals.push_back(Eigen::VectorXd::Zero(algebra->dim(b)));
  for (const Member& mem : members)
    for (int c : mem.cols) vals[static_cast<size_t>(mem.block)][c] = mem.lambda[j];
  std::vector<Eigen::MatrixXcd> blocks;
  for (int b = 0; b < algebra->num_blocks(); ++b) {
    const auto& B = basis[static_cast<size_t>(b)];
    blocks.push_back(B * vals[static_cast<size_t>(b)].cast<Complex>().asDiagonal() *
                     B.adjoint());
  }
  return MatOp(algebra, std::move(blocks));
}

namespace {

StepFunction weighted_mu_of_blocks(const AlgebraPtr& alg,
                                   const std::vector<Eigen::MatrixXcd>& blocks,
                                   bool hermitian) {
  std::vector<Step> pairs;
  for (int b = 0; b < alg->num_blocks(); ++b) {
    const auto& m = blocks[static_cast<size_t>(b)];
    Eigen::VectorXd sv;
    if (hermitian) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
          m, Eigen::EigenvaluesOnly);
      sv = es.eigenvalues().cwiseAbs();
    } else {
      Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
      sv = svd.singularValues();
    }
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv[i] > 0.0) pairs.push_back({alg->weight(b), sv[i]});
  }
  return StepFunction::from_weighted_values(std::move(pairs));
}

// Spectral basis of a near-projection (eigenvalues near 0/1): columns with
// eigenvalue > 1/2.
Eigen::MatrixXcd range_basis_of_difference(const Eigen::MatrixXcd& p) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(p);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()[i] > 0.5) keep.push_back(i);
  Eigen::MatrixXcd out(p.rows(), static_cast<Eigen::Index>(keep.size()));
  for (Eigen::Index i = 0; i < out.cols(); ++i)
    out.col(i) = es.eigenvectors().col(keep[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

std::vector<DiagonalizationReport> kuroda_diagonalize_single(
    const MatOp& a, const MatOp& q, const SpaceSpec& E, int k_max) {
  if (!a.is_hermitian())
    throw ValidationError("kuroda_diagonalize_single: a must be hermitian");
  if (k_max < 0) throw ValidationError("k_max >= 0 required");
  JointSpectrum J = joint_diagonalize(HermTuple({a}));
  for (const auto& e : J.tuples())
    if (e.lambda[0] < 0.0 || e.lambda[0] >= 1.0)
      throw ValidationError(
          "kuroda_diagonalize_single: spectrum must lie in [0,1); apply "
          "rescale_to_unit_cube first");

  const AlgebraPtr& alg = J.algebra();
  PreparedGenerator gen = prepare_generator(J, q);
  double hull_rank = 0.0;
  hull_blocks(J, gen, &hull_rank);
  bool generating =
      hull_rank >= static_cast<double>(alg->total_dim()) - 0.5;

  // chain levels m_0 < m_1 < ... < m_{k_max}
  std::vector<int> levels;
  for (int k = 0; k <= k_max; ++k)
    levels.push_back(select_mk(E, gen.tau_q, k, 1, 60));

  std::vector<UnitStructure> units;
  for (int m : levels) units.push_back(build_unit_structure(J, gen, m));
  const int K = k_max;

  // the operator in eigencoordinates (keeps any diagonalization residual)
  std::vector<Eigen::MatrixXcd> T;
  for (int b = 0; b < alg->num_blocks(); ++b) {
    if (J.identity_basis())
      T.push_back(a.block(b));
    else
      T.push_back(J.basis()[static_cast<size_t>(b)].adjoint() * a.block(b) *
                  J.basis()[static_cast<size_t>(b)]);
  }

  const SpaceSpec cap = E.kind() == SpaceSpec::Kind::IntersectLInf
                            ? E
                            : SpaceSpec::intersect_linf(E);
  const double a_norm = a.sup_norm();

  std::vector<DiagonalizationReport> reports;
  for (int k = 0; k <= k_max; ++k) {
    DiagonalizationReport rep;
    rep.k = k;
    rep.generating = generating;
    rep.scale = a_norm;
    rep.bound = std::ldexp(1.0, 3 - k);
    rep.basis.algebra = alg;

    std::vector<Eigen::MatrixXcd> dk, ak, residual_blocks;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      Eigen::Index d = alg->dim(b);
      auto I = Eigen::MatrixXcd::Identity(d, d);

      // chain of projectors Q_k <= Q_{k+1} <= ... <= Q_K <= 1 in this block
      std::vector<Eigen::MatrixXcd> chain;
      for (int l = k; l <= K; ++l)
        chain.push_back(units[static_cast<size_t>(l)].P[static_cast<size_t>(b)]);
      chain.push_back(I);

      // pinching blocks: Q_k, r_l = Q_{l+1} - Q_l (l = k..K-1), 1 - Q_K
      std::vector<Eigen::MatrixXcd> pieces;
      pieces.push_back(chain.front());
      for (std::size_t l = 0; l + 1 < chain.size(); ++l)
        pieces.push_back(chain[l + 1] - chain[l]);

      Eigen::MatrixXcd dk_b = Eigen::MatrixXcd::Zero(d, d);
      Eigen::MatrixXcd ak_b = Eigen::MatrixXcd::Zero(d, d);
      Eigen::MatrixXcd basis_b(d, d);
      Eigen::Index pos = 0;
      for (const auto& piece : pieces) {
        ak_b += piece * T[static_cast<size_t>(b)] * piece;
        Eigen::MatrixXcd B = range_basis_of_difference(piece);
        if (B.cols() == 0) continue;
        Eigen::MatrixXcd H = B.adjoint() * T[static_cast<size_t>(b)] * B;
        H = (0.5 * (H + H.adjoint())).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
        Eigen::MatrixXcd cols = B * es.eigenvectors();
        dk_b += cols * es.eigenvalues().cast<Complex>().asDiagonal() *
                cols.adjoint();
        for (Eigen::Index i = 0; i < cols.cols(); ++i) {
          basis_b.col(pos + i) = cols.col(i);
          DiagonalBasis::Member mem;
          mem.block = b;
          mem.cols = {static_cast<int>(pos + i)};
          mem.lambda = Eigen::VectorXd::Constant(1, es.eigenvalues()[i]);
          rep.basis.members.push_back(std::move(mem));
        }
        pos += cols.cols();
      }
      // numerical rank drift never occurs: the pieces partition the space
      if (pos != d)
        throw std::runtime_error("kuroda_diagonalize_single: basis incomplete");

      // telescoping identity of the chain
      Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(d, d);
      {
        const auto& Tb = T[static_cast<size_t>(b)];
        const auto& Qk = chain.front();
        rhs += Qk * Tb * (I - Qk) + (I - Qk) * Tb * Qk;
        for (std::size_t l = 0; l + 1 < chain.size(); ++l) {
          Eigen::MatrixXcd r_l = chain[l + 1] - chain[l];
          Eigen::MatrixXcd upper = I - chain[l + 1];
          rhs += upper * Tb * r_l + r_l * Tb * upper;
        }
      }
      rep.telescoping_gap =
          std::max(rep.telescoping_gap,
                   (T[static_cast<size_t>(b)] - ak_b - rhs).cwiseAbs().maxCoeff());

      residual_blocks.push_back(T[static_cast<size_t>(b)] - dk_b);
      dk.push_back(std::move(dk_b));
      ak.push_back(std::move(ak_b));
      rep.basis.basis.push_back(J.identity_basis()
                                    ? basis_b
                                    : (J.basis()[static_cast<size_t>(b)] *
                                       basis_b)
                                          .eval());
    }

    StepFunction mu_res = weighted_mu_of_blocks(alg, residual_blocks, true);
    rep.residual["e"] = space_norm(mu_res, E);
    rep.residual["linf"] = mu_res.sup();
    rep.residual["e_cap_linf"] = space_norm(mu_res, cap);

    std::vector<Eigen::MatrixXcd> delta_blocks;
    for (int b = 0; b < alg->num_blocks(); ++b)
      delta_blocks.push_back(
          J.from_eigencoords(b, dk[static_cast<size_t>(b)]));
    rep.delta = {MatOp(alg, std::move(delta_blocks))};
    reports.push_back(std::move(rep));
  }
  return reports;
}

DiagonalizationReport kuroda_diagonalize_tuple(const HermTuple& alpha,
                                               const SpaceSpec& E,
                                               double eps) {
  if (!(eps > 0.0)) throw ValidationError("kuroda_diagonalize_tuple: eps > 0");
  const int n = alpha.n();
  EmbeddingVerdict verdict = embedding_window_test(E, n, 20);
  if (!verdict.not_embedded())
    throw EmbeddingPreconditionError(
        "kuroda_diagonalize_tuple: the windowed test did not establish "
        "E cap L_inf not embedded in L_{n,1}",
        verdict.ratios);

  JointSpectrum J = joint_diagonalize(alpha);
  const AlgebraPtr& alg = J.algebra();
  const SpaceSpec cap = E.kind() == SpaceSpec::Kind::IntersectLInf
                            ? E
                            : SpaceSpec::intersect_linf(E);

  // occupied integer windows
  std::map<std::vector<std::int64_t>, std::vector<int>> windows;
  for (std::size_t i = 0; i < J.tuples().size(); ++i) {
    std::vector<std::int64_t> key(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
      key[static_cast<size_t>(j)] = dyadic_index(J.tuples()[i].lambda[j], 0);
    windows[key].push_back(static_cast<int>(i));
  }

  DiagonalizationReport rep;
  rep.basis.algebra = alg;
  rep.scale = alpha.max_sup_norm();
  rep.bound = std::pow(3.0, n) * eps;
  for (int b = 0; b < alg->num_blocks(); ++b)
    rep.basis.basis.push_back(
        Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));
  std::vector<Eigen::Index> cursor(static_cast<size_t>(alg->num_blocks()), 0);

  for (const auto& [key, tuple_idx] : windows) {
    double l1 = 0.0;
    for (std::int64_t kj : key) l1 += static_cast<double>(std::abs(kj));
    const double budget_w = eps * std::pow(2.0, -l1);

    // compress to the window: per original block, the eigencolumns inside
    std::vector<std::vector<int>> win_cols(
        static_cast<size_t>(alg->num_blocks()));
    for (int ti : tuple_idx)
      win_cols[static_cast<size_t>(J.tuples()[static_cast<size_t>(ti)].block)]
          .push_back(J.tuples()[static_cast<size_t>(ti)].col);
    std::vector<int> comp_to_orig;
    std::vector<BlockSpec> comp_blocks;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      auto& cols = win_cols[static_cast<size_t>(b)];
      if (cols.empty()) continue;
      std::sort(cols.begin(), cols.end());
      comp_blocks.push_back(
          {static_cast<Eigen::Index>(cols.size()), alg->weight(b)});
      comp_to_orig.push_back(b);
    }
    AlgebraPtr comp_alg = make_algebra(comp_blocks);

    // shifted diagonals lambda - k, per axis and compressed block
    std::vector<std::vector<Eigen::VectorXd>> comp_diags(
        static_cast<size_t>(n));
    // lambda lookup per (orig block, col)
    std::vector<std::map<int, const EigenTupleEntry*>> by_col(
        static_cast<size_t>(alg->num_blocks()));
    for (int ti : tuple_idx) {
      const auto& e = J.tuples()[static_cast<size_t>(ti)];
      by_col[static_cast<size_t>(e.block)][e.col] = &e;
    }
    for (int j = 0; j < n; ++j)
      for (std::size_t cb = 0; cb < comp_to_orig.size(); ++cb) {
        int b = comp_to_orig[cb];
        const auto& cols = win_cols[static_cast<size_t>(b)];
        Eigen::VectorXd dvec(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i)
          dvec[static_cast<Eigen::Index>(i)] =
              by_col[static_cast<size_t>(b)].at(cols[i])->lambda[j] -
              static_cast<double>(key[static_cast<size_t>(j)]);
        comp_diags[static_cast<size_t>(j)].push_back(std::move(dvec));
      }

    std::vector<MatOp> comp_entries;
    for (int j = 0; j < n; ++j)
      comp_entries.push_back(
          MatOp::diagonal(comp_alg, comp_diags[static_cast<size_t>(j)]));
    auto [maps, scaled] = rescale_to_unit_cube(HermTuple(comp_entries));
    JointSpectrum Jw = joint_diagonalize(scaled);

    std::vector<HullPart> hulls = decomposition_structure(Jw);
    const double budget_h = budget_w / static_cast<double>(hulls.size());
    const auto groups = Jw.eigenvalue_groups();

    for (const HullPart& hull : hulls) {
      double tau_qh = comp_alg->weight(hull.block);
      // group eigenvalues of the hull columns (in rescaled coordinates)
      std::vector<Eigen::VectorXd> lam;
      for (const HullColumn& col : hull.cols)
        lam.push_back(
            Jw.tuples()[static_cast<size_t>(
                            groups[static_cast<size_t>(col.group)].front())]
                .lambda);

      // smallest level from the fundamental-function rule, escalated until
      // the measured hull error meets the budget; exact once atoms isolate
      // the distinct eigenvalue groups
      int m = 0;
      while (std::ldexp(std::max(1.0, fundamental_function(
                                          E, std::ldexp(tau_qh, m * n))),
                        -m - 1) > budget_h &&
             m < 62)
        ++m;
      std::vector<Eigen::VectorXd> vals;  // chosen value per column (rescaled)
      for (;; ++m) {
        // do atoms at this level isolate the distinct eigenvalue groups?
        std::map<std::vector<std::int64_t>, int> seen;
        bool collision = false;
        for (std::size_t c = 0; c < hull.cols.size() && !collision; ++c) {
          std::vector<std::int64_t> a(static_cast<size_t>(n));
          for (int j = 0; j < n; ++j)
            a[static_cast<size_t>(j)] = dyadic_index(lam[c][j], m);
          auto [it, inserted] = seen.emplace(a, hull.cols[c].group);
          if (!inserted && it->second != hull.cols[c].group) collision = true;
        }
        if (!collision || m >= 62) {
          // isolated: the exact eigenvalues give zero error
          vals = lam;
          break;
        }
        vals.clear();
        for (std::size_t c = 0; c < hull.cols.size(); ++c) {
          Eigen::VectorXd v(n);
          for (int j = 0; j < n; ++j)
            v[j] = std::ldexp(
                static_cast<double>(dyadic_index(lam[c][j], m)) + 0.5, -m);
          vals.push_back(std::move(v));
        }
        double err = 0.0;
        for (int j = 0; j < n; ++j) {
          std::vector<Step> pairs;
          for (std::size_t c = 0; c < hull.cols.size(); ++c) {
            double dev = std::abs(lam[c][j] - vals[c][j]) *
                         maps[static_cast<size_t>(j)].scale;
            if (dev > 0.0)
              pairs.push_back({comp_alg->weight(hull.cols[c].block), dev});
          }
          err = std::max(err, space_norm(StepFunction::from_weighted_values(
                                             std::move(pairs)),
                                         cap));
        }
        if (err <= budget_h) break;
      }

      // transport columns and values back to the original coordinates
      // members: one per distinct chosen value vector within this hull
      std::map<std::vector<double>, std::vector<std::size_t>> by_value;
      for (std::size_t c = 0; c < hull.cols.size(); ++c) {
        std::vector<double> v(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j)
          v[static_cast<size_t>(j)] =
              maps[static_cast<size_t>(j)].inverse(vals[c][j]) +
              static_cast<double>(key[static_cast<size_t>(j)]);
        by_value[v].push_back(c);
      }
      for (const auto& [v, col_ids] : by_value) {
        DiagonalBasis::Member mem;
        mem.lambda = Eigen::Map<const Eigen::VectorXd>(
            v.data(), static_cast<Eigen::Index>(v.size()));
        int cb = hull.cols[col_ids.front()].block;
        int b = comp_to_orig[static_cast<size_t>(cb)];
        mem.block = b;
        for (std::size_t ci : col_ids) {
          const HullColumn& col = hull.cols[ci];
          // scatter the compressed vector into the window columns of the
          // original block, then rotate by the eigenbasis
          Eigen::VectorXcd scat = Eigen::VectorXcd::Zero(alg->dim(b));
          const auto& cols = win_cols[static_cast<size_t>(b)];
          for (std::size_t i = 0; i < cols.size(); ++i)
            scat[cols[i]] = col.vec[static_cast<Eigen::Index>(i)];
          Eigen::VectorXcd orig =
              J.identity_basis()
                  ? scat
                  : (J.basis()[static_cast<size_t>(b)] * scat).eval();
          rep.basis.basis[static_cast<size_t>(b)].col(
              cursor[static_cast<size_t>(b)]) = orig;
          mem.cols.push_back(static_cast<int>(cursor[static_cast<size_t>(b)]));
          ++cursor[static_cast<size_t>(b)];
        }
        rep.basis.members.push_back(std::move(mem));
      }
    }
  }

  for (int b = 0; b < alg->num_blocks(); ++b)
    if (cursor[static_cast<size_t>(b)] != alg->dim(b))
      throw std::runtime_error("kuroda_diagonalize_tuple: basis incomplete");

  for (int j = 0; j < n; ++j) rep.delta.push_back(rep.basis.assemble_entry(j));

  // measured residual of the assembled tuple against the input
  double sup = 0.0;
  for (int j = 0; j < n; ++j) {
    std::vector<Eigen::MatrixXcd> diff;
    for (int b = 0; b < alg->num_blocks(); ++b)
      diff.push_back(alpha.entry(j).block(b) - rep.delta[static_cast<size_t>(j)].block(b));
    StepFunction mu = weighted_mu_of_blocks(alg, diff, true);
    double e = space_norm(mu, E);
    double s = mu.sup();
    double ec = space_norm(mu, cap);
    sup = std::max(sup, s);
    rep.residual["e"] = std::max(rep.residual["e"], e);
    rep.residual["linf"] = std::max(rep.residual["linf"], s);
    rep.residual["e_cap_linf"] = std::max(rep.residual["e_cap_linf"], ec);
  }
  (void)sup;
  return rep;
}

}  // namespace kdiag
