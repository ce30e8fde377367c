#pragma once

#include <map>
#include <string>
#include <vector>

#include "kdiag/joint_spectrum.hpp"
#include "kdiag/ncalg.hpp"
#include "kdiag/space_spec.hpp"

namespace kdiag {

// Report for one level of the dyadic quasicentral approximate unit
//   p_m = sum over occupied level-m atoms A of l(e^alpha(A) q),
// with the certified bounds ||[p_m, alpha_j]||_inf <= 2^-m and
// tau(p_m) <= 2^{mn} tau(q).  Commutator norms are measured against the
// spectrally exact model carried by the JointSpectrum.
struct ApproxUnitReport {
  int m = 0;
  int n = 1;
  MatOp p;
  double inf_comm = 0.0;  // max_j ||[p_m, alpha_j]||_inf
  double tau_p = 0.0;
  double tau_q = 0.0;
  double bound_inf = 0.0;  // 2^-m
  double bound_tau = 0.0;  // 2^{mn} tau(q)
  std::vector<StepFunction> comm_mu;  // per j: mu([p_m, alpha_j])

  // ||[p_m, alpha_j]||_{E(M)} for any implemented space, on request.
  double commutator_norm(int j, const SpaceSpec& space) const {
    return space_norm(comm_mu[static_cast<size_t>(j)], space);
  }
};

ApproxUnitReport build_approx_unit(const JointSpectrum& J, const MatOp& q,
                                   int m);

// alpha_m(j) = sum_A c_A(j) e^alpha(A) with c_A the centre of atom A;
// satisfies ||alpha_j - alpha_m(j)||_inf <= 2^{-m-1} and commutes with the
// approximate unit p_m of the same level.
HermTuple midpoint_quantize(const JointSpectrum& J, int m);

// e_q = sum over joint eigenprojections E of l(E q): the smallest projection
// above q commuting with the tuple; q generates inside e_q M e_q.
MatOp generating_hull(const JointSpectrum& J, const MatOp& q);

// Greedy decomposition: pick the first standard basis vector not yet covered,
// take its hull, restrict to the orthocomplement, repeat.  Returns pairwise
// orthogonal pairs (q_k, e_{q_k}) with sum_k e_{q_k} = 1.
std::vector<std::pair<MatOp, MatOp>> generating_decomposition(
    const JointSpectrum& J);

// Smallest level m with max{2 tau_q, 1} * 2^-m * G(2^{mn}) <= 2^-k, where G
// is psi (Lorentz route) or phi_E (fundamental-function route).  Computed
// through the recursion m_k > m_{k-1}, so the sequence is strictly
// increasing in k and in particular m_k >= k.
int select_mk(const PsiFunction& psi, double tau_q, int k, int n,
              int m_cap = 60);
int select_mk(const SpaceSpec& space, double tau_q, int k, int n,
              int m_cap = 60);

// Both sides of ||[p_m, alpha_j]||_{Lambda_psi(M)} <=
//   max{2 tau(q), 1} * 2^-m * psi(2^{mn}).
struct LorentzCommutatorReport {
  int m = 0;
  std::vector<double> lhs;  // per j
  double rhs = 0.0;
};
LorentzCommutatorReport lorentz_commutator_report(const JointSpectrum& J,
                                                  const MatOp& q,
                                                  const HermTuple& alpha,
                                                  const PsiFunction& psi,
                                                  int m);

// Exhibited simultaneous eigenstructure: a full orthonormal basis per block
// plus members (column groups) on which the diagonal tuple acts by the
// stored scalars.  The member projections are pairwise orthogonal and sum to
// the identity.
struct DiagonalBasis {
  AlgebraPtr algebra;
  std::vector<Eigen::MatrixXcd> basis;  // per block, d_b x d_b orthonormal
  struct Member {
    int block = 0;
    std::vector<int> cols;
    Eigen::VectorXd lambda;  // scalar action per tuple slot
  };
  std::vector<Member> members;

  MatOp projection(std::size_t member_index) const;
  MatOp assemble_entry(int j) const;  // sum_members lambda_j * P_member
};

struct DiagonalizationReport {
  int k = -1;  // chain index (single-operator route), -1 otherwise
  DiagonalBasis basis;
  std::vector<MatOp> delta;               // the diagonal tuple
  std::map<std::string, double> residual;  // keys: e, linf, e_cap_linf
  double bound = 0.0;                      // bound on the e_cap_linf residual
  double telescoping_gap = 0.0;            // single-operator route
  bool generating = true;
  double scale = 0.0;  // max ||alpha_j||_inf, for tolerance bookkeeping
};

// Single-operator chain construction: q_k = p_{m_k} with m_k from select_mk,
// r_l = q_{l+1} - q_l, a_k = q_k a q_k + sum_{l>=k} r_l a r_l, and d_k the
// exact per-block spectral diagonalization of a_k.  One report per
// k = 0..k_max with the certified bound ||a - d_k|| <= 2^{3-k} in
// (E cap L_inf)(M).  A non-generating q downgrades the report to a warning
// (generating = false): the chain then exhausts only the hull of q.
std::vector<DiagonalizationReport> kuroda_diagonalize_single(
    const MatOp& a, const MatOp& q, const SpaceSpec& E, int k_max);

// n-tuple route: window the spectrum by integer translates of [0,1)^n, give
// window k the budget eps * 2^{-|k|_1}, split each window into generating
// hulls, and quantize each hull at the smallest dyadic level meeting its
// share of the budget (exact eigenvalues once atoms isolate the spectrum).
// The assembled diagonal tuple satisfies
// ||alpha - delta||_{(E cap L_inf)(M)} <= 3^n eps.
DiagonalizationReport kuroda_diagonalize_tuple(const HermTuple& alpha,
                                               const SpaceSpec& E, double eps);

}  // namespace kdiag
