#include <cmath>
#include <random>

#include "doctest.h"
#include "generators.hpp"
#include "kdiag/construct.hpp"

using namespace kdiag;
using kdiag_test::Rng;

namespace {

struct MultModel {
  AlgebraPtr alg;
  MatOp a;
  MatOp q;
  JointSpectrum J;
};

// Multiplication operator diag(j/d) with mesh weight w and the normalized
// all-ones generator.
MultModel mult1d(Eigen::Index d, double w) {
  auto alg = make_simple_algebra(d, w);
  Eigen::VectorXd grid(d);
  for (Eigen::Index j = 0; j < d; ++j)
    grid[j] = static_cast<double>(j) / static_cast<double>(d);
  MatOp a = MatOp::diagonal(alg, {grid});
  MatOp q = MatOp::rank_one(alg, 0, Eigen::VectorXcd::Ones(d));
  return {alg, a, q, joint_diagonalize(HermTuple({a}))};
}

HermTuple random_commuting_tuple(Rng& rng, const AlgebraPtr& alg, int n,
                                 double lo, double hi) {
  std::vector<std::vector<Eigen::MatrixXcd>> blocks(static_cast<size_t>(n));
  std::uniform_real_distribution<double> vd(lo, hi);
  for (int b = 0; b < alg->num_blocks(); ++b) {
    Eigen::Index d = alg->dim(b);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(
        kdiag_test::random_matrix(rng, d));
    Eigen::MatrixXcd Q = qr.householderQ();
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd vals(d);
      for (Eigen::Index i = 0; i < d; ++i) vals[i] = vd(rng);
      blocks[static_cast<size_t>(j)].push_back(
          Q * vals.cast<Complex>().asDiagonal() * Q.adjoint());
    }
  }
  std::vector<MatOp> entries;
  for (int j = 0; j < n; ++j)
    entries.emplace_back(alg, std::move(blocks[static_cast<size_t>(j)]));
  return HermTuple(std::move(entries));
}

}  // namespace

TEST_CASE("approximate unit: identity generator gives identity") {
  auto model = mult1d(16, 1.0 / 16);
  for (int m : {0, 2, 5}) {
    auto rep = build_approx_unit(model.J, MatOp::identity(model.alg), m);
    CHECK((rep.p - MatOp::identity(model.alg)).max_abs_entry() <= 1e-12);
    CHECK(rep.inf_comm <= 1e-12);
  }
}

TEST_CASE("approximate unit: rank counting and certified bounds") {
  auto model = mult1d(64, 1.0 / 64);
  double tau_q = trace(model.q).real();
  MatOp prev = MatOp::zero(model.alg);
  for (int m = 0; m <= 6; ++m) {
    auto rep = build_approx_unit(model.J, model.q, m);
    // rank p_m = number of occupied dyadic intervals = min(2^m, d)
    double expected_rank = std::min(std::ldexp(1.0, m), 64.0);
    CHECK(rep.tau_p == doctest::Approx(expected_rank / 64.0).epsilon(1e-12));
    // Certified bounds with slack >= -1e-9
    CHECK(rep.inf_comm <= rep.bound_inf + 1e-9);
    CHECK(rep.tau_p <= rep.bound_tau + 1e-9 * tau_q);
    // monotone chain
    CHECK(projection_leq(prev, rep.p, 1e-9));
    prev = rep.p;
  }
  // exhaustion: the all-ones generator is generating, so p_m = 1 at full
  // resolution
  auto full = build_approx_unit(model.J, model.q, 6);
  CHECK((full.p - MatOp::identity(model.alg)).max_abs_entry() <= 1e-9);
}

TEST_CASE("approximate unit: summand orthogonality on a random model") {
  Rng rng(94001);
  for (int trial = 0; trial < 20; ++trial) {
    auto alg = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, alg, n, 0.0, 0.999);
    auto J = joint_diagonalize(alpha);
    auto q = kdiag_test::random_projection(rng, alg);
    int m = std::uniform_int_distribution<int>(0, 3)(rng);
    // the summands l(e(A) q) for distinct atoms are pairwise orthogonal
    std::vector<MatOp> summands;
    for (const auto& [atom, idx] : atom_partition(J, m)) {
      auto e = spectral_projection(J, atom.box());
      summands.push_back(range_projection(e * q));
    }
    MatOp sum = MatOp::zero(alg);
    for (std::size_t i = 0; i < summands.size(); ++i) {
      for (std::size_t j = i + 1; j < summands.size(); ++j)
        CHECK((summands[i] * summands[j]).max_abs_entry() <= 1e-10);
      sum = sum + summands[i];
    }
    // and their sum is the reported p_m
    auto rep = build_approx_unit(J, q, m);
    CHECK((sum - rep.p).max_abs_entry() <= 1e-9);
  }
}

TEST_CASE("approximate unit bounds hold on random non-diagonal models") {
  Rng rng(94002);
  for (int trial = 0; trial < 20; ++trial) {
    auto alg = kdiag_test::random_algebra(rng, 2, 8);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, alg, n, 0.0, 0.999);
    auto J = joint_diagonalize(alpha);
    auto q = kdiag_test::random_projection(rng, alg);
    for (int m = 0; m <= 4; ++m) {
      auto rep = build_approx_unit(J, q, m);
      CHECK(rep.inf_comm <= rep.bound_inf + 1e-9);
      CHECK(rep.tau_p <= rep.bound_tau + 1e-9 * (1 + rep.tau_q));
      // direct dense cross-check of the measured commutator norm
      for (int j = 0; j < n; ++j) {
        double dense = commutator(rep.p, J.op(j)).sup_norm();
        CHECK(dense ==
              doctest::Approx(
                  rep.comm_mu[static_cast<size_t>(j)].sup())
                  .epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("midpoint quantization") {
  auto alg = make_simple_algebra(2, 1.0);
  auto a = MatOp::diagonal(alg, {Eigen::Vector2d(0.0, 0.5)});
  auto J = joint_diagonalize(HermTuple({a}));
  auto am = midpoint_quantize(J, 1);
  CHECK(am.entry(0).block(0)(0, 0).real() == doctest::Approx(0.25));
  CHECK(am.entry(0).block(0)(1, 1).real() == doctest::Approx(0.75));

  Rng rng(94003);
  for (int trial = 0; trial < 20; ++trial) {
    auto a2 = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, a2, n, 0.0, 0.999);
    auto J2 = joint_diagonalize(alpha);
    auto q = kdiag_test::random_projection(rng, a2);
    for (int m = 0; m <= 6; ++m) {
      auto quant = midpoint_quantize(J2, m);
      for (int j = 0; j < n; ++j) {
        CHECK((quant.entry(j) - J2.op(j)).sup_norm() <=
              std::ldexp(1.0, -m - 1) + 1e-9);
      }
      // [p_m, alpha_m(j)] = 0
      auto rep = build_approx_unit(J2, q, m);
      for (int j = 0; j < n; ++j)
        CHECK(commutator(rep.p, quant.entry(j)).sup_norm() <= 1e-9);
    }
  }
}

TEST_CASE("generating hull") {
  // q = identity -> e_q = identity
  auto model = mult1d(8, 1.0 / 8);
  auto e1 = generating_hull(model.J, MatOp::identity(model.alg));
  CHECK((e1 - MatOp::identity(model.alg)).max_abs_entry() <= 1e-10);

  // all-ones vector has nonzero coefficients in the (standard) eigenbasis of
  // a multiplication operator with distinct eigenvalues: cyclic
  auto e2 = generating_hull(model.J, model.q);
  CHECK((e2 - MatOp::identity(model.alg)).max_abs_entry() <= 1e-9);
  CHECK(projection_leq(model.q, e2, 1e-9));

  // q inside a single eigenspace stays there
  auto alg = make_simple_algebra(4, 1.0);
  auto a = MatOp::diagonal(alg, {Eigen::Vector4d(0.1, 0.1, 0.7, 0.9)});
  auto J = joint_diagonalize(HermTuple({a}));
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
  v[0] = Complex(0.6, 0.2);
  v[1] = Complex(-0.3, 0.7);
  auto q = MatOp::rank_one(alg, 0, v);
  auto e3 = generating_hull(J, q);
  CHECK((e3 - q).max_abs_entry() <= 1e-10);

  // hull commutes with the tuple; q <= e_q
  Rng rng(94004);
  for (int trial = 0; trial < 30; ++trial) {
    auto a2 = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, a2, n, 0.0, 0.999);
    auto J2 = joint_diagonalize(alpha);
    auto q2 = kdiag_test::random_projection(rng, a2);
    auto e = generating_hull(J2, q2);
    CHECK(projection_leq(q2, e, 1e-9));
    for (int j = 0; j < n; ++j)
      CHECK(commutator(e, alpha.entry(j)).sup_norm() <=
            1e-8 * (1 + alpha.max_sup_norm()));
  }
}

TEST_CASE("generating decomposition") {
  // scalar operator: every rank-one q has e_q = q, so d entries
  auto alg = make_simple_algebra(5, 1.0);
  auto a = MatOp::diagonal(alg, {Eigen::VectorXd::Constant(5, 0.3)});
  auto J = joint_diagonalize(HermTuple({a}));
  auto dec = generating_decomposition(J);
  CHECK(dec.size() == 5);
  for (auto& [q, e] : dec) CHECK((q - e).max_abs_entry() <= 1e-10);

  // diagonal model with distinct eigenvalues: each standard vector spans one
  // eigenline, so the hulls are the eigenprojections themselves
  auto model = mult1d(8, 1.0 / 8);
  auto dec2 = generating_decomposition(model.J);
  CHECK(dec2.size() == 8);

  // rotated model with distinct eigenvalues: e_0 generically overlaps every
  // eigenvector, so a single pair (q_1, 1) covers everything
  {
    Rng rot_rng(94015);
    auto alg4 = make_simple_algebra(6, 1.0);
    auto tup = random_commuting_tuple(rot_rng, alg4, 1, 0.0, 0.999);
    auto Jrot = joint_diagonalize(tup);
    auto dec3 = generating_decomposition(Jrot);
    CHECK(dec3.size() == 1);
    CHECK((dec3[0].second - MatOp::identity(alg4)).max_abs_entry() <= 1e-9);
  }

  Rng rng(94005);
  for (int trial = 0; trial < 30; ++trial) {
    auto a2 = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, a2, n, 0.0, 0.999);
    auto J2 = joint_diagonalize(alpha);
    auto d2 = generating_decomposition(J2);
    MatOp sum = MatOp::zero(a2);
    for (std::size_t i = 0; i < d2.size(); ++i) {
      CHECK(d2[i].first.is_projection());
      CHECK(projection_leq(d2[i].first, d2[i].second, 1e-9));
      for (std::size_t j = i + 1; j < d2.size(); ++j)
        CHECK((d2[i].second * d2[j].second).max_abs_entry() <= 1e-9);
      sum = sum + d2[i].second;
      // q_k is generating inside its hull: its hull is exactly e_k
      CHECK((generating_hull(J2, d2[i].first) - d2[i].second)
                .max_abs_entry() <= 1e-9);
    }
    CHECK((sum - MatOp::identity(a2)).max_abs_entry() <= 1e-9);
  }
}

TEST_CASE("select_mk") {
  // psi = t^{1/(2n)}, tau_q = 0.5: bound is 2^{-m/2}, so m_k = 2k
  for (int n : {1, 2, 3}) {
    auto psi = PsiFunction::power_root(2.0 * n);
    for (int k = 0; k <= 8; ++k)
      CHECK(select_mk(psi, 0.5, k, n) == 2 * k);
  }
  // embedded case: bound never drops below max{2 tau_q, 1}
  CHECK_THROWS_AS(select_mk(PsiFunction::power_root(1.0), 0.5, 1, 1),
                  UnreachableLevelError);
  // monotone in k
  auto sp = SpaceSpec::ln1(2);
  int prev = -1;
  for (int k = 0; k <= 8; ++k) {
    int m = select_mk(sp, 0.25, k, 1);
    CHECK(m > prev);
    prev = m;
  }
}

TEST_CASE("lorentz commutator report") {
  auto model = mult1d(64, 1.0 / 64);
  auto alpha = HermTuple({model.a});
  auto psi = PsiFunction::power_root(2.0);
  double prev_rhs = 1e300;
  for (int m = 0; m <= 6; ++m) {
    auto rep = lorentz_commutator_report(model.J, model.q, alpha, psi, m);
    REQUIRE(rep.lhs.size() == 1);
    CHECK(rep.lhs[0] <= rep.rhs + 1e-9);
    // rhs = max{2 tau_q, 1} 2^{-m} psi(2^m) decreases for this psi
    CHECK(rep.rhs <= prev_rhs + 1e-12);
    prev_rhs = rep.rhs;
    if (m == 0) {
      double tau_q = trace(model.q).real();
      CHECK(rep.rhs == doctest::Approx(std::max(2 * tau_q, 1.0) * psi(1.0)));
    }
  }
  // dense route agrees with the structured route
  Rng rng(94006);
  auto alg = kdiag_test::random_algebra(rng, 2, 6);
  auto tup = random_commuting_tuple(rng, alg, 2, 0.0, 0.999);
  auto J = joint_diagonalize(tup);
  auto q = kdiag_test::random_projection(rng, alg);
  for (int m = 0; m <= 3; ++m) {
    auto rep = lorentz_commutator_report(J, q, tup, psi, m);
    for (double lhs : rep.lhs) CHECK(lhs <= rep.rhs + 1e-9);
  }
}

TEST_CASE("single-operator diagonalization chain") {
  auto model = mult1d(64, 1.0 / 64);
  auto E = SpaceSpec::ln1(2);
  auto reports = kuroda_diagonalize_single(model.a, model.q, E, 5);
  REQUIRE(reports.size() == 6);
  for (const auto& rep : reports) {
    CHECK(rep.generating);
    CHECK(rep.residual.at("e_cap_linf") <= rep.bound + 1e-8);
    CHECK(rep.telescoping_gap <= 1e-10 * std::max(1.0, rep.scale));
    // delta really is diagonal in the exhibited basis: members scalars
    // reassemble it
    CHECK((rep.basis.assemble_entry(0) - rep.delta[0]).max_abs_entry() <=
          1e-9);
    // members partition the identity
    MatOp sum = MatOp::zero(model.alg);
    for (std::size_t i = 0; i < rep.basis.members.size(); ++i)
      sum = sum + rep.basis.projection(i);
    CHECK((sum - MatOp::identity(model.alg)).max_abs_entry() <= 1e-9);
  }
  // residuals shrink along the chain
  CHECK(reports.back().residual.at("e_cap_linf") <=
        reports.front().residual.at("e_cap_linf") + 1e-12);

  // already diagonal with q = identity: residual 0 at every k
  auto rep0 =
      kuroda_diagonalize_single(model.a, MatOp::identity(model.alg), E, 3);
  for (const auto& rep : rep0)
    CHECK(rep.residual.at("e_cap_linf") <= 1e-10);

  // L_1 target: no usable level exists
  CHECK_THROWS_AS(
      kuroda_diagonalize_single(model.a, model.q, SpaceSpec::ln1(1), 3),
      UnreachableLevelError);
}

TEST_CASE("single-operator chain on a rotated model") {
  Rng rng(94007);
  auto alg = make_simple_algebra(24, 0.25);
  auto tup = random_commuting_tuple(rng, alg, 1, 0.0, 0.999);
  const MatOp& a = tup.entry(0);
  auto q = MatOp::rank_one(alg, 0, Eigen::VectorXcd::Ones(24));
  auto E = SpaceSpec::ln1(2);
  auto reports = kuroda_diagonalize_single(a, q, E, 4);
  for (const auto& rep : reports) {
    CHECK(rep.residual.at("e_cap_linf") <= rep.bound + 1e-8);
    CHECK(rep.telescoping_gap <= 1e-10 * std::max(1.0, rep.scale));
  }
}

TEST_CASE("tuple diagonalization inside the unit square") {
  Rng rng(94008);
  auto alg = make_simple_algebra(24, 1.0 / 24);
  auto alpha = random_commuting_tuple(rng, alg, 2, 0.0, 0.999);
  double eps = 0.05;
  auto rep = kuroda_diagonalize_tuple(alpha, SpaceSpec::ln1(4), eps);
  // single occupied window: residual <= eps (one term of the 3^n sum)
  CHECK(rep.residual.at("e_cap_linf") <= eps + 1e-8);
  CHECK(rep.bound == doctest::Approx(9.0 * eps));

  // delta entries commute and share the exhibited family
  for (int j = 0; j < 2; ++j) {
    CHECK(commutator(rep.delta[0], rep.delta[1]).sup_norm() <= 1e-9);
    CHECK((rep.basis.assemble_entry(j) - rep.delta[static_cast<size_t>(j)])
              .max_abs_entry() <= 1e-9);
  }
  MatOp sum = MatOp::zero(alg);
  for (std::size_t i = 0; i < rep.basis.members.size(); ++i)
    sum = sum + rep.basis.projection(i);
  CHECK((sum - MatOp::identity(alg)).max_abs_entry() <= 1e-9);
}

TEST_CASE("tuple diagonalization across several windows") {
  Rng rng(94009);
  auto alg = make_simple_algebra(30, 0.2);
  // spectrum spanning [-1, 2): occupied windows -1, 0, 1
  auto alpha = random_commuting_tuple(rng, alg, 1, -1.0, 1.999);
  double eps = 0.1;
  auto rep = kuroda_diagonalize_tuple(alpha, SpaceSpec::ln1(2), eps);
  // budgets eps/2 + eps + eps/2 = 2 eps <= 3 eps
  CHECK(rep.residual.at("e_cap_linf") <= 2.0 * eps + 1e-8);
  CHECK(rep.bound == doctest::Approx(3.0 * eps));
}

TEST_CASE("tuple diagonalization refuses embedded targets") {
  Rng rng(94010);
  auto alg = make_simple_algebra(8, 1.0);
  auto alpha = random_commuting_tuple(rng, alg, 2, 0.0, 0.999);
  // L_{2,1} itself is embedded in L_{2,1}
  CHECK_THROWS_AS(kuroda_diagonalize_tuple(alpha, SpaceSpec::ln1(2), 0.1),
                  EmbeddingPreconditionError);
  try {
    kuroda_diagonalize_tuple(alpha, SpaceSpec::ln1(2), 0.1);
  } catch (const EmbeddingPreconditionError& e) {
    CHECK(e.ratios.size() == 21);  // witness window m = 0..20
  }
}
