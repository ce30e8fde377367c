#include <cmath>
#include <random>

#include "doctest.h"
#include "generators.hpp"
#include "kdiag/joint_spectrum.hpp"
#include "kdiag/ncalg.hpp"

using namespace kdiag;
using kdiag_test::Rng;

namespace {

HermTuple random_commuting_tuple(Rng& rng, const AlgebraPtr& alg, int n,
                                 double lo = -1.0, double hi = 1.0) {
  // U D_j U* for one shared random unitary per block
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

TEST_CASE("dyadic snapping") {
  CHECK(dyadic_index(0.5, 1) == 1);   // a cut belongs to its upper atom
  CHECK(dyadic_index(0.1, 1) == 0);
  CHECK(dyadic_index(0.6, 1) == 1);
  CHECK(dyadic_index(0.5 - std::ldexp(1.0, -50), 1) == 1);  // snapped up
  CHECK(dyadic_index(0.5 + std::ldexp(1.0, -50), 1) == 1);
  CHECK(dyadic_index(0.5 - std::ldexp(1.0, -20), 1) == 0);  // outside radius
  CHECK(dyadic_index(0.999999, 3) == 7);
}

TEST_CASE("joint_diagonalize on diagonal input") {
  auto alg = make_simple_algebra(3, 1.0);
  auto a1 = MatOp::diagonal(alg, {Eigen::Vector3d(0, 0, 1)});
  auto a2 = MatOp::diagonal(alg, {Eigen::Vector3d(0, 1, 1)});
  auto J = joint_diagonalize(HermTuple({a1, a2}));
  CHECK(J.identity_basis());
  CHECK(J.residual() == 0.0);
  REQUIRE(J.tuples().size() == 3);
  std::vector<std::pair<double, double>> got;
  for (const auto& e : J.tuples()) got.emplace_back(e.lambda[0], e.lambda[1]);
  std::sort(got.begin(), got.end());
  CHECK(got[0] == std::pair<double, double>(0.0, 0.0));
  CHECK(got[1] == std::pair<double, double>(0.0, 1.0));
  CHECK(got[2] == std::pair<double, double>(1.0, 1.0));
}

TEST_CASE("joint_diagonalize recovers constructed spectra") {
  Rng rng(93001);
  for (int trial = 0; trial < 60; ++trial) {
    auto alg = kdiag_test::random_algebra(rng, 2, 8);
    int n = std::uniform_int_distribution<int>(1, 3)(rng);
    auto alpha = random_commuting_tuple(rng, alg, n);
    auto J = joint_diagonalize(alpha);
    CHECK(J.residual() <= 1e-8 * (1 + alpha.max_sup_norm()));

    // recovered model operators match the originals
    for (int j = 0; j < n; ++j) {
      CHECK((J.op(j) - alpha.entry(j)).max_abs_entry() <= 1e-8);
    }
    // columns orthonormal
    for (int b = 0; b < alg->num_blocks(); ++b) {
      const auto& U = J.basis()[static_cast<size_t>(b)];
      CHECK((U.adjoint() * U -
             Eigen::MatrixXcd::Identity(U.cols(), U.cols()))
                .cwiseAbs()
                .maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("joint_diagonalize rejects non-commuting input") {
  auto alg = make_simple_algebra(2, 1.0);
  Eigen::MatrixXcd sx(2, 2), sz(2, 2);
  sx << 0, 1, 1, 0;
  sz << 1, 0, 0, -1;
  // HermTuple would already reject; feed a barely-commuting pair through a
  // loose ctol and let the diagonalizer catch it.
  CHECK_THROWS_AS(
      joint_diagonalize(
          HermTuple({MatOp(alg, {sx}), MatOp(alg, {sz})}, /*ctol=*/10.0),
          1e-8),
      NonCommutingError);
}

TEST_CASE("spectral projection") {
  Rng rng(93002);
  // whole space gives the identity
  for (int trial = 0; trial < 30; ++trial) {
    auto alg = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, alg, n);
    auto J = joint_diagonalize(alpha);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -100.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 100.0);
    auto all = spectral_projection(J, Box::half_open(lo, hi));
    CHECK((all - MatOp::identity(alg)).max_abs_entry() <= 1e-10);

    // additivity over a disjoint split, and commutation with alpha
    std::uniform_real_distribution<double> cd(-0.8, 0.8);
    Eigen::VectorXd cut(n);
    for (int j = 0; j < n; ++j) cut[j] = cd(rng);
    auto left = spectral_projection(J, Box::half_open(lo, cut));
    Box rest = Box::half_open(lo, hi);
    rest.lo[0] = cut[0];  // split along axis 0 only, keep the rest full
    for (int j = 1; j < n; ++j) rest.lo[j] = lo[j];
    Box lbox = Box::half_open(lo, hi);
    lbox.hi[0] = cut[0];
    auto p1 = spectral_projection(J, lbox);
    auto p2 = spectral_projection(J, rest);
    CHECK((p1 + p2 - all).max_abs_entry() <= 1e-10);
    CHECK((p1 * p2).max_abs_entry() <= 1e-10);
    for (int j = 0; j < n; ++j) {
      CHECK(commutator(p1, alpha.entry(j)).sup_norm() <=
            1e-8 * (1 + alpha.max_sup_norm()));
    }
    // idempotent and hermitian
    CHECK((p1 * p1 - p1).max_abs_entry() <= 1e-10);
    CHECK((p1 - p1.adjoint()).max_abs_entry() <= 1e-10);
    (void)left;
  }

  // n = 1 diagonal grid: [0, 1/2) selects the small eigenvalues
  auto alg = make_simple_algebra(4, 1.0);
  auto a = MatOp::diagonal(alg, {Eigen::Vector4d(0.0, 0.25, 0.5, 0.75)});
  auto J = joint_diagonalize(HermTuple({a}));
  auto p = spectral_projection(
      J, Box::half_open(Eigen::VectorXd::Zero(1),
                        Eigen::VectorXd::Constant(1, 0.5)));
  CHECK(trace(p).real() == doctest::Approx(2.0));
}

TEST_CASE("atom partition") {
  auto alg = make_simple_algebra(2, 1.0);
  auto a = MatOp::diagonal(alg, {Eigen::Vector2d(0.1, 0.6)});
  auto J = joint_diagonalize(HermTuple({a}));

  auto atoms0 = atom_partition(J, 0);
  REQUIRE(atoms0.size() == 1);
  CHECK(atoms0.begin()->second.size() == 2);

  auto atoms1 = atom_partition(J, 1);
  REQUIRE(atoms1.size() == 2);
  CHECK(atoms1.begin()->first.k[0] == 0);
  CHECK(std::next(atoms1.begin())->first.k[0] == 1);

  // counting across random tuples
  Rng rng(93003);
  for (int trial = 0; trial < 40; ++trial) {
    auto a2 = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, a2, n, 0.0, 0.999);
    auto J2 = joint_diagonalize(alpha);
    int m = std::uniform_int_distribution<int>(0, 6)(rng);
    std::size_t total = 0;
    for (const auto& [atom, idx] : atom_partition(J2, m)) {
      total += idx.size();
      for (int i : idx)
        CHECK(atom.box().contains(J2.tuples()[static_cast<size_t>(i)].lambda));
    }
    CHECK(total == J2.tuples().size());
  }

  // out-of-cube eigenvalues are rejected with a rescale hint
  auto bad = MatOp::diagonal(alg, {Eigen::Vector2d(-0.5, 0.25)});
  auto Jbad = joint_diagonalize(HermTuple({bad}));
  CHECK_THROWS_AS(atom_partition(Jbad, 2), ValidationError);
}

TEST_CASE("atom refinement: children tile their parent") {
  Rng rng(93004);
  for (int trial = 0; trial < 25; ++trial) {
    auto alg = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 2)(rng);
    auto alpha = random_commuting_tuple(rng, alg, n, 0.0, 0.999);
    auto J = joint_diagonalize(alpha);
    int m = std::uniform_int_distribution<int>(0, 3)(rng);
    int mp = m + std::uniform_int_distribution<int>(1, 2)(rng);
    auto coarse = atom_partition(J, m);
    auto fine = atom_partition(J, mp);
    for (const auto& [atom, idx] : coarse) {
      // e(A) equals the sum of e(child) over children inside A
      MatOp sum = MatOp::zero(alg);
      for (const auto& [child, cidx] : fine) {
        bool inside = true;
        for (int j = 0; j < n; ++j) {
          std::int64_t scaled =
              child.k[static_cast<size_t>(j)] >> (mp - m);
          if (scaled != atom.k[static_cast<size_t>(j)]) inside = false;
        }
        if (inside) sum = sum + spectral_projection(J, child.box());
        (void)cidx;
      }
      CHECK((sum - spectral_projection(J, atom.box())).max_abs_entry() <=
            1e-10);
    }
  }
}

TEST_CASE("disjoint atom projections are orthogonal") {
  Rng rng(93005);
  auto alg = kdiag_test::random_algebra(rng, 2, 8);
  auto alpha = random_commuting_tuple(rng, alg, 2, 0.0, 0.999);
  auto J = joint_diagonalize(alpha);
  auto atoms = atom_partition(J, 2);
  std::vector<MatOp> ps;
  for (const auto& [atom, idx] : atoms)
    ps.push_back(spectral_projection(J, atom.box()));
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j)
      CHECK((ps[i] * ps[j]).max_abs_entry() <= 1e-10);
}

TEST_CASE("rescale to unit cube") {
  Rng rng(93006);
  for (int trial = 0; trial < 50; ++trial) {
    auto alg = kdiag_test::random_algebra(rng, 2, 6);
    int n = std::uniform_int_distribution<int>(1, 3)(rng);
    auto alpha = random_commuting_tuple(rng, alg, n, -2.0, 3.0);
    auto [maps, scaled] = rescale_to_unit_cube(alpha);

    auto J = joint_diagonalize(scaled);
    for (const auto& e : J.tuples())
      for (int j = 0; j < n; ++j) {
        CHECK(e.lambda[j] >= -1e-12);
        CHECK(e.lambda[j] < 1.0 - std::ldexp(1.0, -41));
      }
    // atoms are in range at any level
    CHECK_NOTHROW(atom_partition(J, 5));

    // round trip
    for (int j = 0; j < n; ++j) {
      auto alg_j = alpha.entry(j).algebra();
      MatOp back = scaled.entry(j) * maps[static_cast<size_t>(j)].scale -
                   MatOp::identity(alg_j) * maps[static_cast<size_t>(j)].offset;
      CHECK((back - alpha.entry(j)).max_abs_entry() <=
            1e-12 * (1 + alpha.max_sup_norm()));
    }
  }

  // zero operator axis: offset only
  auto alg = make_simple_algebra(2, 1.0);
  auto zero = MatOp::zero(alg);
  auto [maps, scaled] = rescale_to_unit_cube(HermTuple({zero}));
  CHECK(maps[0].scale == 1.0);
  CHECK(scaled.entry(0).max_abs_entry() == 0.0);

  // already inside [0,1): the map is identity up to the margin
  auto a = MatOp::diagonal(alg, {Eigen::Vector2d(0.0, 0.9)});
  auto [maps2, scaled2] = rescale_to_unit_cube(HermTuple({a}));
  CHECK(maps2[0].offset == 0.0);
  CHECK(maps2[0].scale == doctest::Approx(0.9).epsilon(1e-9));
}
