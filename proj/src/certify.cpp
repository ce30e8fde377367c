#include "kdiag/certify.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace kdiag {

ModulusEstimate modulus_upper_schedule(const HermTuple& alpha, const MatOp& q,
                                       const SpaceSpec& E,
                                       const std::vector<int>& m_list) {
  JointSpectrum J = joint_diagonalize(alpha);
  ModulusEstimate est{E, {}, {}, {}, std::nullopt,
                      "dyadic approximate-unit schedule"};
  double running = std::numeric_limits<double>::infinity();
  for (int m : m_list) {
    ApproxUnitReport rep = build_approx_unit(J, q, m);
    double v = 0.0;
    for (int j = 0; j < alpha.n(); ++j)
      v = std::max(v, rep.commutator_norm(j, E));
    est.ms.push_back(m);
    est.values.push_back(v);
    running = std::min(running, v);
    est.upper_envelope.push_back(running);
  }
  return est;
}

namespace {

struct NormSubgradient {
  double value = 0.0;
  std::vector<Eigen::MatrixXcd> G;  // dual element, per block
};

// Norm and support functional of a symmetric norm at C, from the per-block
// singular value decompositions and the space's step weights.
NormSubgradient norm_subgradient(const AlgebraPtr& alg,
                                 const std::vector<Eigen::MatrixXcd>& C,
                                 const SpaceSpec& space) {
  struct Entry {
    double sv;
    int block;
    Eigen::Index idx;
  };
  std::vector<Entry> entries;
  std::vector<Eigen::JacobiSVD<Eigen::MatrixXcd>> svds;
  for (int b = 0; b < alg->num_blocks(); ++b) {
    svds.emplace_back(C[static_cast<size_t>(b)],
                      Eigen::ComputeThinU | Eigen::ComputeThinV);
    for (Eigen::Index i = 0; i < svds.back().singularValues().size(); ++i)
      entries.push_back({svds.back().singularValues()[i], b, i});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.sv > b.sv; });

  // per-position weights of the attained norm
  std::vector<double> w(entries.size(), 0.0);
  double value = 0.0;
  auto fill_lorentz = [&](const PsiFunction& psi) {
    double T = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      T += alg->weight(entries[i].block);
      double cur = psi(T);
      w[i] = cur - prev;
      prev = cur;
      value += entries[i].sv * w[i];
    }
  };
  switch (space.kind()) {
    case SpaceSpec::Kind::Lorentz:
      fill_lorentz(space.psi());
      break;
    case SpaceSpec::Kind::LInfinity:
      if (!entries.empty()) {
        w[0] = 1.0;
        value = entries[0].sv;
      }
      break;
    case SpaceSpec::Kind::IntersectLInf: {
      // attaining side of max{ ||.||_base, ||.||_inf }
      NormSubgradient base =
          norm_subgradient(alg, C, space.base());
      double sup = entries.empty() ? 0.0 : entries[0].sv;
      if (base.value >= sup) return base;
      w.assign(entries.size(), 0.0);
      if (!entries.empty()) w[0] = 1.0;
      value = sup;
      break;
    }
  }

  NormSubgradient out;
  out.value = value;
  for (int b = 0; b < alg->num_blocks(); ++b)
    out.G.push_back(Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto& svd = svds[static_cast<size_t>(entries[i].block)];
    out.G[static_cast<size_t>(entries[i].block)] +=
        (w[i] / alg->weight(entries[i].block)) *
        (svd.matrixU().col(entries[i].idx) *
         svd.matrixV().col(entries[i].idx).adjoint());
  }
  return out;
}

double tau_norm(const AlgebraPtr& alg,
                const std::vector<Eigen::MatrixXcd>& x) {
  double acc = 0.0;
  for (int b = 0; b < alg->num_blocks(); ++b)
    acc += alg->weight(b) * x[static_cast<size_t>(b)].squaredNorm();
  return std::sqrt(acc);
}

// Frobenius projection onto {x >= floor}: floor + positive part.
Eigen::MatrixXcd clip_below(const Eigen::MatrixXcd& m,
                            const Eigen::MatrixXcd& floor) {
  Eigen::MatrixXcd diff = m - floor;
  diff = (0.5 * (diff + diff.adjoint())).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(diff);
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0);
  return floor + es.eigenvectors() * vals.cast<Complex>().asDiagonal() *
                     es.eigenvectors().adjoint();
}

Eigen::MatrixXcd clip_above_one(const Eigen::MatrixXcd& m) {
  Eigen::MatrixXcd h = (0.5 * (m + m.adjoint())).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  Eigen::VectorXd vals = es.eigenvalues().cwiseMin(1.0);
  return es.eigenvectors() * vals.cast<Complex>().asDiagonal() *
         es.eigenvectors().adjoint();
}

struct ProjectionOutcome {
  std::vector<Eigen::MatrixXcd> point;
  double residual = 0.0;
};

// Dykstra alternating spectral clippings onto {a0 <= r} cap {r <= 1}.
ProjectionOutcome project_interval(const AlgebraPtr& alg,
                                   std::vector<Eigen::MatrixXcd> x,
                                   const std::vector<Eigen::MatrixXcd>& a0,
                                   int max_rounds = 50,
                                   double target = 1e-8) {
  std::vector<Eigen::MatrixXcd> p, qc;
  for (int b = 0; b < alg->num_blocks(); ++b) {
    p.push_back(Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));
    qc.push_back(Eigen::MatrixXcd::Zero(alg->dim(b), alg->dim(b)));
  }
  double residual = 0.0;
  for (int round = 0; round < max_rounds; ++round) {
    residual = 0.0;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      auto bu = static_cast<size_t>(b);
      Eigen::MatrixXcd y = clip_below(x[bu] + p[bu], a0[bu]);
      p[bu] = x[bu] + p[bu] - y;
      Eigen::MatrixXcd nx = clip_above_one(y + qc[bu]);
      qc[bu] = y + qc[bu] - nx;
      x[bu] = nx;

      Eigen::MatrixXcd low = x[bu] - a0[bu];
      low = (0.5 * (low + low.adjoint())).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> lo(
          low, Eigen::EigenvaluesOnly);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hi(
          (0.5 * (x[bu] + x[bu].adjoint())).eval(), Eigen::EigenvaluesOnly);
      residual = std::max(residual, -lo.eigenvalues().minCoeff());
      residual = std::max(residual, hi.eigenvalues().maxCoeff() - 1.0);
    }
    residual = std::max(residual, 0.0);
    if (residual <= target) break;
  }
  return {std::move(x), residual};
}

}  // namespace

OptimizeResult modulus_inf_optimize(const HermTuple& alpha, const MatOp& a0,
                                    const SpaceSpec& E, int iters,
                                    StepSchedule schedule, double stop_tol) {
  const AlgebraPtr& alg = alpha.algebra();
  if (!a0.algebra()->same_as(*alg))
    throw AlgebraMismatchError("modulus_inf_optimize: algebra mismatch");
  if (!a0.is_hermitian())
    throw ValidationError("modulus_inf_optimize: a0 must be hermitian");
  for (int b = 0; b < a0.num_blocks(); ++b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a0.block(b),
                                                       Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9 ||
        es.eigenvalues().maxCoeff() > 1.0 + 1e-9)
      throw ValidationError("modulus_inf_optimize: a0 must satisfy 0<=a0<=1");
  }

  std::vector<Eigen::MatrixXcd> floor, r, ones;
  for (int b = 0; b < alg->num_blocks(); ++b) {
    floor.push_back(a0.block(b));
    r.push_back(a0.block(b));
    ones.push_back(Eigen::MatrixXcd::Identity(alg->dim(b), alg->dim(b)));
  }

  auto objective = [&](const std::vector<Eigen::MatrixXcd>& point,
                       int* arg_j) -> NormSubgradient {
    NormSubgradient best;
    for (int j = 0; j < alpha.n(); ++j) {
      std::vector<Eigen::MatrixXcd> C;
      for (int b = 0; b < alg->num_blocks(); ++b) {
        auto bu = static_cast<size_t>(b);
        C.push_back(point[bu] * alpha.entry(j).block(b) -
                    alpha.entry(j).block(b) * point[bu]);
      }
      NormSubgradient ns = norm_subgradient(alg, C, E);
      if (j == 0 || ns.value > best.value) {
        best = std::move(ns);
        if (arg_j) *arg_j = j;
      }
    }
    return best;
  };

  OptimizeResult result;
  int arg_j = 0;
  NormSubgradient cur = objective(r, &arg_j);
  result.value = cur.value;
  result.argmin = r;

  for (int t = 0; t < iters && result.value > stop_tol; ++t) {
    // subgradient of the attaining component: [G, alpha_j], hermitian part
    std::vector<Eigen::MatrixXcd> dir;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      auto bu = static_cast<size_t>(b);
      Eigen::MatrixXcd d = cur.G[bu] * alpha.entry(arg_j).block(b) -
                           alpha.entry(arg_j).block(b) * cur.G[bu];
      dir.push_back((0.5 * (d + d.adjoint())).eval());
    }
    double dn = tau_norm(alg, dir);
    if (dn < 1e-15) break;
    double step = schedule.kind == StepSchedule::Kind::Polyak
                      ? cur.value / (dn * dn)
                      : schedule.base / (std::sqrt(t + 1.0) * dn);

    std::vector<Eigen::MatrixXcd> cand;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      auto bu = static_cast<size_t>(b);
      cand.push_back(r[bu] - step * dir[bu]);
    }
    ProjectionOutcome proj = project_interval(alg, std::move(cand), floor);
    result.projection_residual =
        std::max(result.projection_residual, proj.residual);

    int jg = 0;
    NormSubgradient g_grad = objective(proj.point, &jg);

    // feasible segment toward the identity scales the commutator down
    std::vector<Eigen::MatrixXcd> ray;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      auto bu = static_cast<size_t>(b);
      ray.push_back((0.5 * (r[bu] + ones[bu])).eval());
    }
    int jr = 0;
    NormSubgradient g_ray = objective(ray, &jr);

    if (g_grad.value <= g_ray.value) {
      r = std::move(proj.point);
      cur = std::move(g_grad);
      arg_j = jg;
    } else {
      r = std::move(ray);
      cur = std::move(g_ray);
      arg_j = jr;
    }
    if (cur.value < result.value) {
      result.value = cur.value;
      result.argmin = r;
    }
    result.iterations = t + 1;
  }
  return result;
}

OptimizeResult modulus_inf_optimize_restricted(
    const HermTuple& alpha, const MatOp& r_base,
    const std::vector<MatOp>& span, double halfwidth, int iters) {
  const AlgebraPtr& alg = alpha.algebra();
  const int s = static_cast<int>(span.size());
  if (s == 0) throw ValidationError("restricted optimize: empty span");
  for (const MatOp& B : span)
    if (!B.is_hermitian())
      throw ValidationError("restricted optimize: span must be hermitian");

  Eigen::VectorXd c = Eigen::VectorXd::Zero(s);
  auto point_of = [&](const Eigen::VectorXd& coef) {
    std::vector<Eigen::MatrixXcd> point;
    for (int b = 0; b < alg->num_blocks(); ++b) {
      Eigen::MatrixXcd m = r_base.block(b);
      for (int i = 0; i < s; ++i)
        m += coef[i] * span[static_cast<size_t>(i)].block(b);
      point.push_back(std::move(m));
    }
    return point;
  };
  auto objective = [&](const std::vector<Eigen::MatrixXcd>& point,
                       int* arg_j) -> NormSubgradient {
    NormSubgradient best;
    for (int j = 0; j < alpha.n(); ++j) {
      std::vector<Eigen::MatrixXcd> C;
      for (int b = 0; b < alg->num_blocks(); ++b) {
        auto bu = static_cast<size_t>(b);
        C.push_back(point[bu] * alpha.entry(j).block(b) -
                    alpha.entry(j).block(b) * point[bu]);
      }
      NormSubgradient ns = norm_subgradient(alg, C, SpaceSpec::l_infinity());
      if (j == 0 || ns.value > best.value) {
        best = std::move(ns);
        if (arg_j) *arg_j = j;
      }
    }
    return best;
  };

  OptimizeResult result;
  int arg_j = 0;
  NormSubgradient cur = objective(point_of(c), &arg_j);
  result.value = cur.value;
  Eigen::VectorXd best_c = c;

  for (int t = 0; t < iters; ++t) {
    // gradient in coefficient space: <[G, alpha_j], B_i>_tau
    Eigen::VectorXd grad(s);
    for (int i = 0; i < s; ++i) {
      double acc = 0.0;
      for (int b = 0; b < alg->num_blocks(); ++b) {
        auto bu = static_cast<size_t>(b);
        Eigen::MatrixXcd d = cur.G[bu] * alpha.entry(arg_j).block(b) -
                             alpha.entry(arg_j).block(b) * cur.G[bu];
        d = (0.5 * (d + d.adjoint())).eval();
        acc += alg->weight(b) *
               (d.adjoint() * span[static_cast<size_t>(i)].block(b))
                   .trace()
                   .real();
      }
      grad[i] = acc;
    }
    double gn = grad.norm();
    if (gn < 1e-15) break;
    double step = halfwidth / (std::sqrt(t + 1.0) * gn);
    c -= step * grad;
    for (int i = 0; i < s; ++i)
      c[i] = std::clamp(c[i], -halfwidth, halfwidth);
    cur = objective(point_of(c), &arg_j);
    if (cur.value < result.value) {
      result.value = cur.value;
      best_c = c;
    }
    result.iterations = t + 1;
  }
  result.argmin = point_of(best_c);
  return result;
}

}  // namespace kdiag
