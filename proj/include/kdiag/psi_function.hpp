#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kdiag/common.hpp"
#include "kdiag/step_function.hpp"

namespace kdiag {

// Analytic description of psi on an interval free of interior knots: either
// a + slope*t or coef * t^(1/p).
struct PsiPiece {
  enum class Kind { Linear, Power };
  Kind kind = Kind::Linear;
  double a = 0.0, slope = 0.0;  // Linear
  double coef = 1.0, p = 1.0;   // Power
  double eval(double t) const;
};

// Increasing concave function psi on [0, infinity) with psi(0) = 0, built
// from a closed set of forms:
//   pow(e)        t^e with e = 1/p in (0, 1]
//   pwl[(0,0),..] piecewise linear through the breakpoints, extended past the
//                 last one with the final slope
//   min_id(g)     min{ g(t), t }
//   scale(c, g)   c * g(t), c > 0
// Evaluation is exact per form, and Stieltjes integration of a step function
// against d(psi) reduces to finitely many evaluations, so norms built on it
// carry no quadrature error.
class PsiFunction {
 public:
  static PsiFunction power_root(double p);
  static PsiFunction piecewise_linear(
      std::vector<std::pair<double, double>> points);
  static PsiFunction min_with_identity(PsiFunction inner);
  static PsiFunction scaled(double c, PsiFunction inner);

  double operator()(double t) const;

  // Exact Stieltjes integral  int f d(psi) = sum_i v_i (psi(T_i)-psi(T_{i-1})).
  double stieltjes(const StepFunction& f) const;

  // Interior knots in (0, cap): form breakpoints plus min_id crossings.
  // Between consecutive knots the function is a single PsiPiece.
  std::vector<double> knots_below(double cap) const;

  // Analytic form on a knot-free interval (t0, t1) with 0 <= t0 < t1.
  PsiPiece piece_on(double t0, double t1) const;

  // Finite limit at +infinity, when one exists (zero final slope).
  std::optional<double> finite_limit() const;

  std::string to_string() const;
  static PsiFunction parse(std::string_view text);

  struct Impl;  // defined in psi_function.cpp

 private:
  std::shared_ptr<const Impl> impl_;
  explicit PsiFunction(std::shared_ptr<const Impl> impl)
      : impl_(std::move(impl)) {}
};

}  // namespace kdiag
