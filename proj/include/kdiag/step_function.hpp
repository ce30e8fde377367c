#pragma once

#include <utility>
#include <vector>

#include "kdiag/common.hpp"

namespace kdiag {

struct Step {
  double width;
  double value;
};

// Nonincreasing right-continuous step function on (0, infinity), identically
// zero beyond its total width.  Stored steps have positive widths and
// strictly decreasing positive values; equal-value neighbours are merged and
// trailing zero values dropped, so the zero function has no steps at all.
class StepFunction {
 public:
  StepFunction() = default;

  // Steps must already be nonincreasing in value; merges equal neighbours.
  static StepFunction from_steps(std::vector<Step> steps);
  // Arbitrary (width, value) pairs; sorted by value, descending.
  static StepFunction from_weighted_values(std::vector<Step> pairs);
  // All values share one width (e.g. singular values of an unweighted block).
  static StepFunction from_values(const std::vector<double>& values,
                                  double width);
  // Indicator of (0, t).
  static StepFunction indicator(double t);

  const std::vector<Step>& steps() const { return steps_; }
  bool is_zero() const { return steps_.empty(); }
  std::size_t size() const { return steps_.size(); }

  double total_width() const;
  // Cumulative right endpoints T_1 < T_2 < ... < T_K.
  const std::vector<double>& boundaries() const { return cum_; }

  double sup() const { return steps_.empty() ? 0.0 : steps_.front().value; }
  double value_at(double t) const;
  // int_0^t f(s) ds
  double integral_to(double t) const;
  // int_0^inf f(s) ds
  double integral() const;

  StepFunction scaled(double c) const;   // c*f, c >= 0
  StepFunction dilated(double c) const;  // t -> f(t/c), c > 0

 private:
  std::vector<Step> steps_;
  std::vector<double> cum_;  // cumulative widths, cum_[i] = T_{i+1}

  void rebuild_cumulative();
  static StepFunction normalized(std::vector<Step> steps);
  // Shared-boundary constructor: keeps the given right endpoints bit-exact so
  // functions built over a common grid stay aligned.
  static StepFunction from_boundaries(const std::vector<double>& bounds,
                                      const std::vector<double>& values);

  friend StepFunction pointwise_max(const StepFunction&, const StepFunction&);
};

StepFunction pointwise_max(const StepFunction& f, const StepFunction& g);
// f(t) <= g(t) for all t > 0?
bool pointwise_leq(const StepFunction& f, const StepFunction& g);

}  // namespace kdiag
