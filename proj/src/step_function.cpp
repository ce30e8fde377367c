#include "kdiag/step_function.hpp"

#include <algorithm>
#include <cmath>

namespace kdiag {

void StepFunction::rebuild_cumulative() {
  cum_.resize(steps_.size());
  double t = 0;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    t += steps_[i].width;
    cum_[i] = t;
  }
}

StepFunction StepFunction::normalized(std::vector<Step> steps) {
  StepFunction f;
  for (const Step& s : steps) {
    if (s.width <= 0.0 || !std::isfinite(s.width))
      throw ValidationError("step widths must be positive and finite");
    if (s.value < 0.0 || !std::isfinite(s.value))
      throw ValidationError("step values must be nonnegative and finite");
    if (s.value == 0.0) continue;  // zero tail is implicit
    if (!f.steps_.empty() && f.steps_.back().value == s.value)
      f.steps_.back().width += s.width;  // merge equal-value neighbours
    else
      f.steps_.push_back(s);
  }
  f.rebuild_cumulative();
  return f;
}

StepFunction StepFunction::from_steps(std::vector<Step> steps) {
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (steps[i].value > steps[i - 1].value)
      throw ValidationError("step values must be nonincreasing");
  return normalized(std::move(steps));
}

StepFunction StepFunction::from_weighted_values(std::vector<Step> pairs) {
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Step& a, const Step& b) { return a.value > b.value; });
  return normalized(std::move(pairs));
}

StepFunction StepFunction::from_values(const std::vector<double>& values,
                                       double width) {
  std::vector<Step> pairs;
  pairs.reserve(values.size());
  for (double v : values) pairs.push_back({width, v});
  return from_weighted_values(std::move(pairs));
}

StepFunction StepFunction::indicator(double t) {
  if (t < 0.0 || !std::isfinite(t)) throw ValidationError("indicator needs t >= 0");
  if (t == 0.0) return StepFunction();
  return normalized({{t, 1.0}});
}

double StepFunction::total_width() const { return cum_.empty() ? 0.0 : cum_.back(); }

double StepFunction::value_at(double t) const {
  if (t < 0.0) return 0.0;
  // right-continuous: value on [T_{i-1}, T_i) is steps_[i].value
  auto it = std::upper_bound(cum_.begin(), cum_.end(), t);
  if (it == cum_.end()) return 0.0;
  return steps_[static_cast<std::size_t>(it - cum_.begin())].value;
}

double StepFunction::integral_to(double t) const {
  if (t <= 0.0) return 0.0;
  double acc = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (t <= cum_[i]) return acc + steps_[i].value * (t - prev);
    acc += steps_[i].value * steps_[i].width;
    prev = cum_[i];
  }
  return acc;
}

double StepFunction::integral() const {
  double acc = 0.0;
  for (const Step& s : steps_) acc += s.value * s.width;
  return acc;
}

StepFunction StepFunction::scaled(double c) const {
  if (c < 0.0) throw ValidationError("scaled() needs c >= 0");
  if (c == 0.0) return StepFunction();
  std::vector<Step> out = steps_;
  for (Step& s : out) s.value *= c;
  return normalized(std::move(out));
}

StepFunction StepFunction::dilated(double c) const {
  if (c <= 0.0) throw ValidationError("dilated() needs c > 0");
  std::vector<Step> out = steps_;
  for (Step& s : out) s.width *= c;
  return normalized(std::move(out));
}

StepFunction StepFunction::from_boundaries(const std::vector<double>& bounds,
                                           const std::vector<double>& values) {
  StepFunction f;
  double prev = 0.0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    double v = values[i];
    if (v == 0.0) {
      prev = bounds[i];
      continue;
    }
    if (!f.steps_.empty() && f.steps_.back().value == v) {
      f.steps_.back().width += bounds[i] - prev;
      f.cum_.back() = bounds[i];  // keep the exact shared boundary
    } else {
      f.steps_.push_back({bounds[i] - prev, v});
      f.cum_.push_back(bounds[i]);
    }
    prev = bounds[i];
  }
  return f;
}

namespace {
// Merged boundary walk over two step functions using the exact stored
// boundary values; calls fn(boundary, fv, gv) per merged segment.
template <class Fn>
void walk_pair(const StepFunction& f, const StepFunction& g, Fn&& fn) {
  const auto& bf = f.boundaries();
  const auto& bg = g.boundaries();
  std::size_t i = 0, j = 0;
  double prev = 0.0;
  while (i < bf.size() || j < bg.size()) {
    double next;
    if (i < bf.size() && j < bg.size())
      next = std::min(bf[i], bg[j]);
    else if (i < bf.size())
      next = bf[i];
    else
      next = bg[j];
    if (next > prev) {
      double mid = prev + 0.5 * (next - prev);
      fn(next, f.value_at(mid), g.value_at(mid));
    }
    if (i < bf.size() && bf[i] == next) ++i;
    if (j < bg.size() && bg[j] == next) ++j;
    prev = next;
  }
}
}  // namespace

StepFunction pointwise_max(const StepFunction& f, const StepFunction& g) {
  std::vector<double> bounds, values;
  walk_pair(f, g, [&](double b, double fv, double gv) {
    bounds.push_back(b);
    values.push_back(std::max(fv, gv));
  });
  return StepFunction::from_boundaries(bounds, values);
}

bool pointwise_leq(const StepFunction& f, const StepFunction& g) {
  bool ok = true;
  walk_pair(f, g, [&](double, double fv, double gv) {
    if (fv > gv) ok = false;
  });
  return ok;
}

}  // namespace kdiag
