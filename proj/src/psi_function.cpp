#include "kdiag/psi_function.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace kdiag {

double PsiPiece::eval(double t) const {
  if (kind == Kind::Linear) return a + slope * t;
  if (t <= 0.0) return 0.0;
  return coef * std::pow(t, 1.0 / p);
}

struct PsiFunction::Impl {
  enum class Form { PowerRoot, Pwl, MinId, Scaled };
  Form form;
  double p = 1.0;              // PowerRoot: t^(1/p)
  std::vector<double> ts, ys;  // Pwl breakpoints
  double c = 1.0;              // Scaled
  std::shared_ptr<const Impl> inner;
};

namespace {

using Impl = PsiFunction::Impl;
using Form = Impl::Form;
constexpr double kInf = std::numeric_limits<double>::infinity();

double eval_impl(const Impl& g, double t) {
  switch (g.form) {
    case Form::PowerRoot:
      if (t <= 0.0) return 0.0;
      return g.p == 1.0 ? t : std::pow(t, 1.0 / g.p);
    case Form::Pwl: {
      if (t <= 0.0) return 0.0;
      const auto& ts = g.ts;
      const auto& ys = g.ys;
      std::size_t n = ts.size();
      if (t >= ts.back()) {
        double s = (ys[n - 1] - ys[n - 2]) / (ts[n - 1] - ts[n - 2]);
        return ys.back() + s * (t - ts.back());
      }
      auto it = std::upper_bound(ts.begin(), ts.end(), t);
      std::size_t i = static_cast<std::size_t>(it - ts.begin()) - 1;
      double s = (ys[i + 1] - ys[i]) / (ts[i + 1] - ts[i]);
      return ys[i] + s * (t - ts[i]);
    }
    case Form::MinId:
      return std::min(eval_impl(*g.inner, t), t);
    case Form::Scaled:
      return g.c * eval_impl(*g.inner, t);
  }
  return 0.0;
}

PsiPiece piece_impl(const Impl& g, double t0, double t1) {
  double mid = std::isfinite(t1) ? 0.5 * (t0 + t1) : t0 + 1.0;
  switch (g.form) {
    case Form::PowerRoot: {
      PsiPiece out;
      if (g.p == 1.0) {
        out.kind = PsiPiece::Kind::Linear;
        out.a = 0.0;
        out.slope = 1.0;
      } else {
        out.kind = PsiPiece::Kind::Power;
        out.coef = 1.0;
        out.p = g.p;
      }
      return out;
    }
    case Form::Pwl: {
      const auto& ts = g.ts;
      const auto& ys = g.ys;
      std::size_t n = ts.size();
      std::size_t i;
      if (mid >= ts.back())
        i = n - 2;
      else
        i = static_cast<std::size_t>(
                std::upper_bound(ts.begin(), ts.end(), mid) - ts.begin()) - 1;
      PsiPiece out;
      out.kind = PsiPiece::Kind::Linear;
      out.slope = (ys[i + 1] - ys[i]) / (ts[i + 1] - ts[i]);
      out.a = ys[i] - out.slope * ts[i];
      return out;
    }
    case Form::MinId: {
      if (eval_impl(*g.inner, mid) <= mid) return piece_impl(*g.inner, t0, t1);
      PsiPiece out;
      out.kind = PsiPiece::Kind::Linear;
      out.a = 0.0;
      out.slope = 1.0;
      return out;
    }
    case Form::Scaled: {
      PsiPiece out = piece_impl(*g.inner, t0, t1);
      if (out.kind == PsiPiece::Kind::Linear) {
        out.a *= g.c;
        out.slope *= g.c;
      } else {
        out.coef *= g.c;
      }
      return out;
    }
  }
  return {};
}

void collect_knots(const Impl& g, double cap, std::vector<double>& out);

// Solutions of g(t) = t.  Since g is concave with g(0) = 0, the ratio g(t)/t
// is nonincreasing, so there is at most one genuine sign change; extra
// candidates are harmless as knots.
std::vector<double> identity_crossings(const Impl& g) {
  std::vector<double> knots;
  collect_knots(g, kInf, knots);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  std::vector<double> out;
  auto solve_piece = [&](double lo, double hi) {
    PsiPiece pc = piece_impl(g, lo, hi);
    double t = -1.0;
    if (pc.kind == PsiPiece::Kind::Linear) {
      if (pc.slope != 1.0) t = pc.a / (1.0 - pc.slope);
    } else if (pc.p > 1.0 && pc.coef > 0.0) {
      t = std::pow(pc.coef, pc.p / (pc.p - 1.0));
    }
    if (t > lo && t <= hi && t > 0.0 && std::isfinite(t)) out.push_back(t);
  };
  double prev = 0.0;
  for (double k : knots) {
    if (k > prev) solve_piece(prev, k);
    prev = k;
  }
  solve_piece(prev, kInf);
  return out;
}

void collect_knots(const Impl& g, double cap, std::vector<double>& out) {
  switch (g.form) {
    case Form::PowerRoot:
      return;
    case Form::Pwl:
      for (double t : g.ts)
        if (t > 0.0 && t < cap) out.push_back(t);
      return;
    case Form::MinId:
      collect_knots(*g.inner, cap, out);
      for (double t : identity_crossings(*g.inner))
        if (t < cap) out.push_back(t);
      return;
    case Form::Scaled:
      collect_knots(*g.inner, cap, out);
      return;
  }
}

std::optional<double> finite_limit_impl(const Impl& g) {
  switch (g.form) {
    case Form::PowerRoot:
      return std::nullopt;
    case Form::Pwl: {
      std::size_t n = g.ts.size();
      double s = (g.ys[n - 1] - g.ys[n - 2]) / (g.ts[n - 1] - g.ts[n - 2]);
      if (s == 0.0) return g.ys.back();
      return std::nullopt;
    }
    case Form::MinId:
      return finite_limit_impl(*g.inner);
    case Form::Scaled:
      if (auto l = finite_limit_impl(*g.inner)) return g.c * *l;
      return std::nullopt;
  }
  return std::nullopt;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string to_string_impl(const Impl& g) {
  switch (g.form) {
    case Form::PowerRoot: {
      double ip;
      if (std::modf(g.p, &ip) == 0.0 && g.p >= 1.0 && g.p < 1e15) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "pow(1/%.0f)", g.p);
        return buf;
      }
      return "pow(" + fmt(1.0 / g.p) + ")";
    }
    case Form::Pwl: {
      std::string s = "pwl[";
      for (std::size_t i = 0; i < g.ts.size(); ++i) {
        if (i) s += ",";
        s += "(" + fmt(g.ts[i]) + "," + fmt(g.ys[i]) + ")";
      }
      return s + "]";
    }
    case Form::MinId:
      return "min_id(" + to_string_impl(*g.inner) + ")";
    case Form::Scaled:
      return "scale(" + fmt(g.c) + "," + to_string_impl(*g.inner) + ")";
  }
  return "";
}

}  // namespace

PsiFunction PsiFunction::power_root(double p) {
  if (!(p >= 1.0) || !std::isfinite(p))
    throw ValidationError("pow: exponent 1/p needs p >= 1");
  auto impl = std::make_shared<Impl>();
  impl->form = Form::PowerRoot;
  impl->p = p;
  return PsiFunction(std::move(impl));
}

PsiFunction PsiFunction::piecewise_linear(
    std::vector<std::pair<double, double>> points) {
  if (points.size() < 2) throw ValidationError("pwl: need at least two points");
  if (points.front().first != 0.0 || points.front().second != 0.0)
    throw ValidationError("pwl: first breakpoint must be (0,0)");
  auto impl = std::make_shared<Impl>();
  impl->form = Form::Pwl;
  double prev_slope = kInf;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double t = points[i].first, y = points[i].second;
    if (!std::isfinite(t) || !std::isfinite(y) || y < 0.0)
      throw ValidationError("pwl: breakpoints must be finite with y >= 0");
    if (i > 0) {
      double dt = t - points[i - 1].first;
      double dy = y - points[i - 1].second;
      if (dt <= 0.0) throw ValidationError("pwl: t must be strictly increasing");
      if (dy < 0.0) throw ValidationError("pwl: psi must be nondecreasing");
      double slope = dy / dt;
      if (slope > prev_slope * (1.0 + 1e-12) + 1e-300)
        throw ValidationError("pwl: slopes must be nonincreasing (concavity)");
      prev_slope = slope;
    }
    impl->ts.push_back(t);
    impl->ys.push_back(y);
  }
  return PsiFunction(std::move(impl));
}

PsiFunction PsiFunction::min_with_identity(PsiFunction inner) {
  auto impl = std::make_shared<Impl>();
  impl->form = Form::MinId;
  impl->inner = inner.impl_;
  return PsiFunction(std::move(impl));
}

PsiFunction PsiFunction::scaled(double c, PsiFunction inner) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw ValidationError("scale: factor must be positive");
  auto impl = std::make_shared<Impl>();
  impl->form = Form::Scaled;
  impl->c = c;
  impl->inner = inner.impl_;
  return PsiFunction(std::move(impl));
}

double PsiFunction::operator()(double t) const { return eval_impl(*impl_, t); }

double PsiFunction::stieltjes(const StepFunction& f) const {
  const auto& bounds = f.boundaries();
  const auto& steps = f.steps();
  double acc = 0.0, prev_psi = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    double cur = eval_impl(*impl_, bounds[i]);
    acc += steps[i].value * (cur - prev_psi);
    prev_psi = cur;
  }
  return acc;
}

std::vector<double> PsiFunction::knots_below(double cap) const {
  std::vector<double> out;
  collect_knots(*impl_, cap, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

PsiPiece PsiFunction::piece_on(double t0, double t1) const {
  return piece_impl(*impl_, t0, t1);
}

std::optional<double> PsiFunction::finite_limit() const {
  return finite_limit_impl(*impl_);
}

std::string PsiFunction::to_string() const { return to_string_impl(*impl_); }

// ---------------------------------------------------------------------------
// grammar:  psi := pow(NUM | NUM/NUM) | pwl[(t,y),...] | min_id(psi)
//                | scale(NUM, psi)
// ---------------------------------------------------------------------------
namespace {

struct Parser {
  std::string_view s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  }
  bool eat(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c))
      throw ValidationError(std::string("psi grammar: expected '") + c +
                            "' in \"" + std::string(s) + "\"");
  }
  bool eat_word(std::string_view w) {
    skip_ws();
    if (s.substr(pos, w.size()) == w) {
      pos += w.size();
      return true;
    }
    return false;
  }
  double number() {
    skip_ws();
    const char* begin = s.data() + pos;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) throw ValidationError("psi grammar: expected a number");
    pos += static_cast<std::size_t>(end - begin);
    return v;
  }
  // NUM or NUM/NUM
  double rational() {
    double num = number();
    skip_ws();
    if (pos < s.size() && s[pos] == '/') {
      ++pos;
      double den = number();
      if (den == 0.0) throw ValidationError("psi grammar: division by zero");
      return num / den;
    }
    return num;
  }

  PsiFunction psi() {
    skip_ws();
    if (eat_word("pow")) {
      expect('(');
      double e = rational();
      expect(')');
      if (!(e > 0.0 && e <= 1.0))
        throw ValidationError("pow: exponent must lie in (0,1]");
      return PsiFunction::power_root(1.0 / e);
    }
    if (eat_word("pwl")) {
      expect('[');
      std::vector<std::pair<double, double>> pts;
      do {
        expect('(');
        double t = rational();
        expect(',');
        double y = rational();
        expect(')');
        pts.emplace_back(t, y);
      } while (eat(','));
      expect(']');
      return PsiFunction::piecewise_linear(std::move(pts));
    }
    if (eat_word("min_id")) {
      expect('(');
      PsiFunction inner = psi();
      expect(')');
      return PsiFunction::min_with_identity(std::move(inner));
    }
    if (eat_word("scale")) {
      expect('(');
      double c = rational();
      expect(',');
      PsiFunction inner = psi();
      expect(')');
      return PsiFunction::scaled(c, std::move(inner));
    }
    throw ValidationError("psi grammar: unknown form in \"" + std::string(s) +
                          "\"");
  }
};

}  // namespace

PsiFunction PsiFunction::parse(std::string_view text) {
  Parser p{text};
  PsiFunction out = p.psi();
  p.skip_ws();
  if (p.pos != text.size())
    throw ValidationError("psi grammar: trailing input in \"" +
                          std::string(text) + "\"");
  return out;
}

}  // namespace kdiag
