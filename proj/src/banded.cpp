#include "kdiag/banded.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

namespace kdiag {

namespace {

Eigen::Index valid_from(int k) { return k < 0 ? -k : 0; }

}  // namespace

void BandedOp::normalize() {
  double scale = 0.0;
  for (auto it = bands_.begin(); it != bands_.end();) {
    Band& band = it->second;
    // entries in the invalid region (column < 0) are meaningless
    for (Eigen::Index i = 0;
         i < valid_from(it->first) &&
         i < static_cast<Eigen::Index>(band.head.size());
         ++i)
      band.head[static_cast<size_t>(i)] = Complex(0, 0);
    while (!band.head.empty() && band.head.back() == band.tail)
      band.head.pop_back();
    bool empty = band.head.empty() && band.tail == Complex(0, 0);
    if (empty) {
      it = bands_.erase(it);
    } else {
      for (const Complex& c : band.head) scale = std::max(scale, std::abs(c));
      scale = std::max(scale, std::abs(band.tail));
      ++it;
    }
  }
  bandwidth_ = 0;
  for (const auto& [k, band] : bands_)
    bandwidth_ = std::max(bandwidth_, std::abs(k));

  // hermitian check against the adjoint, entrywise
  hermitian_ = true;
  double tol = 1e-12 * std::max(1.0, scale);
  for (const auto& [k, band] : bands_) {
    Eigen::Index len = static_cast<Eigen::Index>(band.head.size()) +
                       std::abs(k) + 1;
    for (Eigen::Index i = valid_from(k); i <= len && hermitian_; ++i)
      if (std::abs(entry(i, i + k) - std::conj(entry(i + k, i))) > tol)
        hermitian_ = false;
    if (!hermitian_) break;
  }
}

BandedOp BandedOp::from_bands(std::map<int, Band> bands) {
  BandedOp out;
  out.bands_ = std::move(bands);
  out.normalize();
  return out;
}

BandedOp BandedOp::identity() {
  return from_bands({{0, Band{{}, Complex(1, 0)}}});
}

BandedOp BandedOp::shift() {
  return from_bands({{-1, Band{{}, Complex(1, 0)}}});
}

BandedOp BandedOp::diagonal(std::vector<Complex> head, Complex tail) {
  return from_bands({{0, Band{std::move(head), tail}}});
}

BandedOp BandedOp::corner_embedding(const Eigen::MatrixXcd& m) {
  std::map<int, Band> bands;
  for (int k = -static_cast<int>(m.rows()) + 1;
       k < static_cast<int>(m.cols()); ++k) {
    Band band;
    band.head.assign(static_cast<size_t>(m.rows()), Complex(0, 0));
    for (Eigen::Index i = valid_from(k); i < m.rows(); ++i)
      if (i + k < m.cols()) band.head[static_cast<size_t>(i)] = m(i, i + k);
    bands[k] = std::move(band);
  }
  return from_bands(std::move(bands));
}

Complex BandedOp::entry(Eigen::Index i, Eigen::Index j) const {
  if (i < 0 || j < 0) return Complex(0, 0);
  long long k = j - i;
  if (std::abs(k) > bandwidth_) return Complex(0, 0);
  auto it = bands_.find(static_cast<int>(k));
  if (it == bands_.end()) return Complex(0, 0);
  const Band& band = it->second;
  return i < static_cast<Eigen::Index>(band.head.size())
             ? band.head[static_cast<size_t>(i)]
             : band.tail;
}

Eigen::MatrixXcd BandedOp::corner(Eigen::Index N) const {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(N, N);
  for (const auto& [k, band] : bands_)
    for (Eigen::Index i = valid_from(k); i < N; ++i)
      if (i + k >= 0 && i + k < N) out(i, i + k) = entry(i, i + k);
  return out;
}

BandedOp BandedOp::adjoint() const {
  std::map<int, Band> bands;
  for (const auto& [k, band] : bands_) {
    int ka = -k;
    Band out;
    Eigen::Index len =
        static_cast<Eigen::Index>(band.head.size()) + std::abs(k);
    out.head.assign(static_cast<size_t>(len), Complex(0, 0));
    for (Eigen::Index i = 0; i < len; ++i)
      out.head[static_cast<size_t>(i)] = std::conj(entry(i + ka, i));
    out.tail = std::conj(band.tail);
    bands[ka] = std::move(out);
  }
  return from_bands(std::move(bands));
}

BandedOp BandedOp::operator+(const BandedOp& o) const {
  std::map<int, Band> bands;
  std::set<int> offsets;
  for (const auto& [k, band] : bands_) offsets.insert(k);
  for (const auto& [k, band] : o.bands_) offsets.insert(k);
  for (int k : offsets) {
    auto a = bands_.find(k);
    auto b = o.bands_.find(k);
    std::size_t len = 0;
    if (a != bands_.end()) len = std::max(len, a->second.head.size());
    if (b != o.bands_.end()) len = std::max(len, b->second.head.size());
    Band out;
    out.head.resize(len);
    for (std::size_t i = 0; i < len; ++i)
      out.head[i] = entry(static_cast<Eigen::Index>(i),
                          static_cast<Eigen::Index>(i) + k) +
                    o.entry(static_cast<Eigen::Index>(i),
                            static_cast<Eigen::Index>(i) + k);
    out.tail = (a != bands_.end() ? a->second.tail : Complex(0, 0)) +
               (b != o.bands_.end() ? b->second.tail : Complex(0, 0));
    bands[k] = std::move(out);
  }
  return from_bands(std::move(bands));
}

BandedOp BandedOp::operator*(Complex c) const {
  std::map<int, Band> bands = bands_;
  for (auto& [k, band] : bands) {
    for (Complex& v : band.head) v *= c;
    band.tail *= c;
  }
  return from_bands(std::move(bands));
}

BandedOp BandedOp::operator-(const BandedOp& o) const {
  return *this + o * Complex(-1, 0);
}

BandedOp BandedOp::operator*(const BandedOp& o) const {
  // pair list in deterministic order, shared by head and tail sums so the
  // head provably stabilizes to the tail bitwise
  std::map<int, std::vector<std::pair<int, int>>> pairs;
  for (const auto& [kx, bx] : bands_)
    for (const auto& [ky, by] : o.bands_)
      pairs[kx + ky].emplace_back(kx, ky);

  std::size_t max_head = 0;
  for (const auto& [k, band] : bands_) max_head = std::max(max_head, band.head.size());
  for (const auto& [k, band] : o.bands_)
    max_head = std::max(max_head, band.head.size());
  Eigen::Index L = static_cast<Eigen::Index>(max_head) + bandwidth_ +
                   o.bandwidth_ + 2;

  std::map<int, Band> bands;
  for (const auto& [k, kxky] : pairs) {
    Band out;
    out.head.assign(static_cast<size_t>(L), Complex(0, 0));
    for (Eigen::Index i = 0; i < L; ++i) {
      Complex acc(0, 0);
      for (auto [kx, ky] : kxky)
        acc += entry(i, i + kx) * o.entry(i + kx, i + k);
      out.head[static_cast<size_t>(i)] = acc;
    }
    Complex tail(0, 0);
    for (auto [kx, ky] : kxky) {
      auto a = bands_.find(kx);
      auto b = o.bands_.find(ky);
      tail += a->second.tail * b->second.tail;
    }
    out.tail = tail;
    bands[k] = std::move(out);
  }
  return from_bands(std::move(bands));
}

BandedOp BandedOp::real_part(const BandedOp& x) {
  return (x + x.adjoint()) * Complex(0.5, 0);
}

BandedOp BandedOp::imag_part(const BandedOp& x) {
  return (x - x.adjoint()) * (Complex(1, 0) / Complex(0, 2));
}

double BandedOp::band_sum_bound() const {
  std::size_t max_head = 0;
  for (const auto& [k, band] : bands_)
    max_head = std::max(max_head, band.head.size());
  Eigen::Index R = static_cast<Eigen::Index>(max_head) + bandwidth_ + 1;
  double best = 0.0;
  for (Eigen::Index i = 0; i <= R; ++i) {
    double row = 0.0;
    for (const auto& [k, band] : bands_) row += std::abs(entry(i, i + k));
    best = std::max(best, row);
  }
  return best;
}

BandedOp banded_commutator(const BandedOp& x, const BandedOp& y) {
  return x * y - y * x;
}

TraceResult banded_trace(const BandedOp& x,
                         const std::optional<DecayCertificate>& certificate) {
  if (!certificate)
    throw CertificateError(
        "banded_trace: refusing without a decay certificate; the trace is "
        "undefined in this calculus");
  BandedOp::Band diag;
  auto it = x.bands().find(0);
  if (it != x.bands().end()) diag = it->second;

  if (certificate->kind == DecayCertificate::Kind::EventuallyZero) {
    if (diag.tail != Complex(0, 0))
      throw CertificateError(
          "banded_trace: eventually-zero certificate contradicts a nonzero "
          "diagonal tail");
    Eigen::Index from = certificate->from;
    for (Eigen::Index i = from;
         i < static_cast<Eigen::Index>(diag.head.size()); ++i)
      if (diag.head[static_cast<size_t>(i)] != Complex(0, 0))
        throw CertificateError(
            "banded_trace: stored diagonal is nonzero past the certified "
            "index");
    Complex acc(0, 0);
    for (Eigen::Index i = 0;
         i < std::min(from, static_cast<Eigen::Index>(diag.head.size())); ++i)
      acc += diag.head[static_cast<size_t>(i)];
    return {acc.real(), 0.0};
  }

  // geometric continuation past the stored head
  double rho = certificate->ratio;
  if (!(std::abs(rho) < 1.0))
    throw CertificateError("banded_trace: geometric ratio must satisfy |r|<1");
  if (diag.tail != Complex(0, 0))
    throw CertificateError(
        "banded_trace: geometric certificate needs a truncated (zero-tail) "
        "representation");
  Complex acc(0, 0);
  for (const Complex& v : diag.head) acc += v;
  if (diag.head.empty()) return {0.0, 0.0};
  Complex last = diag.head.back();
  Complex cont = last * rho / (1.0 - rho);
  return {(acc + cont).real(), std::abs(last * rho) / (1.0 - std::abs(rho))};
}

DualCertificate dual_certificate(const std::vector<BandedOp>& alpha,
                                 const std::vector<BandedOp>& gamma,
                                 const PsiFunction& psi,
                                 const std::vector<double>& gamma_m_bounds) {
  if (alpha.empty() || alpha.size() != gamma.size() ||
      gamma.size() != gamma_m_bounds.size())
    throw ValidationError("dual_certificate: size mismatch");
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    if (!alpha[j].is_hermitian() || !gamma[j].is_hermitian())
      throw ValidationError("dual_certificate: hermitian tuples required");
    if (!(gamma_m_bounds[j] > 0.0))
      throw ValidationError("dual_certificate: bounds must be positive");
  }

  BandedOp y;
  for (std::size_t j = 0; j < alpha.size(); ++j)
    y = y + banded_commutator(alpha[j], gamma[j]) * Complex(0, 1);

  // computable stand-in for "(y)_- is trace class": off-diagonal bands live
  // in the leading corner, the diagonal is nonnegative beyond it
  const Eigen::Index N = 4 * std::max(1, y.bandwidth());
  for (const auto& [k, band] : y.bands()) {
    if (k == 0) {
      for (Eigen::Index i = N;
           i < static_cast<Eigen::Index>(band.head.size()); ++i) {
        const Complex& v = band.head[static_cast<size_t>(i)];
        if (v.real() < -1e-15 || std::abs(v.imag()) > 1e-15)
          throw CertificateError(
              "dual_certificate: diagonal not certified nonnegative beyond "
              "the corner");
      }
      if (band.tail.real() < -1e-15 || std::abs(band.tail.imag()) > 1e-15)
        throw CertificateError(
            "dual_certificate: diagonal tail not certified nonnegative");
    } else {
      if (band.tail != Complex(0, 0))
        throw CertificateError(
            "dual_certificate: off-diagonal band extends beyond the corner");
      for (Eigen::Index i = 0;
           i < static_cast<Eigen::Index>(band.head.size()); ++i)
        if ((i >= N || i + k >= N) &&
            band.head[static_cast<size_t>(i)] != Complex(0, 0))
          throw CertificateError(
              "dual_certificate: off-diagonal band extends beyond the corner");
    }
  }

  // derive the trace certificate from the representation
  std::optional<DecayCertificate> cert;
  auto diag = y.bands().find(0);
  if (diag == y.bands().end()) {
    cert = DecayCertificate::eventually_zero(0);
  } else if (diag->second.tail == Complex(0, 0)) {
    cert = DecayCertificate::eventually_zero(
        static_cast<Eigen::Index>(diag->second.head.size()));
  } else {
    throw CertificateError(
        "dual_certificate: no decay certificate derivable for the trace");
  }
  TraceResult tr = banded_trace(y, cert);

  DualCertificate out;
  out.trace_value = tr.value;
  out.tail_bound = tr.tail_bound;
  for (double b : gamma_m_bounds) out.denominator += b;
  out.lower_bound = std::abs(tr.value) / out.denominator;
  out.psi = psi.to_string();
  return out;
}

// ---------------------------------------------------------------------------
// text format
// ---------------------------------------------------------------------------

namespace {

std::string fmt_complex(const Complex& c) {
  char buf[96];
  if (c.imag() == 0.0) {
    std::snprintf(buf, sizeof(buf), "%.17g", c.real());
  } else {
    std::snprintf(buf, sizeof(buf), "(%.17g,%.17g)", c.real(), c.imag());
  }
  return buf;
}

struct TextParser {
  std::string_view s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() &&
           std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '\n')
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
      throw ValidationError(std::string("banded text: expected '") + c + "'");
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
    if (end == begin) throw ValidationError("banded text: expected a number");
    pos += static_cast<std::size_t>(end - begin);
    return v;
  }
  Complex complex_value() {
    skip_ws();
    if (pos < s.size() && s[pos] == '(') {
      ++pos;
      double re = number();
      expect(',');
      double im = number();
      expect(')');
      return {re, im};
    }
    return {number(), 0.0};
  }
};

}  // namespace

std::string BandedOp::to_text() const {
  std::string out;
  for (const auto& [k, band] : bands_) {
    out += "band(" + std::to_string(k) + "): ";
    if (band.head.empty()) {
      out += "const " + fmt_complex(band.tail);
    } else {
      out += "seq [";
      for (std::size_t i = 0; i < band.head.size(); ++i) {
        if (i) out += ", ";
        out += fmt_complex(band.head[i]);
      }
      out += "] then const " + fmt_complex(band.tail);
    }
    out += "\n";
  }
  return out;
}

BandedOp BandedOp::parse(std::string_view text) {
  std::map<int, Band> bands;
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    std::size_t nl = text.find('\n', line_start);
    std::string_view line = text.substr(
        line_start, nl == std::string_view::npos ? std::string_view::npos
                                                 : nl - line_start);
    line_start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;

    TextParser p{line};
    if (!p.eat_word("band"))
      throw ValidationError("banded text: lines must start with band(k):");
    p.expect('(');
    double kd = p.number();
    p.expect(')');
    p.expect(':');
    Band band;
    if (p.eat_word("const")) {
      band.tail = p.complex_value();
    } else if (p.eat_word("seq")) {
      p.expect('[');
      if (!p.eat(']')) {
        do {
          band.head.push_back(p.complex_value());
        } while (p.eat(','));
        p.expect(']');
      }
      if (!p.eat_word("then"))
        throw ValidationError("banded text: expected 'then const ...'");
      if (!p.eat_word("const"))
        throw ValidationError("banded text: expected 'then const ...'");
      band.tail = p.complex_value();
    } else {
      throw ValidationError("banded text: expected 'const' or 'seq'");
    }
    bands[static_cast<int>(kd)] = std::move(band);
  }
  return from_bands(std::move(bands));
}

}  // namespace kdiag
