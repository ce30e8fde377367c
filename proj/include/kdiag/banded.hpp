#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kdiag/common.hpp"
#include "kdiag/psi_function.hpp"

namespace kdiag {

// Banded operator on the one-sided sequence space (indices >= 0): finitely
// many bands, band k holding the entries (i, i+k) as an explicit head array
// over the row index plus an eventually-constant tail.  Arithmetic is exact
// band arithmetic with the index-0 truncation of the one-sided space, which
// is what lets commutators pick up nonzero trace.
class BandedOp {
 public:
  struct Band {
    std::vector<Complex> head;  // value at row i for i < head.size()
    Complex tail{0.0, 0.0};     // value at every row >= head.size()
  };

  BandedOp() = default;  // the zero operator
  static BandedOp from_bands(std::map<int, Band> bands);
  static BandedOp zero() { return BandedOp(); }
  static BandedOp identity();
  static BandedOp shift();  // S: e_i -> e_{i+1}
  static BandedOp diagonal(std::vector<Complex> head, Complex tail = {});
  // Finite matrix in the leading corner, zero elsewhere.
  static BandedOp corner_embedding(const Eigen::MatrixXcd& m);

  const std::map<int, Band>& bands() const { return bands_; }
  int bandwidth() const { return bandwidth_; }
  bool is_hermitian() const { return hermitian_; }
  Complex entry(Eigen::Index i, Eigen::Index j) const;
  Eigen::MatrixXcd corner(Eigen::Index N) const;

  BandedOp adjoint() const;
  BandedOp operator+(const BandedOp& o) const;
  BandedOp operator-(const BandedOp& o) const;
  BandedOp operator*(const BandedOp& o) const;  // exact, with truncation
  BandedOp operator*(Complex c) const;
  BandedOp operator*(double c) const { return (*this) * Complex(c, 0.0); }

  static BandedOp real_part(const BandedOp& x);  // (x + x*)/2
  static BandedOp imag_part(const BandedOp& x);  // (x - x*)/(2i)

  // Schur bound: max over rows of the absolute row sum; dominates the
  // operator norm.
  double band_sum_bound() const;

  // text format, one band per line:
  //   band(-1): const 1
  //   band(0): seq [0.5, (0,-0.25)] then const 0
  std::string to_text() const;
  static BandedOp parse(std::string_view text);

 private:
  std::map<int, Band> bands_;
  int bandwidth_ = 0;
  bool hermitian_ = true;  // the zero operator is hermitian

  void normalize();
};

// Certificate that makes the trace of a banded operator well defined:
// either the diagonal vanishes from some index on, or it continues past the
// stored head as an exact geometric sequence d(i+1) = ratio * d(i).
struct DecayCertificate {
  enum class Kind { EventuallyZero, GeometricTail };
  Kind kind = Kind::EventuallyZero;
  Eigen::Index from = 0;  // EventuallyZero
  double ratio = 0.0;     // GeometricTail, |ratio| < 1

  static DecayCertificate eventually_zero(Eigen::Index from) {
    return {Kind::EventuallyZero, from, 0.0};
  }
  static DecayCertificate geometric(double ratio) {
    return {Kind::GeometricTail, 0, ratio};
  }
};

struct TraceResult {
  double value = 0.0;
  double tail_bound = 0.0;  // magnitude of the certified continuation
};

BandedOp banded_commutator(const BandedOp& x, const BandedOp& y);

// Refuses (CertificateError) without a certificate: the trace is undefined
// in this calculus otherwise.
TraceResult banded_trace(const BandedOp& x,
                         const std::optional<DecayCertificate>& certificate);

// Lower bound on the quasicentral modulus k_{Lambda_psi}(alpha) from the
// pairing |tau(y)| <= k * sum_j ||gamma_j||_{M_psi} with
// y = i sum_j [alpha_j, gamma_j].  Requires the computable hypothesis stand-
// ins: off-diagonal bands confined to the leading corner of size
// 4 x bandwidth with the remaining diagonal certified nonnegative (so the
// negative part of y is finitely supported), and a derivable trace
// certificate.  gamma_m_bounds are caller-certified upper bounds on the
// M_psi norms of the gamma_j (for psi(t) = t, band_sum_bound works).
struct DualCertificate {
  double lower_bound = 0.0;
  double trace_value = 0.0;
  double tail_bound = 0.0;
  double denominator = 0.0;
  std::string psi;
};

DualCertificate dual_certificate(const std::vector<BandedOp>& alpha,
                                 const std::vector<BandedOp>& gamma,
                                 const PsiFunction& psi,
                                 const std::vector<double>& gamma_m_bounds);

}  // namespace kdiag
