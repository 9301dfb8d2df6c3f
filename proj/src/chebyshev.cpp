#include "qbpx/chebyshev.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <stdexcept>

namespace qbpx {

namespace {

using boost::multiprecision::cpp_int;
using big_float = boost::multiprecision::cpp_bin_float_50;

// Central binomial tail sum_{k=j+1}^K binom(2K, K+k) / 2^{2K}, i.e. the
// survival function of Binomial(2K, 1/2) past K+j. Exact integers for
// moderate K, regularized incomplete beta beyond that.
double binomial_tail(int K, int j) {
  if (j >= K) return 0.0;
  if (K <= 200) {
    cpp_int term = 1;  // binom(2K, K+j+1) built multiplicatively
    for (int i = 0; i < K - j - 1; ++i) term = term * (2 * K - i) / (i + 1);
    // term now holds binom(2K, K-j-1) = binom(2K, K+j+1)
    cpp_int sum = 0;
    cpp_int binv = term;
    for (int k = j + 1; k <= K; ++k) {
      sum += binv;
      // binom(2K, K+k+1) = binom(2K, K+k) * (K-k) / (K+k+1)
      binv = binv * (K - k) / (K + k + 1);
    }
    big_float ratio = big_float(sum) / pow(big_float(2), 2 * K);
    return static_cast<double>(ratio);
  }
  // P(X >= m) for X ~ Binomial(n, 1/2) equals I_{1/2}(m, n - m + 1).
  return boost::math::ibeta(static_cast<double>(K + j + 1),
                            static_cast<double>(K - j), 0.5);
}

double max_abs_on_unit(const ChebyshevPoly& p, int samples = 10000) {
  double best = 0.0;
  for (int i = 0; i <= samples; ++i) {
    double z = -1.0 + 2.0 * i / samples;
    best = std::max(best, std::abs(poly_eval_raw(p, z)));
  }
  return best;
}

ChebyshevPoly build(double kappa_eff, double tol, int K, int J) {
  if (kappa_eff < 1.0) throw std::invalid_argument("kappa_eff must be >= 1");
  if (tol <= 0.0 || tol >= 1.0) throw std::invalid_argument("tol must be in (0,1)");
  ChebyshevPoly p;
  p.K = K;
  p.J = J;
  p.kappa_eff = kappa_eff;
  p.tol = tol;
  p.coeff.resize(J + 1);
  double sign = 4.0;
  for (int j = 0; j <= J; ++j, sign = -sign)
    p.coeff[j] = sign * binomial_tail(K, j);
  p.scale = max_abs_on_unit(p);
  return p;
}

}  // namespace

int inverse_poly_K(double kappa_eff, double tol) {
  double k = std::ceil(kappa_eff * kappa_eff * std::log(kappa_eff / tol));
  if (!(k < 2e9)) throw std::invalid_argument("inverse polynomial: K out of range");
  return static_cast<int>(k);
}

int inverse_poly_J(int K, double tol) {
  return static_cast<int>(std::ceil(std::sqrt(double(K) * std::log(4.0 * double(K) / tol))));
}

ChebyshevPoly inverse_poly(double kappa_eff, double tol) {
  int K = inverse_poly_K(kappa_eff, tol);
  return build(kappa_eff, tol, K, inverse_poly_J(K, tol));
}

ChebyshevPoly inverse_poly_truncated(double kappa_eff, double tol, int J) {
  if (J < 0) throw std::invalid_argument("J must be >= 0");
  return build(kappa_eff, tol, inverse_poly_K(kappa_eff, tol), J);
}

double poly_eval_raw(const ChebyshevPoly& p, double z) {
  if (std::abs(z) > 1.0 + 1e-12) throw std::invalid_argument("z outside [-1,1]");
  double x = std::acos(std::clamp(z, -1.0, 1.0));
  double out = 0.0;
  for (int j = 0; j <= p.J; ++j) out += p.coeff[j] * std::cos((2 * j + 1) * x);
  return out;
}

double poly_error_profile(const ChebyshevPoly& p, int samples) {
  double lo = 1.0 / p.kappa_eff;
  double worst = 0.0;
  for (int i = 0; i <= samples; ++i) {
    double z = lo + (1.0 - lo) * i / samples;
    worst = std::max(worst, std::abs(poly_eval_raw(p, z) - 1.0 / z));
  }
  return worst;
}

Vec apply_poly_matrix(const ChebyshevPoly& p,
                      const std::function<Vec(const Vec&)>& apply,
                      const std::function<Vec(const Vec&)>& applyT,
                      const Vec& v) {
  // Chebyshev recurrence for Z = [[0, M], [M^T, 0]] acting on [a; b]:
  // Z [a; b] = [M b; M^T a]. Starting from [0; v], the odd iterates live in
  // the top block and equal U t_{2j+1}(Sigma) V^T v.
  Vec a1 = apply(v);            // t_1 = Z t_0 = [M v; 0]
  Vec b1 = Vec::Zero(v.size());
  Vec a0 = Vec::Zero(a1.size());  // top of t_0 = [0; v]
  Vec b0 = v;
  Vec out = Vec::Zero(a1.size());
  if (!p.coeff.empty()) out = p.coeff[0] * a1;
  for (int k = 2; k <= 2 * p.J + 1; ++k) {
    Vec a2 = 2.0 * apply(b1) - a0;
    Vec b2 = 2.0 * applyT(a1) - b0;
    a0 = a1; b0 = b1; a1 = a2; b1 = b2;
    if (k % 2 == 1) out += p.coeff[k / 2] * a1;
  }
  return out;
}

Vec apply_poly_matrix(const ChebyshevPoly& p, const Mat& m, const Vec& v) {
  if (v.size() != m.cols()) throw std::invalid_argument("vector/matrix size mismatch");
  return apply_poly_matrix(
      p, [&](const Vec& x) { return Vec(m * x); },
      [&](const Vec& x) { return Vec(m.transpose() * x); }, v);
}

}  // namespace qbpx
