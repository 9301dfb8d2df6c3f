#pragma once
// Odd Chebyshev approximation of 1/z on [1/kappa, 1] and its application to
// (rectangular) matrices through the symmetrized three-term recurrence.
// The coefficients come from the truncated Chebyshev expansion of the sign
// function; the polynomial is reported both raw (approximates 1/z) and
// normalized by its sup over [-1,1] so it can be block-encoded.

#include "fem.hpp"

#include <functional>

namespace qbpx {

struct ChebyshevPoly {
  int K = 0;                   // truncation order of the underlying expansion
  int J = 0;                   // kept odd terms t_1, t_3, ..., t_{2J+1}
  std::vector<double> coeff;   // coeff[j] multiplies t_{2j+1}, raw scale
  double scale = 1.0;          // max |p_raw| on [-1,1]; p_raw/scale is bounded by 1
  double kappa_eff = 1.0;      // domain is [1/kappa_eff, 1]
  double tol = 0.1;            // target sup error of p_raw against 1/z
};

int inverse_poly_K(double kappa_eff, double tol);
int inverse_poly_J(int K, double tol);

// Full construction: K and J from the formulas above, coefficients
// 4 (-1)^j sum_{k=j+1}^K binom(2K, K+k) / 2^{2K}.
ChebyshevPoly inverse_poly(double kappa_eff, double tol);

// Same K/coefficients but the series cut at a caller-chosen J (scale is
// recomputed). Used for accuracy-vs-depth sweeps.
ChebyshevPoly inverse_poly_truncated(double kappa_eff, double tol, int J);

// Raw polynomial value sum_j coeff[j] t_{2j+1}(z); requires |z| <= 1.
double poly_eval_raw(const ChebyshevPoly& p, double z);

// sup_{z in [1/kappa_eff, 1]} |p_raw(z) - 1/z| on a dense grid.
double poly_error_profile(const ChebyshevPoly& p, int samples = 10000);

// p_raw applied to v through M's singular values: U p(Sigma) V^T v for
// M = U Sigma V^T, computed without an SVD by the Chebyshev recurrence on
// [[0, M], [M^T, 0]]. Requires ||M|| <= 1. v has M.cols() entries, the
// result M.rows().
Vec apply_poly_matrix(const ChebyshevPoly& p, const Mat& m, const Vec& v);

// Matrix-free variant: apply/applyT realize M and M^T.
Vec apply_poly_matrix(const ChebyshevPoly& p,
                      const std::function<Vec(const Vec&)>& apply,
                      const std::function<Vec(const Vec&)>& applyT,
                      const Vec& v);

}  // namespace qbpx
