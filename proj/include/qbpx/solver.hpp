#pragma once
// Quantity-of-interest pipeline: m^T S^-1 r through the pseudoinverse
// polynomial of (D_A^{1/2} (x) Id) C_F. Emulation mode runs the Chebyshev
// recurrence on sparse/dense matrices; the circuit modes assemble the
// linear-combination-of-Chebyshev encoding from qubitization iterates and
// read the answer off amplitudes, samples, or noisy trajectories. A scale
// ledger tracks every normalization between the raw amplitude and the
// physical value.

#include <Eigen/Sparse>
#include <optional>

#include "qbpx/cf_encoding.hpp"
#include "qbpx/chebyshev.hpp"
#include "qbpx/state_prep.hpp"

namespace qbpx {

using SpMat = Eigen::SparseMatrix<double>;

struct ScaleLedger {
  std::vector<std::pair<std::string, double>> factors;

  void push(const std::string& label, double factor);  // finite and > 0
  double product() const;
};

// F^T applied to the load vector of f: per-level scaled inner products,
// matrix-free in any dimension.
Vec ftr_vector(const LevelSpec& spec, const std::function<double(const Vec&)>& f);

// Sparse (D_A^{1/2} (x) Id) C_F over fine-cell rows (2j+k), d=1 only; each
// frame column is the piecewise-constant gradient of a coarse hat expressed
// in the fine per-cell basis.
SpMat cf_sparse(const LevelSpec& spec, const Coefficient& a);
// Unpreconditioned counterpart D_A^{1/2} C_L, d=1 only.
SpMat cl_sparse(const LevelSpec& spec, const Coefficient& a);

// Direct m^T S^-1 r: Thomas solve on the tridiagonal stiffness for d=1,
// dense factorization otherwise.
double reference_qoi(const LevelSpec& spec, const Coefficient& a,
                     const std::function<double(const Vec&)>& f,
                     const std::function<double(const Vec&)>& g);

// Qubitization iterate: circuit for U (R1 U^dag R2 U)^j whose extraction is
// t_{2j+1} of the encoded matrix's singular values (reflections R about the
// column/row projections). Requires gamma-normalized input, i.e. the encoded
// corner itself; the result keeps b's projections.
BlockEncoding chebyshev_iterate(const BlockEncoding& b, int j);

// Linear combination of the odd iterates with the polynomial's raw
// coefficients: encodes p_raw(corner of b) with gamma = sum |coeff|.
BlockEncoding chebyshev_lcu(const BlockEncoding& b, const ChebyshevPoly& p);

// Alternating phased-reflection sequence for caller-supplied angles (one per
// line in a phase file); realizes the QSVT polynomial of those angles.
BlockEncoding qsvt_sequence(const BlockEncoding& b, const std::vector<double>& phases);

struct QoiMode {
  enum Kind { emulation, exact_amplitude, sampled, noisy } kind = emulation;
  long shots = 10000;
  uint64_t seed = 1;
  double eps2 = 0;          // two-qubit depolarizing rate (noisy)
  int runs = 1;             // independent estimates (noisy)
  int traj_per_run = 5;     // trajectories pooled inside one run (noisy)
  int J = -1;               // override polynomial degree parameter
  double kappa_eff = 0;     // 0: estimate from the dense spectrum
  std::vector<double> phases;  // optional phased-sequence angles
};

struct QoiResult {
  double estimate = 0;
  double reference = 0;
  double rel_error = 0;
  double stderr_est = 0;    // sampled / noisy modes
  long steps = 0;           // Chebyshev recurrence applications, 2J+1
  ChebyshevPoly poly;
  ScaleLedger ledger;
};

// m^T S^-1 r for load functionals f (right-hand side) and g (moment).
QoiResult qoi_pipeline(const LevelSpec& spec, const Coefficient& a,
                       const std::function<double(const Vec&)>& f,
                       const std::function<double(const Vec&)>& g, double tol,
                       const QoiMode& mode);

// |(C_F^T)^+ F^T r|: solution-state norm. Emulation uses the recurrence;
// exact-amplitude re-applies the frame encoding to the projected solution
// state; sampled estimates the solve success probability.
struct NormEstimate {
  double value = 0;
  double stderr_est = 0;
};
NormEstimate norm_estimate(const LevelSpec& spec, const Coefficient& a,
                           const std::function<double(const Vec&)>& f, double tol,
                           const QoiMode& mode);

// Per-run noisy estimates of the QoI (pooled-trajectory sampling); the mean
// and spread of the returned values give the confidence interval.
std::vector<double> noisy_qoi_runs(const LevelSpec& spec, const Coefficient& a,
                                   const std::function<double(const Vec&)>& f,
                                   const std::function<double(const Vec&)>& g,
                                   double tol, const QoiMode& mode);

// True when the noisy estimator takes the post-selected two-stage form (f and
// g prepare the same state). Such per-run values are reciprocals of a success
// probability and should aggregate harmonically; selector-difference runs
// aggregate arithmetically.
bool noisy_two_stage(const LevelSpec& spec, const std::function<double(const Vec&)>& f,
                     const std::function<double(const Vec&)>& g);

// Smallest (J, kappa_eff) reaching relative emulation error <= tol for A==1,
// f=g=1; preconditioned applies the polynomial to C_F, otherwise to C_L.
struct SearchResult {
  int J = 0;
  double kappa_eff = 0;
  long steps = 0;       // 2J+1
  double rel_error = 0;
};
SearchResult kappa_eff_search(const LevelSpec& spec, double tol, bool preconditioned);

}  // namespace qbpx
