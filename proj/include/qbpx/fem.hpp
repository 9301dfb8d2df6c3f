#pragma once
// Dense reference implementation of the multilevel Q1 FEM factorization on
// the unit cube: per-cell orthonormal gradient/restriction factors, level
// transfer, multilevel preconditioner, stiffness assembly and direct solve.
// Everything here is small and dense; it serves as the ground truth for the
// quantum-circuit constructions.

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace qbpx {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct LevelSpec {
  int d = 1;  // spatial dimension, 1..3
  int L = 1;  // finest level, mesh width 2^-L

  double h(int ell) const { return std::ldexp(1.0, -ell); }
  long cells_1d(int ell) const { return 1L << ell; }
  long nodes_1d(int ell) const { return (1L << ell) - 1; }
  long dim_v(int ell) const;              // interior nodal space
  long dim_q(int ell) const;              // per-cell bilinear space, 2^{d(ell+1)}
  long dim_f() const;                     // sum of dim_v over levels 1..L
  void validate() const;                  // throws on unsupported d/L
  void check_dense_guard() const;         // throws if (2^L-1)^d > 20000
};

// Cell-wise constant coefficient, sampled at cell midpoints. Must be spd with
// eigenvalues in [alpha, beta] on [0,1]^d.
struct Coefficient {
  std::function<Mat(const Vec& x)> matrix;  // d x d
  static Coefficient identity(int d);
  static Coefficient scalar(int d, std::function<double(const Vec&)> a);
  // min/max eigenvalue over all cell midpoints at level L
  std::pair<double, double> bounds(const LevelSpec& spec) const;
};

// 1D per-cell factors on level ell, rows indexed (cell j, basis b) = 2j+b.
Mat restriction_1d(int ell);                    // R: means + slopes of hats
Mat gradient_1d(int ell);                       // C: derivatives of hats
Mat transfer_step_1d(int ell);                  // Q_ell -> Q_{ell+1}, isometry
Mat transfer_1d(int ell, int L);                // composed steps
Mat prolongation_1d(int ell);                   // nodal V_ell -> V_{ell+1}

// d-dimensional assembled factors. Row index of the vector-valued space is
// (cell j, component s, corner k) with j most significant; columns follow the
// lexicographic interior-node order.
Mat gradient_matrix(const LevelSpec& spec, int ell);     // C_ell
Mat restriction_matrix(const LevelSpec& spec, int ell);  // R_ell (scalar rows, no s)
Mat transfer_matrix(const LevelSpec& spec, int ell);     // T_ell: level ell -> L, per component
Mat prolongation_to_finest(const LevelSpec& spec, int ell);  // nodal V_ell -> V_L

// Coefficient block diagonal (D_A tensor Id_{2^d}) applied between gradient
// factors; returns the dense matrix over rows (j,s,k).
Mat coefficient_block(const LevelSpec& spec, const Coefficient& a);

// Stiffness via the factorized form C_L^T (D_A tensor Id) C_L.
Mat stiffness_matrix(const LevelSpec& spec, const Coefficient& a);

// Multilevel frame F = [2^{-ell(2-d)/2} E_ell] and preconditioner P = F F^T.
Mat frame_matrix(const LevelSpec& spec);
Mat bpx_matrix(const LevelSpec& spec);

// Scaled gradient frame C_F = [2^{-ell(2-d)/2} T_ell C_ell]_ell = C_L F.
Mat cf_matrix(const LevelSpec& spec);

// Load/moment vector b_k = integral of f * hat_k, per-cell Gauss quadrature.
Vec load_vector(const LevelSpec& spec, const std::function<double(const Vec&)>& f);

// Direct solve S c = b (dense LLT) and quantity of interest m . c.
Vec solve(const LevelSpec& spec, const Coefficient& a, const Vec& b);
double solve_qoi(const LevelSpec& spec, const Coefficient& a,
                 const std::function<double(const Vec&)>& f,
                 const std::function<double(const Vec&)>& g);

// Spectral helpers.
double spectral_norm(const Mat& m);
double condition_number_psd(const Mat& m);  // ratio of extreme nonzero eigenvalues

// CSV I/O: first non-comment line is "rows,cols", then one row per line.
void write_matrix_csv(const std::string& path, const Mat& m,
                      const std::vector<std::string>& metadata = {});
Mat read_matrix_csv(const std::string& path);

}  // namespace qbpx
