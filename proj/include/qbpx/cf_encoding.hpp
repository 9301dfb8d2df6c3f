#pragma once
// Circuit-level block encodings of the multilevel gradient frame C_F and the
// preconditioned stiffness sandwich C_F^T (D_A tensor Id) C_F. Two routes:
// a generic one assembled per level through the encoding calculus, and an
// optimized one that packs the level index into a small register and shares
// one increment across all levels.

#include "qbpx/encoding.hpp"
#include "qbpx/fem.hpp"

namespace qbpx {

// Register placement shared by the per-level encodings so the calculus can
// compose them without relabeling. Qubit 0 is the least significant bit.
struct CfLayout {
  int d = 1, L = 1;
  bool optimized = false;
  int lam = -1, lam_width = 0;  // packed level register (value ell-1)
  std::vector<int> cell;        // per-dimension cell registers, width L
  int s = -1, s_width = 0;      // gradient-direction register (d > 1)
  std::vector<int> k;           // per-dimension corner qubits
  std::vector<int> anc;         // per-dimension embedding ancillas
  int cmp = -1;                 // level comparator ancilla (optimized path)
  int qubits = 0;
};
CfLayout cf_layout(const LevelSpec& spec, bool optimized);

// Encoding of the level-ell orthonormalized gradient factor C_ell; rows are
// (cell, direction, corner), columns the interior nodes of level ell.
BlockEncoding build_U_grad(const LevelSpec& spec, int ell);

// Encoding of the isometric per-cell transfer from level ell to level L.
BlockEncoding build_U_transfer(const LevelSpec& spec, int ell);

// Encoding of the cell-wise coefficient block D_A tensor Id acting on the
// row space `pi` of a C_F encoding with layout `lay`; gamma equals the upper
// coefficient bound. Only scalar coefficients have a quantum path; matrix
// coefficients throw (the dense reference handles those).
BlockEncoding build_U_DA(const LevelSpec& spec, const Coefficient& a,
                         const Projection& pi, const CfLayout& lay);

// [2^{-ell(2-d)/2} T_ell C_ell]_ell: per-level products concatenated through
// the calculus; gamma = 2 sqrt(dL).
BlockEncoding build_U_CF(const LevelSpec& spec);

// Same matrix, hand-packed circuit: level register in superposition, one
// shared increment inside a comparator-controlled shift ladder, transfer
// steps applied at level-dependent bit positions. Requires L a power of two.
BlockEncoding build_U_CF_optimized(const LevelSpec& spec);

// U_CF^dagger U_DA U_CF; normalization 4 * beta * d * L.
BlockEncoding build_U_stiffness(const LevelSpec& spec, const Coefficient& a,
                                bool optimized);

// Generic two-qubit synthesis via two-level (Givens) reduction; used for the
// transfer-step completion. lo/hi are the less/more significant targets.
void append_two_qubit_unitary(Circuit& c, const Eigen::Matrix4cd& u, int lo, int hi,
                              const std::vector<int>& controls = {});

// |0..0> -> uniform superposition over [0, count) on the given span.
void append_uniform_prep(Circuit& c, int start, int width, uint64_t count,
                         const std::vector<int>& controls = {});

// Unitary completion of the 4x2 parent-to-children transfer isometry; the
// first two columns agree with the per-cell step of transfer_step_1d.
Eigen::Matrix4cd transfer_local_gate();

}  // namespace qbpx
