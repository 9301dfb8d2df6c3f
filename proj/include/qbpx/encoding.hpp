#pragma once
// Block encodings: a matrix represented as gamma * Pi2 U Pi1^dagger for a
// unitary circuit U and basis-subset projections Pi1 (columns) / Pi2 (rows),
// plus the composition calculus (tensor, adjoint, block diagonal, product,
// horizontal concatenation, linear combination, controlled block diagonal).

#include <functional>
#include <optional>

#include "qbpx/circuit.hpp"
#include "qbpx/projection.hpp"

namespace qbpx {

struct BlockEncoding {
  double gamma = 1.0;
  Circuit circuit;
  Projection pi1, pi2;
  std::optional<double> subnorm_bound;  // tracked upper bound on gamma/|M|
  std::optional<double> norm_hint;      // known |M| if available
  // extraction^dagger * extraction = gamma^2 * Id (columns orthogonal, equal
  // norm gamma); lets multiply keep the right factor's subnormalization
  bool isometry = false;

  int qubits() const { return circuit.n; }
};

BlockEncoding encode_unitary(const Circuit& c);
// positive rescaling: same circuit, gamma *= factor, encodes factor * M
BlockEncoding scale(BlockEncoding a, double factor);

BlockEncoding tensor(const BlockEncoding& a, const BlockEncoding& b);       // A (x) B
BlockEncoding adjoint(const BlockEncoding& a);                              // A^dagger
BlockEncoding block_diag(const BlockEncoding& a, const BlockEncoding& b);   // diag(A,B)
BlockEncoding multiply(const BlockEncoding& a, const BlockEncoding& b);     // A B
BlockEncoding hconcat(const BlockEncoding& a, const BlockEncoding& b);      // [A B]
BlockEncoding add(double mu_a, const BlockEncoding& a,
                  double mu_b, const BlockEncoding& b);                     // muA*A + muB*B

// N x N blocks sharing projections and normalization; oracle(j) returns the
// block circuit on pi1.qubits() qubits (ancillas above that are remapped past
// the selector). Result projection is Id_N tensor Pi.
BlockEncoding controlled_block_diag(int selector_width, double gamma,
                                    const Projection& pi1, const Projection& pi2,
                                    const std::function<Circuit(uint64_t)>& block_oracle);

// flag gate marking the admissible subspace (Projection::flag_circuit alias)
Circuit cnot_pi(const Projection& p);

// gamma * Pi2 U Pi1^dagger via one simulation per admissible column
Eigen::MatrixXcd extract_matrix(const BlockEncoding& e);

// appends a circuit acting as the 2x2 matrix m (norm <= 1) on `target`,
// postselected on `ancilla` = |0>; cosine-sine completion via SVD
void append_embedded_2x2(Circuit& c, const Eigen::Matrix2cd& m, int target, int ancilla,
                         const std::vector<int>& controls = {});

}  // namespace qbpx
