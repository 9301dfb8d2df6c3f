#pragma once
// State preparation from hierarchical inner-product tables: amplitude tables
// over bit-string prefixes, rotation-tree circuits with a sign oracle, and
// the preconditioned right-hand side |F^T r> on the packed frame layout.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qbpx/circuit.hpp"
#include "qbpx/fem.hpp"

namespace qbpx {

// Squared-mass table over index prefixes, most significant bit first:
// g[k][x] is the total squared amplitude of indices starting with the k-bit
// prefix x, so g[k-1][x] = g[k][2x] + g[k][2x+1].
struct AmplitudeTable {
  int bits = 0;
  std::vector<std::vector<double>> g;
  std::vector<bool> negative;  // sign of each full index
  double omega = 0;            // total squared mass, g[0][0]

  void validate() const;  // parent-child consistency to 1e-12
};

// entries: (index, amplitude) pairs; missing indices are zero
AmplitudeTable make_table(int bits, const std::vector<std::pair<uint64_t, double>>& entries);

// Rotation tree preparing the normalized table state from |0...0>.
// order[i] is the circuit qubit holding table bit i (bit 0 most significant);
// nq is the circuit width. Angles theta = 2 arccos(sqrt(g(x0)/g(x))), zero
// where the parent mass vanishes; a trailing phase oracle flips the negative
// indices. Levels whose nonzero angles all agree collapse to one rotation.
Circuit build_prep_circuit(const AmplitudeTable& t, const std::vector<int>& order, int nq);

// Inner products (hat_j at level ell, f) for all interior nodes, node index
// lexicographic with dimension 0 most significant; 4-point Gauss per axis.
Vec inner_products(const LevelSpec& spec, int ell,
                   const std::function<double(const Vec&)>& f);

// Aggregated inner product over the index block with k-bit prefix x of the
// concatenated per-dimension node registers (width ell each, dimension 0
// first). Evaluates the plateau function (sum of consecutive hats) directly,
// independent of how many nodes the block contains.
double half_hat_sums(const LevelSpec& spec, int ell, int k, uint64_t x,
                     const std::function<double(const Vec&)>& f);

// Precomputed one-dimensional ramp/cumulative tables making half-hat queries
// O(1) after an O(2^ell) build.
struct HalfHatTables {
  int ell = 0;
  std::vector<double> up, dn, cum;  // per-cell ramps and prefix integrals
};
HalfHatTables make_half_hat_tables(const LevelSpec& spec, int ell,
                                   const std::function<double(const Vec&)>& f);
double half_hat_sums(const HalfHatTables& tables, int k, uint64_t x);

// Preparation of |F^T r> for the load vector of f, on the packed (level,
// left-aligned cell) register layout of the optimized frame encoding.
struct PrepResult {
  Circuit circuit;
  double norm = 0;          // classical |F^T r| for the scale ledger
  std::vector<int> order;   // table-bit -> qubit map used
  AmplitudeTable table;
};
PrepResult prep_preconditioned(const LevelSpec& spec,
                               const std::function<double(const Vec&)>& f);

// CSV rows "k,x,g" for every prefix.
void write_table_csv(const std::string& path, const AmplitudeTable& t);

}  // namespace qbpx
