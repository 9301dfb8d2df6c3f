#pragma once
// Statevector simulation, measurement sampling and the depolarizing
// trajectory noise model.

#include <complex>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "qbpx/circuit.hpp"

namespace qbpx {

using State = std::vector<std::complex<double>>;
using Counts = std::map<uint64_t, long>;

inline constexpr int kMaxSimQubits = 24;

State basis_state(int n, uint64_t index);
void apply_gate(State& psi, const Gate& g, int n);
State simulate(const Circuit& c, const State& initial);
State simulate(const Circuit& c, uint64_t initial_index = 0);

Counts sample(const State& psi, long shots, uint64_t seed);

// full unitary by simulating every basis input; guarded to <= 14 qubits
Eigen::MatrixXcd circuit_unitary(const Circuit& c);

struct NoiseModel {
  double eps2 = 0;      // two-qubit depolarizing probability
  double eps1 = 0;      // one-qubit probability, default 1e-2 * eps2
  explicit NoiseModel(double e2 = 0) : eps2(e2), eps1(1e-2 * e2) {}
  NoiseModel(double e2, double e1) : eps2(e2), eps1(e1) {}
};

// One stochastic Pauli-insertion trajectory per shot over the {CX, 1q}
// decomposition of the circuit; deterministic per seed.
Counts simulate_noisy(const Circuit& c, const NoiseModel& noise, long shots, uint64_t seed);

// Shared machinery for the pooled estimator in the solver experiments: run a
// single trajectory of an already decomposed circuit and return the full
// final state. `any_error` reports whether a Pauli was inserted.
State noisy_trajectory(const Circuit& decomposed, const NoiseModel& noise,
                       std::mt19937_64& rng, bool* any_error);

void write_counts_csv(const std::string& path, const Counts& counts,
                      const std::vector<std::string>& metadata = {});

}  // namespace qbpx
