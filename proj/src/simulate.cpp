#include "qbpx/simulate.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace qbpx {

using cd = std::complex<double>;

State basis_state(int n, uint64_t index) {
  State psi(uint64_t(1) << n, cd(0));
  psi[index] = 1.0;
  return psi;
}

namespace {

uint64_t control_mask(const Gate& g) {
  uint64_t m = 0;
  for (int q : g.controls) m |= uint64_t(1) << q;
  return m;
}

void apply_1q(State& psi, const Eigen::Matrix2cd& u, int t, uint64_t cm) {
  uint64_t dim = psi.size(), bit = uint64_t(1) << t;
  cd u00 = u(0, 0), u01 = u(0, 1), u10 = u(1, 0), u11 = u(1, 1);
  for (uint64_t i = 0; i < dim; ++i) {
    if (i & bit) continue;
    if ((i & cm) != cm) continue;
    uint64_t j = i | bit;
    cd a = psi[i], b = psi[j];
    psi[i] = u00 * a + u01 * b;
    psi[j] = u10 * a + u11 * b;
  }
}

void apply_permutation(State& psi, const Gate& g, uint64_t cm) {
  uint64_t dim = psi.size();
  int w = static_cast<int>(g.targets.size());
  uint64_t mask = 0;
  for (int q : g.targets) mask |= uint64_t(1) << q;
  State buf = psi;
  for (uint64_t i = 0; i < dim; ++i) {
    if ((i & cm) != cm) continue;
    uint64_t v = 0;
    for (int b = 0; b < w; ++b) v |= ((i >> g.targets[b]) & 1) << b;
    uint64_t v2;
    if (g.kind == GateKind::Increment) {
      long dir = static_cast<long>(g.params[0]);
      v2 = (v + (dir > 0 ? 1 : (uint64_t(1) << w) - 1)) & ((uint64_t(1) << w) - 1);
    } else {  // Shift: bit b moves to b+amount (cyclic)
      long amt = ((static_cast<long>(g.params[0]) % w) + w) % w;
      v2 = 0;
      for (int b = 0; b < w; ++b) v2 |= ((v >> b) & 1) << ((b + amt) % w);
    }
    uint64_t j = i & ~mask;
    for (int b = 0; b < w; ++b) j |= ((v2 >> b) & 1) << g.targets[b];
    buf[j] = psi[i];
  }
  psi.swap(buf);
}

}  // namespace

void apply_gate(State& psi, const Gate& g, int n) {
  uint64_t cm = control_mask(g);
  switch (g.kind) {
    case GateKind::Swap: {
      uint64_t ba = uint64_t(1) << g.targets[0], bb = uint64_t(1) << g.targets[1];
      for (uint64_t i = 0; i < psi.size(); ++i)
        if ((i & cm) == cm && (i & ba) && !(i & bb)) std::swap(psi[i], psi[(i ^ ba) | bb]);
      return;
    }
    case GateKind::Increment:
    case GateKind::Shift:
      apply_permutation(psi, g, cm);
      return;
    default:
      apply_1q(psi, gate_matrix_1q(g), g.targets[0], cm);
      return;
  }
  (void)n;
}

State simulate(const Circuit& c, const State& initial) {
  if (c.n > kMaxSimQubits) throw std::invalid_argument("simulate: qubit cap exceeded");
  if (initial.size() != (uint64_t(1) << c.n))
    throw std::invalid_argument("simulate: state dimension mismatch");
  State psi = initial;
  for (const auto& g : c.gates) apply_gate(psi, g, c.n);
  return psi;
}

State simulate(const Circuit& c, uint64_t initial_index) {
  if (c.n > kMaxSimQubits) throw std::invalid_argument("simulate: qubit cap exceeded");
  return simulate(c, basis_state(c.n, initial_index));
}

Eigen::MatrixXcd circuit_unitary(const Circuit& c) {
  if (c.n > 14) throw std::invalid_argument("circuit_unitary: too many qubits");
  uint64_t dim = uint64_t(1) << c.n;
  Eigen::MatrixXcd u(dim, dim);
  for (uint64_t col = 0; col < dim; ++col) {
    State psi = simulate(c, col);
    for (uint64_t row = 0; row < dim; ++row) u(row, col) = psi[row];
  }
  return u;
}

namespace {

uint64_t sample_one(const std::vector<double>& cdf, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, cdf.back());
  return std::upper_bound(cdf.begin(), cdf.end(), u(rng)) - cdf.begin();
}

std::vector<double> cumulative(const State& psi) {
  std::vector<double> cdf(psi.size());
  double acc = 0;
  for (size_t i = 0; i < psi.size(); ++i) {
    acc += std::norm(psi[i]);
    cdf[i] = acc;
  }
  return cdf;
}

}  // namespace

Counts sample(const State& psi, long shots, uint64_t seed) {
  if (shots < 1) throw std::invalid_argument("sample: shots must be >= 1");
  std::mt19937_64 rng(seed);
  auto cdf = cumulative(psi);
  Counts counts;
  for (long s = 0; s < shots; ++s) counts[sample_one(cdf, rng)]++;
  return counts;
}

State noisy_trajectory(const Circuit& dec, const NoiseModel& noise, std::mt19937_64& rng,
                       bool* any_error) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> pauli1(0, 2);
  std::uniform_int_distribution<int> pauli2(1, 15);
  State psi = basis_state(dec.n, 0);
  bool err = false;
  auto insert_pauli = [&](int q, int which) {
    static const GateKind ks[3] = {GateKind::X, GateKind::Y, GateKind::Z};
    Gate p{ks[which], {q}, {}};
    apply_gate(psi, p, dec.n);
  };
  for (const auto& g : dec.gates) {
    apply_gate(psi, g, dec.n);
    bool two = !g.controls.empty();
    double eps = two ? noise.eps2 : noise.eps1;
    if (eps > 0 && u01(rng) < eps) {
      err = true;
      if (two) {
        int p = pauli2(rng);  // base-4 digits over (control, target), not both I
        int pc = p / 4, pt = p % 4;
        if (pc) insert_pauli(g.controls[0], pc - 1);
        if (pt) insert_pauli(g.targets[0], pt - 1);
      } else {
        insert_pauli(g.targets[0], pauli1(rng));
      }
    }
  }
  if (any_error) *any_error = err;
  return psi;
}

Counts simulate_noisy(const Circuit& c, const NoiseModel& noise, long shots, uint64_t seed) {
  Circuit dec = decompose_to_cx(c);
  std::mt19937_64 rng(seed);
  // reuse the noiseless result whenever a trajectory has no insertions
  State clean = simulate(dec, uint64_t(0));
  auto clean_cdf = cumulative(clean);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Counts counts;
  for (long s = 0; s < shots; ++s) {
    // pre-scan insertion decisions so clean shots skip the simulation
    std::mt19937_64 probe = rng;
    bool any = false;
    for (const auto& g : dec.gates) {
      double eps = g.controls.empty() ? noise.eps1 : noise.eps2;
      if (eps > 0 && u01(probe) < eps) { any = true; break; }
    }
    if (!any) {
      rng = probe;  // consumed exactly the per-gate decisions
      counts[sample_one(clean_cdf, rng)]++;
    } else {
      bool e = false;
      State psi = noisy_trajectory(dec, noise, rng, &e);
      counts[sample_one(cumulative(psi), rng)]++;
    }
  }
  return counts;
}

void write_counts_csv(const std::string& path, const Counts& counts,
                      const std::vector<std::string>& metadata) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& line : metadata) out << "# " << line << "\n";
  out << "outcome,count\n";
  for (const auto& [k, v] : counts) out << k << "," << v << "\n";
}

}  // namespace qbpx
