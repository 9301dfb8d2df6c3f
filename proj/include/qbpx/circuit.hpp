#pragma once
// Gate-list circuit representation over named qubit registers. Qubit 0 is the
// least significant bit of the basis-state index; registers are little-endian
// spans. Any gate may carry a list of positive controls.

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <string>
#include <vector>

namespace qbpx {

enum class GateKind {
  X, Y, Z, H, Ry, Rz,
  U2,        // general 1-qubit unitary e^{ia} Rz(b) Ry(c) Rz(d), params {a,b,c,d}
  Swap,      // two targets
  Increment, // targets = contiguous span low->high, params {+1 or -1}
  Shift,     // cyclic bit rotation on span, params {amount}, +1 moves toward MSB
};

struct Gate {
  GateKind kind;
  std::vector<int> targets;
  std::vector<int> controls;
  std::array<double, 4> params{};

  Gate inverse() const;
  std::string name() const;
};

// ZYZ parametrization helpers for 2x2 unitaries.
Eigen::Matrix2cd u2_matrix(const std::array<double, 4>& p);
std::array<double, 4> u2_params(const Eigen::Matrix2cd& u);
Eigen::Matrix2cd gate_matrix_1q(const Gate& g);  // for 1-qubit kinds

struct Register {
  std::string name;
  int start = 0;
  int width = 0;
};

struct Circuit {
  int n = 0;
  std::vector<Register> registers;
  std::vector<Gate> gates;

  int add_register(const std::string& name, int width);
  void append(Gate g);
  // appends other's gates with qubit i mapped to i + offset
  void append_shifted(const Circuit& other, int offset, const std::vector<int>& extra_controls = {});

  // convenience emitters
  void x(int q, std::vector<int> c = {});
  void y(int q, std::vector<int> c = {});
  void z(int q, std::vector<int> c = {});
  void h(int q, std::vector<int> c = {});
  void ry(int q, double theta, std::vector<int> c = {});
  void rz(int q, double theta, std::vector<int> c = {});
  void u2(int q, const Eigen::Matrix2cd& u, std::vector<int> c = {});
  void swap(int a, int b, std::vector<int> c = {});
  void cx(int ctrl, int tgt);
  void ccx(int c1, int c2, int tgt);
  void increment(int start, int width, int dir, std::vector<int> c = {});
  void shift(int start, int width, int amount, std::vector<int> c = {});

  Circuit inverse() const;
  Circuit controlled(const std::vector<int>& extra_controls) const;

  // dump format: one gate per line, "NAME targets=t0,t1 controls=c0 param=p0[,p1...]"
  std::string dump() const;
};

// Rewrites a circuit into 1-qubit gates and CX only (phase-exact). Used for
// two-qubit gate accounting and for the noisy trajectory simulator.
Circuit decompose_to_cx(const Circuit& c);

struct GateCounts {
  long one_qubit = 0;
  long two_qubit = 0;
};
GateCounts count_gates(const Circuit& c);  // counts on the decomposed circuit

}  // namespace qbpx
