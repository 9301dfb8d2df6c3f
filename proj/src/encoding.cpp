#include "qbpx/encoding.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

#include "qbpx/simulate.hpp"

namespace qbpx {

using cd = std::complex<double>;

BlockEncoding encode_unitary(const Circuit& c) {
  BlockEncoding e;
  e.circuit = c;
  e.pi1 = Projection::full(c.n);
  e.pi2 = Projection::full(c.n);
  e.gamma = 1.0;
  e.subnorm_bound = 1.0;
  e.norm_hint = 1.0;
  e.isometry = true;
  return e;
}

BlockEncoding scale(BlockEncoding a, double factor) {
  if (factor <= 0) throw std::invalid_argument("scale: factor must be positive");
  a.gamma *= factor;
  if (a.norm_hint) *a.norm_hint *= factor;
  return a;
}

namespace {

BlockEncoding padded(const BlockEncoding& e, int n) {
  BlockEncoding out = e;
  out.circuit.n = n;
  out.pi1 = e.pi1.padded(n);
  out.pi2 = e.pi2.padded(n);
  return out;
}

std::optional<double> combine_subnorm(const BlockEncoding& a, const BlockEncoding& b,
                                      double gamma) {
  // gamma / max(|A|,|B|) <= min of the rescaled per-operand bounds
  if (!a.subnorm_bound || !b.subnorm_bound) return std::nullopt;
  return std::min(*a.subnorm_bound * gamma / a.gamma, *b.subnorm_bound * gamma / b.gamma);
}

}  // namespace

BlockEncoding tensor(const BlockEncoding& a, const BlockEncoding& b) {
  BlockEncoding e;
  e.circuit.n = a.qubits() + b.qubits();
  for (const auto& r : b.circuit.registers) e.circuit.registers.push_back(r);
  for (auto r : a.circuit.registers) {
    r.start += b.qubits();
    e.circuit.registers.push_back(r);
  }
  e.circuit.append_shifted(b.circuit, 0);
  e.circuit.append_shifted(a.circuit, b.qubits());
  e.pi1 = Projection::pair(a.pi1, b.pi1);
  e.pi2 = Projection::pair(a.pi2, b.pi2);
  e.gamma = a.gamma * b.gamma;
  if (a.subnorm_bound && b.subnorm_bound)
    e.subnorm_bound = *a.subnorm_bound * *b.subnorm_bound;
  if (a.norm_hint && b.norm_hint) e.norm_hint = *a.norm_hint * *b.norm_hint;
  e.isometry = a.isometry && b.isometry;
  return e;
}

BlockEncoding adjoint(const BlockEncoding& a) {
  BlockEncoding e = a;
  e.circuit = a.circuit.inverse();
  e.pi1 = a.pi2;
  e.pi2 = a.pi1;
  e.isometry = a.isometry && a.pi1.size() == a.pi2.size();
  return e;
}

BlockEncoding block_diag(const BlockEncoding& a, const BlockEncoding& b) {
  int m = std::max(a.qubits(), b.qubits());
  double gamma = std::max(a.gamma, b.gamma);
  bool damp_a = a.gamma < gamma, damp_b = b.gamma < gamma;
  BlockEncoding e;
  e.circuit.n = m;
  int sel = e.circuit.add_register("sel", 1);
  int danc = (damp_a || damp_b) ? e.circuit.add_register("damp", 1) : -1;
  e.circuit.x(sel);
  e.circuit.append_shifted(a.circuit, 0, {sel});
  if (damp_a) e.circuit.ry(danc, 2 * std::acos(a.gamma / gamma), {sel});
  e.circuit.x(sel);
  e.circuit.append_shifted(b.circuit, 0, {sel});
  if (damp_b) e.circuit.ry(danc, 2 * std::acos(b.gamma / gamma), {sel});
  e.pi1 = Projection::split(sel, a.pi1.padded(sel + 1), b.pi1.padded(sel + 1))
              .padded(e.circuit.n);
  e.pi2 = Projection::split(sel, a.pi2.padded(sel + 1), b.pi2.padded(sel + 1))
              .padded(e.circuit.n);
  e.gamma = gamma;
  e.subnorm_bound = combine_subnorm(a, b, gamma);
  if (a.norm_hint && b.norm_hint) e.norm_hint = std::max(*a.norm_hint, *b.norm_hint);
  return e;
}

BlockEncoding multiply(const BlockEncoding& a, const BlockEncoding& b) {
  int m = std::max(a.qubits(), b.qubits());
  if (!(a.pi1.padded(m) == b.pi2.padded(m)))
    throw std::invalid_argument("multiply: inner projections incompatible");
  Circuit fc = a.pi1.padded(m).flag_circuit();
  BlockEncoding e;
  e.circuit.n = m;
  int flag = e.circuit.add_register("mul_flag", 1);
  if (fc.n > m + 1) e.circuit.add_register("mul_cmp", fc.n - m - 1);
  e.circuit.append_shifted(b.circuit, 0);
  e.circuit.append_shifted(fc, 0);
  e.circuit.append_shifted(a.circuit, 0);
  // return the flag to |0> on the admissible branch so the result composes
  // like any other encoding (uncovered qubits are pinned to zero)
  e.circuit.x(flag);
  e.pi1 = b.pi1.padded(e.circuit.n);
  e.pi2 = a.pi2.padded(e.circuit.n);
  e.gamma = a.gamma * b.gamma;
  // an isometric left factor preserves norms, |A B| = gamma_A |B|; in general
  // the subnormalization is not composable and stays unset
  if (a.isometry && b.subnorm_bound) e.subnorm_bound = b.subnorm_bound;
  if (a.isometry && b.norm_hint) e.norm_hint = a.gamma * *b.norm_hint;
  e.isometry = a.isometry && b.isometry;
  return e;
}

BlockEncoding hconcat(const BlockEncoding& a, const BlockEncoding& b) {
  int m = std::max(a.qubits(), b.qubits());
  if (!(a.pi2.padded(m) == b.pi2.padded(m)))
    throw std::invalid_argument("hconcat: range projections incompatible");
  BlockEncoding e;
  e.circuit.n = m;
  int sel = e.circuit.add_register("sel", 1);
  e.circuit.x(sel);
  e.circuit.append_shifted(a.circuit, 0, {sel});
  e.circuit.x(sel);
  e.circuit.append_shifted(b.circuit, 0, {sel});
  double theta = std::atan2(b.gamma, a.gamma);
  e.circuit.ry(sel, -2 * theta);
  e.pi1 = Projection::split(sel, a.pi1.padded(sel + 1), b.pi1.padded(sel + 1));
  e.pi2 = a.pi2.padded(e.circuit.n);
  e.gamma = std::hypot(a.gamma, b.gamma);
  e.subnorm_bound = combine_subnorm(a, b, e.gamma);
  return e;
}

BlockEncoding add(double mu_a, const BlockEncoding& a, double mu_b, const BlockEncoding& b) {
  int m = std::max(a.qubits(), b.qubits());
  if (!(a.pi1.padded(m) == b.pi1.padded(m)) || !(a.pi2.padded(m) == b.pi2.padded(m)))
    throw std::invalid_argument("add: projections incompatible");
  double wa = std::abs(mu_a) * a.gamma, wb = std::abs(mu_b) * b.gamma;
  if (wa + wb <= 0) throw std::invalid_argument("add: both coefficients vanish");
  BlockEncoding e;
  e.circuit.n = m;
  int sel = e.circuit.add_register("sel", 1);
  double theta = std::atan2(std::sqrt(wb), std::sqrt(wa));
  e.circuit.ry(sel, 2 * theta);
  if (mu_a < 0 || mu_b < 0) {
    Eigen::Matrix2cd ph;
    ph << (mu_a < 0 ? -1.0 : 1.0), 0, 0, (mu_b < 0 ? -1.0 : 1.0);
    e.circuit.u2(sel, ph);
  }
  e.circuit.x(sel);
  e.circuit.append_shifted(a.circuit, 0, {sel});
  e.circuit.x(sel);
  e.circuit.append_shifted(b.circuit, 0, {sel});
  e.circuit.ry(sel, -2 * theta);
  e.pi1 = a.pi1.padded(e.circuit.n);
  e.pi2 = a.pi2.padded(e.circuit.n);
  e.gamma = wa + wb;
  e.subnorm_bound = std::nullopt;  // can be unbounded (cancellation)
  return e;
}

BlockEncoding controlled_block_diag(int selector_width, double gamma,
                                    const Projection& pi1, const Projection& pi2,
                                    const std::function<Circuit(uint64_t)>& block_oracle) {
  if (pi1.qubits() != pi2.qubits())
    throw std::invalid_argument("controlled_block_diag: projection size mismatch");
  int mb = pi1.qubits();
  uint64_t nblocks = uint64_t(1) << selector_width;
  // first pass to size the shared ancilla space above the selector
  int extra = 0;
  std::vector<Circuit> blocks;
  blocks.reserve(nblocks);
  for (uint64_t j = 0; j < nblocks; ++j) {
    Circuit bc = block_oracle(j);
    if (bc.n < mb) throw std::invalid_argument("controlled_block_diag: block too small");
    extra = std::max(extra, bc.n - mb);
    blocks.push_back(std::move(bc));
  }
  BlockEncoding e;
  e.circuit.n = mb;
  int sel = e.circuit.add_register("blk_sel", selector_width);
  if (extra) e.circuit.add_register("blk_anc", extra);
  for (uint64_t j = 0; j < nblocks; ++j) {
    std::vector<int> ones, zeros;
    for (int b = 0; b < selector_width; ++b)
      ((j >> b) & 1 ? ones : zeros).push_back(sel + b);
    for (int q : zeros) e.circuit.x(q);
    std::vector<int> ctrls(selector_width);
    for (int b = 0; b < selector_width; ++b) ctrls[b] = sel + b;
    // remap block ancillas past the selector register
    for (Gate g : blocks[j].gates) {
      for (int& q : g.targets) {
        if (q >= mb) q += selector_width;
        if (q >= sel && q < sel + selector_width)
          throw std::invalid_argument("controlled_block_diag: block acts on selector");
      }
      for (int& q : g.controls)
        if (q >= mb) q += selector_width;
      g.controls.insert(g.controls.end(), ctrls.begin(), ctrls.end());
      e.circuit.append(std::move(g));
    }
    for (int q : zeros) e.circuit.x(q);
  }
  e.pi1 = Projection::pair(Projection::full(selector_width), pi1).padded(e.circuit.n);
  e.pi2 = Projection::pair(Projection::full(selector_width), pi2).padded(e.circuit.n);
  e.gamma = gamma;
  return e;
}

Circuit cnot_pi(const Projection& p) { return p.flag_circuit(); }

Eigen::MatrixXcd extract_matrix(const BlockEncoding& e) {
  if (e.qubits() > 22) throw std::invalid_argument("extract_matrix: size guard exceeded");
  const auto& cols = e.pi1.states();
  const auto& rows = e.pi2.states();
  Eigen::MatrixXcd m(rows.size(), cols.size());
  for (size_t c = 0; c < cols.size(); ++c) {
    State psi = simulate(e.circuit, cols[c]);
    for (size_t r = 0; r < rows.size(); ++r) m(r, c) = e.gamma * psi[rows[r]];
  }
  return m;
}

void append_embedded_2x2(Circuit& c, const Eigen::Matrix2cd& m, int target, int ancilla,
                         const std::vector<int>& controls) {
  Eigen::JacobiSVD<Eigen::Matrix2cd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double s0 = svd.singularValues()(0), s1 = svd.singularValues()(1);
  if (s0 > 1.0 + 1e-12) throw std::invalid_argument("append_embedded_2x2: norm exceeds 1");
  s0 = std::min(s0, 1.0);
  s1 = std::min(s1, 1.0);
  auto with = [&](std::vector<int> base) {
    base.insert(base.end(), controls.begin(), controls.end());
    return base;
  };
  c.u2(target, svd.matrixV().adjoint(), with({}));
  c.x(target, with({}));
  c.ry(ancilla, 2 * std::acos(s0), with({target}));
  c.x(target, with({}));
  c.ry(ancilla, 2 * std::acos(s1), with({target}));
  c.u2(target, svd.matrixU(), with({}));
}

}  // namespace qbpx
