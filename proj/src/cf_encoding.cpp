#include "qbpx/cf_encoding.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qbpx {

using cd = std::complex<double>;

CfLayout cf_layout(const LevelSpec& spec, bool optimized) {
  spec.validate();
  CfLayout l;
  l.d = spec.d;
  l.L = spec.L;
  l.optimized = optimized;
  int pos = 0;
  if (optimized) {
    int lt = 0;
    while ((1 << lt) < spec.L) ++lt;
    if ((1 << lt) != spec.L)
      throw std::invalid_argument("cf_layout: optimized path needs L a power of two");
    l.lam = pos;
    l.lam_width = lt;
    pos += lt;
  }
  for (int i = 0; i < spec.d; ++i) {
    l.cell.push_back(pos);
    pos += spec.L;
  }
  if (spec.d > 1) {
    l.s_width = spec.d > 2 ? 2 : 1;
    l.s = pos;
    pos += l.s_width;
  }
  for (int i = 0; i < spec.d; ++i) l.k.push_back(pos++);
  for (int i = 0; i < spec.d; ++i) l.anc.push_back(pos++);
  if (optimized) l.cmp = pos++;
  l.qubits = pos;
  return l;
}

namespace {

Circuit base_circuit(const CfLayout& l) {
  Circuit c;
  if (l.lam_width) c.add_register("lvl", l.lam_width);
  for (int i = 0; i < l.d; ++i) c.add_register("cell" + std::to_string(i), l.L);
  if (l.s >= 0) c.add_register("dir", l.s_width);
  for (int i = 0; i < l.d; ++i) c.add_register("crn" + std::to_string(i), 1);
  for (int i = 0; i < l.d; ++i) c.add_register("emb" + std::to_string(i), 1);
  if (l.optimized) c.add_register("cmp", 1);
  return c;
}

// local 2x2 factor turning the identity/shift stack into means and slopes
Eigen::Matrix2cd restriction_local() {
  Eigen::Matrix2cd m;
  const double q = 1.0 / std::sqrt(2.0), s3 = std::sqrt(3.0);
  m << q, q, q / s3, -q / s3;  // sqrt(2) * [[1/2,1/2],[1/(2 sqrt 3),-...]]
  return m;
}

Eigen::Matrix2cd gradient_local() {
  Eigen::Matrix2cd m;
  const double q = 1.0 / std::sqrt(2.0);
  m << q, -q, 0, 0;  // [[1,-1],[0,0]] / sqrt(2)
  return m;
}

// rows (j, direction, corner), j most significant, matching the assembled
// reference factors
Projection cell_space(const CfLayout& l, int n, uint64_t cells_per_dim) {
  std::vector<Segment> segs;
  for (int i = 0; i < l.d; ++i) segs.push_back({l.cell[i], l.L, 0, cells_per_dim});
  if (l.s >= 0) segs.push_back({l.s, l.s_width, 0, uint64_t(l.d)});
  for (int i = 0; i < l.d; ++i) segs.push_back({l.k[i], 1, 0, 2});
  return Projection::product(n, segs);
}

// hat-function stack: corner superposition plus corner-controlled increment,
// then the mean/slope (or difference) factor, with the gradient direction
// selected by the dir register
void append_local_factors(Circuit& c, const CfLayout& l) {
  if (l.d == 1) {
    append_embedded_2x2(c, gradient_local(), l.k[0], l.anc[0]);
    return;
  }
  for (int i = 0; i < l.d; ++i)
    append_embedded_2x2(c, restriction_local(), l.k[i], l.anc[i]);
  for (int i = 0; i < l.d; ++i) {
    std::vector<int> ctrls, zeros;
    for (int b = 0; b < l.s_width; ++b) {
      ctrls.push_back(l.s + b);
      if (!((i >> b) & 1)) zeros.push_back(l.s + b);
    }
    for (int q : zeros) c.x(q);
    Circuit undo;
    undo.n = c.n;
    append_embedded_2x2(undo, restriction_local(), l.k[i], l.anc[i]);
    c.append_shifted(undo.inverse(), 0, ctrls);
    append_embedded_2x2(c, gradient_local(), l.k[i], l.anc[i], ctrls);
    for (int q : zeros) c.x(q);
  }
}

// flips `flag` iff the register value lies in [lo, hi), via a dyadic cover
void emit_range_flag(Circuit& c, int start, int width, uint64_t lo, uint64_t hi, int flag) {
  while (lo < hi) {
    int k = 0;
    while (k < width && !(lo & (uint64_t(1) << k)) && lo + (uint64_t(2) << k) <= hi) ++k;
    std::vector<int> ctrls, zeros;
    for (int b = k; b < width; ++b) {
      ctrls.push_back(start + b);
      if (!((lo >> b) & 1)) zeros.push_back(start + b);
    }
    for (int q : zeros) c.x(q);
    c.x(flag, ctrls);
    for (int q : zeros) c.x(q);
    lo += uint64_t(1) << k;
  }
}

void two_level_gate(Circuit& c, int p, int q, const Eigen::Matrix2cd& g, int lo, int hi,
                    const std::vector<int>& ext) {
  // p < q differ in exactly one bit; p holds 0 there, so g applies as-is
  int tgt = ((p ^ q) == 1) ? lo : hi;
  int other = ((p ^ q) == 1) ? hi : lo;
  int obit = ((p ^ q) == 1) ? (p >> 1) : (p & 1);
  std::vector<int> ctrls = ext;
  ctrls.push_back(other);
  if (!obit) c.x(other);
  c.u2(tgt, g, ctrls);
  if (!obit) c.x(other);
}

}  // namespace

void append_two_qubit_unitary(Circuit& c, const Eigen::Matrix4cd& u, int lo, int hi,
                              const std::vector<int>& controls) {
  // reduce to a diagonal with Givens rotations on neighbouring rows, then
  // replay the inverses; pair (1,2) is routed through (1,3) with a CX
  Eigen::Matrix4cd m = u;
  struct Rec {
    int r;
    Eigen::Matrix2cd g;
  };
  std::vector<Rec> recs;
  for (int col = 0; col < 3; ++col)
    for (int r = 3; r > col; --r) {
      cd a = m(r - 1, col), b = m(r, col);
      if (std::abs(b) < 1e-14) continue;
      double n = std::sqrt(std::norm(a) + std::norm(b));
      Eigen::Matrix2cd g;
      g << std::conj(a) / n, std::conj(b) / n, -b / n, a / n;
      Eigen::Matrix4cd t = Eigen::Matrix4cd::Identity();
      t.block<2, 2>(r - 1, r - 1) = g;
      m = (t * m).eval();
      recs.push_back({r, g});
    }
  auto near_id = [](const Eigen::Matrix2cd& x) {
    return (x - Eigen::Matrix2cd::Identity()).norm() < 1e-14;
  };
  Eigen::Matrix2cd d0, d1;
  d0 << m(0, 0), 0, 0, m(1, 1);
  d1 << m(2, 2), 0, 0, m(3, 3);
  std::vector<int> chi = controls;
  chi.push_back(hi);
  if (!near_id(d0)) {
    c.x(hi);
    c.u2(lo, d0, chi);
    c.x(hi);
  }
  if (!near_id(d1)) c.u2(lo, d1, chi);
  for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
    Eigen::Matrix2cd g = it->g.adjoint();
    if (it->r == 2) {
      c.x(lo, {hi});
      two_level_gate(c, 1, 3, g, lo, hi, controls);
      c.x(lo, {hi});
    } else {
      two_level_gate(c, it->r - 1, it->r, g, lo, hi, controls);
    }
  }
}

void append_uniform_prep(Circuit& c, int start, int width, uint64_t count,
                         const std::vector<int>& controls) {
  if (count <= 1) return;
  uint64_t full = uint64_t(1) << width;
  if (count > full) throw std::invalid_argument("append_uniform_prep: count too large");
  if (count == full) {
    for (int b = 0; b < width; ++b) c.h(start + b, controls);
    return;
  }
  uint64_t half = full >> 1;
  if (count <= half) {
    append_uniform_prep(c, start, width - 1, count, controls);
    return;
  }
  int top = start + width - 1;
  uint64_t n1 = count - half;
  c.ry(top, 2 * std::atan2(std::sqrt(double(n1)), std::sqrt(double(half))), controls);
  std::vector<int> sub = controls;
  sub.push_back(top);
  c.x(top);
  append_uniform_prep(c, start, width - 1, half, sub);
  c.x(top);
  append_uniform_prep(c, start, width - 1, n1, sub);
}

Eigen::Matrix4cd transfer_local_gate() {
  Eigen::MatrixXd t = transfer_step_1d(0);  // single parent cell: the 4x2 step
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(t);
  Eigen::MatrixXd q = qr.householderQ();
  for (int i = 0; i < 2; ++i)
    if (qr.matrixQR()(i, i) < 0) q.col(i) *= -1.0;
  return q.cast<cd>();
}

BlockEncoding build_U_grad(const LevelSpec& spec, int ell) {
  spec.validate();
  if (ell < 1 || ell > spec.L) throw std::invalid_argument("build_U_grad: bad level");
  CfLayout l = cf_layout(spec, false);
  Circuit c = base_circuit(l);
  if (l.d > 1) append_uniform_prep(c, l.s, l.s_width, uint64_t(l.d));
  for (int i = 0; i < l.d; ++i) {
    c.h(l.k[i]);
    c.increment(l.cell[i], ell, +1, {l.k[i]});
  }
  append_local_factors(c, l);

  BlockEncoding e;
  e.circuit = std::move(c);
  std::vector<Segment> cols;
  for (int i = 0; i < l.d; ++i)
    cols.push_back({l.cell[i], l.L, 0, (uint64_t(1) << ell) - 1});
  e.pi1 = Projection::product(e.circuit.n, cols);
  e.pi2 = cell_space(l, e.circuit.n, uint64_t(1) << ell);
  e.gamma = 2.0 * std::sqrt(double(l.d)) * std::pow(2.0, 0.5 * ell * (2 - l.d));
  // small-angle bound on gamma / |C_ell|; at level 1 the angle is pi/4 and
  // the exact value sqrt(2 d) applies instead
  e.subnorm_bound =
      ell == 1 ? std::sqrt(2.0 * l.d)
               : std::sqrt(l.d * (1.0 + M_PI * M_PI / 3.0 * std::pow(2.0, -2.0 * ell)));
  return e;
}

BlockEncoding build_U_transfer(const LevelSpec& spec, int ell) {
  spec.validate();
  if (ell < 1 || ell > spec.L) throw std::invalid_argument("build_U_transfer: bad level");
  CfLayout l = cf_layout(spec, false);
  Circuit c = base_circuit(l);
  Eigen::Matrix4cd t4 = transfer_local_gate();
  for (int i = 0; i < l.d; ++i)
    for (int j = ell; j < l.L; ++j) {
      c.shift(l.cell[i], j + 1, +1);  // free the child bit below the value
      append_two_qubit_unitary(c, t4, l.k[i], l.cell[i]);
    }
  BlockEncoding e;
  e.circuit = std::move(c);
  e.pi1 = cell_space(l, e.circuit.n, uint64_t(1) << ell);
  e.pi2 = cell_space(l, e.circuit.n, uint64_t(1) << l.L);
  e.gamma = 1.0;
  e.subnorm_bound = 1.0;
  e.norm_hint = 1.0;
  e.isometry = true;
  return e;
}

BlockEncoding build_U_CF(const LevelSpec& spec) {
  spec.validate();
  BlockEncoding cf;
  for (int ell = 1; ell <= spec.L; ++ell) {
    double w = std::pow(2.0, -0.5 * ell * (2 - spec.d));
    BlockEncoding blk =
        multiply(build_U_transfer(spec, ell), scale(build_U_grad(spec, ell), w));
    cf = (ell == 1) ? std::move(blk) : hconcat(cf, blk);
  }
  return cf;
}

BlockEncoding build_U_CF_optimized(const LevelSpec& spec) {
  spec.validate();
  CfLayout l = cf_layout(spec, true);
  Circuit c = base_circuit(l);
  if (l.d > 1) append_uniform_prep(c, l.s, l.s_width, uint64_t(l.d));
  for (int i = 0; i < l.d; ++i) c.h(l.k[i]);

  // one shared increment: walk the level-aligned cell value down to the low
  // bits, add the corner, walk back up; each rung fires while level <= L - a
  auto ladder = [&](int a, int dir) {
    emit_range_flag(c, l.lam, l.lam_width, 0, uint64_t(l.L - a), l.cmp);
    for (int i = 0; i < l.d; ++i) c.shift(l.cell[i], l.L, dir, {l.cmp});
    emit_range_flag(c, l.lam, l.lam_width, 0, uint64_t(l.L - a), l.cmp);
  };
  for (int a = 1; a < l.L; ++a) ladder(a, -1);
  for (int i = 0; i < l.d; ++i) c.increment(l.cell[i], l.L, +1, {l.k[i]});
  for (int a = l.L - 1; a >= 1; --a) ladder(a, +1);

  append_local_factors(c, l);

  // transfer chain at level-dependent bit positions: step j fires for all
  // levels <= j and writes the child bit at position L - j - 1
  Eigen::Matrix4cd t4 = transfer_local_gate();
  for (int j = 1; j < l.L; ++j) {
    emit_range_flag(c, l.lam, l.lam_width, 0, uint64_t(j), l.cmp);
    for (int i = 0; i < l.d; ++i)
      append_two_qubit_unitary(c, t4, l.k[i], l.cell[i] + l.L - j - 1, {l.cmp});
    emit_range_flag(c, l.lam, l.lam_width, 0, uint64_t(j), l.cmp);
  }
  for (int b = 0; b < l.lam_width; ++b) c.h(l.lam + b);

  BlockEncoding e;
  e.circuit = std::move(c);
  std::vector<Projection> levels;
  for (int ell = 1; ell <= l.L; ++ell) {
    // level pinned in lam; node index left-aligned in each cell register
    std::vector<Segment> segs;
    if (l.lam_width)
      segs.push_back({l.lam, l.lam_width, uint64_t(ell - 1), uint64_t(ell)});
    for (int i = 0; i < l.d; ++i) {
      segs.push_back({l.cell[i] + l.L - ell, ell, 0, (uint64_t(1) << ell) - 1});
      if (l.L - ell > 0) segs.push_back({l.cell[i], l.L - ell, 0, 1});
    }
    levels.push_back(Projection::product(e.circuit.n, segs));
  }
  e.pi1 = Projection::union_of(levels);
  e.pi2 = cell_space(l, e.circuit.n, uint64_t(1) << l.L);
  e.gamma = 2.0 * std::sqrt(double(l.d) * l.L);
  e.subnorm_bound =
      l.L == 1 ? std::sqrt(2.0 * l.d)
               : std::sqrt(l.d * l.L *
                           (1.0 + M_PI * M_PI / 3.0 * std::pow(2.0, -2.0 * l.L)));
  return e;
}

BlockEncoding build_U_DA(const LevelSpec& spec, const Coefficient& a,
                         const Projection& pi, const CfLayout& lay) {
  spec.validate();
  long nc1 = spec.cells_1d(spec.L);
  // scalar check and value table over fine cells, dimension 0 most significant
  long ncells = 1;
  for (int i = 0; i < spec.d; ++i) ncells *= nc1;
  std::vector<double> val(ncells);
  std::vector<long> j(spec.d, 0);
  for (long lin = 0; lin < ncells; ++lin) {
    Vec x(spec.d);
    for (int i = 0; i < spec.d; ++i) x[i] = (j[i] + 0.5) * spec.h(spec.L);
    Mat m = a.matrix(x);
    for (int r = 0; r < spec.d; ++r)
      for (int cidx = 0; cidx < spec.d; ++cidx)
        if (r != cidx && std::abs(m(r, cidx)) > 1e-12 * std::abs(m(0, 0)))
          throw std::invalid_argument("build_U_DA: matrix coefficients have no quantum path");
    for (int r = 1; r < spec.d; ++r)
      if (std::abs(m(r, r) - m(0, 0)) > 1e-12 * std::abs(m(0, 0)))
        throw std::invalid_argument("build_U_DA: matrix coefficients have no quantum path");
    val[lin] = m(0, 0);
    for (int i = spec.d - 1; i >= 0 && ++j[i] == nc1; --i) j[i] = 0;
  }
  double beta = *std::max_element(val.begin(), val.end());
  double alpha = *std::min_element(val.begin(), val.end());
  if (alpha <= 0) throw std::invalid_argument("build_U_DA: coefficient not positive");

  Circuit c;
  c.add_register("work", pi.qubits());
  bool constant = (beta - alpha) <= 1e-14 * beta;
  if (!constant) {
    int anc = c.add_register("coef", 1);
    std::fill(j.begin(), j.end(), 0);
    for (long lin = 0; lin < ncells; ++lin) {
      if (beta - val[lin] > 1e-15 * beta) {
        std::vector<int> ctrls, zeros;
        for (int i = 0; i < spec.d; ++i)
          for (int b = 0; b < spec.L; ++b) {
            ctrls.push_back(lay.cell[i] + b);
            if (!((j[i] >> b) & 1)) zeros.push_back(lay.cell[i] + b);
          }
        for (int q : zeros) c.x(q);
        c.ry(anc, 2 * std::acos(val[lin] / beta), ctrls);
        for (int q : zeros) c.x(q);
      }
      for (int i = spec.d - 1; i >= 0 && ++j[i] == nc1; --i) j[i] = 0;
    }
  }
  BlockEncoding e;
  e.circuit = std::move(c);
  e.pi1 = pi.padded(e.circuit.n);
  e.pi2 = e.pi1;
  e.gamma = beta;
  e.subnorm_bound = 1.0;  // gamma equals the largest diagonal entry
  e.norm_hint = beta;
  e.isometry = constant;
  return e;
}

BlockEncoding build_U_stiffness(const LevelSpec& spec, const Coefficient& a,
                                bool optimized) {
  BlockEncoding cf = optimized ? build_U_CF_optimized(spec) : build_U_CF(spec);
  CfLayout lay = cf_layout(spec, optimized);
  BlockEncoding da = build_U_DA(spec, a, cf.pi2, lay);
  return multiply(adjoint(cf), multiply(da, cf));
}

}  // namespace qbpx
