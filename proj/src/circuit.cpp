#include "qbpx/circuit.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace qbpx {

using cd = std::complex<double>;
using Eigen::Matrix2cd;

Gate Gate::inverse() const {
  Gate g = *this;
  switch (kind) {
    case GateKind::X: case GateKind::Y: case GateKind::Z:
    case GateKind::H: case GateKind::Swap:
      break;
    case GateKind::Ry: case GateKind::Rz:
      g.params[0] = -params[0];
      break;
    case GateKind::U2:
      g.params = {-params[0], -params[3], -params[2], -params[1]};
      break;
    case GateKind::Increment: case GateKind::Shift:
      g.params[0] = -params[0];
      break;
  }
  return g;
}

std::string Gate::name() const {
  switch (kind) {
    case GateKind::X: return "X";
    case GateKind::Y: return "Y";
    case GateKind::Z: return "Z";
    case GateKind::H: return "H";
    case GateKind::Ry: return "RY";
    case GateKind::Rz: return "RZ";
    case GateKind::U2: return "U2";
    case GateKind::Swap: return "SWAP";
    case GateKind::Increment: return "INC";
    case GateKind::Shift: return "SHIFT";
  }
  return "?";
}

Matrix2cd u2_matrix(const std::array<double, 4>& p) {
  auto [a, b, c, d] = p;
  Matrix2cd rz1, ry, rz2;
  rz1 << std::exp(cd(0, -b / 2)), 0, 0, std::exp(cd(0, b / 2));
  ry << std::cos(c / 2), -std::sin(c / 2), std::sin(c / 2), std::cos(c / 2);
  rz2 << std::exp(cd(0, -d / 2)), 0, 0, std::exp(cd(0, d / 2));
  return std::exp(cd(0, a)) * rz1 * ry * rz2;
}

std::array<double, 4> u2_params(const Matrix2cd& u) {
  double alpha = std::arg(u.determinant()) / 2;
  Matrix2cd v = std::exp(cd(0, -alpha)) * u;
  double gamma = 2 * std::atan2(std::abs(v(1, 0)), std::abs(v(0, 0)));
  double pp, pm;
  if (std::abs(v(0, 0)) > std::abs(v(1, 0)))
    pp = -std::arg(v(0, 0));
  else
    pp = std::arg(v(1, 1));
  if (std::abs(v(1, 0)) > 1e-14)
    pm = std::arg(v(1, 0));
  else
    pm = 0;
  return {alpha, pp + pm, gamma, pp - pm};
}

Eigen::Matrix2cd gate_matrix_1q(const Gate& g) {
  Matrix2cd m;
  switch (g.kind) {
    case GateKind::X: m << 0, 1, 1, 0; return m;
    case GateKind::Y: m << 0, cd(0, -1), cd(0, 1), 0; return m;
    case GateKind::Z: m << 1, 0, 0, -1; return m;
    case GateKind::H: m << 1, 1, 1, -1; return m / std::sqrt(2.0);
    case GateKind::Ry:
      m << std::cos(g.params[0] / 2), -std::sin(g.params[0] / 2),
           std::sin(g.params[0] / 2), std::cos(g.params[0] / 2);
      return m;
    case GateKind::Rz:
      m << std::exp(cd(0, -g.params[0] / 2)), 0, 0, std::exp(cd(0, g.params[0] / 2));
      return m;
    case GateKind::U2: return u2_matrix(g.params);
    default: throw std::invalid_argument("gate_matrix_1q: not a 1-qubit gate");
  }
}

int Circuit::add_register(const std::string& name, int width) {
  int start = n;
  registers.push_back({name, start, width});
  n += width;
  return start;
}

void Circuit::append(Gate g) {
  for (int q : g.targets)
    if (q < 0 || q >= n) throw std::out_of_range("gate target outside circuit");
  for (int q : g.controls)
    if (q < 0 || q >= n) throw std::out_of_range("gate control outside circuit");
  gates.push_back(std::move(g));
}

void Circuit::append_shifted(const Circuit& other, int offset,
                             const std::vector<int>& extra_controls) {
  for (Gate g : other.gates) {
    for (int& q : g.targets) q += offset;
    for (int& q : g.controls) q += offset;
    g.controls.insert(g.controls.end(), extra_controls.begin(), extra_controls.end());
    append(std::move(g));
  }
}

void Circuit::x(int q, std::vector<int> c) { append({GateKind::X, {q}, std::move(c)}); }
void Circuit::y(int q, std::vector<int> c) { append({GateKind::Y, {q}, std::move(c)}); }
void Circuit::z(int q, std::vector<int> c) { append({GateKind::Z, {q}, std::move(c)}); }
void Circuit::h(int q, std::vector<int> c) { append({GateKind::H, {q}, std::move(c)}); }
void Circuit::ry(int q, double t, std::vector<int> c) {
  append({GateKind::Ry, {q}, std::move(c), {t}});
}
void Circuit::rz(int q, double t, std::vector<int> c) {
  append({GateKind::Rz, {q}, std::move(c), {t}});
}
void Circuit::u2(int q, const Matrix2cd& u, std::vector<int> c) {
  append({GateKind::U2, {q}, std::move(c), u2_params(u)});
}
void Circuit::swap(int a, int b, std::vector<int> c) {
  append({GateKind::Swap, {a, b}, std::move(c)});
}
void Circuit::cx(int ctrl, int tgt) { x(tgt, {ctrl}); }
void Circuit::ccx(int c1, int c2, int tgt) { x(tgt, {c1, c2}); }
void Circuit::increment(int start, int width, int dir, std::vector<int> c) {
  std::vector<int> span(width);
  for (int i = 0; i < width; ++i) span[i] = start + i;
  append({GateKind::Increment, span, std::move(c), {static_cast<double>(dir)}});
}
void Circuit::shift(int start, int width, int amount, std::vector<int> c) {
  std::vector<int> span(width);
  for (int i = 0; i < width; ++i) span[i] = start + i;
  append({GateKind::Shift, span, std::move(c), {static_cast<double>(amount)}});
}

Circuit Circuit::inverse() const {
  Circuit c;
  c.n = n;
  c.registers = registers;
  c.gates.reserve(gates.size());
  for (auto it = gates.rbegin(); it != gates.rend(); ++it) c.gates.push_back(it->inverse());
  return c;
}

Circuit Circuit::controlled(const std::vector<int>& extra) const {
  Circuit c;
  c.n = n;
  c.registers = registers;
  c.gates = gates;
  for (auto& g : c.gates) g.controls.insert(g.controls.end(), extra.begin(), extra.end());
  return c;
}

std::string Circuit::dump() const {
  std::string out;
  char buf[64];
  for (const auto& g : gates) {
    out += g.name();
    out += " targets=";
    for (size_t i = 0; i < g.targets.size(); ++i)
      out += (i ? "," : "") + std::to_string(g.targets[i]);
    if (!g.controls.empty()) {
      out += " controls=";
      for (size_t i = 0; i < g.controls.size(); ++i)
        out += (i ? "," : "") + std::to_string(g.controls[i]);
    }
    int np = 0;
    switch (g.kind) {
      case GateKind::Ry: case GateKind::Rz:
      case GateKind::Increment: case GateKind::Shift: np = 1; break;
      case GateKind::U2: np = 4; break;
      default: break;
    }
    if (np) {
      out += " param=";
      for (int i = 0; i < np; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", g.params[i]);
        out += (i ? "," : "") + std::string(buf);
      }
    }
    out += "\n";
  }
  return out;
}

namespace {

Matrix2cd matrix_sqrt_2x2(const Matrix2cd& u) {
  Eigen::ComplexEigenSolver<Matrix2cd> es(u);
  Matrix2cd d = Matrix2cd::Zero();
  d(0, 0) = std::sqrt(es.eigenvalues()(0));
  d(1, 1) = std::sqrt(es.eigenvalues()(1));
  return es.eigenvectors() * d * es.eigenvectors().inverse();
}

struct Decomposer {
  Circuit out;

  void emit_1q(const Matrix2cd& u, int t) { out.u2(t, u); }

  // exact singly-controlled U via the ZYZ split U = e^{ia} A X B X C
  void emit_cu(const Matrix2cd& u, int c, int t) {
    if ((u - Matrix2cd::Identity()).cwiseAbs().maxCoeff() < 1e-15) return;
    Matrix2cd x;
    x << 0, 1, 1, 0;
    if ((u - x).cwiseAbs().maxCoeff() < 1e-15) {
      out.cx(c, t);
      return;
    }
    auto [a, b, g, d] = u2_params(u);
    Matrix2cd ma = u2_matrix({0, b, g / 2, 0});
    Matrix2cd mb = u2_matrix({0, 0, -g / 2, -(d + b) / 2});
    Matrix2cd mc = u2_matrix({0, 0, 0, (d - b) / 2});
    out.u2(t, mc);
    out.cx(c, t);
    out.u2(t, mb);
    out.cx(c, t);
    out.u2(t, ma);
    Matrix2cd ph;
    ph << 1, 0, 0, std::exp(cd(0, a));
    if (std::abs(a) > 1e-15) out.u2(c, ph);
  }

  void emit_ccx(int c1, int c2, int t) {
    Matrix2cd tg, tdg;
    tg << 1, 0, 0, std::exp(cd(0, std::numbers::pi / 4));
    tdg = tg.adjoint();
    out.h(t);
    out.cx(c2, t);
    out.u2(t, tdg);
    out.cx(c1, t);
    out.u2(t, tg);
    out.cx(c2, t);
    out.u2(t, tdg);
    out.cx(c1, t);
    out.u2(t, tg);
    out.u2(c2, tg);
    out.h(t);
    out.cx(c1, c2);
    out.u2(c1, tg);
    out.u2(c2, tdg);
    out.cx(c1, c2);
  }

  void emit_mcu(const Matrix2cd& u, std::vector<int> ctrls, int t) {
    if (ctrls.empty()) { emit_1q(u, t); return; }
    if (ctrls.size() == 1) { emit_cu(u, ctrls[0], t); return; }
    Matrix2cd x;
    x << 0, 1, 1, 0;
    if (ctrls.size() == 2 && (u - x).cwiseAbs().maxCoeff() < 1e-15) {
      emit_ccx(ctrls[0], ctrls[1], t);
      return;
    }
    // C^k(U) = CV(c_k) C^{k-1}X(c_k) CV†(c_k) C^{k-1}X(c_k) C^{k-1}V
    Matrix2cd v = matrix_sqrt_2x2(u);
    int ck = ctrls.back();
    std::vector<int> rest(ctrls.begin(), ctrls.end() - 1);
    emit_cu(v, ck, t);
    emit_mcu(x, rest, ck);
    emit_cu(v.adjoint(), ck, t);
    emit_mcu(x, rest, ck);
    emit_mcu(v, rest, t);
  }

  void emit_swap(int a, int b, const std::vector<int>& ctrls) {
    Matrix2cd x;
    x << 0, 1, 1, 0;
    if (ctrls.empty()) {
      out.cx(a, b);
      out.cx(b, a);
      out.cx(a, b);
      return;
    }
    std::vector<int> cb = ctrls;
    cb.push_back(a);
    emit_mcu(x, cb, b);
    cb.back() = b;
    emit_mcu(x, cb, a);
    cb.back() = a;
    emit_mcu(x, cb, b);
  }

  void emit_increment(const std::vector<int>& span, const std::vector<int>& ctrls) {
    Matrix2cd x;
    x << 0, 1, 1, 0;
    int w = static_cast<int>(span.size());
    for (int b = w - 1; b >= 1; --b) {
      std::vector<int> cs = ctrls;
      for (int i = 0; i < b; ++i) cs.push_back(span[i]);
      emit_mcu(x, cs, span[b]);
    }
    emit_mcu(x, ctrls, span[0]);
  }

  void handle(const Gate& g) {
    switch (g.kind) {
      case GateKind::X: case GateKind::Y: case GateKind::Z: case GateKind::H:
      case GateKind::Ry: case GateKind::Rz: case GateKind::U2: {
        if (g.controls.empty()) { out.append(g); return; }
        if (g.kind == GateKind::X && g.controls.size() == 1) { out.append(g); return; }
        emit_mcu(gate_matrix_1q(g), g.controls, g.targets[0]);
        return;
      }
      case GateKind::Swap:
        emit_swap(g.targets[0], g.targets[1], g.controls);
        return;
      case GateKind::Increment: {
        if (g.params[0] > 0) {
          emit_increment(g.targets, g.controls);
        } else {
          Decomposer tmp;
          tmp.out.n = out.n;
          tmp.emit_increment(g.targets, g.controls);
          for (auto it = tmp.out.gates.rbegin(); it != tmp.out.gates.rend(); ++it)
            out.gates.push_back(it->inverse());
        }
        return;
      }
      case GateKind::Shift: {
        int w = static_cast<int>(g.targets.size());
        long amt = (static_cast<long>(g.params[0]) % w + w) % w;
        // one low-to-high chain of adjacent swaps rotates right by one
        for (long s = 0; s < (w - amt) % w; ++s)
          for (int i = 0; i + 1 < w; ++i) emit_swap(g.targets[i], g.targets[i + 1], g.controls);
        return;
      }
    }
  }
};

}  // namespace

Circuit decompose_to_cx(const Circuit& c) {
  Decomposer dec;
  dec.out.n = c.n;
  dec.out.registers = c.registers;
  for (const auto& g : c.gates) dec.handle(g);
  return dec.out;
}

GateCounts count_gates(const Circuit& c) {
  Circuit d = decompose_to_cx(c);
  GateCounts gc;
  for (const auto& g : d.gates)
    (g.controls.empty() ? gc.one_qubit : gc.two_qubit)++;
  return gc;
}

}  // namespace qbpx
