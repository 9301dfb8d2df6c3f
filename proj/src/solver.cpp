#include "qbpx/solver.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <climits>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "qbpx/simulate.hpp"

namespace qbpx {

namespace {

double scalar_coeff_1d(const Coefficient& a, double x) {
  Vec p(1);
  p(0) = x;
  Mat m = a.matrix(p);
  return m(0, 0);
}

// d=1 midpoint samples of the (scalar) coefficient on the fine cells
Vec coeff_cells_1d(const LevelSpec& spec, const Coefficient& a) {
  long nc = spec.cells_1d(spec.L);
  Vec out(nc);
  for (long j = 0; j < nc; ++j)
    out(j) = scalar_coeff_1d(a, (j + 0.5) * spec.h(spec.L));
  return out;
}

Coefficient coefficient_sqrt(const Coefficient& a) {
  Coefficient s;
  auto inner = a.matrix;
  s.matrix = [inner](const Vec& x) {
    Mat m = inner(x);
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    return Mat(es.operatorSqrt());
  };
  return s;
}

double sigma_max_sparse(const SpMat& b) {
  Vec v = Vec::Ones(b.cols());
  v += 1e-3 * Vec::LinSpaced(b.cols(), 0.0, 1.0);  // break symmetry
  double lambda = 0;
  for (int it = 0; it < 80; ++it) {
    Vec w = b.transpose() * (b * v);
    lambda = w.norm() / v.norm();
    v = w / w.norm();
  }
  return std::sqrt(lambda);
}

// smallest nonzero singular value through a dense SVD; guarded by size
double sigma_min_dense(const Mat& b) {
  Eigen::BDCSVD<Mat> svd(b);
  const Vec& s = svd.singularValues();
  double cut = 1e-9 * s(0);
  double smin = s(0);
  for (long i = 0; i < s.size(); ++i)
    if (s(i) > cut) smin = s(i);
  return smin;
}

Vec thomas_solve(Vec diag, const Vec& off, Vec rhs) {
  long n = diag.size();
  for (long i = 1; i < n; ++i) {
    double w = off(i - 1) / diag(i - 1);
    diag(i) -= w * off(i - 1);
    rhs(i) -= w * rhs(i - 1);
  }
  Vec x(n);
  x(n - 1) = rhs(n - 1) / diag(n - 1);
  for (long i = n - 2; i >= 0; --i) x(i) = (rhs(i) - off(i) * x(i + 1)) / diag(i);
  return x;
}

// flips `flag` iff the register holds a value in [lo, hi) (dyadic cover)
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

// phase -1 on the admissible subspace: flag, Z, unflag (equals 1 - 2 Pi up
// to the sign convention; reflections always appear in pairs here, so the
// global sign cancels)
void append_reflection(Circuit& c, const Projection& pi) {
  Circuit f = pi.flag_circuit();
  c.append_shifted(f, 0);
  c.z(pi.flag_qubit());
  c.append_shifted(f.inverse(), 0);
}

void append_projector_phase(Circuit& c, const Projection& pi, double phi) {
  Circuit f = pi.flag_circuit();
  c.append_shifted(f, 0);
  Eigen::Matrix2cd ph = Eigen::Matrix2cd::Zero();
  ph(0, 0) = std::exp(std::complex<double>(0, -phi));
  ph(1, 1) = std::exp(std::complex<double>(0, phi));
  c.u2(pi.flag_qubit(), ph);
  c.append_shifted(f.inverse(), 0);
}

int ancilla_span(const BlockEncoding& b) {
  int n = b.circuit.n;
  return std::max(b.pi1.flag_circuit().n, b.pi2.flag_circuit().n) - n + 1;
}

}  // namespace

void ScaleLedger::push(const std::string& label, double factor) {
  if (!std::isfinite(factor) || factor <= 0)
    throw std::invalid_argument("ledger factor must be finite and positive: " + label);
  factors.emplace_back(label, factor);
}

double ScaleLedger::product() const {
  double p = 1.0;
  for (const auto& [label, f] : factors) p *= f;
  return p;
}

Vec ftr_vector(const LevelSpec& spec, const std::function<double(const Vec&)>& f) {
  Vec out(spec.dim_f());
  long off = 0;
  for (int ell = 1; ell <= spec.L; ++ell) {
    double w = std::pow(2.0, -0.5 * ell * (2 - spec.d));
    Vec ip = inner_products(spec, ell, f);
    out.segment(off, ip.size()) = w * ip;
    off += ip.size();
  }
  return out;
}

SpMat cf_sparse(const LevelSpec& spec, const Coefficient& a) {
  spec.validate();
  if (spec.d != 1) throw std::invalid_argument("sparse frame path is d=1 only");
  Vec ac = coeff_cells_1d(spec, a);
  long rows = 2L << spec.L;
  std::vector<Eigen::Triplet<double>> trips;
  long col = 0;
  for (int ell = 1; ell <= spec.L; ++ell) {
    // column (ell, v): gradient of the level-ell hat is piecewise constant,
    // +-2^ell on the two supporting coarse cells; in the fine orthonormal
    // per-cell basis each fine cell carries 2^{(ell-L)/2} after the frame
    // scaling 2^{-ell/2}
    double val = std::pow(2.0, 0.5 * (ell - spec.L));
    long stride = 1L << (spec.L - ell);
    for (long v = 0; v < spec.nodes_1d(ell); ++v, ++col) {
      for (long j = v * stride; j < (v + 1) * stride; ++j)
        trips.emplace_back(2 * j, col, val * std::sqrt(ac(j)));
      for (long j = (v + 1) * stride; j < (v + 2) * stride; ++j)
        trips.emplace_back(2 * j, col, -val * std::sqrt(ac(j)));
    }
  }
  SpMat m(rows, spec.dim_f());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

SpMat cl_sparse(const LevelSpec& spec, const Coefficient& a) {
  spec.validate();
  if (spec.d != 1) throw std::invalid_argument("sparse frame path is d=1 only");
  Vec ac = coeff_cells_1d(spec, a);
  long rows = 2L << spec.L;
  double val = std::pow(2.0, 0.5 * spec.L);
  std::vector<Eigen::Triplet<double>> trips;
  for (long v = 0; v < spec.nodes_1d(spec.L); ++v) {
    trips.emplace_back(2 * v, v, val * std::sqrt(ac(v)));
    trips.emplace_back(2 * (v + 1), v, -val * std::sqrt(ac(v + 1)));
  }
  SpMat m(rows, spec.nodes_1d(spec.L));
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

double reference_qoi(const LevelSpec& spec, const Coefficient& a,
                     const std::function<double(const Vec&)>& f,
                     const std::function<double(const Vec&)>& g) {
  if (spec.d != 1) return solve_qoi(spec, a, f, g);
  Vec ac = coeff_cells_1d(spec, a);
  long n = spec.nodes_1d(spec.L);
  double s = std::ldexp(1.0, spec.L);
  Vec diag(n), off(n - 1);
  for (long v = 0; v < n; ++v) diag(v) = (ac(v) + ac(v + 1)) * s;
  for (long v = 0; v + 1 < n; ++v) off(v) = -ac(v + 1) * s;
  Vec c = thomas_solve(diag, off, load_vector(spec, f));
  return load_vector(spec, g).dot(c);
}

BlockEncoding chebyshev_iterate(const BlockEncoding& b, int j) {
  int width = b.circuit.n + ancilla_span(b);
  Circuit c;
  c.n = width;
  c.registers = b.circuit.registers;
  c.registers.push_back({"refl", b.circuit.n, width - b.circuit.n});
  Circuit uinv = b.circuit.inverse();
  for (int m = 0; m < j; ++m) {
    c.append_shifted(b.circuit, 0);
    append_reflection(c, b.pi2);
    c.append_shifted(uinv, 0);
    append_reflection(c, b.pi1);
  }
  c.append_shifted(b.circuit, 0);
  BlockEncoding e;
  e.gamma = 1.0;  // encodes t_{2j+1} of the unitary corner, b.gamma ignored
  e.circuit = std::move(c);
  e.pi1 = b.pi1.padded(width);
  e.pi2 = b.pi2.padded(width);
  return e;
}

BlockEncoding chebyshev_lcu(const BlockEncoding& b, const ChebyshevPoly& p) {
  int n = b.circuit.n;
  int aspan = ancilla_span(b);
  int J = p.J;
  int w = 1;
  while ((1L << w) < J + 1) ++w;
  int sel = n + aspan;
  int cmp = sel + w;
  int width = cmp + 1;

  double lambda = 0;
  for (double cj : p.coeff) lambda += std::abs(cj);

  Circuit c;
  c.n = width;
  c.registers = b.circuit.registers;
  c.registers.push_back({"refl", n, aspan});
  c.registers.push_back({"sel", sel, w});
  c.registers.push_back({"cmp", cmp, 1});

  // select-register preparation with weights sqrt(|c_j| / lambda)
  std::vector<std::pair<uint64_t, double>> entries;
  for (int j = 0; j <= J; ++j)
    entries.emplace_back(uint64_t(j), std::sqrt(std::abs(p.coeff[j])));
  AmplitudeTable table = make_table(w, entries);
  std::vector<int> order(w);
  for (int i = 0; i < w; ++i) order[i] = sel + w - 1 - i;  // bit 0 most significant
  Circuit prep = build_prep_circuit(table, order, width);
  c.append_shifted(prep, 0);

  // signs of the coefficients, ket side only
  for (int j = 0; j <= J; ++j) {
    if (p.coeff[j] >= 0) continue;
    std::vector<int> zeros, ctrls;
    for (int bit = 1; bit < w; ++bit) {
      ctrls.push_back(sel + bit);
      if (!((j >> bit) & 1)) zeros.push_back(sel + bit);
    }
    if (!(j & 1)) zeros.push_back(sel);
    for (int q : zeros) c.x(q);
    c.z(sel, ctrls);
    for (int q : zeros) c.x(q);
  }

  // block (R1 U^dag R2 U) number m fires for every select value >= m, so the
  // branch |j> accumulates exactly j repetitions before the shared final U
  Circuit block;
  block.n = n + aspan;
  block.append_shifted(b.circuit, 0);
  append_reflection(block, b.pi2);
  block.append_shifted(b.circuit.inverse(), 0);
  append_reflection(block, b.pi1);
  Circuit gated = block.controlled({cmp});
  for (int m = 1; m <= J; ++m) {
    emit_range_flag(c, sel, w, uint64_t(m), uint64_t(J + 1), cmp);
    c.append_shifted(gated, 0);
    emit_range_flag(c, sel, w, uint64_t(m), uint64_t(J + 1), cmp);
  }
  c.append_shifted(b.circuit, 0);
  c.append_shifted(prep.inverse(), 0);

  BlockEncoding e;
  e.gamma = lambda;
  e.circuit = std::move(c);
  e.pi1 = b.pi1.padded(width);
  e.pi2 = b.pi2.padded(width);
  return e;
}

BlockEncoding qsvt_sequence(const BlockEncoding& b, const std::vector<double>& phases) {
  if (phases.empty()) throw std::invalid_argument("phase list is empty");
  int width = b.circuit.n + ancilla_span(b);
  Circuit c;
  c.n = width;
  c.registers = b.circuit.registers;
  c.registers.push_back({"refl", b.circuit.n, width - b.circuit.n});
  append_projector_phase(c, b.pi1, phases[0]);
  Circuit uinv = b.circuit.inverse();
  for (size_t k = 1; k < phases.size(); ++k) {
    if (k % 2 == 1) {
      c.append_shifted(b.circuit, 0);
      append_projector_phase(c, b.pi2, phases[k]);
    } else {
      c.append_shifted(uinv, 0);
      append_projector_phase(c, b.pi1, phases[k]);
    }
  }
  BlockEncoding e;
  e.gamma = 1.0;
  e.circuit = std::move(c);
  e.pi1 = b.pi1.padded(width);
  e.pi2 = (phases.size() % 2 == 0) ? b.pi2.padded(width) : b.pi1.padded(width);
  return e;
}

namespace {

// everything the circuit modes share: the preconditioned encoding, the
// polynomial, the state preparations and the ledger
struct PipelineParts {
  BlockEncoding poly_enc;        // LCU (or phased-sequence) encoding of p_raw
  ChebyshevPoly poly;
  PrepResult prep_m, prep_r;
  double gamma_b = 0;
  ScaleLedger ledger;            // converts the raw amplitude to the QoI
  std::vector<uint64_t> success; // admissible output states of poly_enc
};

// emulation-side operator (D_A^{1/2} (x) Id) C_F with its normalization
struct EmuOp {
  std::function<Vec(const Vec&)> apply, applyT;
  long rows = 0, cols = 0;
  double gamma = 0;
  Mat dense;  // empty on the sparse path
};

EmuOp build_emu_op(const LevelSpec& spec, const Coefficient& a) {
  EmuOp op;
  auto [alpha, beta] = a.bounds(spec);
  op.gamma = std::sqrt(beta) * 2.0 * std::sqrt(double(spec.d) * spec.L);
  if (spec.d == 1) {
    auto m = std::make_shared<SpMat>(cf_sparse(spec, a));
    op.rows = m->rows();
    op.cols = m->cols();
    double g = op.gamma;
    op.apply = [m, g](const Vec& v) { return Vec((*m * v) / g); };
    op.applyT = [m, g](const Vec& v) { return Vec((m->transpose() * v) / g); };
    if (op.cols <= 4200) op.dense = Mat(*m);
  } else {
    Mat b = coefficient_block(spec, coefficient_sqrt(a)) * cf_matrix(spec);
    op.rows = b.rows();
    op.cols = b.cols();
    auto m = std::make_shared<Mat>(std::move(b));
    double g = op.gamma;
    op.apply = [m, g](const Vec& v) { return Vec((*m * v) / g); };
    op.applyT = [m, g](const Vec& v) { return Vec((m->transpose() * v) / g); };
    op.dense = *m;
  }
  return op;
}

ChebyshevPoly make_poly(const EmuOp& op, double tol, const QoiMode& mode) {
  double kappa = mode.kappa_eff;
  if (kappa <= 0) {
    if (op.dense.size() == 0)
      throw std::invalid_argument("problem too large for a dense spectrum; pass kappa_eff");
    kappa = op.gamma / sigma_min_dense(op.dense);
  }
  if (mode.J >= 0) return inverse_poly_truncated(kappa, tol, mode.J);
  return inverse_poly(kappa, tol);
}

PipelineParts build_pipeline(const LevelSpec& spec, const Coefficient& a,
                             const std::function<double(const Vec&)>& f,
                             const std::function<double(const Vec&)>& g, double tol,
                             const QoiMode& mode) {
  auto [alpha, beta] = a.bounds(spec);
  bool identity = std::abs(beta - alpha) < 1e-14 && std::abs(alpha - 1.0) < 1e-14;
  bool constant = std::abs(beta - alpha) < 1e-14;

  BlockEncoding base = build_U_CF_optimized(spec);
  PipelineParts parts;
  parts.gamma_b = base.gamma;
  if (!identity) {
    if (constant) {
      parts.gamma_b *= std::sqrt(alpha);  // scalar square root folds classically
    } else {
      CfLayout lay = cf_layout(spec, true);
      BlockEncoding da = build_U_DA(spec, coefficient_sqrt(a), base.pi2, lay);
      base = multiply(da, base);
      parts.gamma_b = base.gamma;
    }
  }
  if (!base.subnorm_bound)
    throw std::runtime_error("encoding without a subnormalization bound; refusing to solve");

  EmuOp op = build_emu_op(spec, a);
  parts.poly = make_poly(op, tol, mode);

  BlockEncoding unit = base;
  unit.gamma = 1.0;  // the LCU acts on the unitary corner itself
  parts.poly_enc = mode.phases.empty() ? chebyshev_lcu(unit, parts.poly)
                                       : qsvt_sequence(unit, mode.phases);
  if (parts.poly_enc.circuit.n > kMaxSimQubits)
    throw std::invalid_argument("circuit path exceeds the simulable width");

  parts.prep_m = prep_preconditioned(spec, g);
  parts.prep_r = prep_preconditioned(spec, f);
  parts.success = parts.poly_enc.pi2.states();

  parts.ledger.push("poly_gamma^2", parts.poly_enc.gamma * parts.poly_enc.gamma);
  parts.ledger.push("norm_m", parts.prep_m.norm);
  parts.ledger.push("norm_r", parts.prep_r.norm);
  parts.ledger.push("gamma_B^-2", 1.0 / (parts.gamma_b * parts.gamma_b));
  return parts;
}

bool same_prep(const PrepResult& x, const PrepResult& y) {
  if (x.table.bits != y.table.bits || x.table.negative != y.table.negative) return false;
  for (size_t k = 0; k < x.table.g.size(); ++k)
    for (size_t i = 0; i < x.table.g[k].size(); ++i)
      if (std::abs(x.table.g[k][i] - y.table.g[k][i]) > 1e-14 * (1 + x.table.omega))
        return false;
  return true;
}

State run_padded(const Circuit& c, int width, const State& in) {
  Circuit padded = c;
  padded.n = width;
  return simulate(padded, in);
}

// Trajectory noise at the granularity of the assembled gate list, continuing
// from an arbitrary state. Matches the depth regime of a transpiled circuit
// rather than the much deeper generic CX decomposition, which would attenuate
// any signal at the probed error rates.
void run_noisy_gates(State& psi, const Circuit& c, int width, const NoiseModel& noise,
                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> pauli1(0, 2);
  std::uniform_int_distribution<int> pauli2(1, 15);
  auto insert_pauli = [&](int q, int which) {
    static const GateKind ks[3] = {GateKind::X, GateKind::Y, GateKind::Z};
    Gate p{ks[which], {q}, {}};
    apply_gate(psi, p, width);
  };
  for (const auto& g : c.gates) {
    apply_gate(psi, g, width);
    bool two = !g.controls.empty() || g.targets.size() > 1;
    double eps = two ? noise.eps2 : noise.eps1;
    if (eps > 0 && u01(rng) < eps) {
      int qa = g.controls.empty() ? g.targets.back() : g.controls[0];
      if (two) {
        int p = pauli2(rng);
        int pc = p / 4, pt = p % 4;
        if (pc) insert_pauli(qa, pc - 1);
        if (pt) insert_pauli(g.targets[0], pt - 1);
      } else {
        insert_pauli(g.targets[0], pauli1(rng));
      }
    }
  }
}

// full measurement circuit; selector only when the two preparations differ
struct MeasCircuit {
  Circuit circuit;
  int width = 0;
  bool selector = false;
  std::unordered_set<uint64_t> success;
};

MeasCircuit build_meas_circuit(const PipelineParts& parts) {
  MeasCircuit mc;
  int n = parts.poly_enc.circuit.n;
  mc.selector = !same_prep(parts.prep_m, parts.prep_r);
  mc.width = n + (mc.selector ? 1 : 0);
  mc.circuit.n = mc.width;
  mc.circuit.registers = parts.poly_enc.circuit.registers;
  if (mc.selector) {
    int sel = n;
    mc.circuit.registers.push_back({"obs", sel, 1});
    mc.circuit.h(sel);
    mc.circuit.x(sel);
    mc.circuit.append_shifted(parts.prep_m.circuit.controlled({sel}), 0);
    mc.circuit.x(sel);
    mc.circuit.append_shifted(parts.prep_r.circuit.controlled({sel}), 0);
    mc.circuit.append_shifted(parts.poly_enc.circuit, 0);
    mc.circuit.h(sel);
  } else {
    mc.circuit.append_shifted(parts.prep_r.circuit, 0);
    mc.circuit.append_shifted(parts.poly_enc.circuit, 0);
  }
  mc.success.insert(parts.success.begin(), parts.success.end());
  return mc;
}

// probability difference P(success, sel=0) - P(success, sel=1); without a
// selector simply P(success)
double probability_difference(const State& psi, const MeasCircuit& mc, int enc_width) {
  double p = 0;
  uint64_t selbit = uint64_t(1) << enc_width;
  for (uint64_t s = 0; s < psi.size(); ++s) {
    double w = std::norm(psi[s]);
    if (w == 0) continue;
    uint64_t base = s & (selbit - 1);
    if (!mc.success.count(base)) continue;
    if (mc.selector && (s & selbit))
      p -= w;
    else
      p += w;
  }
  return p;
}

double counts_difference(const Counts& counts, const MeasCircuit& mc, int enc_width,
                         long shots) {
  uint64_t selbit = uint64_t(1) << enc_width;
  long plus = 0, minus = 0;
  for (const auto& [s, cnt] : counts) {
    uint64_t base = s & (selbit - 1);
    if (!mc.success.count(base)) continue;
    if (mc.selector && (s & selbit))
      minus += cnt;
    else
      plus += cnt;
  }
  return double(plus - minus) / double(shots);
}

}  // namespace

std::vector<double> noisy_qoi_runs(const LevelSpec& spec, const Coefficient& a,
                                   const std::function<double(const Vec&)>& f,
                                   const std::function<double(const Vec&)>& g,
                                   double tol, const QoiMode& mode) {
  PipelineParts parts = build_pipeline(spec, a, f, g, tol, mode);
  NoiseModel noise(mode.eps2);
  std::mt19937_64 rng(mode.seed);
  int T = std::max(1, mode.traj_per_run);
  std::vector<double> out;
  out.reserve(mode.runs);

  if (!same_prep(parts.prep_m, parts.prep_r)) {
    // distinct functionals: selector-difference estimator on trajectories
    MeasCircuit mc = build_meas_circuit(parts);
    int enc_width = parts.poly_enc.circuit.n;
    double scale = parts.ledger.product();
    State clean;  // shared across runs when there is no noise
    if (mode.eps2 == 0) clean = simulate(mc.circuit);
    for (int run = 0; run < mode.runs; ++run) {
      long plus = 0, minus = 0;
      for (int t = 0; t < T; ++t) {
        long st = mode.shots / T + (t < mode.shots % T ? 1 : 0);
        if (st == 0) continue;
        State psi;
        if (mode.eps2 == 0) {
          psi = clean;
        } else {
          psi = basis_state(mc.width, 0);
          run_noisy_gates(psi, mc.circuit, mc.width, noise, rng);
        }
        double p0 = 0, p1 = 0;
        uint64_t selbit = uint64_t(1) << enc_width;
        for (uint64_t s = 0; s < psi.size(); ++s) {
          double w = std::norm(psi[s]);
          if (w == 0 || !mc.success.count(s & (selbit - 1))) continue;
          (mc.selector && (s & selbit)) ? p1 += w : p0 += w;
        }
        // multinomial over (success & sel=0, success & sel=1, rest)
        long h0 = std::binomial_distribution<long>(st, std::clamp(p0, 0.0, 1.0))(rng);
        double q = p0 < 1.0 ? std::clamp(p1 / (1.0 - p0), 0.0, 1.0) : 0.0;
        long h1 = std::binomial_distribution<long>(st - h0, q)(rng);
        plus += h0;
        minus += h1;
      }
      out.push_back(double(plus - minus) / double(mode.shots) * scale);
    }
    return out;
  }

  // identical functionals: post-selected two-stage estimator. Measure the
  // admissible outputs of the solve (stage 1), keep only the surviving shots,
  // run the frame encoding backwards and measure its admissible inputs
  // (stage 2). The conditional success probability P2 satisfies
  //   QoI = |r~|^2 / (gamma_B^2 * P2),
  // independent of the solve's own success amplitude, so shots scrambled by a
  // stage-1 error are mostly discarded instead of biasing the estimate.
  int width = parts.poly_enc.circuit.n;
  Circuit stage1;
  stage1.n = width;
  stage1.registers = parts.poly_enc.circuit.registers;
  stage1.append_shifted(parts.prep_r.circuit, 0);
  stage1.append_shifted(parts.poly_enc.circuit, 0);
  BlockEncoding base = build_U_CF_optimized(spec);
  Circuit stage2;
  stage2.n = width;
  stage2.append_shifted(base.circuit.inverse(), 0);
  std::unordered_set<uint64_t> ok1(parts.success.begin(), parts.success.end());
  const auto& in_states = base.pi1.states();  // upper qubits are 0 after stage 1
  std::unordered_set<uint64_t> ok2(in_states.begin(), in_states.end());
  double c0 = parts.prep_m.norm * parts.prep_r.norm / (parts.gamma_b * parts.gamma_b);

  double cp1 = 0, cp2 = 0;  // noiseless stage probabilities
  {
    State psi = simulate(stage1);
    for (uint64_t s : ok1) cp1 += std::norm(psi[s]);
    State proj(psi.size(), 0.0);
    for (uint64_t s : ok1) proj[s] = psi[s] / std::sqrt(cp1);
    State back = simulate(stage2, proj);
    for (uint64_t s : ok2) cp2 += std::norm(back[s]);
  }

  // pre-scan of the insertion decisions: trajectories without any insertion
  // reuse the noiseless probabilities (same trick as the shot sampler)
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto scan_clean = [&](std::mt19937_64& probe) {
    for (const Circuit* c : {&stage1, &stage2})
      for (const auto& g : c->gates) {
        bool two = !g.controls.empty() || g.targets.size() > 1;
        double eps = two ? noise.eps2 : noise.eps1;
        if (eps > 0 && u01(probe) < eps) return false;
      }
    return true;
  };

  for (int run = 0; run < mode.runs; ++run) {
    long h1 = 0, h2 = 0;
    for (int t = 0; t < T; ++t) {
      long st = mode.shots / T + (t < mode.shots % T ? 1 : 0);
      if (st == 0) continue;
      double p1 = cp1, p2 = cp2;
      if (mode.eps2 != 0) {
        std::mt19937_64 probe = rng;
        if (scan_clean(probe)) {
          rng = probe;  // consumed exactly the per-gate decisions
        } else {
          State psi = basis_state(width, 0);
          run_noisy_gates(psi, stage1, width, noise, rng);
          p1 = 0;
          for (uint64_t s : ok1) p1 += std::norm(psi[s]);
          if (p1 < 1e-300) continue;  // nothing survives the measurement
          State proj(psi.size(), 0.0);
          for (uint64_t s : ok1) proj[s] = psi[s] / std::sqrt(p1);
          run_noisy_gates(proj, stage2, width, noise, rng);
          p2 = 0;
          for (uint64_t s : ok2) p2 += std::norm(proj[s]);
        }
      }
      long s1 = std::binomial_distribution<long>(st, std::clamp(p1, 0.0, 1.0))(rng);
      long s2 =
          s1 > 0 ? std::binomial_distribution<long>(s1, std::clamp(p2, 0.0, 1.0))(rng) : 0;
      h1 += s1;
      h2 += s2;
    }
    double phat = (h2 + 0.5) / (h1 + 1.0);  // smoothed to keep the ratio finite
    out.push_back(c0 / phat);
  }
  return out;
}

bool noisy_two_stage(const LevelSpec& spec, const std::function<double(const Vec&)>& f,
                     const std::function<double(const Vec&)>& g) {
  return same_prep(prep_preconditioned(spec, g), prep_preconditioned(spec, f));
}

QoiResult qoi_pipeline(const LevelSpec& spec, const Coefficient& a,
                       const std::function<double(const Vec&)>& f,
                       const std::function<double(const Vec&)>& g, double tol,
                       const QoiMode& mode) {
  spec.validate();
  QoiResult res;
  res.reference = reference_qoi(spec, a, f, g);

  if (mode.kind == QoiMode::emulation) {
    EmuOp op = build_emu_op(spec, a);
    res.poly = make_poly(op, tol, mode);
    Vec mt = ftr_vector(spec, g);
    Vec rt = ftr_vector(spec, f);
    res.ledger.push("poly_scale^2", res.poly.scale * res.poly.scale);
    res.ledger.push("norm_m", mt.norm());
    res.ledger.push("norm_r", rt.norm());
    res.ledger.push("gamma_B^-2", 1.0 / (op.gamma * op.gamma));
    Vec um = apply_poly_matrix(res.poly, op.apply, op.applyT, Vec(mt / mt.norm()));
    Vec ur = apply_poly_matrix(res.poly, op.apply, op.applyT, Vec(rt / rt.norm()));
    double raw = um.dot(ur) / (res.poly.scale * res.poly.scale);
    res.estimate = raw * res.ledger.product();
  } else if (mode.kind == QoiMode::exact_amplitude) {
    PipelineParts parts = build_pipeline(spec, a, f, g, tol, mode);
    res.poly = parts.poly;
    res.ledger = parts.ledger;
    int width = parts.poly_enc.circuit.n;
    State pm = run_padded(parts.prep_m.circuit, width, basis_state(width, 0));
    State pr = run_padded(parts.prep_r.circuit, width, basis_state(width, 0));
    State um = simulate(parts.poly_enc.circuit, pm);
    State ur = simulate(parts.poly_enc.circuit, pr);
    std::complex<double> amp = 0;
    for (uint64_t s : parts.success) amp += std::conj(um[s]) * ur[s];
    res.estimate = amp.real() * res.ledger.product();
  } else if (mode.kind == QoiMode::sampled) {
    PipelineParts parts = build_pipeline(spec, a, f, g, tol, mode);
    res.poly = parts.poly;
    res.ledger = parts.ledger;
    MeasCircuit mc = build_meas_circuit(parts);
    State psi = simulate(mc.circuit);
    Counts counts = sample(psi, mode.shots, mode.seed);
    double diff = counts_difference(counts, mc, parts.poly_enc.circuit.n, mode.shots);
    res.estimate = diff * res.ledger.product();
    res.stderr_est = res.ledger.product() * std::sqrt(1.0 / mode.shots);
  } else {
    std::vector<double> runs = noisy_qoi_runs(spec, a, f, g, tol, mode);
    if (noisy_two_stage(spec, f, g)) {
      // run values are c0 / P2-hat: average on the probability scale and
      // invert, so the reciprocal's heavy tail does not bias the mean
      double mi = 0;
      for (double v : runs) mi += 1.0 / v;
      mi /= runs.size();
      double vi = 0;
      for (double v : runs) vi += (1.0 / v - mi) * (1.0 / v - mi);
      double si = runs.size() > 1 ? std::sqrt(vi / (runs.size() - 1.0) / runs.size()) : 0;
      res.estimate = 1.0 / mi;
      res.stderr_est = si * res.estimate * res.estimate;
    } else {
      double mean = std::accumulate(runs.begin(), runs.end(), 0.0) / runs.size();
      double var = 0;
      for (double v : runs) var += (v - mean) * (v - mean);
      res.estimate = mean;
      res.stderr_est =
          runs.size() > 1 ? std::sqrt(var / (runs.size() - 1.0) / runs.size()) : 0;
    }
    QoiMode emu = mode;
    emu.kind = QoiMode::emulation;
    res.poly = qoi_pipeline(spec, a, f, g, tol, emu).poly;
  }

  res.steps = 2L * res.poly.J + 1;
  res.rel_error = std::abs(res.estimate - res.reference) / std::abs(res.reference);
  return res;
}

NormEstimate norm_estimate(const LevelSpec& spec, const Coefficient& a,
                           const std::function<double(const Vec&)>& f, double tol,
                           const QoiMode& mode) {
  NormEstimate out;
  if (mode.kind == QoiMode::emulation) {
    EmuOp op = build_emu_op(spec, a);
    ChebyshevPoly poly = make_poly(op, tol, mode);
    Vec rt = ftr_vector(spec, f);
    Vec u = apply_poly_matrix(poly, op.apply, op.applyT, rt);
    out.value = u.norm() / op.gamma;
    return out;
  }

  PipelineParts parts = build_pipeline(spec, a, f, f, tol, mode);
  int width = parts.poly_enc.circuit.n;
  State pr = run_padded(parts.prep_r.circuit, width, basis_state(width, 0));
  State ur = simulate(parts.poly_enc.circuit, pr);
  double psucc = 0;
  for (uint64_t s : parts.success) psucc += std::norm(ur[s]);

  if (mode.kind == QoiMode::exact_amplitude) {
    // project onto the admissible outputs, renormalize, run the frame
    // encoding backwards and overlap with the input state: the amplitude is
    // |r~| / (gamma_B |solution|)
    State proj(ur.size(), 0.0);
    for (uint64_t s : parts.success) proj[s] = ur[s];
    double nrm = std::sqrt(psucc);
    for (auto& z : proj) z /= nrm;
    // rebuild the bare frame encoding at this width for the back-application
    BlockEncoding base = build_U_CF_optimized(spec);
    State back = run_padded(base.circuit.inverse(), width, proj);
    std::complex<double> amp = 0;
    for (uint64_t s = 0; s < back.size(); ++s) amp += std::conj(pr[s]) * back[s];
    out.value = parts.prep_r.norm / (parts.gamma_b * amp.real());
    return out;
  }

  // sampled / noisy: success probability of the solve
  double lam = parts.poly_enc.gamma;
  auto to_value = [&](double p) {
    return parts.prep_r.norm * std::sqrt(std::max(p, 0.0)) * lam / parts.gamma_b;
  };
  if (mode.kind == QoiMode::sampled) {
    MeasCircuit mc = build_meas_circuit(parts);
    State psi = simulate(mc.circuit);
    Counts counts = sample(psi, mode.shots, mode.seed);
    long hits = 0;
    for (const auto& [s, cnt] : counts)
      if (mc.success.count(s)) hits += cnt;
    double p = double(hits) / double(mode.shots);
    out.value = to_value(p);
    double sp = std::sqrt(std::max(p * (1 - p), 1e-12) / mode.shots);
    out.stderr_est = p > 0 ? out.value * 0.5 * sp / p : 0.0;
    return out;
  }

  // noisy: post-selected two-stage runs as in the QoI estimator, with
  // |solution| = |r~| / (gamma_B sqrt(P2)); aggregate on the probability scale
  std::vector<double> runs = noisy_qoi_runs(spec, a, f, f, tol, mode);
  double mi = 0;
  for (double v : runs) mi += 1.0 / v;
  mi /= runs.size();
  double vi = 0;
  for (double v : runs) vi += (1.0 / v - mi) * (1.0 / v - mi);
  double si = runs.size() > 1 ? std::sqrt(vi / (runs.size() - 1.0) / runs.size()) : 0;
  out.value = std::sqrt(1.0 / mi);
  out.stderr_est = 0.5 * si * out.value / mi;  // delta method through 1/sqrt
  return out;
}

SearchResult kappa_eff_search(const LevelSpec& spec, double tol, bool preconditioned) {
  spec.validate();
  if (spec.d == 2 && spec.L > 5)
    throw std::invalid_argument("d=2 condition sweep capped at L=5 (dense factors)");
  if (spec.d > 2) throw std::invalid_argument("the condition sweep covers d <= 2");
  Coefficient a = Coefficient::identity(spec.d);
  auto one = [](const Vec&) { return 1.0; };
  std::function<Vec(const Vec&)> ap, apT;
  // Gershgorin row-sum bound on B^T B: a certified singular-value bound is
  // essential here -- an iterative estimate that undershoots puts singular
  // values of B/gamma outside [-1,1] and the Chebyshev recurrence diverges
  double gamma;
  if (spec.d == 1) {
    auto b = std::make_shared<SpMat>(preconditioned ? cf_sparse(spec, a) : cl_sparse(spec, a));
    SpMat s = SpMat(b->transpose() * *b);
    double row_max = 0;
    for (long c = 0; c < s.outerSize(); ++c) {
      double acc = 0;
      for (SpMat::InnerIterator it(s, c); it; ++it) acc += std::abs(it.value());
      row_max = std::max(row_max, acc);
    }
    gamma = std::sqrt(row_max);
    ap = [b](const Vec& v) { return Vec(*b * v); };
    apT = [b](const Vec& v) { return Vec(b->transpose() * v); };
  } else {
    auto b = std::make_shared<Mat>(preconditioned ? cf_matrix(spec)
                                                  : gradient_matrix(spec, spec.L));
    Mat s = b->transpose() * *b;
    gamma = std::sqrt(s.cwiseAbs().rowwise().sum().maxCoeff());
    ap = [b](const Vec& v) { return Vec(*b * v); };
    apT = [b](const Vec& v) { return Vec(b->transpose() * v); };
  }
  Vec rt = preconditioned ? ftr_vector(spec, one) : load_vector(spec, one);
  double ref = reference_qoi(spec, a, one, one);

  // one Chebyshev sweep per candidate kappa: partial sums give the estimate
  // for every J at once; the first J within tolerance wins
  auto sweep = [&](double kappa, int max_j = INT_MAX) -> std::optional<SearchResult> {
    // the polynomial's sup error on 1/z is amplified by up to kappa in the
    // quantity of interest, so build with a tighter tolerance than the target
    ChebyshevPoly poly = inverse_poly(kappa, tol / kappa);
    Vec a1 = ap(rt) / gamma;
    Vec b1 = Vec::Zero(rt.size());
    Vec a0 = Vec::Zero(a1.size());
    Vec b0 = rt;
    Vec u = poly.coeff[0] * a1;
    // a partial sum can graze the target while still oscillating, so demand
    // the error stays within tolerance for a run of consecutive degrees (or
    // through the end of the expansion) before calling the degree converged
    const int stable_run = 10;
    std::optional<SearchResult> hit;
    int streak = 0;
    auto check = [&](int j) -> bool {
      double est = u.dot(u) / (gamma * gamma);
      double rel = std::abs(est - ref) / std::abs(ref);
      if (rel <= tol) {
        if (!hit) hit = SearchResult{j, kappa, 2L * j + 1, rel};
        return ++streak >= stable_run;
      }
      hit.reset();
      streak = 0;
      return false;
    };
    if (check(0)) return hit;
    long kmax = std::min<long>(2L * poly.J + 1, 2L * (long(max_j) + stable_run) + 1);
    for (long k = 2; k <= kmax; ++k) {
      Vec a2 = 2.0 * ap(b1) / gamma - a0;
      Vec b2 = 2.0 * apT(a1) / gamma - b0;
      a0 = a1; b0 = b1; a1 = a2; b1 = b2;
      if (k % 2 == 1) {
        u += poly.coeff[k / 2] * a1;
        if (check(k / 2)) return hit;
      }
    }
    if (hit && hit->J > max_j) hit.reset();  // capped scan: not a usable hit
    return hit;  // else the tail stayed within tolerance to the end
  };

  double lo = 1.0, hi = 2.0;
  std::optional<SearchResult> best = sweep(hi);
  while (!best && hi < 1e7) {
    lo = hi;
    hi *= 2;
    try {
      best = sweep(hi);
    } catch (const std::invalid_argument&) {
      break;  // polynomial parameters out of range: nothing feasible above
    }
  }
  if (!best) throw std::runtime_error("no feasible kappa_eff found");
  // fine grid around the feasibility threshold: steps are not monotone in
  // kappa (a longer expansion can reach the target at a smaller degree), so
  // scan an octave below and two above the first feasible candidate
  for (int k = -7; k <= 8; ++k) {
    double cand = hi * std::pow(2.0, k / 8.0);
    if (cand <= 1.0) continue;
    try {
      if (auto r = sweep(cand, best->J))
        if (r->steps < best->steps || (r->steps == best->steps && cand < best->kappa_eff))
          best = r;
    } catch (const std::invalid_argument&) {
      break;
    }
  }
  return *best;
}

}  // namespace qbpx
