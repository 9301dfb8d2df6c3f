#pragma once
// Shared randomized-test machinery for the block-encoding calculus: random
// sub-unitary encodings with random admissible-range projections, dense
// mirrors of every composition rule, and per-rule error evaluation.

#include <optional>
#include <random>

#include "qbpx/encoding.hpp"
#include "qbpx/simulate.hpp"

namespace qbpx_test {

using namespace qbpx;
using cd = std::complex<double>;

inline Eigen::MatrixXcd haar_unitary(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = cd(g(rng), g(rng));
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
  Eigen::MatrixXcd q = qr.householderQ();
  Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < dim; ++i) q.col(i) *= r(i, i) / std::abs(r(i, i));
  return q;
}

inline Circuit random_gate_circuit(int nq, int len, std::mt19937_64& rng) {
  Circuit c;
  c.add_register("q", nq);
  std::uniform_int_distribution<int> qd(0, nq - 1), kind(0, 5);
  std::uniform_real_distribution<double> ang(-3.0, 3.0);
  for (int i = 0; i < len; ++i) {
    int t = qd(rng);
    std::vector<int> ctrls;
    if (nq > 1 && kind(rng) < 3) {
      int cq = qd(rng);
      if (cq != t) ctrls = {cq};
    }
    switch (kind(rng)) {
      case 0: c.h(t, ctrls); break;
      case 1: c.ry(t, ang(rng), ctrls); break;
      case 2: c.rz(t, ang(rng), ctrls); break;
      case 3: c.x(t, ctrls); break;
      case 4: c.u2(t, haar_unitary(2, rng).topLeftCorner<2, 2>(), ctrls); break;
      default: c.z(t, ctrls); break;
    }
  }
  return c;
}

inline Projection random_projection(int nq, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> widd(1, nq);
  std::vector<Segment> segs;
  int q = 0;
  while (q < nq) {
    int w = std::min(widd(rng), nq - q);
    std::uniform_int_distribution<uint64_t> lod(0, (uint64_t(1) << w) - 1);
    uint64_t lo = lod(rng);
    std::uniform_int_distribution<uint64_t> hid(lo + 1, uint64_t(1) << w);
    segs.push_back({q, w, lo, hid(rng)});
    q += w;
  }
  return Projection::product(nq, std::move(segs));
}

struct RandomEnc {
  BlockEncoding enc;
  Eigen::MatrixXcd dense;
};

inline RandomEnc random_encoding(std::mt19937_64& rng, int nq,
                                 std::optional<Projection> pi1 = std::nullopt,
                                 std::optional<Projection> pi2 = std::nullopt) {
  std::uniform_real_distribution<double> gd(0.5, 2.5);
  RandomEnc r;
  r.enc.circuit = random_gate_circuit(nq, 4 * nq, rng);
  r.enc.pi1 = pi1 ? *pi1 : random_projection(nq, rng);
  r.enc.pi2 = pi2 ? *pi2 : random_projection(nq, rng);
  r.enc.gamma = gd(rng);
  r.dense = extract_matrix(r.enc);
  double norm = r.dense.jacobiSvd().singularValues()(0);
  r.enc.norm_hint = norm;
  if (norm > 1e-12) r.enc.subnorm_bound = r.enc.gamma / norm * (1 + 1e-12);
  return r;
}

inline double max_err(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double unitarity_defect(const Circuit& c) {
  Eigen::MatrixXcd u = circuit_unitary(c);
  return (u.adjoint() * u - Eigen::MatrixXcd::Identity(u.rows(), u.cols()))
      .cwiseAbs()
      .maxCoeff();
}

struct RuleResult {
  double err = 0;        // extraction vs dense mirror
  double unit = 0;       // unitarity defect of the composed circuit
  double subnorm_ok = 1; // 0 when a tracked bound is violated
};

inline void check_subnorm(const BlockEncoding& e, RuleResult& r) {
  if (!e.subnorm_bound) return;
  Eigen::MatrixXcd m = extract_matrix(e);
  double norm = m.jacobiSvd().singularValues()(0);
  if (norm > 1e-9 && *e.subnorm_bound < e.gamma / norm - 1e-8) r.subnorm_ok = 0;
}

inline RuleResult run_rule(const std::string& rule, std::mt19937_64& rng) {
  RuleResult res;
  std::uniform_int_distribution<int> nd(1, 3);
  if (rule == "tensor") {
    auto a = random_encoding(rng, nd(rng)), b = random_encoding(rng, nd(rng));
    BlockEncoding t = tensor(a.enc, b.enc);
    Eigen::MatrixXcd want(a.dense.rows() * b.dense.rows(), a.dense.cols() * b.dense.cols());
    for (long i = 0; i < a.dense.rows(); ++i)
      for (long j = 0; j < a.dense.cols(); ++j)
        want.block(i * b.dense.rows(), j * b.dense.cols(), b.dense.rows(), b.dense.cols()) =
            a.dense(i, j) * b.dense;
    res.err = max_err(extract_matrix(t), want);
    res.unit = unitarity_defect(t.circuit);
    check_subnorm(t, res);
  } else if (rule == "adjoint") {
    auto a = random_encoding(rng, nd(rng) + 1);
    BlockEncoding t = adjoint(a.enc);
    res.err = max_err(extract_matrix(t), a.dense.adjoint());
    res.err = std::max(res.err, max_err(extract_matrix(adjoint(t)), a.dense));
    res.unit = unitarity_defect(t.circuit);
    check_subnorm(t, res);
  } else if (rule == "block_diag") {
    auto a = random_encoding(rng, nd(rng)), b = random_encoding(rng, nd(rng));
    BlockEncoding t = block_diag(a.enc, b.enc);
    Eigen::MatrixXcd want = Eigen::MatrixXcd::Zero(a.dense.rows() + b.dense.rows(),
                                                   a.dense.cols() + b.dense.cols());
    want.topLeftCorner(a.dense.rows(), a.dense.cols()) = a.dense;
    want.bottomRightCorner(b.dense.rows(), b.dense.cols()) = b.dense;
    res.err = max_err(extract_matrix(t), want);
    res.unit = unitarity_defect(t.circuit);
    check_subnorm(t, res);
  } else if (rule == "multiply") {
    int nq = nd(rng) + 1;
    Projection inner = random_projection(nq, rng);
    auto a = random_encoding(rng, nq, inner, std::nullopt);
    auto b = random_encoding(rng, nq, std::nullopt, inner);
    BlockEncoding t = multiply(a.enc, b.enc);
    res.err = max_err(extract_matrix(t), a.dense * b.dense);
    res.unit = unitarity_defect(t.circuit);
    check_subnorm(t, res);
  } else if (rule == "hconcat") {
    int nq = nd(rng) + 1;
    Projection range = random_projection(nq, rng);
    auto a = random_encoding(rng, nq, std::nullopt, range);
    auto b = random_encoding(rng, nq, std::nullopt, range);
    BlockEncoding t = hconcat(a.enc, b.enc);
    Eigen::MatrixXcd want(a.dense.rows(), a.dense.cols() + b.dense.cols());
    want << a.dense, b.dense;
    res.err = max_err(extract_matrix(t), want);
    res.unit = unitarity_defect(t.circuit);
    check_subnorm(t, res);
  } else if (rule == "add") {
    int nq = nd(rng) + 1;
    Projection p1 = random_projection(nq, rng), p2 = random_projection(nq, rng);
    auto a = random_encoding(rng, nq, p1, p2);
    auto b = random_encoding(rng, nq, p1, p2);
    std::uniform_real_distribution<double> mud(-1.5, 1.5);
    double ma = mud(rng), mb = mud(rng);
    if (std::abs(ma) + std::abs(mb) < 1e-3) ma = 1.0;
    BlockEncoding t = add(ma, a.enc, mb, b.enc);
    res.err = max_err(extract_matrix(t), ma * a.dense + mb * b.dense);
    res.unit = unitarity_defect(t.circuit);
    check_subnorm(t, res);
  } else if (rule == "controlled_block_diag") {
    int selw = nd(rng) > 2 ? 2 : 1, mb = 2;
    uint64_t nblocks = uint64_t(1) << selw;
    std::vector<Circuit> blocks;
    for (uint64_t j = 0; j < nblocks; ++j) blocks.push_back(random_gate_circuit(mb, 6, rng));
    Projection pi = random_projection(mb, rng);
    BlockEncoding t = controlled_block_diag(
        selw, 1.0, pi, pi, [&](uint64_t j) { return blocks[j]; });
    long bs_r = pi.size(), bs_c = pi.size();
    Eigen::MatrixXcd want = Eigen::MatrixXcd::Zero(nblocks * bs_r, nblocks * bs_c);
    for (uint64_t j = 0; j < nblocks; ++j) {
      BlockEncoding be{1.0, blocks[j], pi, pi, {}, {}};
      want.block(j * bs_r, j * bs_c, bs_r, bs_c) = extract_matrix(be);
    }
    res.err = max_err(extract_matrix(t), want);
    res.unit = unitarity_defect(t.circuit);
  } else {
    throw std::invalid_argument("unknown rule " + rule);
  }
  return res;
}

}  // namespace qbpx_test
