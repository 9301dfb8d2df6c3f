#include "qbpx/state_prep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "qbpx/cf_encoding.hpp"

namespace qbpx {

namespace {

// 4-point Gauss-Legendre on [0,1]
constexpr int kQ = 4;
const double kQx[kQ] = {0.5 - 0.8611363115940526 / 2, 0.5 - 0.3399810435848563 / 2,
                        0.5 + 0.3399810435848563 / 2, 0.5 + 0.8611363115940526 / 2};
const double kQw[kQ] = {0.3478548451374538 / 2, 0.6521451548625461 / 2,
                        0.6521451548625461 / 2, 0.3478548451374538 / 2};

}  // namespace

Vec inner_products(const LevelSpec& spec, int ell,
                   const std::function<double(const Vec&)>& f) {
  spec.validate();
  int d = spec.d;
  long nc = 1L << ell, nn = nc - 1;
  double h = spec.h(ell);
  long nv = 1;
  for (int i = 0; i < d; ++i) nv *= nn;
  Vec out = Vec::Zero(nv);
  std::vector<long> j(d, 0);
  long ncells = 1;
  for (int i = 0; i < d; ++i) ncells *= nc;
  Vec x(d);
  std::vector<int> q(d, 0);
  for (long cl = 0; cl < ncells; ++cl) {
    long nq = 1;
    for (int i = 0; i < d; ++i) nq *= kQ;
    std::fill(q.begin(), q.end(), 0);
    for (long ql = 0; ql < nq; ++ql) {
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        x[i] = (j[i] + kQx[q[i]]) * h;
        w *= kQw[q[i]] * h;
      }
      double fv = w * f(x);
      // the two hats alive in this cell per axis: falling of node j-1, rising of node j
      for (long cmb = 0; cmb < (1L << d); ++cmb) {
        double val = fv;
        long lin = 0;
        bool ok = true;
        for (int i = 0; i < d && ok; ++i) {
          long v = j[i] - 1 + ((cmb >> i) & 1);
          if (v < 0 || v >= nn) {
            ok = false;
            break;
          }
          double t = x[i] / h;
          val *= ((cmb >> i) & 1) ? t - j[i] : j[i] + 1 - t;
          lin = lin * nn + v;
        }
        if (ok) out[lin] += val;
      }
      for (int i = d - 1; i >= 0 && ++q[i] == kQ; --i) q[i] = 0;
    }
    for (int i = d - 1; i >= 0 && ++j[i] == nc; --i) j[i] = 0;
  }
  return out;
}

namespace {

// node block [a, b) -> plateau value at t (in units of cells)
double plateau(double t, long a, long b) {
  return std::max(0.0, std::min({1.0, t - a, double(b) + 1.0 - t}));
}

}  // namespace

double half_hat_sums(const LevelSpec& spec, int ell, int k, uint64_t x,
                     const std::function<double(const Vec&)>& f) {
  spec.validate();
  int d = spec.d;
  if (k < 1 || k > d * ell) throw std::invalid_argument("half_hat_sums: bad prefix length");
  long nc = 1L << ell, nn = nc - 1;
  double h = spec.h(ell);
  // per-dimension node ranges from the concatenated-register prefix
  std::vector<long> a(d), b(d);
  for (int i = 0; i < d; ++i) {
    int p = std::clamp(k - i * ell, 0, ell);
    uint64_t y = p ? (x >> (k - (i * ell + p))) & ((uint64_t(1) << p) - 1) : 0;
    a[i] = long(y) << (ell - p);
    b[i] = std::min<long>((long(y) + 1) << (ell - p), nn);
    if (a[i] >= nn) return 0.0;
  }
  // integrate f times the product of plateau functions over the support box
  double total = 0.0;
  std::vector<long> c(d);
  std::vector<int> q(d);
  for (int i = 0; i < d; ++i) c[i] = a[i];
  Vec xx(d);
  while (true) {
    std::fill(q.begin(), q.end(), 0);
    long nq = 1;
    for (int i = 0; i < d; ++i) nq *= kQ;
    for (long ql = 0; ql < nq; ++ql) {
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        double t = c[i] + kQx[q[i]];
        xx[i] = t * h;
        w *= kQw[q[i]] * h * plateau(t, a[i], b[i]);
      }
      if (w != 0.0) total += w * f(xx);
      for (int i = d - 1; i >= 0 && ++q[i] == kQ; --i) q[i] = 0;
    }
    int i = d - 1;
    while (i >= 0) {
      if (++c[i] <= std::min(b[i], nc - 1)) break;
      c[i] = a[i];
      --i;
    }
    if (i < 0) break;
  }
  return total;
}

HalfHatTables make_half_hat_tables(const LevelSpec& spec, int ell,
                                   const std::function<double(const Vec&)>& f) {
  if (spec.d != 1) throw std::invalid_argument("half-hat tables are one-dimensional");
  long nc = 1L << ell;
  double h = spec.h(ell);
  HalfHatTables t;
  t.ell = ell;
  t.up.resize(nc);
  t.dn.resize(nc);
  t.cum.assign(nc + 1, 0.0);
  Vec x(1);
  for (long j = 0; j < nc; ++j) {
    double up = 0, dn = 0, full = 0;
    for (int q = 0; q < kQ; ++q) {
      x[0] = (j + kQx[q]) * h;
      double w = kQw[q] * h * f(x);
      up += w * kQx[q];
      dn += w * (1.0 - kQx[q]);
      full += w;
    }
    t.up[j] = up;
    t.dn[j] = dn;
    t.cum[j + 1] = t.cum[j] + full;
  }
  return t;
}

double half_hat_sums(const HalfHatTables& tables, int k, uint64_t x) {
  long ell = tables.ell, nn = (1L << ell) - 1;
  if (k < 1 || k > ell) throw std::invalid_argument("half_hat_sums: bad prefix length");
  long a = long(x) << (ell - k);
  long b = std::min<long>((long(x) + 1) << (ell - k), nn);
  if (a >= nn) return 0.0;
  return tables.up[a] + (tables.cum[b] - tables.cum[a + 1]) + tables.dn[b];
}

void AmplitudeTable::validate() const {
  if (int(g.size()) != bits + 1) throw std::invalid_argument("table: level count mismatch");
  for (int k = 0; k <= bits; ++k)
    if (g[k].size() != (size_t(1) << k)) throw std::invalid_argument("table: level size");
  for (int k = 1; k <= bits; ++k)
    for (size_t p = 0; p < g[k - 1].size(); ++p) {
      if (g[k][2 * p] < 0 || g[k][2 * p + 1] < 0)
        throw std::invalid_argument("table: negative mass");
      if (std::abs(g[k - 1][p] - g[k][2 * p] - g[k][2 * p + 1]) > 1e-12 * std::max(1.0, omega))
        throw std::invalid_argument("table: parent-child inconsistency");
    }
}

AmplitudeTable make_table(int bits, const std::vector<std::pair<uint64_t, double>>& entries) {
  if (bits < 1 || bits > 24) throw std::invalid_argument("make_table: bits out of range");
  AmplitudeTable t;
  t.bits = bits;
  t.g.resize(bits + 1);
  for (int k = 0; k <= bits; ++k) t.g[k].assign(size_t(1) << k, 0.0);
  t.negative.assign(size_t(1) << bits, false);
  for (const auto& [idx, amp] : entries) {
    if (idx >> bits) throw std::invalid_argument("make_table: index out of range");
    t.g[bits][idx] = amp * amp;
    t.negative[idx] = amp < 0;
  }
  for (int k = bits; k > 0; --k)
    for (size_t p = 0; p < t.g[k - 1].size(); ++p)
      t.g[k - 1][p] = t.g[k][2 * p] + t.g[k][2 * p + 1];
  t.omega = t.g[0][0];
  if (t.omega <= 0) throw std::invalid_argument("make_table: all-zero vector");
  return t;
}

Circuit build_prep_circuit(const AmplitudeTable& t, const std::vector<int>& order, int nq) {
  if (int(order.size()) != t.bits)
    throw std::invalid_argument("build_prep_circuit: order size mismatch");
  Circuit c;
  c.add_register("prep", nq);
  for (int k = 1; k <= t.bits; ++k) {
    int tgt = order[k - 1];
    // gather the rotation angle per live prefix
    std::vector<std::pair<uint64_t, double>> rots;
    for (uint64_t x = 0; x < (uint64_t(1) << (k - 1)); ++x) {
      double parent = t.g[k - 1][x];
      if (parent <= 0) continue;
      double ratio = std::clamp(t.g[k][2 * x] / parent, 0.0, 1.0);
      rots.push_back({x, 2 * std::acos(std::sqrt(ratio))});
    }
    if (rots.empty()) continue;
    bool uniform = std::all_of(rots.begin(), rots.end(), [&](const auto& r) {
      return std::abs(r.second - rots[0].second) < 1e-14;
    });
    if (uniform) {
      if (std::abs(rots[0].second) > 1e-15) c.ry(tgt, rots[0].second);
      continue;
    }
    for (const auto& [x, theta] : rots) {
      if (std::abs(theta) < 1e-15) continue;
      std::vector<int> ctrls, zeros;
      for (int j = 0; j < k - 1; ++j) {
        ctrls.push_back(order[j]);
        if (!((x >> (k - 2 - j)) & 1)) zeros.push_back(order[j]);
      }
      for (int q : zeros) c.x(q);
      c.ry(tgt, theta, ctrls);
      for (int q : zeros) c.x(q);
    }
  }
  // sign oracle: one phase flip per negative index
  for (uint64_t idx = 0; idx < (uint64_t(1) << t.bits); ++idx) {
    if (!t.negative[idx]) continue;
    std::vector<int> zeros, ctrls;
    for (int j = 0; j < t.bits; ++j)
      if (!((idx >> (t.bits - 1 - j)) & 1)) zeros.push_back(order[j]);
    for (int j = 0; j + 1 < t.bits; ++j) ctrls.push_back(order[j]);
    for (int q : zeros) c.x(q);
    c.z(order[t.bits - 1], ctrls);
    for (int q : zeros) c.x(q);
  }
  return c;
}

PrepResult prep_preconditioned(const LevelSpec& spec,
                               const std::function<double(const Vec&)>& f) {
  spec.validate();
  CfLayout l = cf_layout(spec, true);
  int bits = l.lam_width + l.d * l.L;
  std::vector<std::pair<uint64_t, double>> entries;
  std::vector<long> v(l.d);
  for (int ell = 1; ell <= l.L; ++ell) {
    Vec ip = inner_products(spec, ell, f);
    double w = std::pow(2.0, -0.5 * ell * (2 - l.d));
    long nn = spec.nodes_1d(ell);
    std::fill(v.begin(), v.end(), 0);
    for (long lin = 0; lin < ip.size(); ++lin) {
      uint64_t idx = uint64_t(ell - 1) << (l.d * l.L);
      for (int i = 0; i < l.d; ++i)
        idx |= (uint64_t(v[i]) << (l.L - ell)) << ((l.d - 1 - i) * l.L);
      entries.push_back({idx, w * ip[lin]});
      for (int i = l.d - 1; i >= 0 && ++v[i] == nn; --i) v[i] = 0;
    }
  }
  PrepResult r;
  r.table = make_table(bits, entries);
  r.norm = std::sqrt(r.table.omega);
  for (int b = l.lam_width - 1; b >= 0; --b) r.order.push_back(l.lam + b);
  for (int i = 0; i < l.d; ++i)
    for (int b = l.L - 1; b >= 0; --b) r.order.push_back(l.cell[i] + b);
  r.circuit = build_prep_circuit(r.table, r.order, l.qubits);
  return r;
}

void write_table_csv(const std::string& path, const AmplitudeTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "k,x,g\n";
  char buf[64];
  for (int k = 0; k <= t.bits; ++k)
    for (size_t x = 0; x < t.g[k].size(); ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", t.g[k][x]);
      out << k << "," << x << "," << buf << "\n";
    }
}

}  // namespace qbpx
