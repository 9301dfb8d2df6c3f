#include "qbpx/fem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unsupported/Eigen/KroneckerProduct>

namespace qbpx {

long LevelSpec::dim_v(int ell) const {
  long n = nodes_1d(ell), r = 1;
  for (int i = 0; i < d; ++i) r *= n;
  return r;
}

long LevelSpec::dim_q(int ell) const { return 1L << (static_cast<long>(d) * (ell + 1)); }

long LevelSpec::dim_f() const {
  long s = 0;
  for (int ell = 1; ell <= L; ++ell) s += dim_v(ell);
  return s;
}

void LevelSpec::validate() const {
  if (d < 1 || d > 3) throw std::invalid_argument("LevelSpec: d must be 1..3");
  if (L < 1 || L > 30) throw std::invalid_argument("LevelSpec: L must be 1..30");
}

void LevelSpec::check_dense_guard() const {
  validate();
  if (dim_v(L) > 20000)
    throw std::invalid_argument("dense FEM reference limited to (2^L-1)^d <= 20000");
}

Coefficient Coefficient::identity(int d) {
  Coefficient c;
  c.matrix = [d](const Vec&) { return Mat::Identity(d, d); };
  return c;
}

Coefficient Coefficient::scalar(int d, std::function<double(const Vec&)> a) {
  Coefficient c;
  c.matrix = [d, a = std::move(a)](const Vec& x) { return a(x) * Mat::Identity(d, d); };
  return c;
}

namespace {

Vec cell_midpoint(const LevelSpec& spec, long jlin, int ell) {
  Vec x(spec.d);
  long n = spec.cells_1d(ell);
  for (int i = spec.d - 1; i >= 0; --i) {
    long ji = jlin % n;
    jlin /= n;
    x[i] = (ji + 0.5) * spec.h(ell);
  }
  return x;
}

void decode(long lin, long base, int d, long* out) {
  for (int i = d - 1; i >= 0; --i) {
    out[i] = lin % base;
    lin /= base;
  }
}

long encode(const long* idx, long base, int d) {
  long lin = 0;
  for (int i = 0; i < d; ++i) lin = lin * base + idx[i];
  return lin;
}

}  // namespace

std::pair<double, double> Coefficient::bounds(const LevelSpec& spec) const {
  double lo = std::numeric_limits<double>::max(), hi = 0;
  long nc = 1L << (static_cast<long>(spec.d) * spec.L);
  for (long j = 0; j < nc; ++j) {
    Mat a = matrix(cell_midpoint(spec, j, spec.L));
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  if (lo <= 0) throw std::invalid_argument("coefficient is not positive definite");
  return {lo, hi};
}

// Rows are (cell j, in-cell basis b) interleaved as 2j+b; columns are interior
// nodes. Each hat overlaps the two cells next to its node.
Mat restriction_1d(int ell) {
  long nc = 1L << ell, nn = nc - 1;
  double s = std::pow(2.0, -0.5 * ell);
  const double r0 = 0.5, r1 = 0.5 / std::sqrt(3.0);
  Mat m = Mat::Zero(2 * nc, nn);
  for (long j = 0; j < nc; ++j) {
    if (j < nn) {  // rising hat of node j
      m(2 * j + 0, j) = s * r0;
      m(2 * j + 1, j) = s * r1;
    }
    if (j >= 1) {  // falling hat of node j-1
      m(2 * j + 0, j - 1) = s * r0;
      m(2 * j + 1, j - 1) = s * -r1;
    }
  }
  return m;
}

Mat gradient_1d(int ell) {
  long nc = 1L << ell, nn = nc - 1;
  double s = std::pow(2.0, 0.5 * ell);
  Mat m = Mat::Zero(2 * nc, nn);
  for (long j = 0; j < nc; ++j) {
    if (j < nn) m(2 * j, j) = s;
    if (j >= 1) m(2 * j, j - 1) = -s;
  }
  return m;
}

Mat transfer_step_1d(int ell) {
  long nc = 1L << ell;
  // Parent (mean, slope) expressed on each child half-cell.
  const double q = 1.0 / std::sqrt(2.0), s3 = std::sqrt(3.0);
  Mat t(4, 2);
  t << q, -q * s3 / 2, 0, q / 2, q, q * s3 / 2, 0, q / 2;
  Mat m = Mat::Zero(4 * nc, 2 * nc);
  for (long j = 0; j < nc; ++j)
    m.block(4 * j, 2 * j, 4, 2) = t;
  return m;
}

Mat transfer_1d(int ell, int L) {
  Mat m = Mat::Identity(2L << ell, 2L << ell);
  for (int j = ell; j < L; ++j) m = (transfer_step_1d(j) * m).eval();
  return m;
}

Mat prolongation_1d(int ell) {
  long n0 = (1L << ell) - 1, n1 = (2L << ell) - 1;
  Mat m = Mat::Zero(n1, n0);
  for (long k = 0; k < n0; ++k) {
    m(2 * k + 1, k) = 1.0;
    m(2 * k, k) = 0.5;
    m(2 * k + 2, k) = 0.5;
  }
  return m;
}

Mat gradient_matrix(const LevelSpec& spec, int ell) {
  spec.validate();
  int d = spec.d;
  long nc = spec.cells_1d(ell), nn = spec.nodes_1d(ell);
  Mat g1 = gradient_1d(ell), r1 = restriction_1d(ell);
  long rows = static_cast<long>(d) * spec.dim_q(ell);
  Mat m = Mat::Zero(rows, spec.dim_v(ell));
  long j[3], k[3], v[3];
  for (long jlin = 0; jlin < (1L << (d * ell)); ++jlin) {
    decode(jlin, nc, d, j);
    for (int s = 0; s < d; ++s)
      for (long klin = 0; klin < (1L << d); ++klin) {
        decode(klin, 2, d, k);
        long row = (jlin * d + s) * (1L << d) + klin;
        // each 1D row touches nodes j_i-1 and j_i; enumerate valid combos
        for (long cmb = 0; cmb < (1L << d); ++cmb) {
          double val = 1.0;
          bool ok = true;
          for (int i = 0; i < d && ok; ++i) {
            v[i] = j[i] - ((cmb >> i) & 1);
            if (v[i] < 0 || v[i] >= nn) { ok = false; break; }
            const Mat& f = (i == s) ? g1 : r1;
            val *= f(2 * j[i] + k[i], v[i]);
          }
          if (ok && val != 0.0) m(row, encode(v, nn, d)) += val;
        }
      }
  }
  return m;
}

Mat restriction_matrix(const LevelSpec& spec, int ell) {
  spec.validate();
  int d = spec.d;
  long nc = spec.cells_1d(ell), nn = spec.nodes_1d(ell);
  Mat r1 = restriction_1d(ell);
  Mat m = Mat::Zero(spec.dim_q(ell), spec.dim_v(ell));
  long j[3], k[3], v[3];
  for (long jlin = 0; jlin < (1L << (d * ell)); ++jlin) {
    decode(jlin, nc, d, j);
    for (long klin = 0; klin < (1L << d); ++klin) {
      decode(klin, 2, d, k);
      long row = jlin * (1L << d) + klin;
      for (long cmb = 0; cmb < (1L << d); ++cmb) {
        double val = 1.0;
        bool ok = true;
        for (int i = 0; i < d && ok; ++i) {
          v[i] = j[i] - ((cmb >> i) & 1);
          if (v[i] < 0 || v[i] >= nn) { ok = false; break; }
          val *= r1(2 * j[i] + k[i], v[i]);
        }
        if (ok && val != 0.0) m(row, encode(v, nn, d)) += val;
      }
    }
  }
  return m;
}

Mat transfer_matrix(const LevelSpec& spec, int ell) {
  spec.validate();
  int d = spec.d;
  Mat t1 = transfer_1d(ell, spec.L);
  long ncL = spec.cells_1d(spec.L), ncl = spec.cells_1d(ell);
  long rows = static_cast<long>(d) * spec.dim_q(spec.L);
  long cols = static_cast<long>(d) * spec.dim_q(ell);
  Mat m = Mat::Zero(rows, cols);
  // nonzeros of each 1D column
  std::vector<std::vector<std::pair<long, double>>> colnz(t1.cols());
  for (long c = 0; c < t1.cols(); ++c)
    for (long r = 0; r < t1.rows(); ++r)
      if (t1(r, c) != 0.0) colnz[c].push_back({r, t1(r, c)});
  long jc[3], kc[3], jr[3], kr[3];
  for (long jlin = 0; jlin < (1L << (d * ell)); ++jlin) {
    decode(jlin, ncl, d, jc);
    for (long klin = 0; klin < (1L << d); ++klin) {
      decode(klin, 2, d, kc);
      std::vector<const std::vector<std::pair<long, double>>*> nz(d);
      std::vector<size_t> it(d, 0);
      for (int i = 0; i < d; ++i) nz[i] = &colnz[2 * jc[i] + kc[i]];
      bool done = false;
      while (!done) {
        double val = 1.0;
        for (int i = 0; i < d; ++i) {
          long r1d = (*nz[i])[it[i]].first;
          jr[i] = r1d / 2;
          kr[i] = r1d % 2;
          val *= (*nz[i])[it[i]].second;
        }
        long rj = encode(jr, ncL, d), rk = encode(kr, 2, d);
        for (int s = 0; s < d; ++s) {
          long row = (rj * d + s) * (1L << d) + rk;
          long col = (jlin * d + s) * (1L << d) + klin;
          m(row, col) = val;
        }
        int i = d - 1;
        while (i >= 0 && ++it[i] == nz[i]->size()) it[i--] = 0;
        done = (i < 0);
      }
    }
  }
  return m;
}

Mat prolongation_to_finest(const LevelSpec& spec, int ell) {
  Mat e1 = Mat::Identity(spec.nodes_1d(ell), spec.nodes_1d(ell));
  for (int j = ell; j < spec.L; ++j) e1 = (prolongation_1d(j) * e1).eval();
  Mat e = e1;
  for (int i = 1; i < spec.d; ++i) e = Eigen::kroneckerProduct(e, e1).eval();
  return e;
}

namespace {

// (D_A tensor Id_{2^d}) applied to a matrix with rows (j,s,k), cell-block-wise.
Mat apply_coefficient(const LevelSpec& spec, const Coefficient& a, const Mat& q) {
  int d = spec.d;
  long bsz = static_cast<long>(d) << d;
  long nc = q.rows() / bsz;
  Mat out(q.rows(), q.cols());
  for (long j = 0; j < nc; ++j) {
    Mat aj = a.matrix(cell_midpoint(spec, j, spec.L));
    for (int s = 0; s < d; ++s) {
      Mat acc = Mat::Zero(1L << d, q.cols());
      for (int t = 0; t < d; ++t)
        acc += aj(s, t) * q.middleRows(j * bsz + (static_cast<long>(t) << d), 1L << d);
      out.middleRows(j * bsz + (static_cast<long>(s) << d), 1L << d) = acc;
    }
  }
  return out;
}

}  // namespace

Mat coefficient_block(const LevelSpec& spec, const Coefficient& a) {
  long rows = static_cast<long>(spec.d) * spec.dim_q(spec.L);
  if (rows > 8192) throw std::invalid_argument("coefficient_block: too large for dense form");
  return apply_coefficient(spec, a, Mat::Identity(rows, rows));
}

Mat stiffness_matrix(const LevelSpec& spec, const Coefficient& a) {
  spec.check_dense_guard();
  Mat c = gradient_matrix(spec, spec.L);
  return c.transpose() * apply_coefficient(spec, a, c);
}

Mat frame_matrix(const LevelSpec& spec) {
  spec.check_dense_guard();
  Mat f(spec.dim_v(spec.L), spec.dim_f());
  long off = 0;
  for (int ell = 1; ell <= spec.L; ++ell) {
    double c = std::pow(2.0, -0.5 * ell * (2 - spec.d));
    f.middleCols(off, spec.dim_v(ell)) = c * prolongation_to_finest(spec, ell);
    off += spec.dim_v(ell);
  }
  return f;
}

Mat bpx_matrix(const LevelSpec& spec) {
  Mat f = frame_matrix(spec);
  return f * f.transpose();
}

Mat cf_matrix(const LevelSpec& spec) {
  spec.check_dense_guard();
  long rows = static_cast<long>(spec.d) * spec.dim_q(spec.L);
  Mat m(rows, spec.dim_f());
  long off = 0;
  for (int ell = 1; ell <= spec.L; ++ell) {
    double c = std::pow(2.0, -0.5 * ell * (2 - spec.d));
    m.middleCols(off, spec.dim_v(ell)) =
        c * (transfer_matrix(spec, ell) * gradient_matrix(spec, ell));
    off += spec.dim_v(ell);
  }
  return m;
}

Vec load_vector(const LevelSpec& spec, const std::function<double(const Vec&)>& f) {
  spec.check_dense_guard();
  int d = spec.d;
  int L = spec.L;
  long nc = spec.cells_1d(L), nn = spec.nodes_1d(L);
  double h = spec.h(L);
  const double gx[3] = {0.5 - std::sqrt(3.0 / 5.0) / 2, 0.5, 0.5 + std::sqrt(3.0 / 5.0) / 2};
  const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  Vec b = Vec::Zero(spec.dim_v(L));
  long j[3], v[3], q[3];
  long ncells = 1L << (d * L);
  double cellvol = std::pow(h, d);
  for (long jlin = 0; jlin < ncells; ++jlin) {
    decode(jlin, nc, d, j);
    long nq = 1;
    for (int i = 0; i < d; ++i) nq *= 3;
    for (long qlin = 0; qlin < nq; ++qlin) {
      decode(qlin, 3, d, q);
      Vec x(d);
      double w = cellvol;
      for (int i = 0; i < d; ++i) {
        x[i] = (j[i] + gx[q[i]]) * h;
        w *= gw[q[i]];
      }
      double fv = w * f(x);
      // corner hats: node j_i (rising, value local coord) and j_i-1 (falling)
      for (long cmb = 0; cmb < (1L << d); ++cmb) {
        double val = fv;
        bool ok = true;
        for (int i = 0; i < d && ok; ++i) {
          v[i] = j[i] - ((cmb >> i) & 1);
          if (v[i] < 0 || v[i] >= nn) { ok = false; break; }
          double t = gx[q[i]];
          val *= ((cmb >> i) & 1) ? (1.0 - t) : t;
        }
        if (ok) b[encode(v, nn, d)] += val;
      }
    }
  }
  return b;
}

Vec solve(const LevelSpec& spec, const Coefficient& a, const Vec& b) {
  Mat s = stiffness_matrix(spec, a);
  return s.llt().solve(b);
}

double solve_qoi(const LevelSpec& spec, const Coefficient& a,
                 const std::function<double(const Vec&)>& f,
                 const std::function<double(const Vec&)>& g) {
  Vec b = load_vector(spec, f);
  Vec m = load_vector(spec, g);
  return m.dot(solve(spec, a, b));
}

double spectral_norm(const Mat& m) {
  return Eigen::BDCSVD<Mat>(m).singularValues()(0);
}

double condition_number_psd(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  double hi = ev(ev.size() - 1);
  double tol = 1e-10 * hi;
  double lo = hi;
  for (long i = 0; i < ev.size(); ++i)
    if (ev(i) > tol) { lo = ev(i); break; }
  return hi / lo;
}

void write_matrix_csv(const std::string& path, const Mat& m,
                      const std::vector<std::string>& metadata) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& line : metadata) out << "# " << line << "\n";
  out << m.rows() << "," << m.cols() << "\n";
  char buf[32];
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
}

Mat read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  auto next = [&]() {
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#') return true;
    return false;
  };
  if (!next()) throw std::runtime_error("empty csv " + path);
  long rows, cols;
  if (std::sscanf(line.c_str(), "%ld,%ld", &rows, &cols) != 2)
    throw std::runtime_error("bad csv header in " + path);
  Mat m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    if (!next()) throw std::runtime_error("truncated csv " + path);
    std::stringstream ss(line);
    std::string cell;
    for (long c = 0; c < cols; ++c) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("short row in " + path);
      m(r, c) = std::stod(cell);
    }
  }
  return m;
}

}  // namespace qbpx
