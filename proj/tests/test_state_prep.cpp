#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "qbpx/cf_encoding.hpp"
#include "qbpx/fem.hpp"
#include "qbpx/simulate.hpp"
#include "qbpx/state_prep.hpp"

using namespace qbpx;

TEST_CASE("coarse-level inner products against closed forms") {
  auto one = [](const Vec&) { return 1.0; };
  for (int ell = 1; ell <= 4; ++ell) {
    Vec ip = inner_products(LevelSpec{1, 4}, ell, one);
    for (long j = 0; j < ip.size(); ++j)
      CHECK(ip[j] == doctest::Approx(std::ldexp(1.0, -ell)).epsilon(1e-12));
  }
  // linear f: (hat_j, x) = h * x_j with x_j = (j+1) h
  Vec ipx = inner_products(LevelSpec{1, 2}, 2, [](const Vec& x) { return x[0]; });
  for (long j = 0; j < ipx.size(); ++j)
    CHECK(ipx[j] == doctest::Approx(0.25 * (j + 1) * 0.25).epsilon(1e-12));
  Vec ip2 = inner_products(LevelSpec{2, 2}, 2, one);
  for (long j = 0; j < ip2.size(); ++j)
    CHECK(ip2[j] == doctest::Approx(1.0 / 16).epsilon(1e-12));
  // cubic f agrees with the independent load-vector quadrature
  LevelSpec spec{1, 3};
  auto cubic = [](const Vec& x) { return 1.0 + x[0] * x[0] * (2.0 - x[0]); };
  Vec a = inner_products(spec, 3, cubic), b = load_vector(spec, cubic);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("half-hat block sums equal brute-force summation") {
  auto f = [](const Vec& x) {
    double s = 1.0;
    for (long i = 0; i < x.size(); ++i) s += std::sin(3 * x[i]) + 0.25 * x[i];
    return s;
  };
  SUBCASE("one dimension, tables and generic path") {
    LevelSpec spec{1, 3};
    int ell = 3;
    long nn = spec.nodes_1d(ell);
    Vec ip = inner_products(spec, ell, f);
    HalfHatTables tab = make_half_hat_tables(spec, ell, f);
    for (int k = 1; k <= ell; ++k)
      for (uint64_t x = 0; x < (uint64_t(1) << k); ++x) {
        double brute = 0;
        for (long j = long(x) << (ell - k); j < std::min<long>((long(x) + 1) << (ell - k), nn); ++j)
          brute += ip[j];
        CHECK(half_hat_sums(spec, ell, k, x, f) == doctest::Approx(brute).epsilon(1e-10));
        CHECK(half_hat_sums(tab, k, x) == doctest::Approx(brute).epsilon(1e-10));
      }
  }
  SUBCASE("two dimensions") {
    LevelSpec spec{2, 2};
    int ell = 2;
    long nn = spec.nodes_1d(ell);
    Vec ip = inner_products(spec, ell, f);
    for (int k = 1; k <= 2 * ell; ++k)
      for (uint64_t x = 0; x < (uint64_t(1) << k); ++x) {
        int p0 = std::min(k, ell), p1 = std::max(0, k - ell);
        uint64_t y0 = x >> (k - p0), y1 = x & ((uint64_t(1) << p1) - 1);
        double brute = 0;
        for (long j0 = long(y0) << (ell - p0);
             j0 < std::min<long>((long(y0) + 1) << (ell - p0), nn); ++j0)
          for (long j1 = long(y1) << (ell - p1);
               j1 < std::min<long>((long(y1) + 1) << (ell - p1), nn); ++j1)
            brute += ip[j0 * nn + j1];
        CHECK(half_hat_sums(spec, ell, k, x, f) == doctest::Approx(brute).epsilon(1e-10));
      }
  }
  SUBCASE("full prefix is a single node") {
    LevelSpec spec{1, 3};
    Vec ip = inner_products(spec, 3, f);
    for (uint64_t x = 0; x + 1 < 8; ++x)
      CHECK(half_hat_sums(spec, 3, 3, x, f) == doctest::Approx(ip[x]).epsilon(1e-10));
    CHECK(half_hat_sums(spec, 3, 3, 7, f) == 0.0);  // padding index
  }
}

TEST_CASE("amplitude tables are parent-child consistent") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  std::vector<std::pair<uint64_t, double>> entries;
  for (uint64_t i = 0; i < 11; ++i) entries.push_back({i, gauss(rng)});
  AmplitudeTable t = make_table(4, entries);
  t.validate();
  CHECK(t.omega > 0);
  CHECK_THROWS(make_table(3, {}));
  CHECK_THROWS(make_table(2, {{1, 0.0}}));
}

TEST_CASE("rotation tree prepares arbitrary signed vectors") {
  SUBCASE("unit vector stays at |0>") {
    AmplitudeTable t = make_table(3, {{0, 1.0}});
    Circuit c = build_prep_circuit(t, {2, 1, 0}, 3);
    State psi = simulate(c, 0);
    CHECK(std::abs(psi[0] - 1.0) < 1e-12);
  }
  SUBCASE("uniform positive vector collapses to one rotation per qubit") {
    std::vector<std::pair<uint64_t, double>> entries;
    for (uint64_t i = 0; i < 8; ++i) entries.push_back({i, 0.5});
    AmplitudeTable t = make_table(3, {entries});
    Circuit c = build_prep_circuit(t, {2, 1, 0}, 3);
    CHECK(c.gates.size() == 3);
    State psi = simulate(c, 0);
    for (uint64_t i = 0; i < 8; ++i)
      CHECK(std::abs(psi[i] - 1.0 / std::sqrt(8.0)) < 1e-12);
  }
  SUBCASE("random signed vector, shuffled qubit order") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    std::vector<std::pair<uint64_t, double>> entries;
    Vec want = Vec::Zero(16);
    for (uint64_t i = 0; i < 16; ++i) {
      double a = (i == 6) ? 0.0 : gauss(rng);  // include a hole
      entries.push_back({i, a});
      want[i] = a;
    }
    want.normalize();
    std::vector<int> order = {1, 3, 0, 2};  // table bit 0 (MSB) on qubit 1, ...
    AmplitudeTable t = make_table(4, entries);
    Circuit c = build_prep_circuit(t, order, 4);
    State psi = simulate(c, 0);
    for (uint64_t i = 0; i < 16; ++i) {
      uint64_t st = 0;
      for (int b = 0; b < 4; ++b)
        if ((i >> (3 - b)) & 1) st |= uint64_t(1) << order[b];
      CHECK(std::abs(psi[st] - want[i]) < 1e-10);
    }
  }
}

TEST_CASE("preconditioned right-hand side matches the dense frame transpose") {
  auto check = [](const LevelSpec& spec, const std::function<double(const Vec&)>& f) {
    PrepResult pr = prep_preconditioned(spec, f);
    Vec dense = frame_matrix(spec).transpose() * load_vector(spec, f);
    CHECK(pr.norm == doctest::Approx(dense.norm()).epsilon(1e-12));
    Vec want = dense / dense.norm();
    State psi = simulate(pr.circuit, 0);
    CfLayout l = cf_layout(spec, true);
    // walk (level, node) in the dense order and map to register states
    long row = 0;
    std::vector<long> v(spec.d);
    for (int ell = 1; ell <= spec.L; ++ell) {
      long nn = spec.nodes_1d(ell);
      std::fill(v.begin(), v.end(), 0);
      for (long lin = 0; lin < spec.dim_v(ell); ++lin, ++row) {
        uint64_t st = uint64_t(ell - 1) << l.lam;
        for (int i = 0; i < spec.d; ++i)
          st |= uint64_t(v[i]) << (l.cell[i] + spec.L - ell);
        CHECK(std::abs(psi[st] - want[row]) < 1e-10);
        for (int i = spec.d - 1; i >= 0 && ++v[i] == nn; --i) v[i] = 0;
      }
    }
    CHECK(row == spec.dim_f());
  };
  auto one = [](const Vec&) { return 1.0; };
  auto linear = [](const Vec& x) { return x[0]; };
  check(LevelSpec{1, 2}, one);
  check(LevelSpec{1, 4}, one);
  check(LevelSpec{1, 4}, linear);
  check(LevelSpec{2, 2}, one);
}
