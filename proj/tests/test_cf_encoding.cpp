#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unsupported/Eigen/KroneckerProduct>

#include "calculus_common.hpp"
#include "doctest.h"
#include "qbpx/cf_encoding.hpp"
#include "qbpx/fem.hpp"
#include "qbpx/simulate.hpp"

using namespace qbpx;
using qbpx_test::haar_unitary;
using cd = std::complex<double>;

namespace {
double max_err(const Eigen::MatrixXcd& got, const Eigen::MatrixXd& want) {
  return (got - want.cast<cd>()).cwiseAbs().maxCoeff();
}
}  // namespace

TEST_CASE("transfer local gate completes the per-cell step") {
  Eigen::Matrix4cd t4 = transfer_local_gate();
  CHECK((t4.adjoint() * t4 - Eigen::Matrix4cd::Identity()).norm() < 1e-12);
  Eigen::MatrixXd step = transfer_step_1d(0);
  CHECK((t4.leftCols<2>() - step.cast<cd>()).norm() < 1e-12);
}

TEST_CASE("two-qubit synthesis reproduces random unitaries") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix4cd u = haar_unitary(4, rng);
    Circuit c;
    c.add_register("q", 2);
    append_two_qubit_unitary(c, u, 0, 1);
    CHECK((circuit_unitary(c) - u).cwiseAbs().maxCoeff() < 1e-12);
  }
  // external control: identity on the off branch
  Eigen::Matrix4cd u = haar_unitary(4, rng);
  Circuit c;
  c.add_register("q", 3);
  append_two_qubit_unitary(c, u, 0, 1, {2});
  Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(8, 8);
  full.topLeftCorner(4, 4) = Eigen::Matrix4cd::Identity();
  full.bottomRightCorner(4, 4) = u;
  CHECK((circuit_unitary(c) - full).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("uniform preparation over a partial range") {
  for (uint64_t count = 1; count <= 8; ++count) {
    Circuit c;
    c.add_register("q", 3);
    append_uniform_prep(c, 0, 3, count);
    State psi = simulate(c, 0);
    for (uint64_t v = 0; v < 8; ++v) {
      double want = v < count ? 1.0 / std::sqrt(double(count)) : 0.0;
      CHECK(std::abs(psi[v] - want) < 1e-12);
    }
  }
}

TEST_CASE("gradient factor encoding matches the dense reference") {
  for (auto [d, L] : {std::pair{1, 4}, {2, 2}, {3, 1}}) {
    LevelSpec spec{d, L};
    for (int ell = 1; ell <= L; ++ell) {
      BlockEncoding e = build_U_grad(spec, ell);
      CHECK(max_err(extract_matrix(e), gradient_matrix(spec, ell)) < 1e-10);
      // the scaled frame blocks share one normalization, 2 sqrt(d)
      CHECK(e.gamma * std::pow(2.0, -0.5 * ell * (2 - d)) ==
            doctest::Approx(2.0 * std::sqrt(double(d))).epsilon(1e-12));
      double subnorm = e.gamma / spectral_norm(gradient_matrix(spec, ell));
      CHECK(subnorm <= *e.subnorm_bound + 1e-12);
    }
  }
}

TEST_CASE("transfer encoding is an exact isometry per level") {
  for (auto [d, L] : {std::pair{1, 3}, {2, 2}}) {
    LevelSpec spec{d, L};
    for (int ell = 1; ell <= L; ++ell) {
      BlockEncoding e = build_U_transfer(spec, ell);
      CHECK(e.gamma == 1.0);
      CHECK(e.isometry);
      Eigen::MatrixXcd t = extract_matrix(e);
      CHECK(max_err(t, transfer_matrix(spec, ell)) < 1e-10);
      CHECK((t.adjoint() * t - Eigen::MatrixXcd::Identity(t.cols(), t.cols()))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("generic frame encoding reproduces the scaled gradient frame") {
  for (auto [d, L] : {std::pair{1, 1}, {1, 2}, {1, 3}, {1, 4}, {2, 2}}) {
    LevelSpec spec{d, L};
    BlockEncoding cf = build_U_CF(spec);
    CHECK(cf.gamma == doctest::Approx(2.0 * std::sqrt(double(d) * L)).epsilon(1e-12));
    Mat ref = cf_matrix(spec);
    CHECK(max_err(extract_matrix(cf), ref) < 1e-9);
    double subnorm = cf.gamma / spectral_norm(ref);
    CHECK(subnorm <= *cf.subnorm_bound + 1e-9);
    CHECK(*cf.subnorm_bound <= std::sqrt(d * (L + M_PI * M_PI / 4)) + 1e-12);
  }
}

TEST_CASE("optimized frame encoding agrees with the generic one") {
  for (auto [d, L] : {std::pair{1, 1}, {1, 2}, {1, 4}, {2, 2}}) {
    LevelSpec spec{d, L};
    BlockEncoding opt = build_U_CF_optimized(spec);
    CHECK(opt.gamma == doctest::Approx(2.0 * std::sqrt(double(d) * L)).epsilon(1e-12));
    CHECK(max_err(extract_matrix(opt), cf_matrix(spec)) < 1e-9);
  }
  CHECK_THROWS(build_U_CF_optimized(LevelSpec{1, 3}));  // needs L = 2^k
}

TEST_CASE("optimized path uses fewer qubits and fewer two-qubit gates") {
  LevelSpec spec{1, 4};
  BlockEncoding gen = build_U_CF(spec);
  BlockEncoding opt = build_U_CF_optimized(spec);
  CHECK(opt.qubits() == 9);
  CHECK(opt.qubits() < gen.qubits());
  GateCounts cg = count_gates(gen.circuit), co = count_gates(opt.circuit);
  CHECK(co.two_qubit < cg.two_qubit);
  MESSAGE("frame encoding qubits generic=", gen.qubits(), " optimized=", opt.qubits(),
          "; two-qubit gates generic=", cg.two_qubit, " optimized=", co.two_qubit);
}

TEST_CASE("stiffness sandwich encoding matches the dense reference") {
  LevelSpec spec{1, 3};
  Coefficient a = Coefficient::scalar(1, [](const Vec& x) { return 1.0 + 0.5 * x[0]; });
  auto [alpha, beta] = a.bounds(spec);
  BlockEncoding s = build_U_stiffness(spec, a, false);
  CHECK(s.gamma == doctest::Approx(4.0 * beta * spec.d * spec.L).epsilon(1e-12));
  Mat cfm = cf_matrix(spec);
  Mat ref = cfm.transpose() * coefficient_block(spec, a) * cfm;
  CHECK(max_err(extract_matrix(s), ref) < 1e-9);
  double subnorm = s.gamma / spectral_norm(ref);
  CHECK(subnorm <= (beta / alpha) * spec.d * (spec.L + M_PI * M_PI / 4) + 1e-9);
}

TEST_CASE("optimized stiffness sandwich equals the generic one") {
  LevelSpec spec{1, 2};
  Coefficient a = Coefficient::scalar(1, [](const Vec& x) { return 2.0 - x[0]; });
  Eigen::MatrixXcd gen = extract_matrix(build_U_stiffness(spec, a, false));
  Eigen::MatrixXcd opt = extract_matrix(build_U_stiffness(spec, a, true));
  CHECK((gen - opt).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("constant coefficients need no rotation oracle") {
  LevelSpec spec{1, 2};
  BlockEncoding cf = build_U_CF(spec);
  BlockEncoding da =
      build_U_DA(spec, Coefficient::identity(1), cf.pi2, cf_layout(spec, false));
  CHECK(da.gamma == 1.0);
  CHECK(da.circuit.gates.empty());
  CHECK(da.isometry);
}

TEST_CASE("matrix-valued coefficients are rejected by the quantum path") {
  LevelSpec spec{2, 1};
  Coefficient a;
  a.matrix = [](const Vec&) {
    Mat m(2, 2);
    m << 2.0, 0.5, 0.5, 1.0;
    return m;
  };
  BlockEncoding cf = build_U_CF(spec);
  CHECK_THROWS(build_U_DA(spec, a, cf.pi2, cf_layout(spec, false)));
}
