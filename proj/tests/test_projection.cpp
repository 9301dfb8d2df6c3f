#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "qbpx/projection.hpp"
#include "qbpx/simulate.hpp"

using namespace qbpx;

namespace {

// exhaustively verify the flag circuit against the enumerated state set
void check_flag(const Projection& p) {
  Circuit fc = p.flag_circuit();
  std::set<uint64_t> admissible(p.states().begin(), p.states().end());
  uint64_t work = uint64_t(1) << p.qubits();
  REQUIRE(fc.n <= 16);
  for (uint64_t s = 0; s < work; ++s) {
    State out = simulate(fc, s);
    uint64_t expect = s | (admissible.count(s) ? (uint64_t(1) << p.flag_qubit()) : 0);
    for (uint64_t i = 0; i < out.size(); ++i) {
      double want = (i == expect) ? 1.0 : 0.0;
      REQUIRE(std::abs(std::abs(out[i]) - want) < 1e-12);
    }
  }
}

}  // namespace

TEST_CASE("product enumeration order and size") {
  // two segments: qubits 2-3 (values 1..2, most significant) and qubits 0-1 (full)
  Projection p = Projection::product(4, {{2, 2, 1, 3}, {0, 2, 0, 4}});
  CHECK(p.size() == 8);
  const auto& st = p.states();
  CHECK(st[0] == 0b0100);
  CHECK(st[1] == 0b0101);
  CHECK(st[3] == 0b0111);
  CHECK(st[4] == 0b1000);
  CHECK(st[7] == 0b1011);
}

TEST_CASE("uncovered qubits are pinned to zero") {
  Projection p = Projection::product(4, {{0, 2, 0, 4}});
  CHECK(p.size() == 4);
  for (uint64_t s : p.states()) CHECK((s >> 2) == 0);
  CHECK(Projection::all_zero(3).size() == 1);
  CHECK(Projection::all_zero(3).states()[0] == 0);
}

TEST_CASE("split orders the zero branch first") {
  Projection p0 = Projection::product(3, {{0, 1, 0, 2}});
  Projection p1 = Projection::product(3, {{0, 2, 0, 3}});
  Projection sp = Projection::split(2, p0, p1);
  CHECK(sp.size() == 5);
  const auto& st = sp.states();
  CHECK(st[0] == 0b000);
  CHECK(st[1] == 0b001);
  CHECK(st[2] == 0b100);
  CHECK(st[4] == 0b110);
}

TEST_CASE("pair concatenates with the high part major") {
  Projection lo = Projection::product(2, {{0, 2, 0, 2}});
  Projection hi = Projection::product(2, {{0, 2, 1, 3}});
  Projection pr = Projection::pair(hi, lo);
  CHECK(pr.qubits() == 4);
  CHECK(pr.size() == 4);
  const auto& st = pr.states();
  CHECK(st[0] == 0b0100);
  CHECK(st[1] == 0b0101);
  CHECK(st[2] == 0b1000);
  CHECK(st[3] == 0b1001);
}

TEST_CASE("semantic equality across representations") {
  Projection a = Projection::product(3, {{0, 2, 0, 2}});
  Projection b = Projection::pair(Projection::all_zero(1),
                                  Projection::product(2, {{0, 1, 0, 2}}));
  CHECK(a == b);
  CHECK_FALSE(a == Projection::product(3, {{0, 2, 0, 3}}));
  // padding on either side keeps the admissible set
  CHECK(a.padded(5) == b.padded(5));
}

TEST_CASE("flag circuit marks exactly the admissible set") {
  check_flag(Projection::full(3));
  check_flag(Projection::all_zero(3));
  check_flag(Projection::product(4, {{0, 3, 0, 5}, {3, 1, 1, 2}}));
  check_flag(Projection::product(5, {{0, 3, 3, 6}, {3, 2, 1, 3}}));  // multi-block item
  // two multi-block items force the ancilla path
  check_flag(Projection::product(6, {{0, 3, 3, 6}, {3, 3, 3, 6}}));
  // split with different structures per branch
  check_flag(Projection::split(4, Projection::product(5, {{0, 2, 1, 4}}),
                               Projection::product(5, {{0, 4, 0, 9}})));
  // nested pair of splits
  Projection s1 = Projection::split(1, Projection::product(2, {{0, 1, 0, 2}}),
                                    Projection::product(2, {{0, 1, 1, 2}}));
  check_flag(Projection::pair(s1, s1));
}

TEST_CASE("flag circuit restores its ancillas") {
  Projection p = Projection::product(6, {{0, 3, 3, 6}, {3, 3, 3, 6}});
  Circuit fc = p.flag_circuit();
  CHECK(fc.n > p.qubits() + 1);  // ancillas present
}

TEST_CASE("validation rejects malformed projections") {
  CHECK_THROWS(Projection::product(2, {{0, 3, 0, 8}}));
  CHECK_THROWS(Projection::product(4, {{0, 2, 0, 5}}));
  CHECK_THROWS(Projection::product(4, {{0, 2, 0, 2}, {1, 2, 0, 2}}));
  Projection p = Projection::product(3, {{0, 2, 0, 2}});
  CHECK_THROWS(Projection::split(1, p, p));  // selector already constrained
  CHECK_THROWS(p.pinned({{2, 1, 0, 2}}));    // pin must fix one value
}
