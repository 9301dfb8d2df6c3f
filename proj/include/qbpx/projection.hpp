#pragma once
// Subset-of-basis projections used to mark the admissible rows/columns of a
// block encoding. A projection is a union of disjoint product terms; each term
// is an ordered list of integer-range constraints on contiguous qubit spans.
// Qubits not covered by any constraint of a term are pinned to |0>. The
// enumeration order (term order, then mixed-radix over a term's segments with
// the first segment most significant) defines how admissible basis states map
// to matrix row/column indices.

#include <cstdint>
#include <memory>
#include <vector>

#include "qbpx/circuit.hpp"

namespace qbpx {

struct Segment {
  int start = 0;
  int width = 0;
  uint64_t lo = 0, hi = 0;  // admissible register values, half-open

  uint64_t count() const { return hi - lo; }
};

class Projection {
 public:
  struct Term {
    std::vector<Segment> segs;
  };

  Projection() = default;
  static Projection product(int nq, std::vector<Segment> segs);
  static Projection full(int nq);
  static Projection all_zero(int nq);
  // union over a selector qubit: p0 on selector=0 (first in the index order),
  // p1 on selector=1; selector must be unconstrained in both
  static Projection split(int selector, const Projection& p0, const Projection& p1);
  // tensor concatenation: hi lives on qubits [lo.qubits(), ...), index hi-major
  static Projection pair(const Projection& hi, const Projection& lo);
  // ordered union of pairwise-disjoint projections (callers guarantee
  // disjointness, e.g. through a distinguishing pinned register)
  static Projection union_of(const std::vector<Projection>& parts);

  Projection pinned(std::vector<Segment> pins) const;  // extra size-1 constraints
  Projection padded(int new_nq) const;                 // new qubits pinned to 0
  Projection shifted(int offset, int new_nq) const;

  int qubits() const { return nq_; }
  uint64_t size() const;
  const std::vector<uint64_t>& states() const;  // cached enumeration
  bool operator==(const Projection& other) const;

  // CNOT_Pi: flips the flag qubit (index qubits()) iff the work register holds
  // an admissible state; ancillas, if any, sit above the flag and return to 0.
  Circuit flag_circuit() const;
  int flag_qubit() const { return nq_; }

  const std::vector<Term>& terms() const { return terms_; }

 private:
  int nq_ = 0;
  std::vector<Term> terms_;
  mutable std::shared_ptr<std::vector<uint64_t>> cache_;
  void check_term(const Term& t) const;
};

}  // namespace qbpx
