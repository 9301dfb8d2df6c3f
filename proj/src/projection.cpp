#include "qbpx/projection.hpp"

#include <algorithm>
#include <stdexcept>

namespace qbpx {

namespace {
constexpr uint64_t kEnumGuard = uint64_t(1) << 22;

uint64_t term_mask(const Projection::Term& t) {
  uint64_t m = 0;
  for (const auto& s : t.segs) m |= ((uint64_t(1) << s.width) - 1) << s.start;
  return m;
}
}  // namespace

void Projection::check_term(const Term& t) const {
  uint64_t seen = 0;
  for (const auto& s : t.segs) {
    if (s.start < 0 || s.width < 0 || s.start + s.width > nq_)
      throw std::invalid_argument("projection segment outside register space");
    if (s.hi > (uint64_t(1) << s.width) || s.lo >= s.hi)
      throw std::invalid_argument("projection segment range invalid");
    uint64_t m = ((uint64_t(1) << s.width) - 1) << s.start;
    if (m & seen) throw std::invalid_argument("projection segments overlap");
    seen |= m;
  }
}

Projection Projection::product(int nq, std::vector<Segment> segs) {
  Projection p;
  p.nq_ = nq;
  p.terms_.push_back({std::move(segs)});
  p.check_term(p.terms_[0]);
  return p;
}

Projection Projection::full(int nq) {
  return product(nq, {{0, nq, 0, uint64_t(1) << nq}});
}

Projection Projection::all_zero(int nq) { return product(nq, {}); }

Projection Projection::split(int sel, const Projection& p0, const Projection& p1) {
  if (p0.nq_ != p1.nq_) throw std::invalid_argument("split: qubit counts differ");
  if (sel < 0 || sel >= p0.nq_) throw std::invalid_argument("split: bad selector");
  Projection p;
  p.nq_ = p0.nq_;
  uint64_t selbit = uint64_t(1) << sel;
  for (const auto& t : p0.terms_) {
    if (term_mask(t) & selbit) throw std::invalid_argument("split: selector constrained");
    p.terms_.push_back(t);  // uncovered selector pins it to 0
  }
  for (const auto& t : p1.terms_) {
    if (term_mask(t) & selbit) throw std::invalid_argument("split: selector constrained");
    Term u = t;
    u.segs.push_back({sel, 1, 1, 2});
    p.terms_.push_back(std::move(u));
  }
  return p;
}

Projection Projection::pair(const Projection& hi, const Projection& lo) {
  Projection p;
  p.nq_ = lo.nq_ + hi.nq_;
  for (const auto& th : hi.terms_)
    for (const auto& tl : lo.terms_) {
      Term u;
      for (auto s : th.segs) {
        s.start += lo.nq_;
        u.segs.push_back(s);
      }
      u.segs.insert(u.segs.end(), tl.segs.begin(), tl.segs.end());
      p.terms_.push_back(std::move(u));
    }
  return p;
}

Projection Projection::union_of(const std::vector<Projection>& parts) {
  if (parts.empty()) throw std::invalid_argument("union_of: empty");
  Projection p;
  p.nq_ = parts[0].nq_;
  for (const auto& q : parts) {
    if (q.nq_ != p.nq_) throw std::invalid_argument("union_of: qubit counts differ");
    p.terms_.insert(p.terms_.end(), q.terms_.begin(), q.terms_.end());
  }
  return p;
}

Projection Projection::pinned(std::vector<Segment> pins) const {
  for (const auto& s : pins)
    if (s.count() != 1) throw std::invalid_argument("pin must fix a single value");
  Projection p = *this;
  p.cache_.reset();
  for (auto& t : p.terms_) {
    t.segs.insert(t.segs.end(), pins.begin(), pins.end());
    p.check_term(t);
  }
  return p;
}

Projection Projection::padded(int new_nq) const {
  if (new_nq < nq_) throw std::invalid_argument("padded: cannot shrink");
  Projection p = *this;
  p.cache_.reset();
  p.nq_ = new_nq;
  return p;
}

Projection Projection::shifted(int offset, int new_nq) const {
  Projection p = *this;
  p.cache_.reset();
  p.nq_ = new_nq;
  for (auto& t : p.terms_)
    for (auto& s : t.segs) {
      s.start += offset;
      if (s.start < 0 || s.start + s.width > new_nq)
        throw std::invalid_argument("shifted: segment out of range");
    }
  return p;
}

uint64_t Projection::size() const {
  uint64_t n = 0;
  for (const auto& t : terms_) {
    uint64_t c = 1;
    for (const auto& s : t.segs) c *= s.count();
    n += c;
  }
  return n;
}

const std::vector<uint64_t>& Projection::states() const {
  if (cache_) return *cache_;
  if (size() > kEnumGuard) throw std::length_error("projection too large to enumerate");
  auto out = std::make_shared<std::vector<uint64_t>>();
  out->reserve(size());
  for (const auto& t : terms_) {
    // odometer over segment values, first segment most significant
    size_t k = t.segs.size();
    std::vector<uint64_t> v(k);
    for (size_t i = 0; i < k; ++i) v[i] = t.segs[i].lo;
    while (true) {
      uint64_t st = 0;
      for (size_t i = 0; i < k; ++i) st |= v[i] << t.segs[i].start;
      out->push_back(st);
      size_t i = k;
      while (i > 0) {
        --i;
        if (++v[i] < t.segs[i].hi) break;
        v[i] = t.segs[i].lo;
        if (i == 0) { i = k + 1; break; }
      }
      if (k == 0 || i == k + 1) break;
    }
  }
  cache_ = out;
  return *cache_;
}

bool Projection::operator==(const Projection& other) const {
  return nq_ == other.nq_ && states() == other.states();
}

namespace {

struct Block {
  uint64_t fixed_mask, value;  // over absolute qubit positions
};

// dyadic cover of [lo,hi) on a w-bit span: aligned blocks with high bits fixed
std::vector<Block> dyadic_blocks(const Segment& s) {
  std::vector<Block> out;
  uint64_t lo = s.lo, hi = s.hi;
  while (lo < hi) {
    int k = 0;
    while (k < s.width && (lo & (uint64_t(1) << k)) == 0 && lo + (uint64_t(2) << k) <= hi) ++k;
    uint64_t fixed = 0, val = 0;
    for (int b = k; b < s.width; ++b) {
      fixed |= uint64_t(1) << (s.start + b);
      val |= ((lo >> b) & 1) << (s.start + b);
    }
    out.push_back({fixed, val});
    lo += uint64_t(1) << k;
  }
  return out;
}

void emit_mcx(Circuit& c, uint64_t fixed_mask, uint64_t value, int target) {
  std::vector<int> zeros, ctrls;
  for (int q = 0; q < c.n; ++q)
    if (fixed_mask & (uint64_t(1) << q)) {
      ctrls.push_back(q);
      if (!((value >> q) & 1)) zeros.push_back(q);
    }
  for (int q : zeros) c.x(q);
  c.x(target, ctrls);
  for (int q : zeros) c.x(q);
}

}  // namespace

Circuit Projection::flag_circuit() const {
  // gather per-term constraint blocks first to size the ancilla register
  struct TermPlan {
    uint64_t fixed_mask = 0, value = 0;
    std::vector<std::vector<Block>> multi;  // items needing several blocks
  };
  std::vector<TermPlan> plans;
  size_t max_anc = 0;
  for (const auto& t : terms_) {
    TermPlan plan;
    uint64_t covered = term_mask(t);
    plan.fixed_mask = ~covered & ((nq_ < 64 ? (uint64_t(1) << nq_) : 0) - 1);  // uncovered -> 0
    for (const auto& s : t.segs) {
      if (s.lo == 0 && s.hi == (uint64_t(1) << s.width)) continue;  // no constraint
      auto blocks = dyadic_blocks(s);
      if (blocks.size() == 1) {
        plan.fixed_mask |= blocks[0].fixed_mask;
        plan.value |= blocks[0].value;
      } else {
        plan.multi.push_back(std::move(blocks));
      }
    }
    // a single multi-block item folds into per-block flag flips, no ancilla
    if (plan.multi.size() >= 2) max_anc = std::max(max_anc, plan.multi.size());
    plans.push_back(std::move(plan));
  }

  Circuit c;
  c.add_register("work", nq_);
  int flag = c.add_register("flag", 1);
  int anc0 = max_anc ? c.add_register("cmp", static_cast<int>(max_anc)) : c.n;

  for (const auto& plan : plans) {
    if (plan.multi.empty()) {
      emit_mcx(c, plan.fixed_mask, plan.value, flag);
    } else if (plan.multi.size() == 1) {
      for (const auto& b : plan.multi[0])
        emit_mcx(c, plan.fixed_mask | b.fixed_mask, plan.value | b.value, flag);
    } else {
      uint64_t anc_mask = 0;
      auto compute = [&] {
        for (size_t i = 0; i < plan.multi.size(); ++i)
          for (const auto& b : plan.multi[i]) emit_mcx(c, b.fixed_mask, b.value, anc0 + int(i));
      };
      compute();
      for (size_t i = 0; i < plan.multi.size(); ++i) anc_mask |= uint64_t(1) << (anc0 + i);
      emit_mcx(c, plan.fixed_mask | anc_mask, plan.value | anc_mask, flag);
      compute();  // uncompute, self-inverse
    }
  }
  return c;
}

}  // namespace qbpx
