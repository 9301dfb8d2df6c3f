#include "qbpx/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <stdexcept>

namespace qbpx {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void open_csv(std::ofstream& out, const std::string& path,
              const std::vector<std::string>& metadata) {
  out.open(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# qbpx 0.1\n";
  for (const auto& line : metadata) out << "# " << line << "\n";
}

}  // namespace

std::vector<ConditionRow> condition_sweep(const ConditionConfig& cfg,
                                          std::vector<std::string>* warnings) {
  if (cfg.d != 1 && cfg.d != 2) throw std::invalid_argument("condition sweep: d must be 1 or 2");
  if (cfg.lmin < 1 || cfg.lmax < cfg.lmin)
    throw std::invalid_argument("condition sweep: bad level range");

  struct Point {
    int L;
    bool bpx;
  };
  std::vector<Point> points;
  for (int L = cfg.lmin; L <= cfg.lmax; ++L)
    for (bool bpx : {true, false}) {
      if (cfg.d == 2) {
        int cap = bpx ? cfg.cap_d2_bpx : cfg.cap_d2_none;
        if (L > cap) {
          if (warnings)
            warnings->push_back("dropped d=2 " + std::string(bpx ? "bpx" : "none") +
                                " rows above L=" + std::to_string(cap) +
                                " (dense emulation guard)");
          continue;
        }
      }
      points.push_back({L, bpx});
    }
  // dedupe warnings (one per method)
  if (warnings) {
    std::sort(warnings->begin(), warnings->end());
    warnings->erase(std::unique(warnings->begin(), warnings->end()), warnings->end());
  }

  std::vector<std::future<ConditionRow>> jobs;
  jobs.reserve(points.size());
  for (const Point& pt : points)
    jobs.push_back(std::async(std::launch::async, [pt, &cfg]() {
      LevelSpec spec{cfg.d, pt.L};
      SearchResult r = kappa_eff_search(spec, std::ldexp(1.0, -pt.L), pt.bpx);
      return ConditionRow{pt.L, cfg.d, pt.bpx ? "bpx" : "none", r.steps, r.rel_error,
                          r.kappa_eff};
    }));
  std::vector<ConditionRow> rows;
  rows.reserve(jobs.size());
  for (auto& j : jobs) rows.push_back(j.get());
  std::sort(rows.begin(), rows.end(), [](const ConditionRow& x, const ConditionRow& y) {
    return std::tie(x.L, x.method) < std::tie(y.L, y.method);
  });
  return rows;
}

void write_condition_csv(const std::string& path, const ConditionConfig& cfg,
                         const std::vector<ConditionRow>& rows,
                         const std::vector<std::string>& warnings) {
  std::ofstream out;
  std::vector<std::string> meta = {"experiment=condition",
                                   "d=" + std::to_string(cfg.d),
                                   "levels=" + std::to_string(cfg.lmin) + ".." +
                                       std::to_string(cfg.lmax),
                                   "tol=2^-L"};
  meta.insert(meta.end(), warnings.begin(), warnings.end());
  open_csv(out, path, meta);
  out << "L,d,method,steps,rel_error,kappa_eff\n";
  for (const auto& r : rows)
    out << r.L << "," << r.d << "," << r.method << "," << r.steps << ","
        << fmt(r.rel_error) << "," << fmt(r.kappa_eff) << "\n";
}

std::vector<NoiseRow> noise_sweep(const NoiseConfig& cfg) {
  LevelSpec spec{1, cfg.L};
  Coefficient a = Coefficient::identity(1);
  auto one = [](const Vec&) { return 1.0; };

  struct Point {
    double eps;
    int J;
    uint64_t seed;
  };
  std::vector<Point> points;
  uint64_t idx = 0;
  for (double eps : cfg.eps2)
    for (int J : cfg.J) points.push_back({eps, J, cfg.seed + 7919 * ++idx});

  std::vector<std::future<NoiseRow>> jobs;
  jobs.reserve(points.size());
  for (const Point& pt : points)
    jobs.push_back(std::async(std::launch::async, [pt, &cfg, &spec, &a, &one]() {
      QoiMode mode;
      mode.kind = QoiMode::noisy;
      mode.J = pt.J;
      mode.kappa_eff = cfg.kappa_eff;
      mode.eps2 = pt.eps;
      mode.runs = cfg.runs;
      mode.shots = cfg.shots;
      mode.traj_per_run = cfg.traj_per_run;
      mode.seed = pt.seed;
      std::vector<double> vals = noisy_qoi_runs(spec, a, one, one, cfg.tol, mode);
      // two-stage run values are reciprocals of a success probability:
      // average on the probability scale and transform the interval back
      double mi = 0;
      for (double v : vals) mi += 1.0 / v;
      mi /= vals.size();
      double vi = 0;
      for (double v : vals) vi += (1.0 / v - mi) * (1.0 / v - mi);
      double si = vals.size() > 1 ? std::sqrt(vi / (vals.size() - 1.0) / vals.size()) : 0;
      double lo_i = mi + 1.96 * si, hi_i = std::max(mi - 1.96 * si, 1e-300);
      return NoiseRow{pt.eps, pt.J, 1.0 / mi, 1.0 / lo_i, 1.0 / hi_i};
    }));
  std::vector<NoiseRow> rows;
  rows.reserve(jobs.size());
  for (auto& j : jobs) rows.push_back(j.get());
  std::sort(rows.begin(), rows.end(), [](const NoiseRow& x, const NoiseRow& y) {
    return std::tie(x.eps2, x.J) < std::tie(y.eps2, y.J);
  });
  return rows;
}

void write_noise_csv(const std::string& path, const NoiseConfig& cfg,
                     const std::vector<NoiseRow>& rows) {
  std::ofstream out;
  open_csv(out, path,
           {"experiment=noise", "d=1", "L=" + std::to_string(cfg.L),
            "runs=" + std::to_string(cfg.runs), "shots=" + std::to_string(cfg.shots),
            "traj_per_run=" + std::to_string(cfg.traj_per_run),
            "seed=" + std::to_string(cfg.seed), "kappa_eff=" + fmt(cfg.kappa_eff),
            "tol=" + fmt(cfg.tol)});
  out << "eps2,J,mean,ci_low,ci_high\n";
  for (const auto& r : rows)
    out << fmt(r.eps2) << "," << r.J << "," << fmt(r.mean) << "," << fmt(r.ci_low) << ","
        << fmt(r.ci_high) << "\n";
}

}  // namespace qbpx
