#pragma once
// Experiment drivers behind the CLI: the condition-number sweep and the noisy
// quantity-of-interest confidence table. Both emit CSV with a metadata header
// so a result file regenerates byte-identically from its config and seed.

#include <string>
#include <vector>

#include "qbpx/solver.hpp"

namespace qbpx {

struct ConditionConfig {
  int d = 1;
  int lmin = 3;
  int lmax = 12;
  // dense-factor guards for d=2; levels above the cap are dropped with a
  // warning recorded in the CSV metadata
  int cap_d2_bpx = 5;
  int cap_d2_none = 4;
};

struct ConditionRow {
  int L = 0;
  int d = 1;
  std::string method;  // "bpx" or "none"
  long steps = 0;
  double rel_error = 0;
  double kappa_eff = 0;
};

// tol = 2^-L per level; rows sorted by (L, method)
std::vector<ConditionRow> condition_sweep(const ConditionConfig& cfg,
                                          std::vector<std::string>* warnings = nullptr);

void write_condition_csv(const std::string& path, const ConditionConfig& cfg,
                         const std::vector<ConditionRow>& rows,
                         const std::vector<std::string>& warnings);

struct NoiseConfig {
  int L = 4;
  std::vector<double> eps2 = {7e-3, 3e-3, 1e-3, 1e-4, 0.0};
  std::vector<int> J = {2, 3, 4};
  int runs = 200;
  long shots = 10000;
  int traj_per_run = 10;
  uint64_t seed = 1;
  double kappa_eff = 2.8;
  double tol = 0.1;
};

struct NoiseRow {
  double eps2 = 0;
  int J = 0;
  double mean = 0;
  double ci_low = 0;   // 95% over the independent runs
  double ci_high = 0;
};

std::vector<NoiseRow> noise_sweep(const NoiseConfig& cfg);

void write_noise_csv(const std::string& path, const NoiseConfig& cfg,
                     const std::vector<NoiseRow>& rows);

}  // namespace qbpx
