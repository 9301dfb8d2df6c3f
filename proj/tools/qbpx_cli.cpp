// qbpx: assembly, encodings, state preparation, QoI solves and the two
// experiment sweeps from one binary. CSV everywhere; plotting is external.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qbpx/cf_encoding.hpp"
#include "qbpx/experiments.hpp"
#include "qbpx/fem.hpp"
#include "qbpx/simulate.hpp"
#include "qbpx/solver.hpp"
#include "qbpx/state_prep.hpp"

using namespace qbpx;

namespace {

// "const:<v>", "poly:<c0,c1,...>" (polynomial in x_0), or the shorthands
// "one" and "x"
std::function<double(const Vec&)> parse_fn(const std::string& s) {
  if (s == "one" || s == "const:1") return [](const Vec&) { return 1.0; };
  if (s == "x") return [](const Vec& x) { return x(0); };
  auto colon = s.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("functional", "bad spec: " + s);
  std::string kind = s.substr(0, colon), body = s.substr(colon + 1);
  if (kind == "const") {
    double v = std::stod(body);
    return [v](const Vec&) { return v; };
  }
  if (kind == "poly") {
    std::vector<double> c;
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) c.push_back(std::stod(tok));
    return [c](const Vec& x) {
      double acc = 0;
      for (size_t k = c.size(); k-- > 0;) acc = acc * x(0) + c[k];
      return acc;
    };
  }
  throw CLI::ValidationError("functional", "bad spec: " + s);
}

std::vector<double> read_phases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--phases", "cannot open " + path);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  if (out.empty()) throw CLI::ValidationError("--phases", "no angles in " + path);
  return out;
}

void count_2q(const Circuit& c, long& logical, long& compiled) {
  logical = (long)c.gates.size();
  Circuit dec = decompose_to_cx(c);
  compiled = 0;
  for (const auto& g : dec.gates)
    if (!g.controls.empty()) ++compiled;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BPX-preconditioned quantum FEM toolkit"};
  app.require_subcommand(1);

  int d = 1, L = 4;
  std::string out, ffn = "one", mfn, what = "stiffness", path = "optimized", mode_s = "emulation";
  std::string dump, phases_file;
  double tol = 1e-3, eps2 = 1e-3, kappa = 0, aconst = 1.0;
  long shots = 10000;
  uint64_t seed = 1;
  int runs = 200, traj = 10, J = -1;

  auto add_grid = [&](CLI::App* c) {
    c->add_option("--d", d, "spatial dimension")->check(CLI::Range(1, 3));
    c->add_option("--L", L, "finest level");
  };

  // assemble: dense reference matrices
  auto* assemble = app.add_subcommand("assemble", "write a dense reference matrix as CSV");
  add_grid(assemble);
  assemble->add_option("--what", what, "stiffness|frame|cf|fsf")
      ->check(CLI::IsMember({"stiffness", "frame", "cf", "fsf"}));
  assemble->add_option("--a", aconst, "constant scalar coefficient");
  assemble->add_option("--out", out, "output CSV")->required();

  // encode: frame encodings and their circuits
  auto* encode = app.add_subcommand("encode", "build the frame block encoding");
  add_grid(encode);
  encode->add_option("--path", path, "generic|optimized")
      ->check(CLI::IsMember({"generic", "optimized"}));
  encode->add_option("--dump", dump, "write the gate list to this file");

  // prep: the preconditioned right-hand-side state
  auto* prep = app.add_subcommand("prep", "prepare |F^T r> and dump its table");
  add_grid(prep);
  prep->add_option("--f", ffn, "load functional (one|x|const:v|poly:c0,c1,...)");
  prep->add_option("--out", out, "amplitude-table CSV");
  prep->add_option("--dump", dump, "write the preparation gate list");

  // qoi: the solve pipeline in any mode
  auto* qoi = app.add_subcommand("qoi", "estimate m^T S^-1 r");
  add_grid(qoi);
  qoi->add_option("--mode", mode_s, "emulation|exact|sampled|noisy")
      ->check(CLI::IsMember({"emulation", "exact", "sampled", "noisy"}));
  qoi->add_option("--tol", tol, "polynomial tolerance");
  qoi->add_option("--f", ffn, "right-hand-side functional");
  qoi->add_option("--m", mfn, "moment functional (default: same as --f)");
  qoi->add_option("--a", aconst, "constant scalar coefficient");
  qoi->add_option("--shots", shots);
  qoi->add_option("--seed", seed);
  qoi->add_option("--eps2", eps2, "two-qubit depolarizing rate (noisy)");
  qoi->add_option("--runs", runs, "independent runs (noisy)");
  qoi->add_option("--traj", traj, "trajectories pooled per run (noisy)");
  qoi->add_option("--J", J, "polynomial degree override");
  qoi->add_option("--kappa", kappa, "effective condition override");
  qoi->add_option("--phases", phases_file, "phase-angle file, one float per line");
  qoi->add_option("--out", out, "append-style result CSV");

  // condition: Fig.-3-style sweep
  ConditionConfig ccfg;
  std::string levels = "3..12";
  auto* cond = app.add_subcommand("condition", "steps-vs-level sweep, both methods");
  cond->add_option("--d", ccfg.d)->check(CLI::Range(1, 2));
  cond->add_option("--levels", levels, "a..b");
  cond->add_option("--cap-bpx", ccfg.cap_d2_bpx, "d=2 dense guard, bpx rows");
  cond->add_option("--cap-none", ccfg.cap_d2_none, "d=2 dense guard, unpreconditioned rows");
  cond->add_option("--out", out, "output CSV")->required();

  // noise: confidence-interval table
  NoiseConfig ncfg;
  auto* noise = app.add_subcommand("noise", "noisy-QoI confidence intervals");
  noise->add_option("--L", ncfg.L);
  noise->add_option("--eps2", ncfg.eps2, "error rates to sweep")->delimiter(',');
  noise->add_option("--J", ncfg.J, "degree parameters to sweep")->delimiter(',');
  noise->add_option("--runs", ncfg.runs);
  noise->add_option("--shots", ncfg.shots);
  noise->add_option("--traj", ncfg.traj_per_run);
  noise->add_option("--seed", ncfg.seed);
  noise->add_option("--kappa", ncfg.kappa_eff);
  noise->add_option("--tol", ncfg.tol);
  noise->add_option("--out", out, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*assemble) {
      LevelSpec spec{d, L};
      Coefficient a;
      a.matrix = [aconst, d](const Vec&) { return Mat(aconst * Mat::Identity(d, d)); };
      Mat m;
      if (what == "stiffness") m = stiffness_matrix(spec, a);
      else if (what == "frame") m = frame_matrix(spec);
      else if (what == "cf") m = cf_matrix(spec);
      else m = cf_matrix(spec).transpose() * coefficient_block(spec, a) * cf_matrix(spec);
      write_matrix_csv(out, m, {"what=" + what, "d=" + std::to_string(d),
                                "L=" + std::to_string(L)});
      std::printf("%s %ldx%ld -> %s\n", what.c_str(), (long)m.rows(), (long)m.cols(),
                  out.c_str());
    } else if (*encode) {
      LevelSpec spec{d, L};
      BlockEncoding enc = path == "generic" ? build_U_CF(spec) : build_U_CF_optimized(spec);
      long logical, compiled;
      count_2q(enc.circuit, logical, compiled);
      std::printf("path=%s qubits=%d gamma=%.12g logical_gates=%ld compiled_2q=%ld\n",
                  path.c_str(), enc.circuit.n, enc.gamma, logical, compiled);
      if (!dump.empty()) {
        std::ofstream df(dump);
        df << enc.circuit.dump();
      }
    } else if (*prep) {
      LevelSpec spec{d, L};
      PrepResult pr = prep_preconditioned(spec, parse_fn(ffn));
      std::printf("norm=%.12g qubits=%d gates=%zu\n", pr.norm, pr.circuit.n,
                  pr.circuit.gates.size());
      if (!out.empty()) write_table_csv(out, pr.table);
      if (!dump.empty()) {
        std::ofstream df(dump);
        df << pr.circuit.dump();
      }
    } else if (*qoi) {
      LevelSpec spec{d, L};
      Coefficient a;
      a.matrix = [aconst, d](const Vec&) { return Mat(aconst * Mat::Identity(d, d)); };
      QoiMode mode;
      if (mode_s == "emulation") mode.kind = QoiMode::emulation;
      else if (mode_s == "exact") mode.kind = QoiMode::exact_amplitude;
      else if (mode_s == "sampled") mode.kind = QoiMode::sampled;
      else mode.kind = QoiMode::noisy;
      mode.shots = shots;
      mode.seed = seed;
      mode.eps2 = eps2;
      mode.runs = runs;
      mode.traj_per_run = traj;
      mode.J = J;
      mode.kappa_eff = kappa;
      if (!phases_file.empty()) mode.phases = read_phases(phases_file);
      auto f = parse_fn(ffn);
      auto m = mfn.empty() ? f : parse_fn(mfn);
      QoiResult r = qoi_pipeline(spec, a, f, m, tol, mode);
      std::printf("mode=%s estimate=%.12g reference=%.12g rel_error=%.4g steps=%ld\n",
                  mode_s.c_str(), r.estimate, r.reference, r.rel_error, r.steps);
      if (r.stderr_est > 0) std::printf("stderr=%.4g\n", r.stderr_est);
      if (!out.empty()) {
        std::ofstream of(out);
        of << "# qbpx 0.1\n# experiment=qoi\n# d=" << d << "\n# L=" << L
           << "\n# seed=" << seed << "\nmode,estimate,reference,rel_error,ledger,steps\n";
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%.12g,%.12g,%.12g,%.12g,%ld\n", mode_s.c_str(),
                      r.estimate, r.reference, r.rel_error, r.ledger.product(), r.steps);
        of << buf;
      }
    } else if (*cond) {
      auto dots = levels.find("..");
      if (dots == std::string::npos) throw std::invalid_argument("--levels expects a..b");
      ccfg.lmin = std::stoi(levels.substr(0, dots));
      ccfg.lmax = std::stoi(levels.substr(dots + 2));
      std::vector<std::string> warnings;
      auto rows = condition_sweep(ccfg, &warnings);
      write_condition_csv(out, ccfg, rows, warnings);
      for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::printf("%zu rows -> %s\n", rows.size(), out.c_str());
    } else if (*noise) {
      auto rows = noise_sweep(ncfg);
      write_noise_csv(out, ncfg, rows);
      std::printf("%zu rows -> %s\n", rows.size(), out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
