// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run. Each criterion prints one PASS or FAIL line; the exit status
// is nonzero when any selected criterion fails.
//
// Long results (the suite teacher and the ablation rows) live under --cache and
// are reused only while the library is byte-identical to the one that produced
// them.

#include "../oracles.hpp"
#include "boundary.hpp"
#include "context.hpp"
#include "data.hpp"
#include "distill.hpp"
#include "errors.hpp"
#include "fusion.hpp"
#include "harness.hpp"
#include "metrics.hpp"
#include "models.hpp"

#include "CLI11.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bckd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Paths {
  fs::path cache;
  std::string cli;
  std::string suite;
  std::string smoke;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

RunOptions logging() {
  RunOptions opt;
  opt.log = [](const std::string& line) {
    std::fprintf(stderr, "  %s\n", line.c_str());
    std::fflush(stderr);
  };
  return opt;
}

void prepare_cache(const fs::path& cache, const std::string& library) {
  fs::create_directories(cache);
  const std::string stamp = digest_file(library);
  const fs::path file = cache / "stamp.txt";
  std::string old;
  if (std::ifstream f(file); f) std::getline(f, old);
  if (old == stamp) return;
  for (const auto& e : fs::directory_iterator(cache)) fs::remove_all(e.path());
  std::ofstream(file) << stamp << "\n";
}

// The shared teacher, at the location run_ablation looks for it.
std::string suite_teacher(const Paths& p) {
  const ExperimentConfig cfg = load_config(p.suite);
  const fs::path dir = p.cache / "ablation" / "teacher";
  const std::string ckpt = (dir / "ckpt_teacher.bin").string();
  if (fs::exists(ckpt)) {
    try {
      const auto meta = load_checkpoint(ckpt, &cfg.teacher).meta;
      if (json::parse(meta.extra_json).value("config_digest", std::string()) == teacher_config_digest(cfg)) return ckpt;
    } catch (const Error&) {
    }
  }
  return train_teacher(cfg, dir.string(), logging()).checkpoint;
}

// 1. Every loss and metric against its brute-force oracle.
Outcome oracle_equivalence(const Paths&) {
  std::map<std::string, double> worst;
  std::map<std::string, int> count;
  auto note = [&](const std::string& name, double err) {
    worst[name] = std::max(worst[name], err);
    ++count[name];
  };
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    {
      const int c = 2 + seed % 6, n = 1 + seed % 11;
      const double tau = 0.5 + 0.5 * (seed % 7);
      const RowMatrix t = oracle::random_matrix(c, n, 10 * seed, -4, 4);
      const RowMatrix s = oracle::random_matrix(c, n, 10 * seed + 1, -4, 4);
      note("kd_loss", oracle::rel_err(kd_loss(t, s, tau), oracle::kd_loss(t, s, tau)));
    }
    {
      const int h = 2 + seed % 5, w = 1 + seed % 6;
      const double tau = 0.5 + 0.25 * (seed % 9);
      Grid a(h, w), b(h, w);
      a.data = oracle::random_tensor(1, h, w, 10 * seed + 2, 0, 1).data;
      b.data = oracle::random_tensor(1, h, w, 10 * seed + 3, 0, 1).data;
      const double got = boundary_loss({a, BoundaryMode::soft}, {b, BoundaryMode::soft}, tau);
      note("boundary_loss", oracle::rel_err(got, oracle::boundary_loss(a.data, b.data, tau)));
    }
    {
      const int d = 2 + seed % 6, hw = 1 + seed % 16;
      const double tb = 1.0 + seed % 3, sb = 1.0 + seed % 2, tau = 0.75 + 0.5 * (seed % 5);
      const RowMatrix fa = oracle::random_matrix(d, hw, 10 * seed + 4, -2, 2);
      const RowMatrix fb = oracle::random_matrix(d, hw, 10 * seed + 5, -2, 2);
      const RelationMatrix t = self_relation(fa, tb), s = self_relation(fb, sb);
      const RowMatrix want = oracle::self_relation(fa, tb);
      double e = 0;
      for (Eigen::Index k = 0; k < want.size(); ++k) e = std::max(e, oracle::rel_err(t.values.data()[k], want.data()[k]));
      note("self_relation", e);
      note("context_loss",
           oracle::rel_err(context_loss(t, s, tau), oracle::context_loss(t.values, tb, s.values, sb, tau)));
    }
    {
      std::mt19937_64 rng(10 * seed + 6);
      const int classes = 2 + seed % 5, h = 4 + seed % 5, w = 3 + seed % 7;
      LabelMask pred(h, w), gt(h, w);
      std::vector<int> p(h * w), g(h * w);
      for (int i = 0; i < h * w; ++i) {
        p[i] = static_cast<int>(rng() % classes);
        g[i] = rng() % 9 == 0 ? kIgnoreLabel : static_cast<int>(rng() % classes);
        pred.labels[i] = static_cast<std::uint8_t>(p[i]);
        gt.labels[i] = static_cast<std::uint8_t>(g[i]);
      }
      note("miou", oracle::rel_err(miou(pred, gt, classes), oracle::miou(p, g, classes)));
    }
    {
      std::mt19937_64 rng(10 * seed + 7);
      std::vector<Pixel> a, b;
      for (int i = 0; i < 10 + static_cast<int>(seed % 15); ++i) a.push_back({int(rng() % 24), int(rng() % 24)});
      for (int i = 0; i < 8 + static_cast<int>(seed % 13); ++i) b.push_back({int(rng() % 24), int(rng() % 24)});
      const double r = 2.0 + seed % 5;
      note("lhd_aggregate", oracle::rel_err(lhd_aggregate(BoundaryPointSet(a), BoundaryPointSet(b), r),
                                            oracle::lhd_aggregate(a, b, r)));
    }
  }
  Outcome o{true, ""};
  for (const auto& [name, err] : worst) {
    o.pass = o.pass && err <= 1e-9 && count[name] >= 20;
    o.detail += name + " " + fmt("%.1e", err) + " (" + std::to_string(count[name]) + ") ";
  }
  return o;
}

// 2. Analytic gradients of both distillation losses w.r.t. the student's fused map.
Outcome gradient_suite(const Paths&) {
  const double h = 1e-6;
  auto numeric = [&](FusedFeatureMap& f, const std::function<double(const FusedFeatureMap&)>& obj) {
    std::vector<double> g(f.data.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double keep = f.data.data[i];
      f.data.data[i] = keep + h;
      const double up = obj(f);
      f.data.data[i] = keep - h;
      const double down = obj(f);
      f.data.data[i] = keep;
      g[i] = (up - down) / (2 * h);
    }
    return g;
  };

  double worst_bd = 0, worst_cd = 0;
  const int d = 8, instances = 10;
  for (std::uint64_t seed = 0; seed < instances; ++seed) {
    const double tau = 1.0 + 0.25 * seed;
    // Features small enough that neighbour differences sit on the sigmoid's
    // slope at the default softness; far off it the gradient drops below the
    // finite-difference noise floor.
    FusedFeatureMap student{oracle::random_tensor(d, 4, 4, 100 + seed, -0.2, 0.2), 8};
    const FusedFeatureMap teacher{oracle::random_tensor(d, 4, 4, 200 + seed, -0.2, 0.2), 8};

    const BoundaryConfig soft;
    ScalarProjection sp("s", d), tp("t", d);
    std::mt19937_64 rng(300 + seed);
    sp.init(rng);
    tp.init(rng);
    const BoundaryMap target = boundary_map(project_scalar(teacher, tp), soft);
    const Grid field = project_scalar(student, sp);
    BoundaryTrace bt;
    const BoundaryMap smap = boundary_map(field, soft, &bt);
    Grid d_scores;
    boundary_loss(target, smap, tau, &d_scores);
    const Tensor a_bd = project_scalar_backward(student, sp, boundary_map_backward(field, soft, bt, d_scores));
    const auto n_bd = numeric(student, [&](const FusedFeatureMap& f) {
      return boundary_loss(target, boundary_map(project_scalar(f, sp), soft), tau);
    });
    worst_bd = std::max(worst_bd, oracle::grad_rel_err(a_bd.data, n_bd));

    AlignmentParams sa("s", d, true), ta("t", d, true);
    sa.init_identity();
    ta.init_identity();
    const RowMatrix mix = oracle::random_matrix(d, d, 400 + seed, -0.3, 0.3);
    for (int i = 0; i < d * d; ++i) sa.weight().value[i] += mix.data()[i];
    const RowMatrix tg = scaled_gram(align_features(teacher, ta));
    AlignTrace at;
    const RowMatrix aligned = align_features(student, sa, &at);
    RowMatrix d_gram;
    context_loss_from_gram(tg, scaled_gram(aligned), tau, &d_gram);
    const Tensor a_cd = align_features_backward(student, sa, at, scaled_gram_backward(aligned, d_gram));
    const auto n_cd = numeric(student, [&](const FusedFeatureMap& f) {
      return context_loss_from_gram(tg, scaled_gram(align_features(f, sa)), tau);
    });
    worst_cd = std::max(worst_cd, oracle::grad_rel_err(a_cd.data, n_cd));
  }
  return {worst_bd <= 1e-4 && worst_cd <= 1e-4, "L_BD " + fmt("%.2e", worst_bd) + ", L_CD " + fmt("%.2e", worst_cd) +
                                                    " over " + std::to_string(instances) + " 8x4x4 maps"};
}

// 3. Eigenvalue perturbation bound on symmetrised relation matrices.
Outcome weyl_property(const Paths&) {
  int violations = 0, pairs = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 100; ++seed, ++pairs) {
    const int hw = 2 + seed % 15, dim = 3 + seed % 6;
    const double tau = 1.0 + 0.5 * (seed % 4);
    const RowMatrix a = symmetrize(self_relation(oracle::random_matrix(dim, hw, seed, -2, 2), tau).values);
    const RowMatrix b = symmetrize(self_relation(oracle::random_matrix(dim, hw, seed + 500, -2, 2), tau).values);
    const WeylVerdict v = weyl_check(a, b);
    // Independent eigenvalues from the general solver.
    const Eigen::EigenSolver<Eigen::MatrixXd> ea(a), eb(b);
    std::vector<double> la(hw), lb(hw);
    for (int i = 0; i < hw; ++i) {
      la[i] = ea.eigenvalues()[i].real();
      lb[i] = eb.eigenvalues()[i].real();
    }
    std::sort(la.begin(), la.end());
    std::sort(lb.begin(), lb.end());
    double gap = 0;
    for (int i = 0; i < hw; ++i) gap = std::max(gap, std::abs(la[i] - lb[i]));
    const double frob = (a - b).norm();
    if (!v.holds || gap > frob + 1e-12) ++violations;
    tightest = std::min(tightest, frob - gap);
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(pairs) +
                               " pairs, min slack " + fmt("%.3e", tightest)};
}

// 4. The weighting schedule only ever shrinks the distillation share.
Outcome share_monotone(const Paths&) {
  int bad = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const RowMatrix l = oracle::random_matrix(1, 3, seed, 0.0, 3.0);
    DistillSchedule s;
    s.t_max = 1 + static_cast<int>(seed * 13 % 120);
    double prev = std::numeric_limits<double>::infinity();
    for (int t = 1; t <= s.t_max; ++t) {
      s.t = t;
      const LossBreakdown b = total_loss(l(0, 0), l(0, 1), l(0, 2), s);
      const double share = b.total > 0 ? (b.total - b.l_ss) / b.total : 0.0;
      if (share > prev) ++bad;
      prev = share;
    }
    if (schedule_r(1, s.t_max) != 1.0) ++bad;
    if (schedule_r(s.t_max, s.t_max) != 1.0 / s.t_max) ++bad;
  }
  return {bad == 0, std::to_string(bad) + " violations over 200 schedules"};
}

// 5. Teacher against itself and ground truth against itself.
Outcome metric_fixed_points(const Paths& p) {
  const ExperimentConfig cfg = load_config(p.suite);
  const std::string teacher = suite_teacher(p);
  const EvalReport rep = evaluate(cfg, teacher, teacher, (p.cache / "eval_self").string(), false, logging());
  const double mfs = rep.record.mfs_rho_mean.value_or(std::numeric_limits<double>::quiet_NaN());
  double worst_lhd = 0.0;
  for (int i = 0; i < cfg.dataset.val_count; ++i) {
    const Scene s = generate_scene(scene_for(cfg.dataset, cfg.dataset.val_begin + i));
    const BoundaryPointSet gt = boundary_points_from_mask(s.mask);
    if (gt.empty()) continue;
    worst_lhd = std::max(worst_lhd, lhd_aggregate(gt, gt, cfg.eval.lhd_radius));
  }
  return {std::abs(mfs - 1.0) <= 0.02 && worst_lhd == 0.0,
          "MFS " + fmt("%.4f", mfs) + ", max LHD(gt, gt) " + fmt("%.1f", worst_lhd) + " over " +
              std::to_string(cfg.dataset.val_count) + " val scenes"};
}

std::vector<AblationRow> ablation(const Paths& p) {
  static std::vector<AblationRow> rows;
  if (rows.empty()) {
    suite_teacher(p);
    rows = run_ablation(load_config(p.suite), (p.cache / "ablation").string(), logging());
  }
  return rows;
}

// 6. Directional ordering of the ablation rows (mIoU in percentage points).
Outcome ablation_ordering(const Paths& p) {
  const auto rows = ablation(p);
  std::map<std::uint64_t, std::map<std::string, double>> by_seed;
  std::map<std::string, double> mean;
  for (const auto& r : rows) by_seed[r.seed][r.row] = r.miou;
  for (const auto& [seed, m] : by_seed)
    for (const auto& [row, v] : m) mean[row] += v / static_cast<double>(by_seed.size());
  int holding = 0;
  std::string detail;
  for (const auto& [seed, m] : by_seed) {
    const double base = m.at("baseline");
    const bool ok = m.at("BD") > base && m.at("CD") > base && m.at("BD+CD+WD") >= base + 1.0;
    holding += ok;
    detail += "seed " + std::to_string(seed) + (ok ? " holds" : " fails") + " (base " + fmt("%.2f", base) + ", BD " +
              fmt("%+.2f", m.at("BD") - base) + ", CD " + fmt("%+.2f", m.at("CD") - base) + ", all " +
              fmt("%+.2f", m.at("BD+CD+WD") - base) + "); ";
  }
  detail += "means: base " + fmt("%.2f", mean["baseline"]) + " BD " + fmt("%.2f", mean["BD"]) + " CD " +
            fmt("%.2f", mean["CD"]) + " BD+CD " + fmt("%.2f", mean["BD+CD"]) + " BD+CD+WD " +
            fmt("%.2f", mean["BD+CD+WD"]);
  return {holding >= 2, std::to_string(holding) + "/" + std::to_string(by_seed.size()) + " seeds; " + detail};
}

// 7. Distillation adds nothing at inference time.
Outcome efficiency_invariant(const Paths& p) {
  const auto rows = ablation(p);
  bool same = !rows.empty();
  for (const auto& r : rows) same = same && r.params == rows[0].params && r.macs == rows[0].macs;
  const Model bare = build_model(load_config(p.suite).student);
  same = same && rows[0].params == inference_params(bare);
  return {same, std::to_string(rows.size()) + " rows, params " + std::to_string(rows[0].params) + ", MACs " +
                    std::to_string(rows[0].macs)};
}

// 8. Hard boundary map of the trained teacher branch, at grid resolution.
Outcome boundary_quality(const Paths& p) {
  const ExperimentConfig cfg = load_config(p.suite);
  const Model teacher = load_checkpoint(suite_teacher(p)).model;
  BoundaryConfig hard = cfg.boundary;
  hard.mode = BoundaryMode::hard;
  double sum = 0.0;
  int scored = 0, missed = 0;
  for (int i = 0; i < cfg.dataset.val_count; ++i) {
    const Scene s = generate_scene(scene_for(cfg.dataset, cfg.dataset.val_begin + i));
    const FusedFeatureMap fused = fused_features(teacher, s.image);
    const BoundaryPointSet pred(boundary_pixels(boundary_map(project_scalar(fused, teacher.branch.scalar), hard)));
    const BoundaryPointSet gt = boundary_points_from_mask(downsample_mask(s.mask, fused.reference_stride));
    if (pred.empty() && gt.empty()) continue;
    if (pred.empty() || gt.empty()) {
      sum += 2.0 * cfg.eval.lhd_radius;
      ++missed;
    } else {
      sum += lhd_aggregate(pred, gt, cfg.eval.lhd_radius);
    }
    ++scored;
  }
  const double lhd = scored ? sum / scored : std::numeric_limits<double>::quiet_NaN();
  return {lhd <= 2.0, "LHD " + fmt("%.3f", lhd) + " grid px over " + std::to_string(scored) + " scenes (" +
                          std::to_string(missed) + " with one side empty)"};
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const int status = std::system(args.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 9. Two separate processes, same config, identical records.
Outcome determinism(const Paths& p) {
  const fs::path dir = p.cache / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  // The small config, stretched to a few epochs so temperature growth and the
  // weighting schedule both show up in the records.
  json j;
  std::ifstream(p.smoke) >> j;
  j["epochs"] = 4;
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << j.dump(2) << "\n";
  const std::string q = "'" + p.cli + "' -q ";
  const std::string cfg = " --config '" + cfg_path.string() + "'";
  if (run_cli(q + "teacher train" + cfg + " --out '" + (dir / "T").string() + "' > /dev/null") != 0)
    return {false, "teacher train failed"};
  const std::string teacher = " --teacher '" + (dir / "T" / "ckpt_teacher.bin").string() + "'";
  for (const char* run : {"A", "B"})
    if (run_cli(q + "distill run" + cfg + teacher + " --out '" + (dir / run).string() + "' > /dev/null") != 0)
      return {false, std::string("distill run ") + run + " failed"};
  const std::string a = slurp(dir / "A" / "records.jsonl"), b = slurp(dir / "B" / "records.jsonl");
  const bool ckpt_same = slurp(dir / "A" / "ckpt_student.bin") == slurp(dir / "B" / "ckpt_student.bin");
  return {!a.empty() && a == b, "records.jsonl " + std::to_string(a.size()) + " bytes, " +
                                    (a == b ? "identical" : "different") + "; checkpoints " +
                                    (ckpt_same ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  Paths paths;
  std::string cache = "acceptance_cache", library;
  app.add_option("--only", only, "Run a single criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--cache", cache, "Directory for trained models and ablation rows");
  app.add_option("--cli", paths.cli, "bckd command-line binary")->required();
  app.add_option("--suite", paths.suite, "Suite config")->required();
  app.add_option("--library", library, "Shared library whose digest keys the cache")->required();
  app.add_option("--smoke", paths.smoke, "Small config for the determinism run")->required();
  CLI11_PARSE(app, argc, argv);
  paths.cache = fs::absolute(cache);
  prepare_cache(paths.cache, library);

  struct Criterion {
    const char* name;
    Outcome (*run)(const Paths&);
  };
  const Criterion criteria[] = {
      {"oracle equivalence", oracle_equivalence},   {"gradient suite", gradient_suite},
      {"weyl bound", weyl_property},                {"share schedule", share_monotone},
      {"metric fixed points", metric_fixed_points}, {"ablation ordering", ablation_ordering},
      {"efficiency invariant", efficiency_invariant}, {"boundary map quality", boundary_quality},
      {"determinism", determinism},
  };

  int failed = 0;
  for (int i = 1; i <= 9; ++i) {
    if (only && only != i) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i - 1].run(paths);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d %s [%s]: %s (%.1f s)\n", i, o.pass ? "PASS" : "FAIL", criteria[i - 1].name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
