// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "harness.hpp"

#include "context.hpp"
#include "errors.hpp"
#include "png_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace bckd {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void say(const RunOptions& opt, const std::string& msg) {
  if (opt.log) opt.log(msg);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// SGD with heavy-ball momentum: v <- mu v + g + wd w; w <- w - lr v.
class Sgd {
 public:
  Sgd(std::vector<Param*> params, const OptimizerConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Param* p : params_) velocity_.emplace_back(p->size(), 0.0);
  }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  void step(double lr) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param& p = *params_[k];
      auto& v = velocity_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = cfg_.momentum * v[i] + p.grad[i] + cfg_.weight_decay * p.value[i];
        p.value[i] -= lr * v[i];
      }
    }
  }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<double>> velocity_;
  OptimizerConfig cfg_;
};

double poly_lr(const OptimizerConfig& cfg, long iter, long max_iter) {
  return cfg.lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), cfg.poly_power);
}

std::vector<Scene> make_scenes(const DatasetConfig& data, std::uint64_t begin, int count) {
  std::vector<Scene> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(generate_scene(scene_for(data, begin + i)));
  return out;
}

std::vector<int> epoch_order(int n, std::uint64_t global_seed, int epoch) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(global_seed, 0xE90C + epoch));
  // Fisher-Yates with explicit modulo draws keeps the order library-independent.
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
  return order;
}

struct Sample {
  Tensor image;
  LabelMask mask;
};

Sample training_sample(const ExperimentConfig& cfg, const Scene& scene, std::uint64_t scene_seed, int epoch) {
  Sample s{scene.image, scene.mask};
  if (cfg.dataset.augment) augment(s.image, s.mask, mix_seed(mix_seed(cfg.global_seed, scene_seed), epoch));
  return s;
}

[[noreturn]] void numeric_abort(const std::string& out_dir, const std::string& phase, int epoch,
                                const std::vector<std::uint64_t>& seeds, const std::string& what) {
  json dump{{"phase", phase}, {"epoch", epoch}, {"scene_seeds", seeds}, {"reason", what}};
  std::ofstream f(out_dir + "/nan_batch.json");
  if (f) f << dump.dump(2) << "\n";
  std::string list;
  for (auto s : seeds) list += (list.empty() ? "" : ",") + std::to_string(s);
  fail(ErrorKind::numeric, phase + " epoch " + std::to_string(epoch) + ": " + what + " (batch scene seeds " + list +
                               "; see nan_batch.json)");
}

class RecordWriter {
 public:
  explicit RecordWriter(const std::string& path) : out_(path, std::ios::trunc) {
    require(out_.good(), ErrorKind::io, "cannot open " + path + " for writing");
  }
  void append(const RunRecord& r) {
    out_ << record_to_json(r).dump() << "\n";
    out_.flush();
    require(out_.good(), ErrorKind::io, "failed writing records");
  }

 private:
  std::ofstream out_;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create directory " + dir);
}

struct ValMetrics {
  double miou = 0.0;
  std::vector<double> class_iou;
  std::optional<double> lhd;
  double loss_ss = 0.0;
};

ValMetrics validate_net(const SegNet& net, const std::vector<Scene>& val, double lhd_radius) {
  ConfusionMatrix cm(net.config().head_classes);
  double lhd_sum = 0.0, loss = 0.0;
  int lhd_count = 0;
  for (const Scene& s : val) {
    const NetOutput out = net.forward(s.image);
    loss += segmentation_loss(out.logits, s.mask);
    const LabelMask pred = predict_labels(out.logits);
    cm.add(pred, s.mask);
    const BoundaryPointSet bp = boundary_points_from_mask(pred);
    const BoundaryPointSet bg = boundary_points_from_mask(s.mask);
    if (!bp.empty() && !bg.empty()) {
      lhd_sum += lhd_aggregate(bp, bg, lhd_radius);
      ++lhd_count;
    }
  }
  ValMetrics m;
  m.miou = cm.miou();
  m.class_iou = cm.class_iou();
  if (lhd_count > 0) m.lhd = lhd_sum / lhd_count;
  m.loss_ss = val.empty() ? 0.0 : loss / static_cast<double>(val.size());
  return m;
}

TensorFn fused_fn(const Model& m) {
  return [&m](const Tensor& x) { return fused_features(m, x).data; };
}

double mean_mfs(const Model& teacher, const Model& student, const std::vector<Scene>& val, int images,
                const MfsConfig& base) {
  const int n = std::min<int>(images, static_cast<int>(val.size()));
  require(n >= 1, ErrorKind::config, "MFS needs at least one validation image");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    MfsConfig c = base;
    c.seed = mix_seed(base.seed, i);
    const double lt = lipschitz_estimate(fused_fn(teacher), val[i].image, c);
    const double ls = &teacher == &student ? lt : lipschitz_estimate(fused_fn(student), val[i].image, c);
    sum += mfs_rho(lt, ls, c);
  }
  return sum / n;
}

// Hard boundary map at grid resolution against the grid-downsampled mask.
std::optional<double> grid_boundary_lhd(const Model& m, const std::vector<Scene>& val, const BoundaryConfig& bcfg,
                                        double radius) {
  BoundaryConfig hard = bcfg;
  hard.mode = BoundaryMode::hard;
  double sum = 0.0;
  int count = 0;
  for (const Scene& s : val) {
    const FusedFeatureMap fused = fused_features(m, s.image);
    const BoundaryMap map = boundary_map(project_scalar(fused, m.branch.scalar), hard);
    const BoundaryPointSet pred(boundary_pixels(map));
    const BoundaryPointSet gt = boundary_points_from_mask(downsample_mask(s.mask, fused.reference_stride));
    if (pred.empty() && gt.empty()) continue;
    // A missing or spurious boundary costs the empty-neighbourhood penalty.
    sum += pred.empty() || gt.empty() ? 2.0 * radius : lhd_aggregate(pred, gt, radius);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

json scene_to_json(const SceneSpec& s) {
  return json{{"image_size", s.image_size}, {"num_shapes", s.num_shapes}, {"classes", s.classes},
              {"occlusion", s.occlusion}, {"noise_std", s.noise_std}};
}

SceneSpec scene_from_json(const json& j, const std::string& where) {
  check_keys(j, {"image_size", "num_shapes", "classes", "occlusion", "noise_std"}, where);
  SceneSpec s;
  read_opt(j, "image_size", s.image_size, where);
  read_opt(j, "num_shapes", s.num_shapes, where);
  read_opt(j, "classes", s.classes, where);
  read_opt(j, "occlusion", s.occlusion, where);
  read_opt(j, "noise_std", s.noise_std, where);
  return s;
}

json boundary_to_json(const BoundaryConfig& b) {
  return json{{"neighborhood_radius", b.neighborhood_radius},
              {"similarity_threshold", b.similarity_threshold},
              {"softness", b.softness}};
}

BoundaryConfig boundary_from_json(const json& j, const std::string& where) {
  check_keys(j, {"neighborhood_radius", "similarity_threshold", "softness"}, where);
  BoundaryConfig b;
  read_opt(j, "neighborhood_radius", b.neighborhood_radius, where);
  read_opt(j, "similarity_threshold", b.similarity_threshold, where);
  read_opt(j, "softness", b.softness, where);
  return b;
}

json optimizer_to_json(const OptimizerConfig& o) {
  return json{{"kind", "sgd"}, {"lr0", o.lr0}, {"poly_power", o.poly_power}, {"momentum", o.momentum},
              {"weight_decay", o.weight_decay}};
}

OptimizerConfig optimizer_from_json(const json& j, OptimizerConfig o, const std::string& where) {
  check_keys(j, {"kind", "lr0", "poly_power", "momentum", "weight_decay"}, where);
  std::string kind = "sgd";
  read_opt(j, "kind", kind, where);
  require(kind == "sgd", ErrorKind::config, where + ".kind: only 'sgd' is supported");
  read_opt(j, "lr0", o.lr0, where);
  read_opt(j, "poly_power", o.poly_power, where);
  read_opt(j, "momentum", o.momentum, where);
  read_opt(j, "weight_decay", o.weight_decay, where);
  return o;
}

json mfs_to_json(const MfsConfig& m) {
  return json{{"epsilon", m.epsilon}, {"floor_threshold", m.floor_threshold}, {"num_directions", m.num_directions},
              {"num_probes", m.num_probes}, {"seed", m.seed}};
}

MfsConfig mfs_from_json(const json& j, MfsConfig m, const std::string& where) {
  check_keys(j, {"epsilon", "floor_threshold", "num_directions", "num_probes", "seed"}, where);
  read_opt(j, "epsilon", m.epsilon, where);
  read_opt(j, "floor_threshold", m.floor_threshold, where);
  read_opt(j, "num_directions", m.num_directions, where);
  read_opt(j, "num_probes", m.num_probes, where);
  read_opt(j, "seed", m.seed, where);
  require(m.epsilon > 0 && m.floor_threshold > 0 && m.num_directions >= 1 && m.num_probes >= 1, ErrorKind::config,
          where + ": epsilon, floor_threshold > 0 and at least one direction and probe required");
  return m;
}

}  // namespace

// --- configuration -----------------------------------------------------------

SceneSpec scene_for(const DatasetConfig& data, std::uint64_t seed) {
  SceneSpec s = data.scene;
  s.seed = seed;
  if (data.vary_shapes && s.num_shapes > 1) s.num_shapes = 1 + static_cast<int>(mix_seed(seed, 0x5A) % s.num_shapes);
  return s;
}

ExperimentConfig parse_config(const json& j) {
  check_keys(j, {"dataset", "teacher", "student", "fusion", "sched", "boundary", "components", "optimizer",
                 "branch_optimizer", "epochs", "teacher_epochs", "branch_epochs", "batch_size", "global_seed", "eval",
                 "ablation_seeds"},
             "config");
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    check_keys(d, {"scene", "vary_shapes", "train", "val", "augment"}, "dataset");
    if (d.contains("scene")) c.dataset.scene = scene_from_json(d["scene"], "dataset.scene");
    read_opt(d, "vary_shapes", c.dataset.vary_shapes, "dataset");
    read_opt(d, "augment", c.dataset.augment, "dataset");
    auto range = [&](const char* key, std::uint64_t& begin, int& count) {
      if (!d.contains(key)) return;
      const std::string where = std::string("dataset.") + key;
      check_keys(d[key], {"begin", "count"}, where);
      read_opt(d[key], "begin", begin, where);
      read_opt(d[key], "count", count, where);
    };
    range("train", c.dataset.train_begin, c.dataset.train_count);
    range("val", c.dataset.val_begin, c.dataset.val_count);
  }
  if (j.contains("teacher")) c.teacher = net_config_from_json(j["teacher"], c.teacher, "teacher");
  if (j.contains("student")) c.student = net_config_from_json(j["student"], c.student, "student");
  if (j.contains("fusion")) {
    const json& f = j["fusion"];
    check_keys(f, {"level_width", "fused_width"}, "fusion");
    read_opt(f, "level_width", c.fusion.level_width, "fusion");
    read_opt(f, "fused_width", c.fusion.fused_width, "fusion");
  }
  if (j.contains("sched")) {
    const json& s = j["sched"];
    check_keys(s, {"alpha", "beta", "tau", "tau_growth", "tau_trigger_range"}, "sched");
    read_opt(s, "alpha", c.sched.alpha, "sched");
    read_opt(s, "beta", c.sched.beta, "sched");
    read_opt(s, "tau", c.sched.tau, "sched");
    read_opt(s, "tau_growth", c.sched.tau_growth, "sched");
    read_opt(s, "tau_trigger_range", c.sched.tau_trigger_range, "sched");
  }
  if (j.contains("boundary")) c.boundary = boundary_from_json(j["boundary"], "boundary");
  if (j.contains("components")) {
    const json& k = j["components"];
    check_keys(k, {"use_bd", "use_cd", "use_wd"}, "components");
    read_opt(k, "use_bd", c.components.use_bd, "components");
    read_opt(k, "use_cd", c.components.use_cd, "components");
    read_opt(k, "use_wd", c.components.use_wd, "components");
  }
  if (j.contains("optimizer")) c.optimizer = optimizer_from_json(j["optimizer"], c.optimizer, "optimizer");
  if (j.contains("branch_optimizer"))
    c.branch_optimizer = optimizer_from_json(j["branch_optimizer"], c.branch_optimizer, "branch_optimizer");
  read_opt(j, "epochs", c.epochs, "config");
  read_opt(j, "teacher_epochs", c.teacher_epochs, "config");
  read_opt(j, "branch_epochs", c.branch_epochs, "config");
  read_opt(j, "batch_size", c.batch_size, "config");
  read_opt(j, "global_seed", c.global_seed, "config");
  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, {"mfs_images", "mfs", "epoch_mfs_images", "epoch_mfs", "lhd_radius", "panels"}, "eval");
    read_opt(e, "mfs_images", c.eval.mfs_images, "eval");
    if (e.contains("mfs")) c.eval.mfs = mfs_from_json(e["mfs"], c.eval.mfs, "eval.mfs");
    read_opt(e, "epoch_mfs_images", c.eval.epoch_mfs_images, "eval");
    if (e.contains("epoch_mfs")) c.eval.epoch_mfs = mfs_from_json(e["epoch_mfs"], c.eval.epoch_mfs, "eval.epoch_mfs");
    read_opt(e, "lhd_radius", c.eval.lhd_radius, "eval");
    read_opt(e, "panels", c.eval.panels, "eval");
  }
  read_opt(j, "ablation_seeds", c.ablation_seeds, "config");
  c.teacher.role = NetRole::teacher;
  c.student.role = NetRole::student;
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, path + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  return json{
      {"dataset",
       {{"scene", scene_to_json(c.dataset.scene)},
        {"vary_shapes", c.dataset.vary_shapes},
        {"train", {{"begin", c.dataset.train_begin}, {"count", c.dataset.train_count}}},
        {"val", {{"begin", c.dataset.val_begin}, {"count", c.dataset.val_count}}},
        {"augment", c.dataset.augment}}},
      {"teacher", net_config_to_json(c.teacher)},
      {"student", net_config_to_json(c.student)},
      {"fusion", {{"level_width", c.fusion.level_width}, {"fused_width", c.fusion.fused_width}}},
      {"sched",
       {{"alpha", c.sched.alpha},
        {"beta", c.sched.beta},
        {"tau", c.sched.tau},
        {"tau_growth", c.sched.tau_growth},
        {"tau_trigger_range", c.sched.tau_trigger_range}}},
      {"boundary", boundary_to_json(c.boundary)},
      {"components", {{"use_bd", c.components.use_bd}, {"use_cd", c.components.use_cd}, {"use_wd", c.components.use_wd}}},
      {"optimizer", optimizer_to_json(c.optimizer)},
      {"branch_optimizer", optimizer_to_json(c.branch_optimizer)},
      {"epochs", c.epochs},
      {"teacher_epochs", c.teacher_epochs},
      {"branch_epochs", c.branch_epochs},
      {"batch_size", c.batch_size},
      {"global_seed", c.global_seed},
      {"eval",
       {{"mfs_images", c.eval.mfs_images},
        {"mfs", mfs_to_json(c.eval.mfs)},
        {"epoch_mfs_images", c.eval.epoch_mfs_images},
        {"epoch_mfs", mfs_to_json(c.eval.epoch_mfs)},
        {"lhd_radius", c.eval.lhd_radius},
        {"panels", c.eval.panels}}},
      {"ablation_seeds", c.ablation_seeds}};
}

void validate(const ExperimentConfig& c) {
  validate(c.dataset.scene);
  const auto& d = c.dataset;
  require(d.train_count >= 1 && d.val_count >= 1, ErrorKind::config, "dataset: train and val counts must be >= 1");
  const bool disjoint = d.train_begin + d.train_count <= d.val_begin || d.val_begin + d.val_count <= d.train_begin;
  require(disjoint, ErrorKind::config, "dataset: train and val seed ranges overlap");
  validate(c.teacher);
  validate(c.student);
  require(c.teacher.head_classes == d.scene.classes && c.student.head_classes == d.scene.classes, ErrorKind::config,
          "teacher, student and dataset must agree on the class count");
  require(c.fusion.level_width >= 1 && c.fusion.fused_width >= 1, ErrorKind::config, "fusion widths must be >= 1");
  DistillSchedule s = c.sched;
  s.t_max = std::max(1, c.epochs);
  validate(s);
  require(s.tau >= 1.0, ErrorKind::config, "sched.tau must start at >= 1");
  validate(c.boundary);
  for (const auto* o : {&c.optimizer, &c.branch_optimizer}) {
    require(o->lr0 > 0 && o->poly_power >= 0 && o->momentum >= 0 && o->momentum < 1 && o->weight_decay >= 0,
            ErrorKind::config, "optimizer: need lr0 > 0, poly_power >= 0, momentum in [0, 1), weight_decay >= 0");
  }
  require(c.epochs >= 1 && c.teacher_epochs >= 1 && c.branch_epochs >= 0, ErrorKind::config,
          "epochs and teacher_epochs must be >= 1, branch_epochs >= 0");
  require(c.batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
  require(c.eval.mfs_images >= 1 && c.eval.epoch_mfs_images >= 0 && c.eval.lhd_radius > 0 && c.eval.panels >= 0,
          ErrorKind::config, "eval: invalid image counts or radius");
  require(!c.ablation_seeds.empty(), ErrorKind::config, "ablation_seeds must not be empty");
}

std::string teacher_config_digest(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  json t{{"dataset", j["dataset"]}, {"teacher", j["teacher"]},         {"fusion", j["fusion"]},
         {"boundary", j["boundary"]}, {"optimizer", j["optimizer"]},   {"branch_optimizer", j["branch_optimizer"]},
         {"teacher_epochs", j["teacher_epochs"]}, {"branch_epochs", j["branch_epochs"]},
         {"batch_size", j["batch_size"]}, {"global_seed", j["global_seed"]}};
  const std::string text = t.dump();
  return digest_bytes(std::vector<char>(text.begin(), text.end()));
}

json record_to_json(const RunRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"epoch", r.epoch},         {"miou", r.miou},           {"mfs_rho_mean", opt(r.mfs_rho_mean)},
              {"lhd", opt(r.lhd)},         {"loss_ss", r.losses.l_ss}, {"loss_bd", r.losses.l_bd},
              {"loss_cd", r.losses.l_cd}, {"r_t", r.losses.r_t},       {"tau", r.tau}};
}

// --- teacher -------------------------------------------------------------------

double affinity_loss(const Grid& field, const LabelMask& grid_mask, const BoundaryConfig& cfg, Grid* d_field) {
  require(field.height == grid_mask.height && field.width == grid_mask.width, ErrorKind::domain,
          "affinity_loss: field and mask sizes differ");
  if (d_field) *d_field = Grid(field.height, field.width);
  double loss = 0.0;
  int pairs = 0;
  std::vector<std::pair<int, int>> terms;
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const int i = y * field.width + x;
      if (grid_mask.labels[i] == kIgnoreLabel) continue;
      if (x + 1 < field.width && grid_mask.labels[i + 1] != kIgnoreLabel) terms.emplace_back(i, i + 1);
      if (y + 1 < field.height && grid_mask.labels[i + field.width] != kIgnoreLabel)
        terms.emplace_back(i, i + field.width);
    }
  }
  pairs = static_cast<int>(terms.size());
  if (pairs == 0) return 0.0;
  for (auto [i, j] : terms) {
    const double diff = field.data[i] - field.data[j];
    const double z = (cfg.similarity_threshold - std::abs(diff)) / cfg.softness;
    const bool same = grid_mask.labels[i] == grid_mask.labels[j];
    // -log sigmoid(z) for same-label pairs, -log(1 - sigmoid(z)) otherwise
    loss += same ? softplus(-z) : softplus(z);
    if (d_field) {
      const double s = 1.0 / (1.0 + std::exp(-z));
      const double dz = (s - (same ? 1.0 : 0.0)) / pairs;
      const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      d_field->data[i] += dz * (-sign / cfg.softness);
      d_field->data[j] += dz * (sign / cfg.softness);
    }
  }
  return loss / pairs;
}

TrainResult train_teacher(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opt) {
  validate(cfg);
  ensure_dir(out_dir);
  const Stopwatch clock;
  Model model = build_model(cfg.teacher, cfg.fusion);
  const auto train = make_scenes(cfg.dataset, cfg.dataset.train_begin, cfg.dataset.train_count);
  const auto val = make_scenes(cfg.dataset, cfg.dataset.val_begin, cfg.dataset.val_count);
  const int n = static_cast<int>(train.size());
  const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;

  TrainResult result;
  RecordWriter records(out_dir + "/records.jsonl");
  Sgd sgd(model.net.params(), cfg.optimizer);
  const long max_iter = static_cast<long>(cfg.teacher_epochs) * batches;
  long iter = 0;
  double last_miou = 0.0;
  for (int epoch = 1; epoch <= cfg.teacher_epochs; ++epoch) {
    const auto order = epoch_order(n, cfg.global_seed, epoch);
    double loss_sum = 0.0;
    for (int b = 0; b < batches; ++b) {
      const int lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      const double inv = 1.0 / (hi - lo);
      sgd.zero_grad();
      double batch_loss = 0.0;
      std::vector<std::uint64_t> seeds;
      for (int k = lo; k < hi; ++k) {
        const std::uint64_t seed = cfg.dataset.train_begin + order[k];
        seeds.push_back(seed);
        const Sample s = training_sample(cfg, train[order[k]], seed, epoch);
        NetTrace trace;
        const NetOutput out = model.net.forward(s.image, &trace);
        Tensor d_logits;
        batch_loss += segmentation_loss(out.logits, s.mask, &d_logits) * inv;
        for (double& g : d_logits.data) g *= inv;
        model.net.backward(trace, d_logits, {});
      }
      if (!std::isfinite(batch_loss)) numeric_abort(out_dir, "teacher", epoch, seeds, "non-finite loss");
      sgd.step(poly_lr(cfg.optimizer, iter++, max_iter));
      loss_sum += batch_loss;
    }
    const ValMetrics vm = validate_net(model.net, val, cfg.eval.lhd_radius);
    RunRecord r;
    r.epoch = epoch;
    r.losses.l_ss = loss_sum / batches;
    r.losses.total = r.losses.l_ss;
    r.miou = vm.miou;
    r.lhd = vm.lhd;
    r.tau = cfg.sched.tau;
    r.wall_time = clock.seconds();
    records.append(r);
    result.records.push_back(r);
    last_miou = vm.miou;
    say(opt, "teacher epoch " + std::to_string(epoch) + " loss " + fmt("%.4f", r.losses.l_ss) + " val miou " +
                 fmt("%.4f", vm.miou) + " (" + fmt("%.1f", r.wall_time) + " s)");
  }

  // Boundary branch on frozen teacher features. Resized pyramid levels are
  // cached at grid resolution (stride 8 each) so fusion resamples nothing.
  std::optional<double> grid_lhd;
  if (cfg.branch_epochs > 0) {
    std::vector<FeaturePyramid> cached(n);
    std::vector<LabelMask> grid_masks(n);
    for (int i = 0; i < n; ++i) {
      const FeaturePyramid pyr = model.net.pyramid(train[i].image);
      const auto [gh, gw] = reference_grid(train[i].image.height, train[i].image.width, cfg.fusion.reference_stride);
      for (int l = 0; l < kPyramidLevels; ++l) {
        cached[i].levels[l] = resize_to_reference(pyr.levels[l], gh, gw);
        cached[i].levels[l].stride = cfg.fusion.reference_stride;
      }
      cached[i].source = NetRole::teacher;
      grid_masks[i] = downsample_mask(train[i].mask, cfg.fusion.reference_stride);
    }
    std::vector<Param*> branch = model.branch.fusion.params();
    for (Param* p : model.branch.scalar.params()) branch.push_back(p);
    Sgd bsgd(branch, cfg.branch_optimizer);
    const long bmax = static_cast<long>(cfg.branch_epochs) * batches;
    long biter = 0;
    for (int e = 1; e <= cfg.branch_epochs; ++e) {
      const int epoch = cfg.teacher_epochs + e;
      const auto order = epoch_order(n, cfg.global_seed ^ 0xB4A9C4ULL, epoch);
      double loss_sum = 0.0;
      for (int b = 0; b < batches; ++b) {
        const int lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
        const double inv = 1.0 / (hi - lo);
        bsgd.zero_grad();
        double batch_loss = 0.0;
        std::vector<std::uint64_t> seeds;
        for (int k = lo; k < hi; ++k) {
          const int idx = order[k];
          seeds.push_back(cfg.dataset.train_begin + idx);
          FusionTrace ft;
          const FusedFeatureMap fused = fuse(cached[idx], model.branch.fusion, &ft);
          const Grid field = project_scalar(fused, model.branch.scalar);
          Grid d_field;
          batch_loss += affinity_loss(field, grid_masks[idx], cfg.boundary, &d_field) * inv;
          for (double& g : d_field.data) g *= inv;
          const Tensor d_fused = project_scalar_backward(fused, model.branch.scalar, d_field);
          fuse_backward(model.branch.fusion, ft, d_fused, false);
        }
        if (!std::isfinite(batch_loss)) numeric_abort(out_dir, "branch", epoch, seeds, "non-finite affinity loss");
        bsgd.step(poly_lr(cfg.branch_optimizer, biter++, bmax));
        loss_sum += batch_loss;
      }
      grid_lhd = grid_boundary_lhd(model, val, cfg.boundary, cfg.eval.lhd_radius);
      RunRecord r;
      r.epoch = epoch;
      r.losses.l_bd = loss_sum / batches;
      r.miou = last_miou;
      r.lhd = grid_lhd;
      r.tau = cfg.sched.tau;
      r.wall_time = clock.seconds();
      records.append(r);
      result.records.push_back(r);
      say(opt, "branch epoch " + std::to_string(e) + " affinity loss " + fmt("%.4f", r.losses.l_bd) +
                   " grid boundary lhd " + (grid_lhd ? fmt("%.3f", *grid_lhd) : std::string("n/a")));
    }
  }

  CheckpointMeta meta;
  meta.epoch = cfg.teacher_epochs + cfg.branch_epochs;
  meta.rng_state = std::to_string(cfg.global_seed);
  json extra{{"kind", "teacher"},
             {"scene", scene_to_json(cfg.dataset.scene)},
             {"boundary", boundary_to_json(cfg.boundary)},
             {"config_digest", teacher_config_digest(cfg)},
             {"val_miou", last_miou},
             {"tau", cfg.sched.tau}};
  if (grid_lhd) extra["grid_boundary_lhd"] = *grid_lhd;
  meta.extra_json = extra.dump();
  result.checkpoint = out_dir + "/ckpt_teacher.bin";
  save_checkpoint(result.checkpoint, model, meta);
  return result;
}

// --- distillation --------------------------------------------------------------

namespace {

struct TeacherTargets {
  BoundaryMap boundary;
  RowMatrix gram;
};

TeacherTargets teacher_targets(const Model& teacher, const Tensor& image, const BoundaryConfig& soft, bool need_bd,
                               bool need_cd) {
  TeacherTargets t;
  const FusedFeatureMap fused = fused_features(teacher, image);
  if (need_bd) t.boundary = boundary_map(project_scalar(fused, teacher.branch.scalar), soft);
  if (need_cd) t.gram = scaled_gram(align_features(fused, teacher.branch.align));
  return t;
}

}  // namespace

TrainResult distill_student(const ExperimentConfig& cfg, const std::string& teacher_ckpt, const std::string& out_dir,
                            const RunOptions& opt) {
  validate(cfg);
  ensure_dir(out_dir);
  const Stopwatch clock;
  const LoadedCheckpoint loaded = load_checkpoint(teacher_ckpt, &cfg.teacher);
  const Model& teacher = loaded.model;
  require(teacher.branch.fusion.config().fused_width == cfg.fusion.fused_width, ErrorKind::config,
          "teacher checkpoint fused width differs from the experiment");
  const std::string teacher_hash = digest_params(teacher.all_params());

  Model student = build_model(cfg.student, cfg.fusion);
  const auto train = make_scenes(cfg.dataset, cfg.dataset.train_begin, cfg.dataset.train_count);
  const auto val = make_scenes(cfg.dataset, cfg.dataset.val_begin, cfg.dataset.val_count);
  const int n = static_cast<int>(train.size());
  const int batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const bool use_bd = cfg.components.use_bd, use_cd = cfg.components.use_cd;
  const bool need_teacher = use_bd || use_cd;

  BoundaryConfig soft = cfg.boundary;
  soft.mode = BoundaryMode::soft;

  // Without augmentation the teacher targets are fixed per scene.
  std::vector<TeacherTargets> cache;
  if (need_teacher && !cfg.dataset.augment) {
    cache.reserve(n);
    for (const Scene& s : train) cache.push_back(teacher_targets(teacher, s.image, soft, use_bd, use_cd));
  }

  DistillSchedule sched = cfg.sched;
  sched.t_max = cfg.epochs;
  sched.use_weight_decay = cfg.components.use_wd;

  TrainResult result;
  RecordWriter records(out_dir + "/records.jsonl");
  Sgd sgd(student.all_params(), cfg.optimizer);
  const long max_iter = static_cast<long>(cfg.epochs) * batches;
  long iter = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    sched.t = epoch;
    const auto order = epoch_order(n, cfg.global_seed, epoch);
    LossBreakdown sum;
    for (int b = 0; b < batches; ++b) {
      const int lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      const double inv = 1.0 / (hi - lo);
      const double r_t = sched.use_weight_decay ? schedule_r(sched.t, sched.t_max) : 1.0;
      sgd.zero_grad();
      double l_ss = 0.0, l_bd = 0.0, l_cd = 0.0;
      double lo_v = std::numeric_limits<double>::infinity(), hi_v = -lo_v;
      std::vector<std::uint64_t> seeds;
      for (int k = lo; k < hi; ++k) {
        const int idx = order[k];
        const std::uint64_t seed = cfg.dataset.train_begin + idx;
        seeds.push_back(seed);
        const Sample s = training_sample(cfg, train[idx], seed, epoch);

        NetTrace trace;
        const NetOutput out = student.net.forward(s.image, &trace);
        Tensor d_logits;
        l_ss += segmentation_loss(out.logits, s.mask, &d_logits) * inv;
        for (double& g : d_logits.data) g *= inv;

        std::array<Tensor, kPyramidLevels> d_levels;
        if (need_teacher) {
          const TeacherTargets tt =
              cache.empty() ? teacher_targets(teacher, s.image, soft, use_bd, use_cd) : cache[idx];
          FusionTrace ft;
          const FusedFeatureMap fused = fuse(out.pyramid, student.branch.fusion, &ft);
          const auto [mn, mx] = std::minmax_element(fused.data.data.begin(), fused.data.data.end());
          lo_v = std::min(lo_v, *mn);
          hi_v = std::max(hi_v, *mx);
          Tensor d_fused(fused.data.channels, fused.data.height, fused.data.width);
          if (use_bd) {
            const Grid field = project_scalar(fused, student.branch.scalar);
            BoundaryTrace bt;
            const BoundaryMap smap = boundary_map(field, soft, &bt);
            Grid d_scores;
            l_bd += boundary_loss(tt.boundary, smap, sched.tau, &d_scores) * inv;
            for (double& g : d_scores.data) g *= r_t * sched.alpha * inv;
            const Grid d_field = boundary_map_backward(field, soft, bt, d_scores);
            const Tensor d = project_scalar_backward(fused, student.branch.scalar, d_field);
            for (std::size_t i = 0; i < d.size(); ++i) d_fused.data[i] += d.data[i];
          }
          if (use_cd) {
            AlignTrace at;
            const RowMatrix aligned = align_features(fused, student.branch.align, &at);
            RowMatrix d_gram;
            l_cd += context_loss_from_gram(tt.gram, scaled_gram(aligned), sched.tau, &d_gram) * inv;
            d_gram *= r_t * sched.beta * inv;
            const Tensor d =
                align_features_backward(fused, student.branch.align, at, scaled_gram_backward(aligned, d_gram));
            for (std::size_t i = 0; i < d.size(); ++i) d_fused.data[i] += d.data[i];
          }
          d_levels = fuse_backward(student.branch.fusion, ft, d_fused, true);
        }
        student.net.backward(trace, d_logits, d_levels);
      }
      const LossBreakdown lb = total_loss(l_ss, l_bd, l_cd, sched);
      if (!std::isfinite(lb.total)) numeric_abort(out_dir, "distill", epoch, seeds, "non-finite loss");
      for (Param* p : student.all_params()) {
        for (double g : p->grad)
          if (!std::isfinite(g)) numeric_abort(out_dir, "distill", epoch, seeds, "non-finite gradient in " + p->name);
      }
      sgd.step(poly_lr(cfg.optimizer, iter++, max_iter));
      if (need_teacher) sched = temperature_step(sched, hi_v - lo_v);
      sum.l_ss += lb.l_ss / batches;
      sum.l_bd += lb.l_bd / batches;
      sum.l_cd += lb.l_cd / batches;
      sum.total += lb.total / batches;
      sum.r_t = lb.r_t;
    }
    const ValMetrics vm = validate_net(student.net, val, cfg.eval.lhd_radius);
    RunRecord r;
    r.epoch = epoch;
    r.losses = sum;
    r.miou = vm.miou;
    r.lhd = vm.lhd;
    if (cfg.eval.epoch_mfs_images > 0)
      r.mfs_rho_mean = mean_mfs(teacher, student, val, cfg.eval.epoch_mfs_images, cfg.eval.epoch_mfs);
    r.tau = sched.tau;
    r.wall_time = clock.seconds();
    records.append(r);
    result.records.push_back(r);
    say(opt, "distill epoch " + std::to_string(epoch) + " l_ss " + fmt("%.4f", sum.l_ss) + " l_bd " +
                 fmt("%.4g", sum.l_bd) + " l_cd " + fmt("%.4g", sum.l_cd) + " tau " + fmt("%.4g", sched.tau) +
                 " val miou " + fmt("%.4f", vm.miou) + " (" + fmt("%.1f", r.wall_time) + " s)");
  }

  require(digest_params(teacher.all_params()) == teacher_hash, ErrorKind::data_integrity,
          "teacher parameters changed during distillation");

  CheckpointMeta meta;
  meta.epoch = cfg.epochs;
  meta.rng_state = std::to_string(cfg.global_seed);
  json extra{{"kind", "student"},
             {"scene", scene_to_json(cfg.dataset.scene)},
             {"boundary", boundary_to_json(cfg.boundary)},
             {"teacher_hash", digest_file(teacher_ckpt)},
             {"components",
              {{"use_bd", cfg.components.use_bd}, {"use_cd", cfg.components.use_cd}, {"use_wd", cfg.components.use_wd}}},
             {"tau", sched.tau},
             {"val_miou", result.records.empty() ? 0.0 : result.records.back().miou}};
  meta.extra_json = extra.dump();
  result.checkpoint = out_dir + "/ckpt_student.bin";
  save_checkpoint(result.checkpoint, student, meta);
  return result;
}

// --- evaluation ----------------------------------------------------------------

std::uint64_t inference_params(const Model& model) { return model.net.parameter_count(); }

std::uint64_t inference_macs(const Model& model, int image_size) {
  std::uint64_t macs = 0;
  model.net.forward(Tensor(3, image_size, image_size), nullptr, &macs);
  return macs;
}

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 6> kLabelColors = {{
    {20, 20, 20}, {230, 60, 50}, {60, 200, 80}, {60, 90, 230}, {240, 210, 40}, {255, 255, 255},
}};

void put_mask(std::vector<std::uint8_t>& px, int stride_w, int x0, const LabelMask& m) {
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const auto l = m.at(y, x);
      const auto& c = kLabelColors[l < 5 ? l : 5];
      for (int k = 0; k < 3; ++k) px[(static_cast<std::size_t>(y) * stride_w + x0 + x) * 3 + k] = c[k];
    }
}

// input | ground truth | prediction | boundary map (grid upsampled, nearest)
void write_panel(const std::string& path, const Scene& s, const LabelMask& pred, const BoundaryMap& bmap) {
  const int h = s.image.height, w = s.image.width, gap = 2;
  const int total_w = 4 * w + 3 * gap;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(total_w) * h * 3, 128);
  const auto rgb = image_to_rgb8(s.image);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k)
        px[(static_cast<std::size_t>(y) * total_w + x) * 3 + k] = rgb[(static_cast<std::size_t>(y) * w + x) * 3 + k];
  put_mask(px, total_w, w + gap, s.mask);
  put_mask(px, total_w, 2 * (w + gap), pred);
  const int gh = bmap.scores.height, gw = bmap.scores.width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = bmap.scores.at(std::min(gh - 1, y * gh / h), std::min(gw - 1, x * gw / w));
      const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      for (int k = 0; k < 3; ++k) px[(static_cast<std::size_t>(y) * total_w + 3 * (w + gap) + x) * 3 + k] = g;
    }
  write_png(path, total_w, h, 3, px);
}

}  // namespace

EvalReport evaluate(const ExperimentConfig& cfg, const std::string& ckpt, const std::string& teacher_ckpt,
                    const std::string& out_dir, bool skip_mfs, const RunOptions& opt) {
  validate(cfg);
  require(skip_mfs || !teacher_ckpt.empty(), ErrorKind::config,
          "MFS needs a teacher checkpoint (pass --teacher, or disable MFS)");
  ensure_dir(out_dir);
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const Model& model = loaded.model;
  require(model.config().head_classes == cfg.dataset.scene.classes, ErrorKind::config,
          "checkpoint class count differs from the dataset");
  std::optional<LoadedCheckpoint> teacher;
  if (!teacher_ckpt.empty()) teacher = load_checkpoint(teacher_ckpt, &cfg.teacher);

  const auto val = make_scenes(cfg.dataset, cfg.dataset.val_begin, cfg.dataset.val_count);
  const ValMetrics vm = validate_net(model.net, val, cfg.eval.lhd_radius);

  EvalReport rep;
  rep.record.epoch = loaded.meta.epoch;
  rep.record.miou = vm.miou;
  rep.record.lhd = vm.lhd;
  rep.record.losses.l_ss = vm.loss_ss;
  rep.class_iou = vm.class_iou;
  const json extra = json::parse(loaded.meta.extra_json);
  rep.record.tau = extra.value("tau", cfg.sched.tau);

  BoundaryConfig soft = cfg.boundary;
  soft.mode = BoundaryMode::soft;
  if (teacher) {
    // Validation distillation losses at the checkpoint temperature, r(t) = 1.
    const Model& t = teacher->model;
    const int count = std::min<int>(8, static_cast<int>(val.size()));
    for (int i = 0; i < count; ++i) {
      const TeacherTargets tt = teacher_targets(t, val[i].image, soft, true, true);
      const FusedFeatureMap fused = fused_features(model, val[i].image);
      const BoundaryMap smap = boundary_map(project_scalar(fused, model.branch.scalar), soft);
      rep.record.losses.l_bd += boundary_loss(tt.boundary, smap, rep.record.tau) / count;
      rep.record.losses.l_cd +=
          context_loss_from_gram(tt.gram, scaled_gram(align_features(fused, model.branch.align)), rep.record.tau) /
          count;
    }
    if (!skip_mfs) rep.record.mfs_rho_mean = mean_mfs(t, model, val, cfg.eval.mfs_images, cfg.eval.mfs);
  }
  rep.record.losses.r_t = 1.0;
  rep.params = inference_params(model);
  rep.macs = inference_macs(model, cfg.dataset.scene.image_size);

  BoundaryConfig hard = cfg.boundary;
  hard.mode = BoundaryMode::hard;
  for (int i = 0; i < std::min<int>(cfg.eval.panels, static_cast<int>(val.size())); ++i) {
    const NetOutput out = model.net.forward(val[i].image);
    const FusedFeatureMap fused = fuse(out.pyramid, model.branch.fusion);
    const BoundaryMap bmap = boundary_map(project_scalar(fused, model.branch.scalar), hard);
    write_panel(out_dir + "/panel_" + std::to_string(cfg.dataset.val_begin + i) + ".png", val[i],
                predict_labels(out.logits), bmap);
  }

  {
    std::ofstream f(out_dir + "/records.jsonl", std::ios::app);
    require(f.good(), ErrorKind::io, "cannot write " + out_dir + "/records.jsonl");
    f << record_to_json(rep.record).dump() << "\n";
  }
  {
    json summary{{"class_iou", json::array()}, {"params", rep.params}, {"macs", rep.macs}};
    for (double v : rep.class_iou) summary["class_iou"].push_back(std::isnan(v) ? json(nullptr) : json(v));
    std::ofstream f(out_dir + "/eval_summary.json");
    require(f.good(), ErrorKind::io, "cannot write " + out_dir + "/eval_summary.json");
    f << summary.dump(2) << "\n";
  }
  say(opt, "eval miou " + fmt("%.4f", vm.miou) +
               (rep.record.mfs_rho_mean ? " mfs " + fmt("%.4f", *rep.record.mfs_rho_mean) : std::string()) +
               (vm.lhd ? " lhd " + fmt("%.3f", *vm.lhd) : std::string()));
  return rep;
}

// --- ablation ------------------------------------------------------------------

std::string ablation_csv_line(const AblationRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%llu,%.4f,%.4f,%llu,%llu,%s", r.row.c_str(), r.components.use_bd ? 1 : 0,
                r.components.use_cd ? 1 : 0, r.components.use_wd ? 1 : 0, static_cast<unsigned long long>(r.seed),
                r.miou, r.delta_vs_baseline, static_cast<unsigned long long>(r.params),
                static_cast<unsigned long long>(r.macs), r.teacher_hash.c_str());
  return buf;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opt) {
  validate(cfg);
  ensure_dir(out_dir);
  const std::string teacher_dir = out_dir + "/teacher";
  std::string teacher_ckpt = teacher_dir + "/ckpt_teacher.bin";
  const std::string want = teacher_config_digest(cfg);
  bool reuse = false;
  if (fs::exists(teacher_ckpt)) {
    try {
      const auto meta = load_checkpoint(teacher_ckpt, &cfg.teacher).meta;
      reuse = json::parse(meta.extra_json).value("config_digest", std::string()) == want;
    } catch (const Error&) {
      reuse = false;
    }
  }
  if (reuse) {
    say(opt, "reusing teacher " + teacher_ckpt);
  } else {
    teacher_ckpt = train_teacher(cfg, teacher_dir, opt).checkpoint;
  }

  struct RowSpec {
    const char* name;
    Components c;
  };
  const RowSpec specs[] = {{"baseline", {false, false, false}},
                           {"BD", {true, false, false}},
                           {"CD", {false, true, false}},
                           {"BD+CD", {true, true, false}},
                           {"BD+CD+WD", {true, true, true}}};

  std::vector<AblationRow> rows;
  auto write_csv = [&] {
    const std::string path = out_dir + "/ablation.csv";
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), ErrorKind::io, "cannot write " + path);
    f << kAblationHeader << "\n";
    for (const auto& r : rows) f << ablation_csv_line(r) << "\n";
  };

  for (std::uint64_t seed : cfg.ablation_seeds) {
    double baseline = 0.0;
    for (const RowSpec& spec : specs) {
      ExperimentConfig rc = cfg;
      rc.components = spec.c;
      rc.student.seed = cfg.student.seed + 1000 * seed;
      rc.global_seed = mix_seed(cfg.global_seed, seed);
      std::string slug = spec.name;
      std::replace(slug.begin(), slug.end(), '+', '_');
      const std::string row_dir = out_dir + "/" + slug + "_seed" + std::to_string(seed);

      // A finished row leaves done.json keyed by its config; reruns skip it.
      const std::string key_text = config_to_json(rc).dump() + digest_file(teacher_ckpt);
      const std::string key = digest_bytes(std::vector<char>(key_text.begin(), key_text.end()));
      double miou = 0.0;
      bool done = false;
      if (fs::exists(row_dir + "/done.json")) {
        std::ifstream f(row_dir + "/done.json");
        json d = json::parse(f, nullptr, false);
        if (!d.is_discarded() && d.value("key", std::string()) == key) {
          miou = d.value("miou", 0.0);
          done = true;
          say(opt, std::string("reusing row ") + spec.name + " seed " + std::to_string(seed));
        }
      }
      if (!done) {
        say(opt, std::string("ablation row ") + spec.name + " seed " + std::to_string(seed));
        const TrainResult tr = distill_student(rc, teacher_ckpt, row_dir, opt);
        miou = tr.records.back().miou;
        std::ofstream f(row_dir + "/done.json");
        f << json{{"key", key}, {"miou", miou}}.dump() << "\n";
      }
      const Model student = build_model(rc.student, rc.fusion);
      AblationRow row;
      row.row = spec.name;
      row.components = spec.c;
      row.seed = seed;
      row.miou = 100.0 * miou;
      if (!spec.c.use_bd && !spec.c.use_cd) baseline = row.miou;
      row.delta_vs_baseline = row.miou - baseline;
      row.params = inference_params(student);
      row.macs = inference_macs(student, rc.dataset.scene.image_size);
      row.teacher_hash = digest_file(teacher_ckpt);
      rows.push_back(row);
      write_csv();
    }
  }
  return rows;
}

// --- boundary dump -------------------------------------------------------------

BoundaryMap boundary_dump(const std::string& ckpt, std::uint64_t seed, const std::string& png_path, BoundaryMode mode) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const json extra = json::parse(loaded.meta.extra_json);
  SceneSpec spec = extra.contains("scene") ? scene_from_json(extra["scene"], "checkpoint.scene") : SceneSpec{};
  BoundaryConfig bcfg = extra.contains("boundary") ? boundary_from_json(extra["boundary"], "checkpoint.boundary")
                                                   : BoundaryConfig{};
  bcfg.mode = mode;
  DatasetConfig d;
  d.scene = spec;
  const Scene scene = generate_scene(scene_for(d, seed));
  const FusedFeatureMap fused = fused_features(loaded.model, scene.image);
  BoundaryMap map = boundary_map(project_scalar(fused, loaded.model.branch.scalar), bcfg);
  const fs::path parent = fs::path(png_path).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  write_boundary_png(map, png_path);
  return map;
}

}  // namespace bckd
