// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#include "models.hpp"

#include "binary_io.hpp"
#include "errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace bckd {

NetConfig teacher_preset(int classes, std::uint64_t seed) {
  return NetConfig{{32, 64, 96, 128, 160}, classes, seed, NetRole::teacher};
}

NetConfig student_preset(int classes, std::uint64_t seed) {
  return NetConfig{{8, 16, 24, 32, 40}, classes, seed, NetRole::student};
}

void validate(const NetConfig& cfg) {
  for (int w : cfg.widths) require(w >= 1, ErrorKind::config, "net: stage widths must be positive");
  require(cfg.head_classes >= 2 && cfg.head_classes < kIgnoreLabel, ErrorKind::config,
          "net: head_classes must be in [2, 255)");
}

const char* role_name(NetRole role) { return role == NetRole::teacher ? "teacher" : "student"; }

NetRole parse_role(const std::string& s) {
  if (s == "teacher") return NetRole::teacher;
  if (s == "student") return NetRole::student;
  fail(ErrorKind::config, "unknown network role '" + s + "'");
}

json net_config_to_json(const NetConfig& cfg) {
  return json{{"widths", cfg.widths}, {"head_classes", cfg.head_classes}, {"seed", cfg.seed},
              {"role", role_name(cfg.role)}};
}

NetConfig net_config_from_json(const json& j, const NetConfig& base, const std::string& where) {
  check_keys(j, {"widths", "head_classes", "seed", "role"}, where);
  NetConfig cfg = base;
  read_opt(j, "widths", cfg.widths, where);
  read_opt(j, "head_classes", cfg.head_classes, where);
  read_opt(j, "seed", cfg.seed, where);
  std::string role = role_name(cfg.role);
  read_opt(j, "role", role, where);
  cfg.role = parse_role(role);
  validate(cfg);
  return cfg;
}

SegNet::SegNet(const NetConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  int in = 3;
  for (int i = 0; i < kPyramidLevels; ++i) {
    const std::string name = "net.stage" + std::to_string(i + 1);
    ConvShape shape{in, cfg.widths[i], 3, 1, 1, 1};
    if (i == 1 || i == 2 || i == 3) shape.stride = 2;
    if (i == 4) {  // stays at stride 8; dilation widens the receptive field
      shape.pad = 2;
      shape.dilation = 2;
    }
    stages_[i] = Conv2d(name, shape);
    heads_[i] = Conv2d("net.head" + std::to_string(i + 1), ConvShape{cfg.widths[i], cfg.head_classes, 1, 1, 0, 1});
    in = cfg.widths[i];
  }
}

void SegNet::init(std::mt19937_64& rng) {
  for (auto& s : stages_) s.init_he(rng);
  for (auto& h : heads_) {
    // Small head weights keep the initial logits near uniform.
    const double fan_in = h.shape().in;
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / fan_in));
    for (double& w : h.weight().value) w = dist(rng);
    std::fill(h.bias().value.begin(), h.bias().value.end(), 0.0);
  }
}

FeaturePyramid SegNet::pyramid(const Tensor& image) const {
  require(image.channels == 3, ErrorKind::domain, "forward: image must have 3 channels");
  require(image.height >= kMinInputSize && image.width >= kMinInputSize, ErrorKind::domain,
          "forward: input smaller than " + std::to_string(kMinInputSize) + " pixels");
  FeaturePyramid pyr;
  pyr.source = cfg_.role;
  const Tensor* x = &image;
  for (int i = 0; i < kPyramidLevels; ++i) {
    pyr.levels[i].data = stages_[i].forward(*x);
    relu_inplace(pyr.levels[i].data);
    pyr.levels[i].stride = kStageStrides[i];
    x = &pyr.levels[i].data;
  }
  return pyr;
}

NetOutput SegNet::forward(const Tensor& image, NetTrace* trace, std::uint64_t* macs) const {
  require(image.channels == 3, ErrorKind::domain, "forward: image must have 3 channels");
  require(image.height >= kMinInputSize && image.width >= kMinInputSize, ErrorKind::domain,
          "forward: input smaller than " + std::to_string(kMinInputSize) + " pixels");
  NetOutput out;
  out.pyramid.source = cfg_.role;
  if (trace) trace->input = image;
  const Tensor* x = &image;
  for (int i = 0; i < kPyramidLevels; ++i) {
    if (macs) *macs += stages_[i].macs(x->height, x->width);
    Tensor y = stages_[i].forward(*x, trace ? &trace->cols[i] : nullptr);
    relu_inplace(y);
    out.pyramid.levels[i].data = std::move(y);
    out.pyramid.levels[i].stride = kStageStrides[i];
    x = &out.pyramid.levels[i].data;
  }
  out.logits = Tensor(cfg_.head_classes, image.height, image.width);
  for (int i = 0; i < kPyramidLevels; ++i) {
    const Tensor& f = out.pyramid.levels[i].data;
    if (macs) *macs += heads_[i].macs(f.height, f.width);
    Tensor z = heads_[i].forward(f);
    Resampler up(f.height, f.width, image.height, image.width);
    Tensor zu = up.forward(z);
    for (std::size_t k = 0; k < zu.size(); ++k) out.logits.data[k] += zu.data[k];
    if (trace) trace->upsample[i] = up;
  }
  if (trace) {
    for (int i = 0; i < kPyramidLevels; ++i) trace->features[i] = out.pyramid.levels[i].data;
  }
  return out;
}

void SegNet::backward(const NetTrace& trace, const Tensor& d_logits,
                      const std::array<Tensor, kPyramidLevels>& d_levels) {
  std::array<Tensor, kPyramidLevels> d_feat;
  for (int i = 0; i < kPyramidLevels; ++i) {
    const Tensor& f = trace.features[i];
    Tensor dz = trace.upsample[i].backward(d_logits);
    d_feat[i] = Tensor(f.channels, f.height, f.width);
    heads_[i].backward(f, {}, dz, &d_feat[i]);
    if (!d_levels[i].empty()) {
      for (std::size_t k = 0; k < d_feat[i].size(); ++k) d_feat[i].data[k] += d_levels[i].data[k];
    }
  }
  for (int i = kPyramidLevels - 1; i >= 0; --i) {
    relu_backward_inplace(trace.features[i], d_feat[i]);
    const Tensor& in = i == 0 ? trace.input : trace.features[i - 1];
    if (i == 0) {
      stages_[i].backward(in, trace.cols[i], d_feat[i], nullptr);
    } else {
      stages_[i].backward(in, trace.cols[i], d_feat[i], &d_feat[i - 1]);
    }
  }
}

std::vector<Param*> SegNet::params() {
  std::vector<Param*> out;
  for (auto& s : stages_) {
    out.push_back(&s.weight());
    out.push_back(&s.bias());
  }
  for (auto& h : heads_) {
    out.push_back(&h.weight());
    out.push_back(&h.bias());
  }
  return out;
}

std::vector<const Param*> SegNet::params() const {
  std::vector<const Param*> out;
  for (const auto& s : stages_) {
    out.push_back(&s.weight());
    out.push_back(&s.bias());
  }
  for (const auto& h : heads_) {
    out.push_back(&h.weight());
    out.push_back(&h.bias());
  }
  return out;
}

std::uint64_t SegNet::parameter_count() const {
  std::uint64_t n = 0;
  for (const Param* p : params()) n += p->size();
  return n;
}

std::vector<Param*> DistillBranch::params() {
  std::vector<Param*> out = fusion.params();
  for (Param* p : scalar.params()) out.push_back(p);
  for (Param* p : align.params()) out.push_back(p);
  return out;
}

std::vector<Param*> Model::all_params() {
  std::vector<Param*> out = net.params();
  for (Param* p : branch.params()) out.push_back(p);
  return out;
}

std::vector<const Param*> Model::all_params() const {
  auto* self = const_cast<Model*>(this);
  std::vector<const Param*> out;
  for (Param* p : self->all_params()) out.push_back(p);
  return out;
}

Model build_model(const NetConfig& cfg, const FusionConfig& fusion) {
  Model m;
  m.net = SegNet(cfg);
  m.branch.fusion = FusionParams("aux.fusion", fusion, cfg.widths);
  m.branch.scalar = ScalarProjection("aux.boundary", fusion.fused_width);
  m.branch.align = AlignmentParams("aux.context", fusion.fused_width, true);
  std::mt19937_64 rng(cfg.seed);
  m.net.init(rng);
  m.branch.fusion.init(rng);
  m.branch.scalar.init(rng);
  m.branch.align.init_identity();
  return m;
}

FusedFeatureMap fused_features(const Model& model, const Tensor& image) {
  return fuse(model.net.pyramid(image), model.branch.fusion);
}

double segmentation_loss(const Tensor& logits, const LabelMask& mask, Tensor* d_logits) {
  require(logits.height == mask.height && logits.width == mask.width, ErrorKind::domain,
          "segmentation_loss: logits and mask sizes differ");
  const int classes = logits.channels;
  const int n = logits.plane();
  if (d_logits) *d_logits = Tensor(classes, logits.height, logits.width);
  int counted = 0;
  for (int i = 0; i < n; ++i)
    if (mask.labels[i] != kIgnoreLabel) ++counted;
  if (counted == 0) return 0.0;
  double loss = 0.0;
  std::vector<double> prob(classes);
  for (int i = 0; i < n; ++i) {
    const int label = mask.labels[i];
    if (label == kIgnoreLabel) continue;
    require(label < classes, ErrorKind::domain, "segmentation_loss: label outside class range");
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) m = std::max(m, logits.data[static_cast<std::size_t>(c) * n + i]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) {
      prob[c] = std::exp(logits.data[static_cast<std::size_t>(c) * n + i] - m);
      z += prob[c];
    }
    loss -= logits.data[static_cast<std::size_t>(label) * n + i] - m - std::log(z);
    if (d_logits) {
      for (int c = 0; c < classes; ++c) {
        d_logits->data[static_cast<std::size_t>(c) * n + i] = (prob[c] / z - (c == label ? 1.0 : 0.0)) / counted;
      }
    }
  }
  return loss / counted;
}

LabelMask predict_labels(const Tensor& logits) {
  LabelMask out(logits.height, logits.width);
  const int n = logits.plane();
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < logits.channels; ++c)
      if (logits.data[static_cast<std::size_t>(c) * n + i] > logits.data[static_cast<std::size_t>(best) * n + i])
        best = c;
    out.labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

namespace {

constexpr char kCheckpointMagic[8] = {'B', 'C', 'K', 'D', 'C', 'K', 'P', 'T'};
constexpr int kCheckpointSchema = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta) {
  const FusionConfig& fc = model.branch.fusion.config();
  json header{{"schema_version", kCheckpointSchema},
              {"net", net_config_to_json(model.config())},
              {"fusion",
               {{"level_width", fc.level_width}, {"fused_width", fc.fused_width}, {"reference_stride", fc.reference_stride}}},
              {"align_normalize", model.branch.align.normalize()},
              {"epoch", meta.epoch},
              {"rng_state", meta.rng_state},
              {"extra", json::parse(meta.extra_json)}};
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open " + tmp + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto params = model.all_params();
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
      write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
      for (int d : p->shape) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
      for (double v : p->value) write_le<float>(out, static_cast<float>(v));
    }
    require(out.good(), ErrorKind::io, "failed writing " + tmp);
  }
  require(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorKind::io, "cannot move checkpoint into " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const NetConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  require(in.good() && std::equal(magic, magic + sizeof(magic), kCheckpointMagic), ErrorKind::io,
          path + ": not a checkpoint archive");
  const auto header_len = read_le<std::uint32_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), header_len);
  require(in.good(), ErrorKind::io, path + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, path + ": corrupt header: " + e.what());
  }
  require(header.value("schema_version", 0) == kCheckpointSchema, ErrorKind::config,
          path + ": unsupported checkpoint schema version");

  NetConfig cfg = net_config_from_json(header.at("net"), NetConfig{}, "checkpoint.net");
  if (expected) {
    require(cfg.widths == expected->widths && cfg.head_classes == expected->head_classes &&
                cfg.role == expected->role,
            ErrorKind::config, path + ": checkpoint network configuration is incompatible with the experiment");
  }
  FusionConfig fc;
  const json& fj = header.at("fusion");
  fc.level_width = fj.at("level_width").get<int>();
  fc.fused_width = fj.at("fused_width").get<int>();
  fc.reference_stride = fj.at("reference_stride").get<int>();

  LoadedCheckpoint out;
  out.model = build_model(cfg, fc);
  out.model.branch.align.set_normalize(header.value("align_normalize", true));
  out.meta.epoch = header.value("epoch", 0);
  out.meta.rng_state = header.value("rng_state", std::string{});
  out.meta.extra_json = header.value("extra", json::object()).dump();

  const auto count = read_le<std::uint32_t>(in);
  auto params = out.model.all_params();
  require(count == params.size(), ErrorKind::config, path + ": parameter count does not match the architecture");
  for (Param* p : params) {
    const auto name_len = read_le<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(in.good() && name == p->name, ErrorKind::config, path + ": unexpected tensor '" + name + "'");
    const auto rank = read_le<std::uint32_t>(in);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_le<std::uint32_t>(in));
    require(shape == p->shape, ErrorKind::config, path + ": shape mismatch for '" + name + "'");
    for (double& v : p->value) v = static_cast<double>(read_le<float>(in));
    require(in.good(), ErrorKind::io, path + ": truncated tensor data");
  }
  return out;
}

std::string digest_bytes(const std::vector<char>& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return digest_bytes(bytes);
}

std::string digest_params(const std::vector<const Param*>& params) {
  std::vector<char> bytes;
  for (const Param* p : params) {
    bytes.insert(bytes.end(), p->name.begin(), p->name.end());
    const char* raw = reinterpret_cast<const char*>(p->value.data());
    bytes.insert(bytes.end(), raw, raw + p->value.size() * sizeof(double));
  }
  return digest_bytes(bytes);
}

}  // namespace bckd
