#include "convhead/params.hpp"

#include "convhead/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

using nlohmann::json;

namespace convhead {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw ConfigError(std::string("model config: ") + name + " must be positive");
    }
  };
  positive(audio_dim, "audio_dim");
  positive(motion_dim, "motion_dim");
  positive(beta_dim, "beta_dim");
  positive(pose_dim, "pose_dim");
  positive(hidden, "hidden");
  positive(layers, "layers");
  positive(fused, "fused");
  positive(embed_dim, "embed_dim");
  positive(ref_dim, "ref_dim");
  positive(vocab_size, "vocab_size");
  if (beta_dim + pose_dim != motion_dim) {
    throw ConfigError("model config: beta_dim + pose_dim must equal motion_dim");
  }
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  build(rng);
}

ad::Param& ModelParams::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                            double init_bound, bool decay, std::mt19937_64& rng) {
  ad::Param p;
  p.name = name;
  p.value.resize(rows, cols);
  if (init_bound > 0.0) {
    std::uniform_real_distribution<double> dist(-init_bound, init_bound);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        p.value(r, c) = dist(rng);
      }
    }
  } else {
    p.value.setZero();
  }
  p.grad = Mat::Zero(rows, cols);
  p.decay = decay;
  store_.push_back(std::move(p));
  ad::Param& ref = store_.back();
  order_.push_back(&ref);
  by_name_[name] = &ref;
  return ref;
}

void ModelParams::build(std::mt19937_64& rng) {
  const int h = config_.hidden;
  const int f = config_.fused;
  const int e = config_.embed_dim;
  const int r = config_.ref_dim;
  const int v = config_.vocab_size;
  const int a = config_.audio_dim;
  const int m = config_.motion_dim;
  const int nb = config_.beta_dim;
  const int np = config_.pose_dim;

  auto bound = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

  auto add_stream = [&](const std::string& g, StreamBranch& br) {
    br.embed = &add(g + ".embed", v, e, bound(e), false, rng);
    br.ref_w = &add(g + ".ref.w", r, m, bound(m), true, rng);
    br.ref_b = &add(g + ".ref.b", r, 1, bound(m), false, rng);
    br.init.resize(static_cast<std::size_t>(config_.layers));
    br.rnn.resize(static_cast<std::size_t>(config_.layers));
    for (int l = 0; l < config_.layers; ++l) {
      const std::string lp = g + ".init." + std::to_string(l);
      auto& in = br.init[static_cast<std::size_t>(l)];
      in.wh = &add(lp + ".h.w", h, e + r, bound(e + r), true, rng);
      in.bh = &add(lp + ".h.b", h, 1, bound(e + r), false, rng);
      in.wc = &add(lp + ".c.w", h, e + r, bound(e + r), true, rng);
      in.bc = &add(lp + ".c.b", h, 1, bound(e + r), false, rng);
    }
    for (int l = 0; l < config_.layers; ++l) {
      const int in_dim = l == 0 ? f : h;
      const std::string lp = g + ".rnn." + std::to_string(l);
      auto& cell = br.rnn[static_cast<std::size_t>(l)];
      cell.w = &add(lp + ".w", 4 * h, in_dim + h, bound(in_dim + h), true, rng);
      cell.b = &add(lp + ".b", 4 * h, 1, bound(in_dim + h), false, rng);
    }
    br.head.beta_w = &add(g + ".head.beta.w", nb, h, bound(h), true, rng);
    br.head.beta_b = &add(g + ".head.beta.b", nb, 1, bound(h), false, rng);
    br.head.pose_w = &add(g + ".head.pose.w", np, h, bound(h), true, rng);
    br.head.pose_b = &add(g + ".head.pose.b", np, 1, bound(h), false, rng);
  };

  // listener decoder
  add_stream("lis", lis);
  lis_fuse.w_audio = &add("lis.fuse.w_audio", f, a, bound(a), true, rng);
  lis_fuse.w_motion = &add("lis.fuse.w_motion", f, m, bound(m), true, rng);
  lis_fuse.w_joint = &add("lis.fuse.w_joint", f, 2 * f, bound(2 * f), true, rng);
  lis_fuse.b_joint = &add("lis.fuse.b_joint", f, 1, bound(2 * f), false, rng);

  // talker streaming (listener-aware) branch
  add_stream("tlk", tlk);
  tlk_in_w = &add("tlk.in.w", f, m, bound(m), true, rng);

  // talker bidirectional audio encoder; both directions own their params
  auto add_dir = [&](const std::string& g, std::vector<InitRefs>& init,
                     std::vector<LstmRefs>& rnn) {
    init.resize(static_cast<std::size_t>(config_.layers));
    rnn.resize(static_cast<std::size_t>(config_.layers));
    for (int l = 0; l < config_.layers; ++l) {
      const std::string lp = g + ".init." + std::to_string(l);
      auto& in = init[static_cast<std::size_t>(l)];
      in.wh = &add(lp + ".h.w", h, e + r, bound(e + r), true, rng);
      in.bh = &add(lp + ".h.b", h, 1, bound(e + r), false, rng);
      in.wc = &add(lp + ".c.w", h, e + r, bound(e + r), true, rng);
      in.bc = &add(lp + ".c.b", h, 1, bound(e + r), false, rng);
    }
    for (int l = 0; l < config_.layers; ++l) {
      const int in_dim = l == 0 ? a : h;
      const std::string lp = g + ".rnn." + std::to_string(l);
      auto& cell = rnn[static_cast<std::size_t>(l)];
      cell.w = &add(lp + ".w", 4 * h, in_dim + h, bound(in_dim + h), true, rng);
      cell.b = &add(lp + ".b", 4 * h, 1, bound(in_dim + h), false, rng);
    }
  };
  add_dir("aud.fwd", aud.fwd_init, aud.fwd_rnn);
  add_dir("aud.bwd", aud.bwd_init, aud.bwd_rnn);
  aud.head.beta_w = &add("aud.head.beta.w", nb, 2 * h, bound(2 * h), true, rng);
  aud.head.beta_b = &add("aud.head.beta.b", nb, 1, bound(2 * h), false, rng);
  aud.head.pose_w = &add("aud.head.pose.w", np, 2 * h, bound(2 * h), true, rng);
  aud.head.pose_b = &add("aud.head.pose.b", np, 1, bound(2 * h), false, rng);

  alpha_beta = &add("fus.alpha_beta", 1, 1, 0.0, false, rng);
  alpha_pose = &add("fus.alpha_pose", 1, 1, 0.0, false, rng);
  alpha_beta->value(0, 0) = 0.5;
  alpha_pose->value(0, 0) = 0.5;

  // the role maps start near the identity so a fresh agent carries state
  // across switches instead of scrambling it
  swi.ls_w = &add("swi.ls.w", h, h, 0.1 * bound(h), true, rng);
  swi.ls_b = &add("swi.ls.b", h, 1, 0.0, false, rng);
  swi.sl_w = &add("swi.sl.w", h, h, 0.1 * bound(h), true, rng);
  swi.sl_b = &add("swi.sl.b", h, 1, 0.0, false, rng);
  swi.ls_w->value += Mat::Identity(h, h);
  swi.sl_w->value += Mat::Identity(h, h);
}

ad::Param* ModelParams::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

void ModelParams::zero_grads() {
  for (ad::Param* p : order_) {
    p->zero_grad();
  }
}

int ModelParams::adopt(const ModelParams& other, const std::string& prefix) {
  int copied = 0;
  for (ad::Param* p : order_) {
    if (p->name.rfind(prefix, 0) != 0) {
      continue;
    }
    ad::Param* src = other.find(p->name);
    if (src == nullptr) {
      throw ConfigError("adopt: tensor '" + p->name + "' missing from source model");
    }
    if (src->value.rows() != p->value.rows() || src->value.cols() != p->value.cols()) {
      throw ShapeError("adopt: tensor '" + p->name + "' shape mismatch");
    }
    p->value = src->value;
    ++copied;
  }
  return copied;
}

std::vector<Mat> ModelParams::snapshot_values() const {
  std::vector<Mat> out;
  out.reserve(order_.size());
  for (const ad::Param* p : order_) {
    out.push_back(p->value);
  }
  return out;
}

void ModelParams::restore_values(const std::vector<Mat>& values) {
  if (values.size() != order_.size()) {
    throw ShapeError("restore_values: tensor count mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    order_[i]->value = values[i];
  }
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path, const char* field) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) {
    throw FormatError(path + ": truncated checkpoint while reading " + field);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

json config_to_json(const ModelConfig& c) {
  return json{{"audio_dim", c.audio_dim}, {"motion_dim", c.motion_dim},
              {"beta_dim", c.beta_dim},   {"pose_dim", c.pose_dim},
              {"hidden", c.hidden},       {"layers", c.layers},
              {"fused", c.fused},         {"embed_dim", c.embed_dim},
              {"ref_dim", c.ref_dim},     {"vocabulary", c.vocabulary},
              {"vocab_size", c.vocab_size}, {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.audio_dim = j.at("audio_dim").get<int>();
  c.motion_dim = j.at("motion_dim").get<int>();
  c.beta_dim = j.at("beta_dim").get<int>();
  c.pose_dim = j.at("pose_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.at("layers").get<int>();
  c.fused = j.at("fused").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.ref_dim = j.at("ref_dim").get<int>();
  c.vocabulary = j.at("vocabulary").get<std::string>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta) {
  json header;
  header["format"] = "VCKP";
  header["version"] = kCheckpointVersion;
  header["model"] = config_to_json(params.config());
  header["meta"] = meta;
  json dir = json::array();
  for (const ad::Param* p : params.tensors()) {
    dir.push_back({{"name", p->name},
                   {"rows", static_cast<std::uint32_t>(p->rows())},
                   {"cols", static_cast<std::uint32_t>(p->cols())}});
  }
  header["tensors"] = dir;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  out.write("VCKP", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const ad::Param* p : params.tensors()) {
    out.write("VCOF", 4);
    put_u32(out, kFileFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(p->rows()));
    put_u32(out, static_cast<std::uint32_t>(p->cols()));
    for (Eigen::Index r = 0; r < p->rows(); ++r) {
      for (Eigen::Index c = 0; c < p->cols(); ++c) {
        const float v = static_cast<float>(p->value(r, c));
        out.write(reinterpret_cast<const char*>(&v), sizeof(float));
      }
    }
  }
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint: " + path);
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "VCKP", 4) != 0) {
    throw FormatError(path + ": bad magic: expected 'VCKP'");
  }
  const std::uint32_t version = get_u32(in, path, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32(in, path, "header length");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) {
    throw FormatError(path + ": truncated checkpoint header");
  }
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw FormatError(path + ": invalid checkpoint header: " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(header.at("model"));
    if (header.contains("meta")) {
      for (auto it = header.at("meta").begin(); it != header.at("meta").end(); ++it) {
        ckpt.meta[it.key()] = it.value().get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": checkpoint header field error: " + e.what());
  }
  ckpt.params = std::make_unique<ModelParams>(ckpt.config);

  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::uint32_t rows = entry.at("rows").get<std::uint32_t>();
    const std::uint32_t cols = entry.at("cols").get<std::uint32_t>();
    ad::Param* p = ckpt.params->find(name);
    if (p == nullptr) {
      throw FormatError(path + ": unknown tensor '" + name + "' in checkpoint");
    }
    char blob_magic[4];
    in.read(blob_magic, 4);
    if (!in || std::strncmp(blob_magic, "VCOF", 4) != 0) {
      throw FormatError(path + ": tensor '" + name + "': bad blob magic");
    }
    get_u32(in, path, "blob version");
    const std::uint32_t blob_rows = get_u32(in, path, "blob rows");
    const std::uint32_t blob_cols = get_u32(in, path, "blob cols");
    if (blob_rows != rows || blob_cols != cols ||
        static_cast<Eigen::Index>(rows) != p->rows() ||
        static_cast<Eigen::Index>(cols) != p->cols()) {
      throw FormatError(path + ": tensor '" + name + "': shape mismatch");
    }
    std::vector<float> payload(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!in) {
      throw FormatError(path + ": tensor '" + name + "': truncated payload");
    }
    std::size_t idx = 0;
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        p->value(r, c) = static_cast<double>(payload[idx++]);
      }
    }
  }
  return ckpt;
}

}  // namespace convhead
