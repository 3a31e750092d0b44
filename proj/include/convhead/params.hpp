#pragma once

#include "convhead/autodiff.hpp"
#include "convhead/types.hpp"

#include <deque>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace convhead {

struct ModelConfig {
  int audio_dim = kAudioDim;
  int motion_dim = kMotionDim;
  int beta_dim = kBetaDim;
  int pose_dim = kPoseDim;
  int hidden = 256;
  int layers = 2;
  int fused = 128;
  int embed_dim = 16;
  int ref_dim = 32;
  std::string vocabulary = "attitude3";
  int vocab_size = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LstmRefs {
  ad::Param* w;  // 4H x (in + H), gate order i|f|g|o
  ad::Param* b;  // 4H
};

struct InitRefs {
  ad::Param* wh;
  ad::Param* bh;
  ad::Param* wc;
  ad::Param* bc;
};

struct HeadRefs {
  ad::Param* beta_w;
  ad::Param* beta_b;
  ad::Param* pose_w;
  ad::Param* pose_b;
};

struct FuseRefs {
  ad::Param* w_audio;   // F x 45
  ad::Param* w_motion;  // F x 70
  ad::Param* w_joint;   // F x 2F
  ad::Param* b_joint;   // F
};

/// One streaming decoder: conditioning embedding, reference encoder, per-layer
/// state init affines, the recurrent stack and the two output heads.
struct StreamBranch {
  ad::Param* embed;  // V x E
  ad::Param* ref_w;  // R x 70
  ad::Param* ref_b;  // R
  std::vector<InitRefs> init;
  std::vector<LstmRefs> rnn;
  HeadRefs head;
};

/// Bidirectional encoder over batched audio; the heads consume the
/// concatenation of both directions' top hidden states.
struct BiEncoder {
  std::vector<InitRefs> fwd_init;
  std::vector<InitRefs> bwd_init;
  std::vector<LstmRefs> fwd_rnn;
  std::vector<LstmRefs> bwd_rnn;
  HeadRefs head;
};

struct SwitcherRefs {
  ad::Param* ls_w;  // listener -> speaker, H x H
  ad::Param* ls_b;
  ad::Param* sl_w;  // speaker -> listener
  ad::Param* sl_b;
};

/// All trainable tensors, registered in a fixed order so seeded
/// initialization and checkpoints are reproducible. Tensor names are
/// prefixed by group: "lis." (listener), "tlk." (talker streaming branch),
/// "aud." (talker audio encoder), "fus." (fusion scalars), "swi." (switcher).
class ModelParams {
 public:
  explicit ModelParams(const ModelConfig& config);

  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;

  const ModelConfig& config() const { return config_; }

  FuseRefs lis_fuse;
  StreamBranch lis;
  ad::Param* tlk_in_w = nullptr;  // F x 70 motion input projection
  StreamBranch tlk;
  BiEncoder aud;
  ad::Param* alpha_beta = nullptr;  // 1x1
  ad::Param* alpha_pose = nullptr;  // 1x1
  SwitcherRefs swi;

  const std::vector<ad::Param*>& tensors() const { return order_; }
  ad::Param* find(const std::string& name) const;
  void zero_grads();
  /// Copies values for every tensor whose name starts with `prefix`.
  int adopt(const ModelParams& other, const std::string& prefix);
  /// Snapshot / restore of all values (optimizer state excluded).
  std::vector<Mat> snapshot_values() const;
  void restore_values(const std::vector<Mat>& values);

 private:
  ad::Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                 double init_bound, bool decay, std::mt19937_64& rng);
  void build(std::mt19937_64& rng);

  ModelConfig config_;
  std::deque<ad::Param> store_;
  std::vector<ad::Param*> order_;
  std::map<std::string, ad::Param*> by_name_;
};

// Checkpoint container: "VCKP" magic, version u32 LE, header length u32 LE,
// JSON header (model config, metadata, tensor directory), then one
// VCOF-framed float32 blob per tensor in directory order.
struct Checkpoint {
  ModelConfig config;
  std::unique_ptr<ModelParams> params;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace convhead
