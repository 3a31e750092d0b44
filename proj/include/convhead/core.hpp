#pragma once

#include "convhead/autodiff.hpp"
#include "convhead/params.hpp"
#include "convhead/types.hpp"

#include <utility>
#include <vector>

namespace convhead {

/// Recurrent state of one decoder stack, one (hidden, cell) pair per layer.
struct DecoderState {
  std::vector<Vec> hidden;
  std::vector<Vec> cell;

  int layers() const { return static_cast<int>(hidden.size()); }
};

/// Tape-resident view of a DecoderState.
struct TapeState {
  std::vector<ad::Tape::Id> h;
  std::vector<ad::Tape::Id> c;
};

// Tape-level builders. Inference wrappers and the training graphs share
// these, so generation and training run the exact same float operations.
TapeState state_to_tape(ad::Tape& tape, const DecoderState& state);
DecoderState state_from_tape(const ad::Tape& tape, const TapeState& ts);

ad::Tape::Id build_fuse(ad::Tape& tape, const FuseRefs& fuse, ad::Tape::Id audio,
                        ad::Tape::Id motion);
TapeState build_init_state(ad::Tape& tape, const StreamBranch& branch,
                           const std::vector<InitRefs>& init, ad::Tape::Id ref_flat,
                           int label);
/// One gated update of every layer; returns the top layer's new hidden id.
ad::Tape::Id build_stack_step(ad::Tape& tape, const std::vector<LstmRefs>& rnn,
                              TapeState& state, ad::Tape::Id input);
std::pair<ad::Tape::Id, ad::Tape::Id> build_heads(ad::Tape& tape, const HeadRefs& head,
                                                  ad::Tape::Id hidden);
TapeState build_switch(ad::Tape& tape, const SwitcherRefs& swi, const TapeState& state,
                       int r_prev, int r_next);

// Value-level operations over the listener branch (the spec surface).

/// fused = tanh(W_j [tanh(W_a s) | tanh(W_m m)] + b).
Vec fuse_audio_motion(const Vec& audio_feat, const Vec& motion, const ModelParams& params);

/// h_1/c_1 per layer from affine maps of embed(label) | ref_encoder(reference).
DecoderState init_state(const DynamicCoeffs& reference, int label, const ModelParams& params);

struct StepResult {
  DecoderState state;
  Vec beta;
  Vec pose;
};

/// One decoder step: gated update per layer, then the two output heads.
StepResult decoder_step(const DecoderState& state, const Vec& fused,
                        const ModelParams& params);

/// Identity when roles match; otherwise the affine role map applied to both
/// hidden and cell state of every layer.
DecoderState switch_role(const DecoderState& state, int r_prev, int r_next,
                         const ModelParams& params);

}  // namespace convhead
