#pragma once

#include "convhead/core.hpp"
#include "convhead/manifest.hpp"
#include "convhead/params.hpp"
#include "convhead/types.hpp"

#include <utility>
#include <vector>

namespace convhead {

/// Inputs of one generated turn. `counterpart` is the observed track of the
/// other interlocutor (the speaker when the agent listens, the listener when
/// the agent talks), consumed as streaming ground truth.
struct TurnInput {
  Mat audio;        // T x 45
  Mat counterpart;  // T x 70
  int label = 0;
  int role = 0;  // 0 listener, 1 speaker
  DynamicCoeffs reference;
  double fps = 30.0;
};

// ---------------------------------------------------------------------------
// tape-level graphs, shared by inference and training

struct TurnGraph {
  /// Fused predictions for frames 2..T.
  std::vector<std::pair<ad::Tape::Id, ad::Tape::Id>> preds;
  /// Talker only: listener-aware branch (frames 2..T) and audio branch
  /// (frames 1..T).
  std::vector<std::pair<ad::Tape::Id, ad::Tape::Id>> stream_preds;
  std::vector<std::pair<ad::Tape::Id, ad::Tape::Id>> audio_preds;
  TapeState final_state;
};

TurnGraph build_listener_turn(ad::Tape& tape, const ModelParams& params,
                              const TurnInput& turn, const TapeState* initial);
TurnGraph build_talker_turn(ad::Tape& tape, const ModelParams& params,
                            const TurnInput& turn, const TapeState* initial);

// ---------------------------------------------------------------------------
// value-level operations

struct TurnResult {
  CoeffSequence coeffs;      // reference frame + predictions, length T
  DecoderState final_state;  // streaming decoder state after the last step
};

/// Streaming listener generation; strictly causal in the turn's inputs.
/// When `initial` is given it replaces init_state (conversation carry-over).
TurnResult generate_listener(const TurnInput& turn, const ModelParams& params,
                             const DecoderState* initial = nullptr);

/// Bidirectional pass over the full audio; returns per-frame head outputs
/// (T x beta_dim, T x pose_dim).
std::pair<Mat, Mat> encode_talker_audio(const Mat& audio, int label,
                                        const DynamicCoeffs& reference,
                                        const ModelParams& params);

struct TalkerResult {
  CoeffSequence coeffs;         // fused output, length T
  CoeffSequence stream_branch;  // listener-aware branch alone, length T
  CoeffSequence audio_branch;   // audio branch alone, length T
  DecoderState final_state;
};

/// Talker generation: audio branch + listener-aware streaming branch fused by
/// the trainable scalars alpha_beta / alpha_pose.
TalkerResult generate_talker(const TurnInput& turn, const ModelParams& params,
                             const DecoderState* initial = nullptr);

/// State handling across turns: carry the final state through the role
/// switcher (the conversational agent), or re-initialize from init_state at
/// every turn (the hard-reset ablation).
enum class StatePolicy { kCarry, kReset };

struct ConversationOutput {
  std::vector<CoeffSequence> turns;
};

/// Runs every turn in order, routing on the agent's role and threading the
/// decoder state per the policy. Equals manual chaining of the single-turn
/// operations with explicit switch_role calls.
ConversationOutput generate_conversation(const LoadedConversation& conv,
                                         const ModelParams& params,
                                         StatePolicy policy = StatePolicy::kCarry);

TurnInput turn_input(const LoadedConversation& conv, std::size_t index);

}  // namespace convhead
