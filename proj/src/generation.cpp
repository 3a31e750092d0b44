#include "convhead/generation.hpp"

namespace convhead {

using Id = ad::Tape::Id;

namespace {

void check_turn(const TurnInput& turn, const ModelParams& params) {
  const auto& cfg = params.config();
  if (turn.audio.rows() == 0) {
    throw InputError("turn: empty audio feature sequence");
  }
  if (turn.audio.rows() != turn.counterpart.rows()) {
    throw InputError("turn: audio frames (" + std::to_string(turn.audio.rows()) +
                     ") != counterpart frames (" + std::to_string(turn.counterpart.rows()) +
                     ")");
  }
  if (turn.audio.cols() != cfg.audio_dim) {
    throw ShapeError("turn: audio dim " + std::to_string(turn.audio.cols()) + ", expected " +
                     std::to_string(cfg.audio_dim));
  }
  if (turn.counterpart.cols() != cfg.motion_dim) {
    throw ShapeError("turn: counterpart dim " + std::to_string(turn.counterpart.cols()) +
                     ", expected " + std::to_string(cfg.motion_dim));
  }
  if (turn.label < 0 || turn.label >= cfg.vocab_size) {
    throw ConfigError("turn: label id " + std::to_string(turn.label) +
                      " outside vocabulary of size " + std::to_string(cfg.vocab_size));
  }
  if (!turn.audio.allFinite() || !turn.counterpart.allFinite()) {
    throw NumericError("turn: non-finite inputs");
  }
}

CoeffSequence assemble_sequence(const ad::Tape& tape, const DynamicCoeffs& reference,
                                const std::vector<std::pair<Id, Id>>& preds, double fps) {
  CoeffSequence seq;
  seq.fps = fps;
  seq.frames.push_back(reference);
  for (const auto& [beta, pose] : preds) {
    DynamicCoeffs d;
    d.beta = tape.val(beta);
    const Vec& p = tape.val(pose);
    d.pose_angle = p.head(kPoseAngleDim);
    d.pose_trans = p.tail(kPoseTransDim);
    seq.frames.push_back(std::move(d));
  }
  return seq;
}

}  // namespace

TurnGraph build_listener_turn(ad::Tape& tape, const ModelParams& params,
                              const TurnInput& turn, const TapeState* initial) {
  check_turn(turn, params);
  const Eigen::Index t_len = turn.audio.rows();

  TapeState state =
      initial != nullptr
          ? *initial
          : build_init_state(tape, params.lis, params.lis.init,
                             tape.leaf(turn.reference.flat()), turn.label);

  TurnGraph g;
  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    const Id s_t = tape.leaf(turn.audio.row(t).transpose());
    const Id m_t = tape.leaf(turn.counterpart.row(t).transpose());
    const Id fused = build_fuse(tape, params.lis_fuse, s_t, m_t);
    const Id top = build_stack_step(tape, params.lis.rnn, state, fused);
    g.preds.push_back(build_heads(tape, params.lis.head, top));
  }
  g.final_state = state;
  return g;
}

TurnGraph build_talker_turn(ad::Tape& tape, const ModelParams& params,
                            const TurnInput& turn, const TapeState* initial) {
  check_turn(turn, params);
  const Eigen::Index t_len = turn.audio.rows();
  const Id ref_flat = tape.leaf(turn.reference.flat());

  // audio branch: bidirectional pass over the batched audio features
  std::vector<Id> audio_in(static_cast<std::size_t>(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    audio_in[static_cast<std::size_t>(t)] = tape.leaf(turn.audio.row(t).transpose());
  }
  TapeState fwd = build_init_state(tape, params.tlk, params.aud.fwd_init, ref_flat, turn.label);
  std::vector<Id> fwd_top(static_cast<std::size_t>(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    fwd_top[static_cast<std::size_t>(t)] =
        build_stack_step(tape, params.aud.fwd_rnn, fwd, audio_in[static_cast<std::size_t>(t)]);
  }
  TapeState bwd = build_init_state(tape, params.tlk, params.aud.bwd_init, ref_flat, turn.label);
  std::vector<Id> bwd_top(static_cast<std::size_t>(t_len));
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    bwd_top[static_cast<std::size_t>(t)] =
        build_stack_step(tape, params.aud.bwd_rnn, bwd, audio_in[static_cast<std::size_t>(t)]);
  }

  TurnGraph g;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const Id joint = tape.concat(fwd_top[static_cast<std::size_t>(t)],
                                 bwd_top[static_cast<std::size_t>(t)]);
    g.audio_preds.push_back(build_heads(tape, params.aud.head, joint));
  }

  // listener-aware branch: streaming decoder over the counterpart listener
  TapeState state = initial != nullptr
                        ? *initial
                        : build_init_state(tape, params.tlk, params.tlk.init, ref_flat,
                                           turn.label);
  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    const Id m_t = tape.leaf(turn.counterpart.row(t).transpose());
    const Id input = tape.tanh(tape.matvec(*params.tlk_in_w, m_t));
    const Id top = build_stack_step(tape, params.tlk.rnn, state, input);
    g.stream_preds.push_back(build_heads(tape, params.tlk.head, top));
  }
  g.final_state = state;

  // fused output for frames 2..T
  for (std::size_t i = 0; i < g.stream_preds.size(); ++i) {
    const auto& [sb, sp] = g.stream_preds[i];
    const auto& [ab, ap] = g.audio_preds[i + 1];
    g.preds.emplace_back(tape.blend(*params.alpha_beta, sb, ab),
                         tape.blend(*params.alpha_pose, sp, ap));
  }
  return g;
}

TurnResult generate_listener(const TurnInput& turn, const ModelParams& params,
                             const DecoderState* initial) {
  if (turn.role != 0) {
    throw InputError("generate_listener: turn role must be 0 (listener)");
  }
  ad::Tape tape;
  TapeState init_ts;
  const TapeState* init_ptr = nullptr;
  if (initial != nullptr) {
    init_ts = state_to_tape(tape, *initial);
    init_ptr = &init_ts;
  }
  const TurnGraph g = build_listener_turn(tape, params, turn, init_ptr);
  TurnResult r;
  r.coeffs = assemble_sequence(tape, turn.reference, g.preds, turn.fps);
  r.final_state = state_from_tape(tape, g.final_state);
  return r;
}

std::pair<Mat, Mat> encode_talker_audio(const Mat& audio, int label,
                                        const DynamicCoeffs& reference,
                                        const ModelParams& params) {
  TurnInput turn;
  turn.audio = audio;
  turn.counterpart = Mat::Zero(audio.rows(), params.config().motion_dim);
  turn.label = label;
  turn.role = 1;
  turn.reference = reference;

  ad::Tape tape;
  const TurnGraph g = build_talker_turn(tape, params, turn, nullptr);
  Mat beta(audio.rows(), params.config().beta_dim);
  Mat pose(audio.rows(), params.config().pose_dim);
  for (Eigen::Index t = 0; t < audio.rows(); ++t) {
    beta.row(t) = tape.val(g.audio_preds[static_cast<std::size_t>(t)].first).transpose();
    pose.row(t) = tape.val(g.audio_preds[static_cast<std::size_t>(t)].second).transpose();
  }
  return {std::move(beta), std::move(pose)};
}

TalkerResult generate_talker(const TurnInput& turn, const ModelParams& params,
                             const DecoderState* initial) {
  if (turn.role != 1) {
    throw InputError("generate_talker: turn role must be 1 (speaker)");
  }
  ad::Tape tape;
  TapeState init_ts;
  const TapeState* init_ptr = nullptr;
  if (initial != nullptr) {
    init_ts = state_to_tape(tape, *initial);
    init_ptr = &init_ts;
  }
  const TurnGraph g = build_talker_turn(tape, params, turn, init_ptr);

  TalkerResult r;
  r.coeffs = assemble_sequence(tape, turn.reference, g.preds, turn.fps);
  r.stream_branch = assemble_sequence(tape, turn.reference, g.stream_preds, turn.fps);
  std::vector<std::pair<Id, Id>> audio_tail(g.audio_preds.begin() + 1, g.audio_preds.end());
  r.audio_branch = assemble_sequence(tape, turn.reference, audio_tail, turn.fps);
  r.final_state = state_from_tape(tape, g.final_state);
  return r;
}

TurnInput turn_input(const LoadedConversation& conv, std::size_t index) {
  const TurnData& d = conv.turns.at(index);
  TurnInput turn;
  turn.audio = d.audio;
  turn.counterpart = d.counterpart;
  turn.label = d.label;
  turn.role = d.role_of_agent;
  turn.reference = DynamicCoeffs::from_flat(d.agent_track.row(0).transpose());
  turn.fps = conv.fps;
  return turn;
}

ConversationOutput generate_conversation(const LoadedConversation& conv,
                                         const ModelParams& params, StatePolicy policy) {
  if (conv.turns.empty()) {
    throw InputError("generate_conversation: conversation holds no turns");
  }
  ConversationOutput out;
  DecoderState carried;
  bool have_state = false;
  int prev_role = 0;

  for (std::size_t i = 0; i < conv.turns.size(); ++i) {
    TurnInput turn = turn_input(conv, i);
    if (i > 0) {
      // continuation turns anchor on the agent's own last frame; only the
      // first turn has an externally given reference
      turn.reference = out.turns.back().frames.back();
    }
    const DecoderState* init_ptr = nullptr;
    DecoderState switched;
    if (have_state && policy == StatePolicy::kCarry) {
      switched = switch_role(carried, prev_role, turn.role, params);
      init_ptr = &switched;
    }
    if (turn.role == 0) {
      TurnResult r = generate_listener(turn, params, init_ptr);
      out.turns.push_back(std::move(r.coeffs));
      carried = std::move(r.final_state);
    } else {
      TalkerResult r = generate_talker(turn, params, init_ptr);
      out.turns.push_back(std::move(r.coeffs));
      carried = std::move(r.final_state);
    }
    have_state = true;
    prev_role = turn.role;
  }
  return out;
}

}  // namespace convhead
