#include "convhead/core.hpp"

namespace convhead {

using Id = ad::Tape::Id;

TapeState state_to_tape(ad::Tape& tape, const DecoderState& state) {
  TapeState ts;
  for (const Vec& h : state.hidden) {
    ts.h.push_back(tape.leaf(h));
  }
  for (const Vec& c : state.cell) {
    ts.c.push_back(tape.leaf(c));
  }
  return ts;
}

DecoderState state_from_tape(const ad::Tape& tape, const TapeState& ts) {
  DecoderState s;
  for (Id h : ts.h) {
    s.hidden.push_back(tape.val(h));
  }
  for (Id c : ts.c) {
    s.cell.push_back(tape.val(c));
  }
  return s;
}

Id build_fuse(ad::Tape& tape, const FuseRefs& fuse, Id audio, Id motion) {
  const Id pa = tape.tanh(tape.matvec(*fuse.w_audio, audio));
  const Id pm = tape.tanh(tape.matvec(*fuse.w_motion, motion));
  return tape.tanh(tape.affine(*fuse.w_joint, *fuse.b_joint, tape.concat(pa, pm)));
}

TapeState build_init_state(ad::Tape& tape, const StreamBranch& branch,
                           const std::vector<InitRefs>& init, Id ref_flat, int label) {
  const Id emb = tape.embed(*branch.embed, label);
  const Id ref = tape.affine(*branch.ref_w, *branch.ref_b, ref_flat);
  const Id joint = tape.concat(emb, ref);
  TapeState ts;
  for (const InitRefs& layer : init) {
    ts.h.push_back(tape.affine(*layer.wh, *layer.bh, joint));
    ts.c.push_back(tape.affine(*layer.wc, *layer.bc, joint));
  }
  return ts;
}

Id build_stack_step(ad::Tape& tape, const std::vector<LstmRefs>& rnn, TapeState& state,
                    Id input) {
  Id x = input;
  for (std::size_t l = 0; l < rnn.size(); ++l) {
    const Eigen::Index h_dim = tape.val(state.h[l]).size();
    const Id joint = tape.concat(x, state.h[l]);
    const Id gates = tape.affine(*rnn[l].w, *rnn[l].b, joint);
    const Id i_gate = tape.sigmoid(tape.slice(gates, 0, h_dim));
    const Id f_gate = tape.sigmoid(tape.slice(gates, h_dim, h_dim));
    const Id g_gate = tape.tanh(tape.slice(gates, 2 * h_dim, h_dim));
    const Id o_gate = tape.sigmoid(tape.slice(gates, 3 * h_dim, h_dim));
    const Id c_new = tape.add(tape.mul(f_gate, state.c[l]), tape.mul(i_gate, g_gate));
    const Id h_new = tape.mul(o_gate, tape.tanh(c_new));
    state.c[l] = c_new;
    state.h[l] = h_new;
    x = h_new;
  }
  return x;
}

std::pair<Id, Id> build_heads(ad::Tape& tape, const HeadRefs& head, Id hidden) {
  const Id beta = tape.affine(*head.beta_w, *head.beta_b, hidden);
  const Id pose = tape.affine(*head.pose_w, *head.pose_b, hidden);
  return {beta, pose};
}

TapeState build_switch(ad::Tape& tape, const SwitcherRefs& swi, const TapeState& state,
                       int r_prev, int r_next) {
  if (r_prev != 0 && r_prev != 1) {
    throw InputError("switch_role: r_prev must be 0 or 1");
  }
  if (r_next != 0 && r_next != 1) {
    throw InputError("switch_role: r_next must be 0 or 1");
  }
  if (r_prev == r_next) {
    return state;
  }
  ad::Param* w = r_prev == 0 ? swi.ls_w : swi.sl_w;
  ad::Param* b = r_prev == 0 ? swi.ls_b : swi.sl_b;
  TapeState out;
  for (std::size_t l = 0; l < state.h.size(); ++l) {
    out.h.push_back(tape.affine(*w, *b, state.h[l]));
    out.c.push_back(tape.affine(*w, *b, state.c[l]));
  }
  return out;
}

namespace {

void check_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) {
    throw NumericError(std::string(what) + ": non-finite values");
  }
}

}  // namespace

Vec fuse_audio_motion(const Vec& audio_feat, const Vec& motion, const ModelParams& params) {
  ad::Tape tape;
  const Id out = build_fuse(tape, params.lis_fuse, tape.leaf(audio_feat), tape.leaf(motion));
  return tape.val(out);
}

DecoderState init_state(const DynamicCoeffs& reference, int label, const ModelParams& params) {
  if (label < 0 || label >= params.config().vocab_size) {
    throw ConfigError("init_state: label id " + std::to_string(label) +
                      " outside vocabulary of size " +
                      std::to_string(params.config().vocab_size));
  }
  ad::Tape tape;
  const TapeState ts =
      build_init_state(tape, params.lis, params.lis.init, tape.leaf(reference.flat()), label);
  return state_from_tape(tape, ts);
}

StepResult decoder_step(const DecoderState& state, const Vec& fused,
                        const ModelParams& params) {
  check_finite(fused, "decoder_step input");
  ad::Tape tape;
  TapeState ts = state_to_tape(tape, state);
  const Id top = build_stack_step(tape, params.lis.rnn, ts, tape.leaf(fused));
  const auto [beta, pose] = build_heads(tape, params.lis.head, top);
  StepResult r;
  r.state = state_from_tape(tape, ts);
  r.beta = tape.val(beta);
  r.pose = tape.val(pose);
  return r;
}

DecoderState switch_role(const DecoderState& state, int r_prev, int r_next,
                         const ModelParams& params) {
  if (r_prev == r_next) {
    if (r_prev != 0 && r_prev != 1) {
      throw InputError("switch_role: roles must be 0 or 1");
    }
    return state;  // exact identity, no arithmetic applied
  }
  ad::Tape tape;
  const TapeState ts = build_switch(tape, params.swi, state_to_tape(tape, state), r_prev, r_next);
  return state_from_tape(tape, ts);
}

}  // namespace convhead
