#pragma once

#include "convhead/manifest.hpp"
#include "convhead/types.hpp"

#include <random>
#include <string>
#include <utility>

namespace convhead {

/// Deterministic synthetic conversation corpus with a known speaker-to-
/// listener coupling. Stands in for real capture data so training and
/// evaluation have an analytic ground truth at desk scale.
struct SynthConfig {
  int num_conversations = 20;
  int turns_per_conversation = 1;
  int frames_min = 80;
  int frames_max = 100;
  ConditioningVocabulary vocabulary{"attitude3", {"positive", "neutral", "negative"}};
  double g_pose = 0.3;    // listener pose tracks the speaker's, negated
  double g_exp = 0.5;     // listener expression gain on the attitude map
  double g_energy = 0.4;  // audio-energy drive (listener nod, speaker mouth)
  double g_talk = 0.3;    // listener-coupled component mixed into the speaker
  double smoothing = 0.8; // lambda in (0,1); higher = smoother tracks
  int first_role_of_p = -1;  // 0, 1, or -1 to draw per conversation
  double fps = 30.0;
  std::uint64_t seed = 0;

  void validate() const;
};

void apply_synth_json(SynthConfig& cfg, const std::string& json_text);
std::string synth_config_json(const SynthConfig& cfg);

/// Attitude-specific coupling: a signed-permutation expression map plus a
/// bias pattern (zero for label index 1). Deterministic in the label alone so
/// separately seeded corpora share the same oracle.
struct AttitudeCoupling {
  Mat exp_map;  // 64 x 64
  Vec bias;     // 64
};
AttitudeCoupling attitude_coupling(int label);

/// Fixed signed-permutation map from listener expression into the speaker
/// track (the g_talk component).
Mat talk_coupling();

/// One synthetic speaker turn: audio features (T x 45) and the smoothed
/// random-walk coefficient track. T is drawn from the configured range.
std::pair<Mat, CoeffSequence> synth_speaker(const SynthConfig& cfg, std::mt19937_64& rng);

/// The ground-truth listener response: exponential smoothing of the
/// attitude-mapped speaker expression, negated pose tracking and an
/// energy-driven nod. Pure in its inputs; `initial` overrides the first
/// frame (warm start across turns).
CoeffSequence oracle_listener(const Mat& speaker_features, const CoeffSequence& speaker,
                              int attitude, const SynthConfig& cfg,
                              const DynamicCoeffs* initial = nullptr);

struct CorpusSummary {
  int num_conversations = 0;
  int num_turns = 0;
  long num_frames = 0;
  double mean_abs_beta = 0.0;  // over both participants' coefficient files
  double mean_energy = 0.0;    // over the audio feature energy column
  std::vector<std::string> manifests;
};

/// Writes manifests plus VCAF/VCOF/identity files under out_dir, one
/// directory per conversation, and a corpus.json summary. Byte-identical for
/// a fixed config.
CorpusSummary synth_corpus(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace convhead
