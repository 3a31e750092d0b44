#include "convhead/synth.hpp"

#include "convhead/acoustic.hpp"
#include "convhead/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace convhead {

void SynthConfig::validate() const {
  if (num_conversations <= 0 || turns_per_conversation <= 0) {
    throw ConfigError("synth config: counts must be positive");
  }
  if (frames_min < 2 || frames_max < frames_min) {
    throw ConfigError("synth config: frames range must satisfy 2 <= min <= max");
  }
  if (smoothing <= 0.0 || smoothing >= 1.0) {
    throw ConfigError("synth config: smoothing must lie in (0, 1)");
  }
  if (vocabulary.labels.empty()) {
    throw ConfigError("synth config: vocabulary must hold at least one label");
  }
  if (first_role_of_p < -1 || first_role_of_p > 1) {
    throw ConfigError("synth config: first_role_of_p must be 0, 1 or -1");
  }
  if (fps <= 0.0) {
    throw ConfigError("synth config: fps must be positive");
  }
}

void apply_synth_json(SynthConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: invalid JSON: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "num_conversations") cfg.num_conversations = it.value().get<int>();
    else if (k == "turns_per_conversation") cfg.turns_per_conversation = it.value().get<int>();
    else if (k == "frames_min") cfg.frames_min = it.value().get<int>();
    else if (k == "frames_max") cfg.frames_max = it.value().get<int>();
    else if (k == "vocabulary") {
      cfg.vocabulary.name = it.value().at("name").get<std::string>();
      cfg.vocabulary.labels = it.value().at("labels").get<std::vector<std::string>>();
    } else if (k == "g_pose") cfg.g_pose = it.value().get<double>();
    else if (k == "g_exp") cfg.g_exp = it.value().get<double>();
    else if (k == "g_energy") cfg.g_energy = it.value().get<double>();
    else if (k == "g_talk") cfg.g_talk = it.value().get<double>();
    else if (k == "smoothing") cfg.smoothing = it.value().get<double>();
    else if (k == "first_role_of_p") cfg.first_role_of_p = it.value().get<int>();
    else if (k == "fps") cfg.fps = it.value().get<double>();
    else if (k == "seed") cfg.seed = it.value().get<std::uint64_t>();
    else throw ConfigError("synth config: unknown key '" + k + "'");
  }
}

std::string synth_config_json(const SynthConfig& cfg) {
  json j{{"num_conversations", cfg.num_conversations},
         {"turns_per_conversation", cfg.turns_per_conversation},
         {"frames_min", cfg.frames_min},
         {"frames_max", cfg.frames_max},
         {"vocabulary", {{"name", cfg.vocabulary.name}, {"labels", cfg.vocabulary.labels}}},
         {"g_pose", cfg.g_pose},
         {"g_exp", cfg.g_exp},
         {"g_energy", cfg.g_energy},
         {"g_talk", cfg.g_talk},
         {"smoothing", cfg.smoothing},
         {"first_role_of_p", cfg.first_role_of_p},
         {"fps", cfg.fps},
         {"seed", cfg.seed}};
  return j.dump(2);
}

AttitudeCoupling attitude_coupling(int label) {
  if (label < 0) {
    throw InputError("attitude_coupling: negative label");
  }
  // one shared signed permutation; the attitude selects a gain and a bias
  // pattern on top of it
  AttitudeCoupling c;
  c.exp_map = Mat::Zero(kBetaDim, kBetaDim);
  static const double gains[3] = {1.0, 0.6, -0.8};
  const double gain = gains[label % 3];
  for (int i = 0; i < kBetaDim; ++i) {
    c.exp_map(i, (i + 7) % kBetaDim) = (i % 2 == 0) ? gain : -gain;
  }
  // label index 1 carries a zero bias; others alternate sign
  const double sign = 1.0 - static_cast<double>(label % 3);
  c.bias = Vec(kBetaDim);
  for (int i = 0; i < kBetaDim; ++i) {
    c.bias[i] = 0.15 * sign * std::cos(2.0 * M_PI * i * (label + 2) / kBetaDim);
  }
  return c;
}

Mat talk_coupling() {
  Mat m = Mat::Zero(kBetaDim, kBetaDim);
  for (int i = 0; i < kBetaDim; ++i) {
    m(i, (i + 13) % kBetaDim) = (i % 3 == 0) ? -1.0 : 1.0;
  }
  return m;
}

namespace {

constexpr int kEnergyCol = 42;
constexpr int kMouthDims = 4;  // leading expression dims track audio energy

// mean-reverting (band-limited) random walk with stationary std sigma
struct OuProcess {
  Vec state;
  double rho;
  double sigma;

  OuProcess(Eigen::Index dim, double rho_in, double sigma_in, std::mt19937_64& rng)
      : state(dim), rho(rho_in), sigma(sigma_in) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index i = 0; i < dim; ++i) {
      state[i] = sigma * n(rng);
    }
  }
  const Vec& step(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double drive = sigma * std::sqrt(1.0 - rho * rho);
    for (Eigen::Index i = 0; i < state.size(); ++i) {
      state[i] = rho * state[i] + drive * n(rng);
    }
    return state;
  }
};

Vec clamp_vec(const Vec& v, double bound) {
  return v.cwiseMax(-bound).cwiseMin(bound);
}

struct ListenerOracleStep {
  const SynthConfig* cfg;
  AttitudeCoupling coupling;
  Vec state;  // 70, current listener frame
  bool started = false;

  ListenerOracleStep(const SynthConfig& c, int attitude)
      : cfg(&c), coupling(attitude_coupling(attitude)) {}

  Vec target(const Vec& speaker_frame, double energy) const {
    const Vec spk_beta = speaker_frame.head(kBetaDim);
    const Vec spk_angle = speaker_frame.segment(kBetaDim, kPoseAngleDim);
    const Vec spk_trans = speaker_frame.tail(kPoseTransDim);
    Vec t(kMotionDim);
    t.head(kBetaDim) = cfg->g_exp * (coupling.exp_map * spk_beta) + coupling.bias;
    Vec angle = -cfg->g_pose * spk_angle;
    angle[0] += cfg->g_energy * energy;  // energy-driven nod on the pitch axis
    t.segment(kBetaDim, kPoseAngleDim) = angle;
    t.tail(kPoseTransDim) = -cfg->g_pose * spk_trans;
    return t;
  }

  void seed(const Vec& initial) {
    state = initial;
    started = true;
  }

  const Vec& advance(const Vec& speaker_frame, double energy) {
    const Vec t = target(speaker_frame, energy);
    if (!started) {
      state = t;
      started = true;
    } else {
      state = cfg->smoothing * state + (1.0 - cfg->smoothing) * t;
    }
    return state;
  }
};

struct TurnTracks {
  Mat audio;     // T x 45
  Mat speaker;   // T x 70
  Mat listener;  // T x 70
};

/// Co-generates one turn: speaker base tracks are mean-reverting walks, the
/// mouth expression dims follow audio energy, and (with coupling enabled) the
/// speaker mixes in a lagged map of the listener's motion. The listener is
/// the oracle response to the final speaker track.
TurnTracks generate_turn(const SynthConfig& cfg, std::mt19937_64& rng, int frames,
                         int attitude, bool listener_feedback, const Vec* speaker_warm,
                         const Vec* listener_warm) {
  OuProcess ou_mfcc(kNumMfcc, 0.97, 0.8, rng);
  OuProcess ou_energy(1, 0.95, 1.0, rng);
  OuProcess ou_zcr(1, 0.9, 1.0, rng);
  OuProcess ou_beta(kBetaDim, 0.985, 0.25, rng);
  OuProcess ou_angle(kPoseAngleDim, 0.985, 0.12, rng);
  OuProcess ou_trans(kPoseTransDim, 0.985, 0.15, rng);

  const Mat talk_map = talk_coupling();
  ListenerOracleStep oracle(cfg, attitude);
  if (listener_warm != nullptr) {
    oracle.seed(*listener_warm);
  }

  TurnTracks tracks;
  tracks.audio = Mat::Zero(frames, kAudioDim);
  tracks.speaker = Mat::Zero(frames, kMotionDim);
  tracks.listener = Mat::Zero(frames, kMotionDim);
  Mat mfcc_track(frames, kNumMfcc);

  Vec spk_prev;
  bool spk_started = false;
  if (speaker_warm != nullptr) {
    spk_prev = *speaker_warm;
    spk_started = true;
  }
  Vec list_prev = listener_warm != nullptr ? *listener_warm : Vec::Zero(kMotionDim);
  bool have_list_prev = listener_warm != nullptr;

  for (int t = 0; t < frames; ++t) {
    mfcc_track.row(t) = ou_mfcc.step(rng).transpose();
    const double energy = 0.08 + 0.05 * std::min(std::abs(ou_energy.step(rng)[0]), 4.0);
    const double zcr = 1.0 / (1.0 + std::exp(-ou_zcr.step(rng)[0]));
    tracks.audio(t, kEnergyCol) = energy;
    tracks.audio(t, kEnergyCol + 1) = std::log(energy + kEnergyFloor);
    tracks.audio(t, kEnergyCol + 2) = zcr;

    Vec target(kMotionDim);
    Vec beta = clamp_vec(ou_beta.step(rng), 1.0);
    for (int d = 0; d < kMouthDims; ++d) {
      beta[d] += cfg.g_energy * (energy - 0.08) * 3.0;
    }
    if (listener_feedback && have_list_prev) {
      beta += cfg.g_talk * (talk_map * list_prev.head(kBetaDim));
    }
    target.head(kBetaDim) = beta;
    target.segment(kBetaDim, kPoseAngleDim) = clamp_vec(ou_angle.step(rng), 0.5);
    target.tail(kPoseTransDim) = clamp_vec(ou_trans.step(rng), 0.75);

    Vec spk = spk_started ? Vec(cfg.smoothing * spk_prev + (1.0 - cfg.smoothing) * target)
                          : target;
    spk_prev = spk;
    spk_started = true;
    tracks.speaker.row(t) = spk.transpose();

    list_prev = oracle.advance(spk, energy);
    have_list_prev = true;
    tracks.listener.row(t) = list_prev.transpose();
  }

  // MFCC block plus deltas computed with the production regression, so the
  // synthetic features carry the same internal structure as extracted ones.
  tracks.audio.block(0, 0, frames, kNumMfcc) = mfcc_track;
  tracks.audio.block(0, kNumMfcc, frames, 2 * kNumMfcc) = delta_features(mfcc_track);
  return tracks;
}

IdentityCoeffs random_identity(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  IdentityCoeffs id;
  id.alpha = Vec(80);
  id.delta = Vec(80);
  id.gamma = Vec(27);
  for (Eigen::Index i = 0; i < 80; ++i) id.alpha[i] = 0.1 * n(rng);
  for (Eigen::Index i = 0; i < 80; ++i) id.delta[i] = 0.1 * n(rng);
  for (Eigen::Index i = 0; i < 27; ++i) id.gamma[i] = 0.05 * n(rng);
  return id;
}

}  // namespace

std::pair<Mat, CoeffSequence> synth_speaker(const SynthConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_int_distribution<int> frames_dist(cfg.frames_min, cfg.frames_max);
  const int frames = frames_dist(rng);
  const TurnTracks tracks =
      generate_turn(cfg, rng, frames, 0, /*listener_feedback=*/false, nullptr, nullptr);
  return {tracks.audio, CoeffSequence::from_matrix(tracks.speaker, cfg.fps)};
}

CoeffSequence oracle_listener(const Mat& speaker_features, const CoeffSequence& speaker,
                              int attitude, const SynthConfig& cfg,
                              const DynamicCoeffs* initial) {
  if (speaker_features.rows() != speaker.length()) {
    throw InputError("oracle_listener: feature frames (" +
                     std::to_string(speaker_features.rows()) + ") != coefficient frames (" +
                     std::to_string(speaker.length()) + ")");
  }
  if (speaker.length() == 0) {
    throw InputError("oracle_listener: empty speaker sequence");
  }
  ListenerOracleStep oracle(cfg, attitude);
  if (initial != nullptr) {
    oracle.seed(initial->flat());
  }
  CoeffSequence out;
  out.fps = speaker.fps;
  for (int t = 0; t < speaker.length(); ++t) {
    const Vec& frame = oracle.advance(speaker.frames[static_cast<std::size_t>(t)].flat(),
                                      speaker_features(t, kEnergyCol));
    out.frames.push_back(DynamicCoeffs::from_flat(frame));
  }
  return out;
}

CorpusSummary synth_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);

  CorpusSummary summary;
  double abs_beta_acc = 0.0;
  long beta_count = 0;
  double energy_acc = 0.0;
  long energy_count = 0;

  for (int conv = 0; conv < cfg.num_conversations; ++conv) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(conv)));
    char name[32];
    std::snprintf(name, sizeof(name), "conv%04d", conv);
    const fs::path conv_dir = fs::path(out_dir) / name;
    fs::create_directories(conv_dir);

    ConversationManifest manifest;
    manifest.fps = cfg.fps;
    manifest.vocabulary = cfg.vocabulary;
    manifest.identity_p_path = "identity_P.json";
    manifest.identity_q_path = "identity_Q.json";
    save_identity((conv_dir / "identity_P.json").string(), random_identity(rng));
    save_identity((conv_dir / "identity_Q.json").string(), random_identity(rng));

    std::uniform_int_distribution<int> role_dist(0, 1);
    int role_of_p = cfg.first_role_of_p >= 0 ? cfg.first_role_of_p : role_dist(rng);
    std::uniform_int_distribution<int> frames_dist(cfg.frames_min, cfg.frames_max);
    std::uniform_int_distribution<int> label_dist(0, cfg.vocabulary.size() - 1);

    Vec p_last, q_last;
    bool have_last = false;

    for (int turn = 1; turn <= cfg.turns_per_conversation; ++turn) {
      const int frames = frames_dist(rng);
      const int label = label_dist(rng);

      // P speaks on role 1; the agent side warm-starts from its previous
      // frame so ground truth stays continuous across role switches
      const Vec* spk_warm = nullptr;
      const Vec* lis_warm = nullptr;
      if (have_last) {
        spk_warm = role_of_p == 1 ? &p_last : &q_last;
        lis_warm = role_of_p == 1 ? &q_last : &p_last;
      }
      const TurnTracks tracks = generate_turn(cfg, rng, frames, label,
                                              /*listener_feedback=*/true, spk_warm, lis_warm);
      const Mat& p_track = role_of_p == 1 ? tracks.speaker : tracks.listener;
      const Mat& q_track = role_of_p == 1 ? tracks.listener : tracks.speaker;

      char stem[32];
      std::snprintf(stem, sizeof(stem), "t%03d", turn);
      const std::string audio_name = std::string(stem) + ".vcaf";
      const std::string p_name = std::string(stem) + "_P.vcof";
      const std::string q_name = std::string(stem) + "_Q.vcof";
      save_features((conv_dir / audio_name).string(), tracks.audio);
      write_matrix_file((conv_dir / p_name).string(), kCoeffMagic, p_track);
      write_matrix_file((conv_dir / q_name).string(), kCoeffMagic, q_track);

      TurnEntry entry;
      entry.turn_index = turn;
      entry.role_of_p = role_of_p;
      entry.conditioning = {label, cfg.vocabulary.name};
      entry.audio_features_path = audio_name;
      entry.coeffs_p_path = p_name;
      entry.coeffs_q_path = q_name;
      manifest.turns.push_back(std::move(entry));

      // stats accumulate at file precision so an independent pass over the
      // written corpus reproduces them exactly
      for (Eigen::Index r = 0; r < p_track.rows(); ++r) {
        for (Eigen::Index c = 0; c < kBetaDim; ++c) {
          abs_beta_acc += std::abs(to_file_precision(p_track(r, c)));
          abs_beta_acc += std::abs(to_file_precision(q_track(r, c)));
          beta_count += 2;
        }
        energy_acc += to_file_precision(tracks.audio(r, kEnergyCol));
        ++energy_count;
      }

      p_last = p_track.row(p_track.rows() - 1).transpose();
      q_last = q_track.row(q_track.rows() - 1).transpose();
      have_last = true;
      role_of_p = 1 - role_of_p;
      ++summary.num_turns;
      summary.num_frames += frames;
    }

    const std::string manifest_path = (conv_dir / "manifest.json").string();
    save_manifest(manifest_path, manifest);
    summary.manifests.push_back(manifest_path);
  }

  summary.num_conversations = cfg.num_conversations;
  summary.mean_abs_beta = beta_count > 0 ? abs_beta_acc / static_cast<double>(beta_count) : 0.0;
  summary.mean_energy = energy_count > 0 ? energy_acc / static_cast<double>(energy_count) : 0.0;

  json j{{"config", json::parse(synth_config_json(cfg))},
         {"num_conversations", summary.num_conversations},
         {"num_turns", summary.num_turns},
         {"num_frames", summary.num_frames},
         {"mean_abs_beta", summary.mean_abs_beta},
         {"mean_energy", summary.mean_energy}};
  std::ofstream out(fs::path(out_dir) / "corpus.json");
  if (!out) {
    throw IoError("cannot write corpus summary under " + out_dir);
  }
  out << j.dump(2) << '\n';
  return summary;
}

}  // namespace convhead
