#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "convhead/io.hpp"
#include "convhead/manifest.hpp"
#include "convhead/synth.hpp"

#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace convhead;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("synth_speaker") {
  SynthConfig cfg;
  cfg.frames_min = 40;
  cfg.frames_max = 60;

  SUBCASE("fixed seed gives identical outputs") {
    std::mt19937_64 a(9);
    std::mt19937_64 b(9);
    const auto [fa, ca] = synth_speaker(cfg, a);
    const auto [fb, cb] = synth_speaker(cfg, b);
    CHECK((fa - fb).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ca.to_matrix() - cb.to_matrix()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("lengths stay within the configured range") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
      const auto [features, coeffs] = synth_speaker(cfg, rng);
      CHECK(features.rows() == coeffs.length());
      CHECK(coeffs.length() >= 40);
      CHECK(coeffs.length() <= 60);
    }
  }

  SUBCASE("heavy smoothing freezes the track") {
    SynthConfig frozen = cfg;
    frozen.smoothing = 0.999;
    frozen.frames_min = 80;
    frozen.frames_max = 80;
    std::mt19937_64 rng(11);
    const auto [features, coeffs] = synth_speaker(frozen, rng);
    const Mat m = coeffs.to_matrix();
    double max_delta = 0.0;
    for (Eigen::Index t = 1; t < m.rows(); ++t) {
      max_delta = std::max(max_delta, (m.row(t) - m.row(t - 1)).cwiseAbs().maxCoeff());
    }
    CHECK(max_delta < 1e-3);
  }

  SUBCASE("pose angles stay canonical") {
    std::mt19937_64 rng(12);
    const auto [features, coeffs] = synth_speaker(cfg, rng);
    for (const auto& f : coeffs.frames) {
      CHECK(f.pose_angle.cwiseAbs().maxCoeff() <= M_PI);
    }
  }
}

TEST_CASE("oracle_listener") {
  SynthConfig cfg;

  SUBCASE("zero speaker, zero energy, neutral attitude give zero motion") {
    const int frames = 12;
    Mat features = Mat::Zero(frames, kAudioDim);
    CoeffSequence speaker;
    for (int t = 0; t < frames; ++t) speaker.frames.push_back(DynamicCoeffs::zero());
    // label 1 ("neutral") carries a zero bias by construction
    CHECK(attitude_coupling(1).bias.cwiseAbs().maxCoeff() == 0.0);
    const CoeffSequence listener = oracle_listener(features, speaker, 1, cfg);
    CHECK(listener.to_matrix().cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("different attitudes give different responses") {
    std::mt19937_64 rng(21);
    const Mat features = test_util::random_mat(10, kAudioDim, rng, 0.2);
    const CoeffSequence speaker = test_util::random_sequence(10, rng);
    const CoeffSequence pos = oracle_listener(features, speaker, 0, cfg);
    const CoeffSequence neg = oracle_listener(features, speaker, 2, cfg);
    CHECK((pos.to_matrix() - neg.to_matrix()).cwiseAbs().maxCoeff() > 0.01);
  }

  SUBCASE("matches an independent re-implementation of the recursion") {
    std::mt19937_64 rng(22);
    const int frames = 25;
    const Mat features = test_util::random_mat(frames, kAudioDim, rng, 0.3);
    const CoeffSequence speaker = test_util::random_sequence(frames, rng);
    const int attitude = 2;
    const CoeffSequence got = oracle_listener(features, speaker, attitude, cfg);

    const AttitudeCoupling coupling = attitude_coupling(attitude);
    std::vector<double> state(70, 0.0);
    for (int t = 0; t < frames; ++t) {
      const Vec spk = speaker.frames[static_cast<std::size_t>(t)].flat();
      std::vector<double> target(70, 0.0);
      for (int i = 0; i < 64; ++i) {
        double acc = coupling.bias[i];
        for (int j = 0; j < 64; ++j) {
          acc += cfg.g_exp * coupling.exp_map(i, j) * spk[j];
        }
        target[static_cast<std::size_t>(i)] = acc;
      }
      for (int i = 0; i < 3; ++i) {
        target[static_cast<std::size_t>(64 + i)] = -cfg.g_pose * spk[64 + i];
        target[static_cast<std::size_t>(67 + i)] = -cfg.g_pose * spk[67 + i];
      }
      target[64] += cfg.g_energy * features(t, 42);
      for (int i = 0; i < 70; ++i) {
        state[static_cast<std::size_t>(i)] =
            t == 0 ? target[static_cast<std::size_t>(i)]
                   : cfg.smoothing * state[static_cast<std::size_t>(i)] +
                         (1.0 - cfg.smoothing) * target[static_cast<std::size_t>(i)];
      }
      const Vec frame = got.frames[static_cast<std::size_t>(t)].flat();
      for (int i = 0; i < 70; ++i) {
        CHECK(std::abs(frame[i] - state[static_cast<std::size_t>(i)]) < 1e-9);
      }
    }
  }

  SUBCASE("warm start smooths away from the seed frame") {
    std::mt19937_64 rng(23);
    const Mat features = test_util::random_mat(6, kAudioDim, rng, 0.2);
    const CoeffSequence speaker = test_util::random_sequence(6, rng);
    const DynamicCoeffs init = DynamicCoeffs::from_flat(test_util::random_vec(70, rng));
    const CoeffSequence warm = oracle_listener(features, speaker, 0, cfg, &init);
    const CoeffSequence cold = oracle_listener(features, speaker, 0, cfg);
    // cold frame 1 is the raw target; the warm run blends the seed into it
    const Vec expect =
        cfg.smoothing * init.flat() + (1.0 - cfg.smoothing) * cold.frames[0].flat();
    CHECK((warm.frames[0].flat() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("length mismatch is an input error") {
    std::mt19937_64 rng(24);
    const Mat features = test_util::random_mat(5, kAudioDim, rng);
    const CoeffSequence speaker = test_util::random_sequence(6, rng);
    CHECK_THROWS_AS(oracle_listener(features, speaker, 0, cfg), InputError);
  }
}

TEST_CASE("synth_corpus") {
  SynthConfig cfg;
  cfg.num_conversations = 3;
  cfg.turns_per_conversation = 3;
  cfg.frames_min = 10;
  cfg.frames_max = 14;
  cfg.seed = 31;

  test_util::TempDir dir("corpus");
  const CorpusSummary summary = synth_corpus(cfg, dir.file("a"));

  SUBCASE("every manifest validates cleanly") {
    REQUIRE(summary.manifests.size() == 3);
    for (const auto& m : summary.manifests) {
      const auto violations = validate_manifest_file(m);
      for (const auto& v : violations) {
        CAPTURE(v.rule);
        CAPTURE(v.message);
      }
      CHECK(violations.empty());
    }
  }

  SUBCASE("roles alternate across turns") {
    const ConversationManifest m = load_manifest(summary.manifests[0]);
    REQUIRE(m.turns.size() == 3);
    CHECK(m.turns[0].role_of_p != m.turns[1].role_of_p);
    CHECK(m.turns[1].role_of_p != m.turns[2].role_of_p);
  }

  SUBCASE("regeneration is byte-identical") {
    synth_corpus(cfg, dir.file("b"));
    namespace fs = std::filesystem;
    int files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir.file("a"))) {
      if (!entry.is_regular_file()) continue;
      const std::string rel =
          fs::relative(entry.path(), dir.file("a")).string();
      CHECK(read_bytes(entry.path().string()) ==
            read_bytes((fs::path(dir.file("b")) / rel).string()));
      ++files;
    }
    CHECK(files > 10);
  }

  SUBCASE("summary statistics match an independent pass over the files") {
    double abs_beta = 0.0;
    long beta_n = 0;
    double energy = 0.0;
    long energy_n = 0;
    for (const auto& path : summary.manifests) {
      const LoadedConversation conv = load_conversation(path);
      for (const auto& turn : conv.turns) {
        for (Eigen::Index r = 0; r < turn.agent_track.rows(); ++r) {
          for (int c = 0; c < kBetaDim; ++c) {
            abs_beta += std::abs(turn.agent_track(r, c));
            abs_beta += std::abs(turn.counterpart(r, c));
            beta_n += 2;
          }
          energy += turn.audio(r, 42);
          ++energy_n;
        }
      }
    }
    CHECK(summary.mean_abs_beta ==
          doctest::Approx(abs_beta / static_cast<double>(beta_n)).epsilon(1e-9));
    CHECK(summary.mean_energy ==
          doctest::Approx(energy / static_cast<double>(energy_n)).epsilon(1e-9));
    CHECK(summary.mean_abs_beta > 0.01);
    CHECK(summary.mean_energy > 0.01);
  }

  SUBCASE("listener tracks are the oracle response to the written speaker tracks") {
    // single-turn corpus: no warm start, so the recursion is reproducible
    // straight from the files
    SynthConfig single = cfg;
    single.turns_per_conversation = 1;
    single.first_role_of_p = 0;
    const CorpusSummary s = synth_corpus(single, dir.file("c"));
    for (const auto& path : s.manifests) {
      const LoadedConversation conv = load_conversation(path);
      const ConversationManifest m = load_manifest(path);
      const CoeffSequence recomputed = oracle_listener(
          conv.turns[0].audio, CoeffSequence::from_matrix(conv.turns[0].counterpart),
          m.turns[0].conditioning.label_id, single);
      CHECK((recomputed.to_matrix() - conv.turns[0].agent_track).cwiseAbs().maxCoeff() <
            1e-5);
    }
  }
}

TEST_CASE("synth config json rejects unknown keys") {
  SynthConfig cfg;
  apply_synth_json(cfg, R"({"num_conversations": 5, "g_talk": 0.1})");
  CHECK(cfg.num_conversations == 5);
  CHECK(cfg.g_talk == doctest::Approx(0.1));
  CHECK_THROWS_AS(apply_synth_json(cfg, R"({"conversations": 5})"), ConfigError);
}
