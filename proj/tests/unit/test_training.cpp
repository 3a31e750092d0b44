#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "convhead/io.hpp"
#include "convhead/synth.hpp"
#include "convhead/training.hpp"

#include "test_util.hpp"

#include <cmath>
#include <fstream>
#include <random>

using namespace convhead;

namespace {

ModelConfig tiny_config(int hidden = 2, int layers = 1, int fused = 3) {
  ModelConfig cfg;
  cfg.hidden = hidden;
  cfg.layers = layers;
  cfg.fused = fused;
  cfg.embed_dim = 3;
  cfg.ref_dim = 2;
  cfg.vocab_size = 3;
  cfg.seed = 99;
  return cfg;
}

std::vector<ad::Param*> with_prefixes(const ModelParams& params,
                                      const std::vector<std::string>& prefixes) {
  std::vector<ad::Param*> out;
  for (ad::Param* p : params.tensors()) {
    for (const auto& pre : prefixes) {
      if (p->name.rfind(pre, 0) == 0) {
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("loss_gen") {
  std::mt19937_64 rng(1);
  SUBCASE("zero at pred == gt") {
    const CoeffSequence seq = test_util::random_sequence(6, rng);
    CHECK(loss_gen(seq, seq) == 0.0);
  }
  SUBCASE("three unit beta residuals sum to 3") {
    CoeffSequence gt;
    CoeffSequence pred;
    for (int t = 0; t < 4; ++t) {
      gt.frames.push_back(DynamicCoeffs::zero());
      DynamicCoeffs d = DynamicCoeffs::zero();
      if (t >= 1) d.beta[0] = 1.0;
      pred.frames.push_back(d);
    }
    CHECK(loss_gen(pred, gt) == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("matches the brute-force oracle on random pairs") {
    for (int trial = 0; trial < 30; ++trial) {
      const int frames = 2 + static_cast<int>(rng() % 10);
      const CoeffSequence a = test_util::random_sequence(frames, rng);
      const CoeffSequence b = test_util::random_sequence(frames, rng);
      CHECK(std::abs(loss_gen(a, b) - test_util::brute_loss_gen(a, b)) < 1e-9);
    }
  }
  SUBCASE("length rules") {
    const CoeffSequence a = test_util::random_sequence(5, rng);
    const CoeffSequence b = test_util::random_sequence(4, rng);
    CHECK_THROWS_AS(loss_gen(a, b), InputError);
    const CoeffSequence one = test_util::random_sequence(1, rng);
    CHECK_THROWS_AS(loss_gen(one, one), InputError);
  }
}

TEST_CASE("loss_mot") {
  std::mt19937_64 rng(2);
  SUBCASE("zero at pred == gt") {
    const CoeffSequence seq = test_util::random_sequence(5, rng);
    CHECK(loss_mot(seq, seq, 1e-3, 1.0) == 0.0);
  }
  SUBCASE("constant per-frame offset cancels") {
    const CoeffSequence gt = test_util::random_sequence(7, rng);
    CoeffSequence pred = gt;
    const Vec offset = test_util::random_vec(kMotionDim, rng);
    for (auto& f : pred.frames) {
      f = DynamicCoeffs::from_flat(f.flat() + offset);
    }
    CHECK(loss_mot(pred, gt, 1e-3, 1.0) < 1e-12);
    CHECK(loss_gen(pred, gt) > 0.1);  // the generation loss does not cancel
  }
  SUBCASE("matches the brute-force oracle") {
    for (int trial = 0; trial < 30; ++trial) {
      const int frames = 2 + static_cast<int>(rng() % 10);
      const CoeffSequence a = test_util::random_sequence(frames, rng);
      const CoeffSequence b = test_util::random_sequence(frames, rng);
      CHECK(std::abs(loss_mot(a, b, 1e-3, 1.0) -
                     test_util::brute_loss_mot(a, b, 1e-3, 1.0)) < 1e-9);
    }
  }
}

TEST_CASE("loss_total decomposes exactly") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int frames = 2 + static_cast<int>(rng() % 8);
    const CoeffSequence a = test_util::random_sequence(frames, rng);
    const CoeffSequence b = test_util::random_sequence(frames, rng);
    const double total = loss_total(a, b, 1e-3, 1.0);
    CHECK(total == loss_gen(a, b) + loss_mot(a, b, 1e-3, 1.0));
    CHECK(std::abs(total - test_util::brute_loss_gen(a, b) -
                   test_util::brute_loss_mot(a, b, 1e-3, 1.0)) < 1e-9);
  }
  const CoeffSequence s = test_util::random_sequence(4, rng);
  CHECK(loss_total(s, s, 1e-3, 1.0) == 0.0);
}

TEST_CASE("tape loss agrees with the value-level losses on a generated turn") {
  ModelParams params(tiny_config());
  std::mt19937_64 rng(4);
  TurnInput turn = test_util::random_turn(params.config(), 6, 0, rng);
  Mat gt = test_util::random_mat(6, 70, rng);
  gt.row(0) = turn.reference.flat().transpose();  // shared reference frame

  ad::Tape tape;
  const TurnGraph g = build_listener_turn(tape, params, turn, nullptr);
  const LossIds ids = build_turn_loss(tape, g.preds, gt, 1e-3, 1.0);

  const TurnResult r = generate_listener(turn, params);
  const CoeffSequence gt_seq = CoeffSequence::from_matrix(gt);
  CHECK(tape.scalar(ids.gen) == doctest::Approx(loss_gen(r.coeffs, gt_seq)).epsilon(1e-12));
  CHECK(tape.scalar(ids.mot) ==
        doctest::Approx(loss_mot(r.coeffs, gt_seq, 1e-3, 1.0)).epsilon(1e-12));
  CHECK(tape.scalar(ids.total) == tape.scalar(ids.gen) + tape.scalar(ids.mot));
}

TEST_CASE("backward: stationarity at zero residual") {
  ModelParams params(tiny_config());
  std::mt19937_64 rng(5);
  TurnInput turn = test_util::random_turn(params.config(), 5, 0, rng);
  const TurnResult r = generate_listener(turn, params);
  const Mat gt = r.coeffs.to_matrix();  // gt := the model's own output

  params.zero_grads();
  ad::Tape tape;
  const TurnGraph g = build_listener_turn(tape, params, turn, nullptr);
  const LossIds ids = build_turn_loss(tape, g.preds, gt, 1e-3, 1.0);
  CHECK(tape.scalar(ids.total) == 0.0);
  tape.backward(ids.total);
  CHECK(params.lis.head.beta_b->grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(params.lis.head.pose_b->grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: doubling the loss doubles every gradient") {
  ModelParams params(tiny_config());
  std::mt19937_64 rng(6);
  TurnInput turn = test_util::random_turn(params.config(), 5, 0, rng);
  const Mat gt = test_util::random_mat(5, 70, rng);

  auto run = [&](double scale) {
    params.zero_grads();
    ad::Tape tape;
    const TurnGraph g = build_listener_turn(tape, params, turn, nullptr);
    const LossIds ids = build_turn_loss(tape, g.preds, gt, 1e-3, 1.0);
    tape.backward(tape.scale(ids.total, scale));
    std::vector<Mat> grads;
    for (ad::Param* p : params.tensors()) grads.push_back(p->grad);
    return grads;
  };
  const auto g1 = run(1.0);
  const auto g2 = run(2.0);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK((g2[i] - 2.0 * g1[i]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backward matches central finite differences on the listener graph") {
  ModelParams params(tiny_config(2, 1, 3));
  std::mt19937_64 rng(7);
  TurnInput turn = test_util::random_turn(params.config(), 4, 0, rng);
  const Mat gt = test_util::random_mat(4, 70, rng);

  auto loss_fn = [&]() {
    ad::Tape tape;
    const TurnGraph g = build_listener_turn(tape, params, turn, nullptr);
    return tape.scalar(build_turn_loss(tape, g.preds, gt, 1e-3, 1.0).total);
  };
  params.zero_grads();
  {
    ad::Tape tape;
    const TurnGraph g = build_listener_turn(tape, params, turn, nullptr);
    tape.backward(build_turn_loss(tape, g.preds, gt, 1e-3, 1.0).total);
  }
  const auto check =
      test_util::check_gradients(with_prefixes(params, {"lis."}), loss_fn, 1e-5);
  INFO("worst entry: ", check.worst);
  CHECK(check.entries_checked > 500);
  CHECK(check.max_err <= 1e-3);
}

TEST_CASE("backward matches finite differences on the talker graph") {
  ModelParams params(tiny_config(2, 1, 3));
  std::mt19937_64 rng(8);
  TurnInput turn = test_util::random_turn(params.config(), 4, 1, rng);
  const Mat gt = test_util::random_mat(4, 70, rng);

  auto loss_fn = [&]() {
    ad::Tape tape;
    const TurnGraph g = build_talker_turn(tape, params, turn, nullptr);
    return tape.scalar(build_turn_loss(tape, g.preds, gt, 1e-3, 1.0).total);
  };
  params.zero_grads();
  {
    ad::Tape tape;
    const TurnGraph g = build_talker_turn(tape, params, turn, nullptr);
    tape.backward(build_turn_loss(tape, g.preds, gt, 1e-3, 1.0).total);
  }
  // alpha gradients flow through the fusion blend
  const auto check = test_util::check_gradients(
      with_prefixes(params, {"tlk.", "aud.", "fus."}), loss_fn, 1e-5);
  INFO("worst entry: ", check.worst);
  CHECK(check.max_err <= 1e-3);
  CHECK(std::abs(params.alpha_beta->grad(0, 0)) > 0.0);
}

TEST_CASE("adamw single step matches the closed form") {
  ad::Param p;
  p.name = "w";
  p.value = Mat::Constant(1, 1, 0.7);
  p.grad = Mat::Constant(1, 1, 0.3);
  p.decay = true;
  AdamW opt({&p}, 0.9, 0.999, 0.01);
  opt.step(0.002);
  // bias-corrected m/v equal g for the first step, so the Adam part is
  // g/(|g| + eps) and the decoupled decay subtracts lr*wd*theta
  const double expect =
      0.7 - 0.002 * (0.3 / (std::sqrt(0.3 * 0.3) + 1e-8) + 0.01 * 0.7);
  CHECK(p.value(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gradient clipping caps the global norm") {
  ad::Param a, b;
  a.value = Mat::Zero(2, 1);
  a.grad = Mat::Constant(2, 1, 3.0);
  b.value = Mat::Zero(2, 1);
  b.grad = Mat::Constant(2, 1, 4.0);
  const double norm = clip_gradients({&a, &b}, 5.0);
  CHECK(norm == doctest::Approx(std::sqrt(9.0 * 2 + 16.0 * 2)).epsilon(1e-12));
  double after = std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm());
  CHECK(after == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("lr schedule halves every decay_every epochs") {
  TrainingConfig cfg;
  CHECK(lr_at_epoch(cfg, 0) == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(lr_at_epoch(cfg, 29) == doctest::Approx(2e-3).epsilon(1e-12));
  CHECK(lr_at_epoch(cfg, 30) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at_epoch(cfg, 59) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at_epoch(cfg, 60) == doctest::Approx(5e-4).epsilon(1e-12));
}

TEST_CASE("training config json round trip and unknown key rejection") {
  TrainingConfig cfg = default_training_config("talker");
  CHECK(cfg.epochs == 300);
  apply_training_json(cfg, R"({"epochs": 12, "model": {"hidden": 16}})");
  CHECK(cfg.epochs == 12);
  CHECK(cfg.model.hidden == 16);
  CHECK_THROWS_AS(apply_training_json(cfg, R"({"epoch": 12})"), ConfigError);
  CHECK_THROWS_AS(apply_training_json(cfg, R"({"model": {"width": 3}})"), ConfigError);

  TrainingConfig agent = default_training_config("agent");
  CHECK(agent.epochs == 50);
  CHECK(agent.learning_rate == doctest::Approx(2e-4));

  // round trip through the serialized form
  TrainingConfig back = default_training_config("talker");
  apply_training_json(back, training_config_json(cfg));
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.model.hidden == cfg.model.hidden);
}

namespace {

std::vector<std::string> tiny_listener_corpus(const std::string& dir, int conversations,
                                              int frames_min, int frames_max,
                                              std::uint64_t seed) {
  SynthConfig cfg;
  cfg.num_conversations = conversations;
  cfg.turns_per_conversation = 1;
  cfg.frames_min = frames_min;
  cfg.frames_max = frames_max;
  cfg.first_role_of_p = 0;
  cfg.seed = seed;
  return synth_corpus(cfg, dir).manifests;
}

}  // namespace

TEST_CASE("train_task overfits a single synthetic clip") {
  test_util::TempDir dir("overfit");
  const auto manifests = tiny_listener_corpus(dir.file("corpus"), 1, 6, 6, 42);

  TrainingConfig cfg = default_training_config("listener");
  cfg.epochs = 300;
  cfg.learning_rate = 0.04;
  cfg.decay_every = 40;
  cfg.grad_accum = 1;
  cfg.val_fraction = 0.0;
  cfg.seed = 7;
  cfg.model = tiny_config(48, 1, 8);

  const TrainOutcome outcome = train_task(cfg, manifests, {}, dir.file("run"));
  double last_train = 1e9;
  for (const auto& m : outcome.log) {
    if (m.split == "train") last_train = m.l_total;
  }
  CHECK(outcome.best < 1e-2);
  CHECK(last_train < 1e-1);  // still near the floor at the end
}

TEST_CASE("train_task is bit-reproducible under a fixed seed") {
  test_util::TempDir dir("repro");
  const auto manifests = tiny_listener_corpus(dir.file("corpus"), 3, 8, 10, 5);

  TrainingConfig cfg = default_training_config("listener");
  cfg.epochs = 3;
  cfg.val_fraction = 0.34;
  cfg.seed = 11;
  cfg.model = tiny_config(4, 1, 4);

  std::vector<std::string> train_set(manifests.begin(), manifests.begin() + 2);
  std::vector<std::string> val_set(manifests.begin() + 2, manifests.end());
  const TrainOutcome a = train_task(cfg, train_set, val_set, dir.file("run_a"));
  const TrainOutcome b = train_task(cfg, train_set, val_set, dir.file("run_b"));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].l_gen == b.log[i].l_gen);
    CHECK(a.log[i].l_mot == b.log[i].l_mot);
    CHECK(a.log[i].l_total == b.log[i].l_total);
    CHECK(a.log[i].lr == b.log[i].lr);
  }
  CHECK(a.best == b.best);
  CHECK(a.best_epoch == b.best_epoch);

  // recorded lr never increases
  double prev = 1e9;
  for (const auto& m : a.log) {
    if (m.split != "train") continue;
    CHECK(m.lr <= prev);
    prev = m.lr;
  }
}

TEST_CASE("train_task aborts on non-finite data") {
  test_util::TempDir dir("nan");
  const auto manifests = tiny_listener_corpus(dir.file("corpus"), 1, 8, 8, 3);

  // corrupt the counterpart track with a NaN
  const LoadedConversation conv = load_conversation(manifests[0]);
  Mat track = conv.turns[0].counterpart;
  track(2, 5) = std::numeric_limits<double>::quiet_NaN();
  const ConversationManifest m = load_manifest(manifests[0]);
  const std::string base = std::filesystem::path(manifests[0]).parent_path().string();
  write_matrix_file(base + "/" + m.turns[0].coeffs_q_path, kCoeffMagic, track);

  TrainingConfig cfg = default_training_config("listener");
  cfg.epochs = 1;
  cfg.val_fraction = 0.0;
  cfg.model = tiny_config(2, 1, 2);
  CHECK_THROWS_AS(train_task(cfg, manifests, {}, dir.file("run")), NumericError);
}

TEST_CASE("checkpoint io") {
  test_util::TempDir dir("ckpt");
  ModelConfig cfg = tiny_config(3, 2, 4);
  cfg.seed = 77;
  ModelParams params(cfg);

  SUBCASE("value round trip at file precision") {
    save_checkpoint(dir.file("m.vckp"), params, {{"task", "listener"}});
    const Checkpoint back = load_checkpoint(dir.file("m.vckp"));
    CHECK(back.meta.at("task") == "listener");
    CHECK(back.config.hidden == 3);
    for (const ad::Param* p : params.tensors()) {
      const ad::Param* q = back.params->find(p->name);
      REQUIRE(q != nullptr);
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        CHECK(static_cast<float>(p->value.data()[i]) ==
              static_cast<float>(q->value.data()[i]));
      }
    }
  }
  SUBCASE("save(load(x)) is byte-identical") {
    save_checkpoint(dir.file("a.vckp"), params, {{"task", "talker"}});
    const Checkpoint back = load_checkpoint(dir.file("a.vckp"));
    save_checkpoint(dir.file("b.vckp"), *back.params, back.meta);
    std::ifstream fa(dir.file("a.vckp"), std::ios::binary);
    std::ifstream fb(dir.file("b.vckp"), std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(fa)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(fb)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
  }
  SUBCASE("corrupt magic is a format error") {
    std::ofstream out(dir.file("bad.vckp"), std::ios::binary);
    out << "nope";
    out.close();
    CHECK_THROWS_AS(load_checkpoint(dir.file("bad.vckp")), FormatError);
  }
}
