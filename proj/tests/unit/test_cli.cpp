#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "convhead/cli.hpp"
#include "convhead/io.hpp"
#include "convhead/wav.hpp"

#include "test_util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>

using namespace convhead;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  json j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("usage surface") {
  CHECK(run_cli({"--help"}) == 0);
  CHECK(run_cli({}) == 1);
  CHECK(run_cli({"frobnicate"}) == 1);
  CHECK(run_cli({"train"}) == 1);                         // missing required options
  CHECK(run_cli({"train", "--task", "dancer", "--data", "x", "--out", "y"}) == 1);
}

TEST_CASE("extract-features writes an aligned vcaf") {
  test_util::TempDir dir("cli_extract");
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(16000);
  for (int i = 0; i < 16000; ++i) {
    clip.samples[static_cast<std::size_t>(i)] = 0.5 * std::sin(2.0 * M_PI * 330.0 * i / 16000.0);
  }
  write_wav(dir.file("in.wav"), clip);
  CHECK(run_cli({"extract-features", "--audio", dir.file("in.wav"), "--fps", "30",
                 "--out", dir.file("out.vcaf")}) == 0);
  const Mat features = load_features(dir.file("out.vcaf"));
  CHECK(features.rows() == 30);
  CHECK(features.cols() == 45);

  SUBCASE("unreadable audio is a runtime error") {
    CHECK(run_cli({"extract-features", "--audio", dir.file("absent.wav"), "--out",
                   dir.file("x.vcaf")}) == 2);
  }
}

TEST_CASE("full pipeline smoke: synth-data, train, generate, evaluate") {
  test_util::TempDir dir("cli_pipe");
  CHECK(run_cli({"synth-data", "--out", dir.file("corpus"), "--set",
                 "num_conversations=5", "--set", "frames_min=12", "--set", "frames_max=16",
                 "--set", "turns_per_conversation=2", "--set", "seed=3"}) == 0);

  CHECK(run_cli({"train", "--task", "listener", "--data", dir.file("corpus"), "--out",
                 dir.file("run"), "--set", "epochs=2", "--set", "model.hidden=6", "--set",
                 "model.layers=1", "--set", "model.fused=6", "--set", "model.embed_dim=3",
                 "--set", "model.ref_dim=3", "--set", "val_fraction=0.2"}) == 0);
  CHECK(std::filesystem::exists(dir.file("run/checkpoint_best.vckp")));
  CHECK(std::filesystem::exists(dir.file("run/metrics.jsonl")));
  CHECK(std::filesystem::exists(dir.file("run/config_resolved.json")));

  // metrics log: one train and one val line per epoch, schema fields present
  std::ifstream metrics(dir.file("run/metrics.jsonl"));
  int lines = 0;
  std::string line;
  while (std::getline(metrics, line)) {
    const json j = json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("split"));
    CHECK(j.contains("L_gen"));
    CHECK(j.contains("L_mot"));
    CHECK(j.contains("L_total"));
    CHECK(j.contains("lr"));
    ++lines;
  }
  CHECK(lines == 4);

  CHECK(run_cli({"generate", "--manifest", dir.file("corpus/conv0000/manifest.json"),
                 "--agent", "P", "--checkpoint", dir.file("run/checkpoint_best.vckp"),
                 "--out-dir", dir.file("gen")}) == 0);
  const json report = read_json(dir.file("gen/run_report.json"));
  CHECK(report.at("turns").size() == 2);
  for (const auto& t : report.at("turns")) {
    const std::string out_name = t.at("out").get<std::string>();
    const CoeffSequence seq = load_sequence(dir.file("gen/" + out_name));
    CHECK(seq.length() == t.at("frames").get<int>());
  }

  CHECK(run_cli({"evaluate", "--manifests", dir.file("corpus"), "--method", "mirror",
                 "--out", dir.file("report.json")}) == 0);
  const json eval = read_json(dir.file("report.json"));
  CHECK(eval.at("clip_count").get<int>() == 10);
  CHECK(eval.at("mean").contains("ExpFD"));
  CHECK(eval.at("clips").size() == 10);

  SUBCASE("evaluate with a checkpoint") {
    CHECK(run_cli({"evaluate", "--manifests", dir.file("corpus"), "--method",
                   "ckpt:" + dir.file("run/checkpoint_best.vckp")}) == 0);
  }
}

TEST_CASE("config precedence: defaults < file < overrides") {
  test_util::TempDir dir("cli_cfg");
  {
    std::ofstream cfg(dir.file("synth.json"));
    cfg << R"({"num_conversations": 3, "frames_min": 8, "frames_max": 9, "seed": 5})";
  }
  CHECK(run_cli({"synth-data", "--config", dir.file("synth.json"), "--out",
                 dir.file("corpus"), "--set", "num_conversations=2"}) == 0);
  // override wins over the file value
  int convs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.file("corpus"))) {
    if (e.is_directory()) ++convs;
  }
  CHECK(convs == 2);

  SUBCASE("unknown config keys are usage errors") {
    CHECK(run_cli({"synth-data", "--out", dir.file("x"), "--set", "frames=9"}) == 1);
    CHECK(run_cli({"train", "--task", "listener", "--data", dir.file("corpus"), "--out",
                   dir.file("y"), "--set", "optimizer=sgd"}) == 1);
  }
  SUBCASE("malformed override is a usage error") {
    CHECK(run_cli({"synth-data", "--out", dir.file("x"), "--set", "frames_min"}) == 1);
  }
}

TEST_CASE("environment seed feeds the default") {
  test_util::TempDir dir("cli_env");
  setenv("CONVHEAD_SEED", "11", 1);
  CHECK(run_cli({"synth-data", "--out", dir.file("a"), "--set", "num_conversations=1",
                 "--set", "frames_min=8", "--set", "frames_max=8"}) == 0);
  setenv("CONVHEAD_SEED", "12", 1);
  CHECK(run_cli({"synth-data", "--out", dir.file("b"), "--set", "num_conversations=1",
                 "--set", "frames_min=8", "--set", "frames_max=8"}) == 0);
  unsetenv("CONVHEAD_SEED");

  std::ifstream fa(dir.file("a/conv0000/t001_P.vcof"), std::ios::binary);
  std::ifstream fb(dir.file("b/conv0000/t001_P.vcof"), std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)),
                            std::istreambuf_iterator<char>());
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)),
                            std::istreambuf_iterator<char>());
  CHECK(bytes_a != bytes_b);
}

TEST_CASE("runtime failures exit with 2") {
  test_util::TempDir dir("cli_rt");
  CHECK(run_cli({"train", "--task", "listener", "--data", dir.file("nowhere"), "--out",
                 dir.file("out")}) == 2);
  CHECK(run_cli({"evaluate", "--manifests", dir.file("nowhere"), "--method", "mirror"}) ==
        2);
  CHECK(run_cli({"generate", "--manifest", dir.file("absent.json"), "--checkpoint",
                 dir.file("absent.vckp"), "--out-dir", dir.file("g")}) == 2);
}
