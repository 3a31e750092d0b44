#include "convhead/cli.hpp"

#include "convhead/acoustic.hpp"
#include "convhead/evaluation.hpp"
#include "convhead/generation.hpp"
#include "convhead/io.hpp"
#include "convhead/manifest.hpp"
#include "convhead/params.hpp"
#include "convhead/synth.hpp"
#include "convhead/training.hpp"
#include "convhead/types.hpp"
#include "convhead/wav.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using nlohmann::json;

namespace convhead {

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open: " + path);
  }
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// "model.hidden=48" style overrides folded into one JSON object; values
/// parse as JSON scalars when possible, otherwise as strings.
json overrides_to_json(const std::vector<std::string>& sets) {
  json root = json::object();
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override must look like key=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    json* node = &root;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (part.empty()) {
        throw ConfigError("override key has an empty segment: '" + key + "'");
      }
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return root;
}

std::uint64_t env_seed() {
  const char* v = std::getenv("CONVHEAD_SEED");
  if (v == nullptr) {
    return 0;
  }
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError(std::string("CONVHEAD_SEED is not an integer: ") + v);
  }
}

void log_resolved(const std::string& subcommand, const std::string& config_json) {
  std::cout << "[" << subcommand << "] resolved config: " << config_json << "\n";
}

int cmd_extract_features(const std::string& audio, double fps, const std::string& out) {
  const AudioClip clip = read_wav(audio);
  const Mat features = extract_feature_matrix(clip, fps);
  save_features(out, features);
  std::cout << "[extract-features] " << audio << " -> " << out << " (" << features.rows()
            << " frames x " << features.cols() << " dims)\n";
  return 0;
}

int cmd_synth_data(const std::string& config_path, const std::string& out,
                   const std::vector<std::string>& sets) {
  SynthConfig cfg;
  cfg.seed = env_seed();
  if (!config_path.empty()) {
    apply_synth_json(cfg, read_text_file(config_path));
  }
  const json overrides = overrides_to_json(sets);
  if (!overrides.empty()) {
    apply_synth_json(cfg, overrides.dump());
  }
  log_resolved("synth-data", synth_config_json(cfg));
  const CorpusSummary summary = synth_corpus(cfg, out);
  std::cout << "[synth-data] wrote " << summary.num_conversations << " conversations, "
            << summary.num_turns << " turns, " << summary.num_frames << " frames under "
            << out << "\n";
  return 0;
}

int cmd_train(const std::string& task, const std::string& config_path,
              const std::string& data, const std::string& out,
              const std::vector<std::string>& sets) {
  TrainingConfig cfg = default_training_config(task);
  cfg.seed = env_seed();
  if (!config_path.empty()) {
    apply_training_json(cfg, read_text_file(config_path));
  }
  const json overrides = overrides_to_json(sets);
  if (!overrides.empty()) {
    apply_training_json(cfg, overrides.dump());
  }
  cfg.task = task;
  cfg.validate();
  log_resolved("train", training_config_json(cfg));

  std::vector<std::string> manifests = find_manifests(data);
  std::vector<std::string> train_set;
  std::vector<std::string> val_set;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xDA7A));
  std::shuffle(manifests.begin(), manifests.end(), rng);
  const std::size_t val_count =
      static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(manifests.size()));
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    (i < val_count ? val_set : train_set).push_back(manifests[i]);
  }

  fs::create_directories(out);
  {
    std::ofstream cfg_out(fs::path(out) / "config_resolved.json");
    cfg_out << training_config_json(cfg) << '\n';
  }
  const TrainOutcome outcome = train_task(cfg, train_set, val_set, out);
  std::cout << "[train] task=" << cfg.task << " best epoch " << outcome.best_epoch
            << " selection loss " << outcome.best << " -> " << outcome.checkpoint_path
            << "\n";
  return 0;
}

int cmd_generate(const std::string& manifest, const std::string& agent,
                 const std::string& checkpoint, const std::string& out_dir, bool hard_reset) {
  if (agent != "P" && agent != "Q") {
    throw ConfigError("generate: --agent must be P or Q");
  }
  Checkpoint ck = load_checkpoint(checkpoint);
  const LoadedConversation conv = load_conversation(manifest, agent[0]);
  if (ck.config.vocabulary != conv.vocabulary.name ||
      ck.config.vocab_size != conv.vocabulary.size()) {
    throw ConfigError("generate: checkpoint vocabulary '" + ck.config.vocabulary +
                      "' incompatible with manifest vocabulary '" + conv.vocabulary.name +
                      "'");
  }
  const StatePolicy policy = hard_reset ? StatePolicy::kReset : StatePolicy::kCarry;
  const ConversationOutput output = generate_conversation(conv, *ck.params, policy);

  fs::create_directories(out_dir);
  json report;
  report["manifest"] = manifest;
  report["agent"] = agent;
  report["checkpoint"] = checkpoint;
  report["state_policy"] = hard_reset ? "reset" : "carry";
  report["turns"] = json::array();
  for (std::size_t i = 0; i < output.turns.size(); ++i) {
    const TurnData& turn = conv.turns[i];
    char name[32];
    std::snprintf(name, sizeof(name), "turn_%03d.vcof", turn.turn_index);
    const std::string path = (fs::path(out_dir) / name).string();
    save_sequence(path, output.turns[i]);
    report["turns"].push_back(
        {{"turn_index", turn.turn_index},
         {"role_of_agent", turn.role_of_agent},
         {"conditioning_label", conv.vocabulary.labels[static_cast<std::size_t>(turn.label)]},
         {"frames", output.turns[i].length()},
         {"out", name}});
  }
  std::ofstream rep(fs::path(out_dir) / "run_report.json");
  rep << report.dump(2) << '\n';
  std::cout << "[generate] wrote " << output.turns.size() << " turns under " << out_dir
            << "\n";
  return 0;
}

int cmd_evaluate(const std::string& manifests_path, const std::string& method,
                 const std::string& out, const std::vector<std::string>& sets) {
  EvalOptions options;
  options.seed = env_seed();
  const json overrides = overrides_to_json(sets);
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const std::string& k = it.key();
    if (k == "sigma") options.sigma = it.value().get<double>();
    else if (k == "seed") options.seed = it.value().get<std::uint64_t>();
    else if (k == "agent") {
      const std::string a = it.value().get<std::string>();
      if (a != "P" && a != "Q") {
        throw ConfigError("evaluate: agent must be P or Q");
      }
      options.agent = a[0];
    } else if (k == "dataset") options.dataset = it.value().get<std::string>();
    else throw ConfigError("evaluate: unknown key '" + k + "'");
  }
  if (options.dataset.empty()) {
    options.dataset = manifests_path;
  }
  log_resolved("evaluate", json{{"method", method},
                                {"sigma", options.sigma},
                                {"seed", options.seed},
                                {"agent", std::string(1, options.agent)},
                                {"dataset", options.dataset}}
                               .dump());

  const std::vector<std::string> manifests = find_manifests(manifests_path);
  const EvalReport report = evaluate_run(manifests, method, options);
  if (!out.empty()) {
    save_report(out, report);
  }
  std::cout << "[evaluate] method=" << report.method << " clips=" << report.clip_count
            << " ExpFD=" << report.mean.exp_fd << " AngleFD=" << report.mean.angle_fd
            << " TransFD=" << report.mean.trans_fd << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"conversational head coefficient generation pipeline"};
  app.require_subcommand(1);

  // extract-features
  auto* extract = app.add_subcommand("extract-features",
                                     "45-dim acoustic features from a WAV file");
  std::string ef_audio, ef_out;
  double ef_fps = 30.0;
  extract->add_option("--audio", ef_audio, "input WAV (16-bit or float PCM)")->required();
  extract->add_option("--fps", ef_fps, "video frame rate the features align to");
  extract->add_option("--out", ef_out, "output .vcaf path")->required();

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic conversation corpus");
  std::string sd_config, sd_out;
  std::vector<std::string> sd_sets;
  synth->add_option("--config", sd_config, "synth config JSON");
  synth->add_option("--out", sd_out, "output corpus directory")->required();
  synth->add_option("--set", sd_sets, "config override key=value");

  // train
  auto* train = app.add_subcommand("train", "train the listener, talker or agent task");
  std::string tr_task, tr_config, tr_data, tr_out;
  std::vector<std::string> tr_sets;
  train->add_option("--task", tr_task, "listener | talker | agent")
      ->required()
      ->check(CLI::IsMember({"listener", "talker", "agent"}));
  train->add_option("--config", tr_config, "training config JSON");
  train->add_option("--data", tr_data, "corpus directory")->required();
  train->add_option("--out", tr_out, "output directory for checkpoint and metrics")
      ->required();
  train->add_option("--set", tr_sets, "config override key=value");

  // generate
  auto* gen = app.add_subcommand("generate", "generate agent coefficients for a manifest");
  std::string g_manifest, g_agent = "P", g_ckpt, g_out;
  bool g_hard_reset = false;
  gen->add_option("--manifest", g_manifest, "conversation manifest")->required();
  gen->add_option("--agent", g_agent, "which interlocutor to synthesize (P or Q)");
  gen->add_option("--checkpoint", g_ckpt, "model checkpoint")->required();
  gen->add_option("--out-dir", g_out, "output directory")->required();
  gen->add_flag("--hard-reset", g_hard_reset,
                "re-initialize decoder state at every turn instead of switching roles");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "FD metrics for a method over manifests");
  std::string ev_manifests, ev_method, ev_out;
  std::vector<std::string> ev_sets;
  eval->add_option("--manifests", ev_manifests, "manifest file or corpus directory")
      ->required();
  eval->add_option("--method", ev_method, "random | mirror | oracle | ckpt:<path>")
      ->required();
  eval->add_option("--out", ev_out, "report JSON path");
  eval->add_option("--set", ev_sets, "option override key=value (sigma, seed, agent, dataset)");

  std::vector<const char*> argv;
  argv.push_back("convhead");
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (extract->parsed()) {
      return cmd_extract_features(ef_audio, ef_fps, ef_out);
    }
    if (synth->parsed()) {
      return cmd_synth_data(sd_config, sd_out, sd_sets);
    }
    if (train->parsed()) {
      return cmd_train(tr_task, tr_config, tr_data, tr_out, tr_sets);
    }
    if (gen->parsed()) {
      return cmd_generate(g_manifest, g_agent, g_ckpt, g_out, g_hard_reset);
    }
    if (eval->parsed()) {
      return cmd_evaluate(ev_manifests, ev_method, ev_out, ev_sets);
    }
  } catch (const ConfigError& e) {
    std::cerr << "convhead: config: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "convhead: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "convhead: unexpected: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace convhead
