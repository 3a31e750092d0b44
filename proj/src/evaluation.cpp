#include "convhead/evaluation.hpp"

#include "convhead/generation.hpp"
#include "convhead/manifest.hpp"
#include "convhead/params.hpp"

#include <json.hpp>

#include <fstream>
#include <memory>
#include <random>

using nlohmann::json;

namespace convhead {

FdMetrics fd_metrics(const CoeffSequence& pred, const CoeffSequence& gt) {
  if (pred.length() != gt.length()) {
    throw InputError("fd_metrics: length mismatch, pred " + std::to_string(pred.length()) +
                     " vs gt " + std::to_string(gt.length()));
  }
  if (pred.length() == 0) {
    throw InputError("fd_metrics: empty sequences");
  }
  FdMetrics fd;
  for (int t = 0; t < pred.length(); ++t) {
    const auto& p = pred.frames[static_cast<std::size_t>(t)];
    const auto& g = gt.frames[static_cast<std::size_t>(t)];
    fd.exp_fd += (p.beta - g.beta).cwiseAbs().sum();
    fd.angle_fd += (p.pose_angle - g.pose_angle).cwiseAbs().sum();
    fd.trans_fd += (p.pose_trans - g.pose_trans).cwiseAbs().sum();
  }
  const double t_len = static_cast<double>(pred.length());
  fd.exp_fd /= t_len;
  fd.angle_fd /= t_len;
  fd.trans_fd /= t_len;
  return fd;
}

CoeffSequence baseline_random(const DynamicCoeffs& reference, int length, double sigma,
                              std::uint64_t seed, double fps) {
  if (length < 1) {
    throw InputError("baseline_random: length must be >= 1");
  }
  if (sigma < 0.0) {
    throw InputError("baseline_random: sigma must be >= 0");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  CoeffSequence seq;
  seq.fps = fps;
  seq.frames.push_back(reference);
  const Vec ref = reference.flat();
  for (int t = 1; t < length; ++t) {
    Vec frame = ref;
    for (Eigen::Index i = 0; i < frame.size(); ++i) {
      frame[i] += sigma * noise(rng);
    }
    seq.frames.push_back(DynamicCoeffs::from_flat(frame));
  }
  return seq;
}

CoeffSequence baseline_mirror(const CoeffSequence& speaker) {
  if (speaker.frames.empty()) {
    throw InputError("baseline_mirror: empty speaker sequence");
  }
  return speaker;
}

EvalReport evaluate_run(const std::vector<std::string>& manifest_paths,
                        const std::string& method, const EvalOptions& options) {
  if (manifest_paths.empty()) {
    throw InputError("evaluate_run: no manifests given");
  }

  std::unique_ptr<ModelParams> params;
  if (method.rfind("ckpt:", 0) == 0) {
    Checkpoint ck = load_checkpoint(method.substr(5));
    params = std::move(ck.params);
  } else if (method != "random" && method != "mirror" && method != "oracle") {
    throw ConfigError("evaluate_run: unknown method '" + method +
                      "' (expected random, mirror, oracle or ckpt:<path>)");
  }

  EvalReport report;
  report.method = method;
  report.dataset = options.dataset;
  std::uint64_t clip_counter = 0;

  for (const auto& path : manifest_paths) {
    const LoadedConversation conv = load_conversation(path, options.agent);
    if (params != nullptr) {
      if (params->config().vocabulary != conv.vocabulary.name ||
          params->config().vocab_size != conv.vocabulary.size()) {
        throw ConfigError("evaluate_run: checkpoint vocabulary '" +
                          params->config().vocabulary + "' (size " +
                          std::to_string(params->config().vocab_size) +
                          ") incompatible with manifest vocabulary '" +
                          conv.vocabulary.name + "' (size " +
                          std::to_string(conv.vocabulary.size()) + ")");
      }
    }

    // model predictions run with conversation-level state carrying; baselines
    // are per-turn by construction
    ConversationOutput model_out;
    if (params != nullptr) {
      model_out = generate_conversation(conv, *params, StatePolicy::kCarry);
    }

    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
      const TurnData& turn = conv.turns[i];
      const CoeffSequence gt = CoeffSequence::from_matrix(turn.agent_track, conv.fps);
      CoeffSequence pred;
      if (params != nullptr) {
        pred = model_out.turns[i];
      } else if (method == "mirror") {
        pred = baseline_mirror(CoeffSequence::from_matrix(turn.counterpart, conv.fps));
      } else if (method == "random") {
        pred = baseline_random(DynamicCoeffs::from_flat(turn.agent_track.row(0).transpose()),
                               static_cast<int>(turn.agent_track.rows()), options.sigma,
                               mix_seed(options.seed, clip_counter), conv.fps);
      } else {  // oracle
        pred = gt;
      }
      ClipScore score;
      score.manifest = path;
      score.turn_index = turn.turn_index;
      score.role = turn.role_of_agent;
      score.frames = static_cast<int>(turn.agent_track.rows());
      score.fd = fd_metrics(pred, gt);
      report.clips.push_back(std::move(score));
      ++clip_counter;
    }
  }

  report.clip_count = static_cast<int>(report.clips.size());
  for (const auto& c : report.clips) {
    report.mean.exp_fd += c.fd.exp_fd;
    report.mean.angle_fd += c.fd.angle_fd;
    report.mean.trans_fd += c.fd.trans_fd;
  }
  if (report.clip_count > 0) {
    report.mean.exp_fd /= report.clip_count;
    report.mean.angle_fd /= report.clip_count;
    report.mean.trans_fd /= report.clip_count;
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["method"] = report.method;
  j["dataset"] = report.dataset;
  j["clip_count"] = report.clip_count;
  j["mean"] = {{"ExpFD", report.mean.exp_fd},
               {"AngleFD", report.mean.angle_fd},
               {"TransFD", report.mean.trans_fd}};
  j["clips"] = json::array();
  for (const auto& c : report.clips) {
    j["clips"].push_back({{"manifest", c.manifest},
                          {"turn_index", c.turn_index},
                          {"role", c.role},
                          {"frames", c.frames},
                          {"ExpFD", c.fd.exp_fd},
                          {"AngleFD", c.fd.angle_fd},
                          {"TransFD", c.fd.trans_fd}});
  }
  return j.dump(2);
}

void save_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  out << report_to_json(report) << '\n';
}

}  // namespace convhead
