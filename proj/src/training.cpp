#include "convhead/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

namespace fs = std::filesystem;
using nlohmann::json;

namespace convhead {

void TrainingConfig::validate() const {
  if (task != "listener" && task != "talker" && task != "agent") {
    throw ConfigError("training config: task must be listener, talker or agent");
  }
  if (learning_rate <= 0.0 || epochs <= 0 || decay_every <= 0 || grad_accum <= 0) {
    throw ConfigError("training config: learning_rate, epochs, decay_every and grad_accum "
                      "must be positive");
  }
  if (decay_factor <= 0.0 || decay_factor > 1.0) {
    throw ConfigError("training config: decay_factor must lie in (0, 1]");
  }
  if (w1 < 0.0 || w2 < 0.0 || weight_decay < 0.0 || clip_norm <= 0.0) {
    throw ConfigError("training config: w1, w2, weight_decay must be non-negative and "
                      "clip_norm positive");
  }
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ConfigError("training config: val_fraction must lie in [0, 1)");
  }
  model.validate();
}

TrainingConfig default_training_config(const std::string& task) {
  TrainingConfig cfg;
  cfg.task = task;
  if (task == "agent") {
    cfg.epochs = 50;
    cfg.learning_rate = 2e-4;
  }
  return cfg;
}

namespace {

void apply_model_json(ModelConfig& m, const json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "hidden") m.hidden = it.value().get<int>();
    else if (k == "layers") m.layers = it.value().get<int>();
    else if (k == "fused") m.fused = it.value().get<int>();
    else if (k == "embed_dim") m.embed_dim = it.value().get<int>();
    else if (k == "ref_dim") m.ref_dim = it.value().get<int>();
    else if (k == "seed") m.seed = it.value().get<std::uint64_t>();
    else throw ConfigError("training config: unknown model key '" + k + "'");
  }
}

}  // namespace

void apply_training_json(TrainingConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: invalid JSON: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "task") cfg.task = it.value().get<std::string>();
    else if (k == "w1") cfg.w1 = it.value().get<double>();
    else if (k == "w2") cfg.w2 = it.value().get<double>();
    else if (k == "learning_rate") cfg.learning_rate = it.value().get<double>();
    else if (k == "decay_factor") cfg.decay_factor = it.value().get<double>();
    else if (k == "decay_every") cfg.decay_every = it.value().get<int>();
    else if (k == "beta1") cfg.beta1 = it.value().get<double>();
    else if (k == "beta2") cfg.beta2 = it.value().get<double>();
    else if (k == "weight_decay") cfg.weight_decay = it.value().get<double>();
    else if (k == "epochs") cfg.epochs = it.value().get<int>();
    else if (k == "seed") cfg.seed = it.value().get<std::uint64_t>();
    else if (k == "grad_accum") cfg.grad_accum = it.value().get<int>();
    else if (k == "clip_norm") cfg.clip_norm = it.value().get<double>();
    else if (k == "val_fraction") cfg.val_fraction = it.value().get<double>();
    else if (k == "freeze_fusion") cfg.freeze_fusion = it.value().get<bool>();
    else if (k == "alpha_init") cfg.alpha_init = it.value().get<double>();
    else if (k == "init_listener_checkpoint")
      cfg.init_listener_checkpoint = it.value().get<std::string>();
    else if (k == "init_talker_checkpoint")
      cfg.init_talker_checkpoint = it.value().get<std::string>();
    else if (k == "model") apply_model_json(cfg.model, it.value());
    else throw ConfigError("training config: unknown key '" + k + "'");
  }
}

std::string training_config_json(const TrainingConfig& cfg) {
  json j{{"task", cfg.task},
         {"w1", cfg.w1},
         {"w2", cfg.w2},
         {"learning_rate", cfg.learning_rate},
         {"decay_factor", cfg.decay_factor},
         {"decay_every", cfg.decay_every},
         {"beta1", cfg.beta1},
         {"beta2", cfg.beta2},
         {"weight_decay", cfg.weight_decay},
         {"epochs", cfg.epochs},
         {"seed", cfg.seed},
         {"grad_accum", cfg.grad_accum},
         {"clip_norm", cfg.clip_norm},
         {"val_fraction", cfg.val_fraction},
         {"freeze_fusion", cfg.freeze_fusion},
         {"alpha_init", cfg.alpha_init},
         {"init_listener_checkpoint", cfg.init_listener_checkpoint},
         {"init_talker_checkpoint", cfg.init_talker_checkpoint},
         {"model",
          {{"hidden", cfg.model.hidden},
           {"layers", cfg.model.layers},
           {"fused", cfg.model.fused},
           {"embed_dim", cfg.model.embed_dim},
           {"ref_dim", cfg.model.ref_dim}}}};
  return j.dump(2);
}

double lr_at_epoch(const TrainingConfig& cfg, int epoch) {
  return cfg.learning_rate * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

AdamW::AdamW(std::vector<ad::Param*> tensors, double beta1, double beta2,
             double weight_decay, double eps)
    : tensors_(std::move(tensors)),
      beta1_(beta1),
      beta2_(beta2),
      weight_decay_(weight_decay),
      eps_(eps) {
  for (const ad::Param* p : tensors_) {
    m_.push_back(Mat::Zero(p->rows(), p->cols()));
    v_.push_back(Mat::Zero(p->rows(), p->cols()));
  }
}

void AdamW::step(double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    ad::Param& p = *tensors_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i].array().matrix() +
            (1.0 - beta2_) * p.grad.array().square().matrix();
    const Mat m_hat = m_[i] / bc1;
    const Mat v_hat = v_[i] / bc2;
    Mat update = (m_hat.array() / (v_hat.array().sqrt() + eps_)).matrix();
    if (p.decay && weight_decay_ > 0.0) {
      update += weight_decay_ * p.value;
    }
    p.value -= lr * update;
  }
}

double clip_gradients(const std::vector<ad::Param*>& tensors, double max_norm) {
  double sq = 0.0;
  for (const ad::Param* p : tensors) {
    sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (ad::Param* p : tensors) {
      p->grad *= scale;
    }
  }
  return norm;
}

namespace {

struct TrainUnit {
  int conversation = 0;
  int turn = -1;  // -1: whole conversation (agent task)
};

struct LossAccumulator {
  double gen = 0.0;
  double mot = 0.0;
  double total = 0.0;
  int count = 0;

  void add(double g, double m) {
    gen += g;
    mot += m;
    total += g + m;
    ++count;
  }
  double mean_gen() const { return count > 0 ? gen / count : 0.0; }
  double mean_mot() const { return count > 0 ? mot / count : 0.0; }
  double mean_total() const { return count > 0 ? total / count : 0.0; }
};

/// Builds the task graph + loss for one unit. Returns false when the unit
/// carries no supervised frames (all turns shorter than 2 frames).
bool build_unit_loss(ad::Tape& tape, const TrainingConfig& cfg, const ModelParams& params,
                     const LoadedConversation& conv, const TrainUnit& unit, LossIds* out) {
  std::vector<std::pair<ad::Tape::Id, ad::Tape::Id>> all_terms;
  ad::Tape::Id gen = tape.leaf(Vec::Zero(1));
  ad::Tape::Id mot = tape.leaf(Vec::Zero(1));
  bool any = false;

  auto add_turn = [&](const TurnGraph& g, const Mat& gt) {
    if (g.preds.empty()) {
      return;
    }
    const LossIds ids = build_turn_loss(tape, g.preds, gt, cfg.w1, cfg.w2);
    gen = tape.add(gen, ids.gen);
    mot = tape.add(mot, ids.mot);
    any = true;
  };

  if (unit.turn >= 0) {
    const auto& turn_data = conv.turns[static_cast<std::size_t>(unit.turn)];
    const TurnInput turn = turn_input(conv, static_cast<std::size_t>(unit.turn));
    if (turn.audio.rows() < 2) {
      return false;
    }
    const TurnGraph g = turn.role == 0 ? build_listener_turn(tape, params, turn, nullptr)
                                       : build_talker_turn(tape, params, turn, nullptr);
    add_turn(g, turn_data.agent_track);
  } else {
    // agent unit: the whole conversation on one tape so gradients flow
    // through the carried, switched states
    TapeState carried;
    bool have_state = false;
    int prev_role = 0;
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
      const TurnInput turn = turn_input(conv, i);
      TapeState switched;
      const TapeState* init_ptr = nullptr;
      if (have_state) {
        switched = build_switch(tape, params.swi, carried, prev_role, turn.role);
        init_ptr = &switched;
      }
      const TurnGraph g = turn.role == 0 ? build_listener_turn(tape, params, turn, init_ptr)
                                         : build_talker_turn(tape, params, turn, init_ptr);
      add_turn(g, conv.turns[i].agent_track);
      carried = g.final_state;
      have_state = true;
      prev_role = turn.role;
    }
  }

  if (!any) {
    return false;
  }
  out->gen = gen;
  out->mot = mot;
  out->total = tape.add(gen, mot);
  return true;
}

std::vector<TrainUnit> collect_units(const std::vector<LoadedConversation>& convs,
                                     const std::string& task) {
  std::vector<TrainUnit> units;
  for (std::size_t c = 0; c < convs.size(); ++c) {
    if (task == "agent") {
      units.push_back({static_cast<int>(c), -1});
      continue;
    }
    const int want_role = task == "listener" ? 0 : 1;
    for (std::size_t t = 0; t < convs[c].turns.size(); ++t) {
      if (convs[c].turns[t].role_of_agent == want_role) {
        units.push_back({static_cast<int>(c), static_cast<int>(t)});
      }
    }
  }
  return units;
}

std::vector<ad::Param*> update_set(const ModelParams& params, const TrainingConfig& cfg) {
  std::vector<std::string> prefixes;
  if (cfg.task == "listener") {
    prefixes = {"lis."};
  } else if (cfg.task == "talker") {
    prefixes = {"tlk.", "aud.", "fus."};
  } else {
    prefixes = {"lis.", "tlk.", "aud.", "fus.", "swi."};
  }
  std::vector<ad::Param*> out;
  for (ad::Param* p : params.tensors()) {
    for (const auto& pre : prefixes) {
      if (p->name.rfind(pre, 0) == 0) {
        if (cfg.freeze_fusion && pre == "fus.") {
          break;
        }
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

void write_metrics(const std::string& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  for (const auto& m : log) {
    json j{{"epoch", m.epoch}, {"split", m.split},       {"L_gen", m.l_gen},
           {"L_mot", m.l_mot}, {"L_total", m.l_total},   {"lr", m.lr}};
    out << j.dump() << '\n';
  }
}

}  // namespace

TrainOutcome train_task(const TrainingConfig& cfg,
                        const std::vector<std::string>& train_manifests,
                        const std::vector<std::string>& val_manifests,
                        const std::string& out_dir) {
  cfg.validate();
  if (train_manifests.empty()) {
    throw InputError("train_task: empty training set");
  }
  fs::create_directories(out_dir);

  std::vector<LoadedConversation> train_convs;
  for (const auto& m : train_manifests) {
    train_convs.push_back(load_conversation(m));
  }
  std::vector<LoadedConversation> val_convs;
  for (const auto& m : val_manifests) {
    val_convs.push_back(load_conversation(m));
  }

  // the model vocabulary is pinned by the data
  const ConditioningVocabulary& vocab = train_convs.front().vocabulary;
  for (const auto& c : train_convs) {
    if (c.vocabulary.name != vocab.name || c.vocabulary.labels != vocab.labels) {
      throw ConfigError("train_task: manifests disagree on the conditioning vocabulary (" +
                        vocab.name + " vs " + c.vocabulary.name + ")");
    }
  }

  ModelConfig mc = cfg.model;
  mc.vocabulary = vocab.name;
  mc.vocab_size = vocab.size();
  mc.seed = cfg.seed;
  ModelParams params(mc);
  params.alpha_beta->value(0, 0) = cfg.alpha_init;
  params.alpha_pose->value(0, 0) = cfg.alpha_init;

  if (cfg.task == "agent") {
    if (!cfg.init_listener_checkpoint.empty()) {
      const Checkpoint ck = load_checkpoint(cfg.init_listener_checkpoint);
      params.adopt(*ck.params, "lis.");
    }
    if (!cfg.init_talker_checkpoint.empty()) {
      const Checkpoint ck = load_checkpoint(cfg.init_talker_checkpoint);
      params.adopt(*ck.params, "tlk.");
      params.adopt(*ck.params, "aud.");
      params.adopt(*ck.params, "fus.");
    }
  }

  const std::vector<TrainUnit> units = collect_units(train_convs, cfg.task);
  if (units.empty()) {
    throw InputError("train_task: no turns with the task role in the training set");
  }
  const std::vector<TrainUnit> val_units = collect_units(val_convs, cfg.task);

  std::vector<ad::Param*> updated = update_set(params, cfg);
  AdamW opt(updated, cfg.beta1, cfg.beta2, cfg.weight_decay);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x51u));

  TrainOutcome outcome;
  outcome.best = std::numeric_limits<double>::infinity();
  std::vector<Mat> best_values = params.snapshot_values();

  auto eval_units = [&](const std::vector<LoadedConversation>& convs,
                        const std::vector<TrainUnit>& set) {
    LossAccumulator acc;
    for (const auto& u : set) {
      ad::Tape tape;
      LossIds ids;
      if (!build_unit_loss(tape, cfg, params, convs[static_cast<std::size_t>(u.conversation)],
                           u, &ids)) {
        continue;
      }
      acc.add(tape.scalar(ids.gen), tape.scalar(ids.mot));
    }
    return acc;
  };

  std::vector<TrainUnit> order = units;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossAccumulator train_acc;
    params.zero_grads();
    int pending = 0;
    for (const auto& u : order) {
      ad::Tape tape;
      LossIds ids;
      if (!build_unit_loss(tape, cfg, params,
                           train_convs[static_cast<std::size_t>(u.conversation)], u, &ids)) {
        continue;
      }
      const double total = tape.scalar(ids.total);
      if (!std::isfinite(total)) {
        throw NumericError("train_task: loss diverged (non-finite) at epoch " +
                           std::to_string(epoch));
      }
      train_acc.add(tape.scalar(ids.gen), tape.scalar(ids.mot));
      tape.backward(ids.total);
      ++pending;
      if (pending == cfg.grad_accum) {
        for (ad::Param* p : updated) {
          p->grad /= static_cast<double>(pending);
        }
        clip_gradients(updated, cfg.clip_norm);
        opt.step(lr);
        params.zero_grads();
        pending = 0;
      }
    }
    if (pending > 0) {
      for (ad::Param* p : updated) {
        p->grad /= static_cast<double>(pending);
      }
      clip_gradients(updated, cfg.clip_norm);
      opt.step(lr);
      params.zero_grads();
    }

    outcome.log.push_back({epoch, "train", train_acc.mean_gen(), train_acc.mean_mot(),
                           train_acc.mean_total(), lr});
    double selection = train_acc.mean_total();
    if (!val_units.empty()) {
      const LossAccumulator val_acc = eval_units(val_convs, val_units);
      outcome.log.push_back({epoch, "val", val_acc.mean_gen(), val_acc.mean_mot(),
                             val_acc.mean_total(), lr});
      selection = val_acc.mean_total();
    }
    if (selection < outcome.best) {
      outcome.best = selection;
      outcome.best_epoch = epoch;
      best_values = params.snapshot_values();
    }
  }

  params.restore_values(best_values);
  outcome.checkpoint_path = (fs::path(out_dir) / "checkpoint_best.vckp").string();
  save_checkpoint(outcome.checkpoint_path, params,
                  {{"task", cfg.task},
                   {"best_epoch", std::to_string(outcome.best_epoch)},
                   {"best_loss", std::to_string(outcome.best)},
                   {"train_manifests", std::to_string(train_manifests.size())},
                   {"val_manifests", std::to_string(val_manifests.size())}});
  write_metrics((fs::path(out_dir) / "metrics.jsonl").string(), outcome.log);
  return outcome;
}

}  // namespace convhead
