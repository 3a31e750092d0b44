#include "convhead/manifest.hpp"

#include "convhead/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace convhead {

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open: " + path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path + ": invalid JSON: " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  out << j.dump(2) << '\n';
}

std::string resolve(const std::string& base_dir, const std::string& rel) {
  fs::path p(rel);
  if (p.is_absolute() || base_dir.empty()) {
    return rel;
  }
  return (fs::path(base_dir) / p).string();
}

Vec vec_from_json(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const auto& x : j) {
    v[i++] = x.get<double>();
  }
  return v;
}

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    j.push_back(v[i]);
  }
  return j;
}

}  // namespace

int ConditioningVocabulary::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

ConversationManifest load_manifest(const std::string& path) {
  const json j = read_json_file(path);
  ConversationManifest m;
  try {
    m.fps = j.at("fps").get<double>();
    m.vocabulary.name = j.at("vocabulary").at("name").get<std::string>();
    m.vocabulary.labels = j.at("vocabulary").at("labels").get<std::vector<std::string>>();
    m.identity_p_path = j.at("participants").at("P").get<std::string>();
    m.identity_q_path = j.at("participants").at("Q").get<std::string>();
    if (j.contains("coeff_layout")) {
      const auto& cl = j.at("coeff_layout");
      CoeffLayout layout;
      layout.identity = cl.at("identity").get<int>();
      layout.expression = cl.at("expression").get<int>();
      layout.texture = cl.at("texture").get<int>();
      layout.pose = cl.at("pose").get<int>();
      layout.lighting = cl.at("lighting").get<int>();
      m.coeff_layout = layout;
    }
    for (const auto& t : j.at("turns")) {
      TurnEntry e;
      e.turn_index = t.at("turn_index").get<int>();
      e.role_of_p = t.at("role_of_P").get<int>();
      e.conditioning.label_id = t.at("conditioning").at("label_id").get<int>();
      e.conditioning.vocabulary = t.at("conditioning").at("vocabulary").get<std::string>();
      e.audio_features_path = t.at("audio_features_path").get<std::string>();
      e.coeffs_p_path = t.at("coeffs_P_path").get<std::string>();
      e.coeffs_q_path = t.at("coeffs_Q_path").get<std::string>();
      m.turns.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": manifest field error: " + e.what());
  }
  return m;
}

void save_manifest(const std::string& path, const ConversationManifest& m) {
  json j;
  j["fps"] = m.fps;
  j["vocabulary"] = {{"name", m.vocabulary.name}, {"labels", m.vocabulary.labels}};
  j["participants"] = {{"P", m.identity_p_path}, {"Q", m.identity_q_path}};
  if (m.coeff_layout.has_value()) {
    const auto& cl = *m.coeff_layout;
    j["coeff_layout"] = {{"identity", cl.identity},
                         {"expression", cl.expression},
                         {"texture", cl.texture},
                         {"pose", cl.pose},
                         {"lighting", cl.lighting}};
  }
  j["turns"] = json::array();
  for (const auto& t : m.turns) {
    j["turns"].push_back({{"turn_index", t.turn_index},
                          {"role_of_P", t.role_of_p},
                          {"conditioning",
                           {{"label_id", t.conditioning.label_id},
                            {"vocabulary", t.conditioning.vocabulary}}},
                          {"audio_features_path", t.audio_features_path},
                          {"coeffs_P_path", t.coeffs_p_path},
                          {"coeffs_Q_path", t.coeffs_q_path}});
  }
  write_json_file(path, j);
}

std::vector<Violation> validate_manifest(const ConversationManifest& m,
                                         const std::string& base_dir) {
  std::vector<Violation> out;
  auto violation = [&out](int turn, const std::string& rule, const std::string& msg) {
    out.push_back({turn, rule, msg});
  };

  if (m.fps <= 0.0) {
    violation(0, "fps", "fps must be positive");
  }
  if (m.vocabulary.labels.empty()) {
    violation(0, "vocabulary", "vocabulary must hold at least one label");
  }
  {
    std::set<std::string> seen;
    for (const auto& l : m.vocabulary.labels) {
      if (!seen.insert(l).second) {
        violation(0, "vocabulary", "duplicate label '" + l + "'");
      }
    }
  }
  if (m.turns.empty()) {
    violation(0, "turns", "manifest holds no turns");
  }

  // contiguity from 1
  std::set<int> indices;
  for (const auto& t : m.turns) {
    if (!indices.insert(t.turn_index).second) {
      violation(t.turn_index, "turn-contiguity", "duplicate turn index");
    }
  }
  for (int want = 1; want <= static_cast<int>(m.turns.size()); ++want) {
    if (!indices.count(want)) {
      violation(want, "turn-contiguity", "missing turn index " + std::to_string(want));
      break;
    }
  }

  for (const auto& t : m.turns) {
    if (t.role_of_p != 0 && t.role_of_p != 1) {
      violation(t.turn_index, "role", "role_of_P must be 0 or 1, got " +
                                          std::to_string(t.role_of_p));
    }
    if (t.conditioning.vocabulary != m.vocabulary.name) {
      violation(t.turn_index, "conditioning",
                "vocabulary '" + t.conditioning.vocabulary + "' does not match declared '" +
                    m.vocabulary.name + "'");
    }
    if (t.conditioning.label_id < 0 || t.conditioning.label_id >= m.vocabulary.size()) {
      violation(t.turn_index, "conditioning",
                "label id " + std::to_string(t.conditioning.label_id) +
                    " outside vocabulary of size " + std::to_string(m.vocabulary.size()));
    }

    Eigen::Index audio_frames = -1;
    Eigen::Index p_frames = -1;
    Eigen::Index q_frames = -1;
    try {
      audio_frames = load_features(resolve(base_dir, t.audio_features_path)).rows();
    } catch (const Error& e) {
      violation(t.turn_index, "audio-file", e.what());
    }
    try {
      p_frames = read_matrix_file(resolve(base_dir, t.coeffs_p_path), kCoeffMagic).rows();
    } catch (const Error& e) {
      violation(t.turn_index, "coeff-file", e.what());
    }
    try {
      q_frames = read_matrix_file(resolve(base_dir, t.coeffs_q_path), kCoeffMagic).rows();
    } catch (const Error& e) {
      violation(t.turn_index, "coeff-file", e.what());
    }
    if (audio_frames >= 0 && p_frames >= 0 && audio_frames != p_frames) {
      violation(t.turn_index, "length-match",
                "audio frames " + std::to_string(audio_frames) + " vs P coeff frames " +
                    std::to_string(p_frames));
    }
    if (audio_frames >= 0 && q_frames >= 0 && audio_frames != q_frames) {
      violation(t.turn_index, "length-match",
                "audio frames " + std::to_string(audio_frames) + " vs Q coeff frames " +
                    std::to_string(q_frames));
    }
  }
  return out;
}

std::vector<Violation> validate_manifest_file(const std::string& path) {
  ConversationManifest m;
  try {
    m = load_manifest(path);
  } catch (const Error& e) {
    return {{0, "manifest-file", e.what()}};
  }
  return validate_manifest(m, fs::path(path).parent_path().string());
}

LoadedConversation load_conversation(const std::string& manifest_path, char agent) {
  if (agent != 'P' && agent != 'Q') {
    throw InputError("load_conversation: agent must be 'P' or 'Q'");
  }
  const ConversationManifest m = load_manifest(manifest_path);
  const std::string base = fs::path(manifest_path).parent_path().string();
  const auto violations = validate_manifest(m, base);
  if (!violations.empty()) {
    std::string msg = manifest_path + ": manifest violations:";
    for (const auto& v : violations) {
      msg += "\n  turn " + std::to_string(v.turn_index) + " [" + v.rule + "] " + v.message;
    }
    throw InputError(msg);
  }

  LoadedConversation conv;
  conv.manifest_path = manifest_path;
  conv.fps = m.fps;
  conv.vocabulary = m.vocabulary;

  std::vector<TurnEntry> order = m.turns;
  std::sort(order.begin(), order.end(),
            [](const TurnEntry& a, const TurnEntry& b) { return a.turn_index < b.turn_index; });
  for (const auto& t : order) {
    TurnData d;
    d.turn_index = t.turn_index;
    d.role_of_agent = agent == 'P' ? t.role_of_p : 1 - t.role_of_p;
    d.label = t.conditioning.label_id;
    d.audio = load_features(resolve(base, t.audio_features_path));
    Mat p_track = read_matrix_file(resolve(base, t.coeffs_p_path), kCoeffMagic);
    Mat q_track = read_matrix_file(resolve(base, t.coeffs_q_path), kCoeffMagic);
    if (agent == 'P') {
      d.agent_track = std::move(p_track);
      d.counterpart = std::move(q_track);
    } else {
      d.agent_track = std::move(q_track);
      d.counterpart = std::move(p_track);
    }
    conv.turns.push_back(std::move(d));
  }
  return conv;
}

IdentityCoeffs load_identity(const std::string& path) {
  const json j = read_json_file(path);
  IdentityCoeffs id;
  try {
    id.alpha = vec_from_json(j.at("alpha"));
    id.delta = vec_from_json(j.at("delta"));
    id.gamma = vec_from_json(j.at("gamma"));
  } catch (const json::exception& e) {
    throw FormatError(path + ": identity field error: " + e.what());
  }
  return id;
}

void save_identity(const std::string& path, const IdentityCoeffs& id) {
  json j;
  j["alpha"] = vec_to_json(id.alpha);
  j["delta"] = vec_to_json(id.delta);
  j["gamma"] = vec_to_json(id.gamma);
  write_json_file(path, j);
}

std::vector<std::string> find_manifests(const std::string& path) {
  std::vector<std::string> out;
  fs::path p(path);
  if (fs::is_regular_file(p)) {
    return {path};
  }
  if (!fs::is_directory(p)) {
    throw IoError("no such file or directory: " + path);
  }
  for (const auto& entry : fs::directory_iterator(p)) {
    if (entry.is_directory()) {
      fs::path mp = entry.path() / "manifest.json";
      if (fs::is_regular_file(mp)) {
        out.push_back(mp.string());
      }
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) {
    throw IoError("no manifests found under: " + path);
  }
  return out;
}

}  // namespace convhead
