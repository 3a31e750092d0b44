#pragma once

#include "convhead/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace convhead {

struct ConditioningVocabulary {
  std::string name;
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(labels.size()); }
  int index_of(const std::string& label) const;  // -1 if absent
};

/// Per-turn conditioning: a label id in a named vocabulary.
struct Conditioning {
  int label_id = 0;
  std::string vocabulary;
};

struct TurnEntry {
  int turn_index = 0;   // 1-based, contiguous
  int role_of_p = 0;    // 1 speaker, 0 listener
  Conditioning conditioning;
  std::string audio_features_path;
  std::string coeffs_p_path;
  std::string coeffs_q_path;
};

struct ConversationManifest {
  double fps = 30.0;
  ConditioningVocabulary vocabulary;
  std::string identity_p_path;
  std::string identity_q_path;
  std::optional<CoeffLayout> coeff_layout;
  std::vector<TurnEntry> turns;
};

ConversationManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const ConversationManifest& m);

struct Violation {
  int turn_index = 0;  // 0 for conversation-level rules
  std::string rule;
  std::string message;
};

/// Pure and total: malformed content and unreadable referenced files come
/// back as violations, never as exceptions. `base_dir` resolves relative
/// paths (normally the manifest's directory).
std::vector<Violation> validate_manifest(const ConversationManifest& m,
                                         const std::string& base_dir);

/// Same, resolving paths against the manifest file's own directory.
std::vector<Violation> validate_manifest_file(const std::string& path);

// ---------------------------------------------------------------------------
// materialized conversation data

struct TurnData {
  int turn_index = 0;
  int role_of_agent = 0;  // relative to the chosen agent
  int label = 0;
  Mat audio;        // T x 45
  Mat agent_track;  // T x 70 ground truth for the agent
  Mat counterpart;  // T x 70 observed track of the other interlocutor
};

struct LoadedConversation {
  std::string manifest_path;
  double fps = 30.0;
  ConditioningVocabulary vocabulary;
  std::vector<TurnData> turns;
};

/// Loads every referenced file for the given agent side ('P' or 'Q'). Roles
/// and tracks are mirrored when the agent is Q. Throws InputError listing the
/// violations if the manifest does not validate.
LoadedConversation load_conversation(const std::string& manifest_path, char agent = 'P');

IdentityCoeffs load_identity(const std::string& path);
void save_identity(const std::string& path, const IdentityCoeffs& id);

/// Directory scan for conversation manifests: either `path` itself (a .json
/// file) or `path/*/manifest.json`, sorted.
std::vector<std::string> find_manifests(const std::string& path);

}  // namespace convhead
