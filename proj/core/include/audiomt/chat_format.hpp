#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "audiomt/frontend.hpp"
#include "audiomt/vocabulary.hpp"

namespace audiomt::chat {

enum class Role { User, Assistant };

struct Text {
  std::string content;
  bool operator==(const Text&) const = default;
};

struct AudioRef {
  std::string path;
  bool operator==(const AudioRef&) const = default;
};

using Segment = std::variant<Text, AudioRef>;

struct ChatTurn {
  Role role = Role::User;
  std::vector<Segment> segments;
  bool operator==(const ChatTurn&) const = default;
};

struct Dialogue {
  std::vector<ChatTurn> turns;
  // Audio ordinal (1-based, first appearance order) -> path.
  std::map<int, std::string> audio_index;
  bool operator==(const Dialogue&) const = default;
};

// Builds a dialogue and numbers its audio references.
Dialogue make_dialogue(std::vector<ChatTurn> turns);

// Throws InvalidDialogue: roles must alternate starting with user, audio only
// in user turns, text may not contain <audio> markup, no empty or adjacent
// text segments.
void validate(const Dialogue& dialogue);

struct Rendered {
  TokenSequence tokens;
  std::vector<std::uint8_t> loss_mask;
};

// <|im_start|>role\ncontent<|im_end|> per turn, no separator between turns.
// An audio reference renders as "Audio {id}: <audio>{path}</audio>". The loss
// mask covers assistant content and the assistant's <|im_end|>.
Rendered render(const Dialogue& dialogue, const Vocabulary& vocab);

// Inverse of render. Throws MalformedDialogue(position).
Dialogue parse(std::span<const TokenId> tokens, const Vocabulary& vocab);

// Log-mel features for every audio reference in id order. Relative paths are
// resolved against `base_dir`. Throws AudioNotFound(id, path).
std::vector<std::pair<int, MelSpectrogram>> attach_audio(
    const Dialogue& dialogue, const std::filesystem::path& base_dir = {});

// Joins features on the time axis in id order with one all-zero frame
// between consecutive clips.
MelSpectrogram concat_features(std::span<const std::pair<int, MelSpectrogram>> features);

nlohmann::json to_json(const Dialogue& dialogue);
Dialogue dialogue_from_json(const nlohmann::json& j);

}  // namespace audiomt::chat
