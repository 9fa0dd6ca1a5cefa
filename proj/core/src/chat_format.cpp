#include "audiomt/chat_format.hpp"

#include <regex>

#include "audiomt/error.hpp"

namespace audiomt::chat {

namespace {

constexpr std::string_view kAudioOpen = "<audio>";
constexpr std::string_view kAudioClose = "</audio>";

std::string_view role_name(Role r) { return r == Role::User ? "user" : "assistant"; }

std::string render_audio(int id, const std::string& path) {
  return "Audio " + std::to_string(id) + ": " + std::string(kAudioOpen) + path +
         std::string(kAudioClose);
}

}  // namespace

Dialogue make_dialogue(std::vector<ChatTurn> turns) {
  Dialogue d;
  d.turns = std::move(turns);
  int next = 1;
  for (const auto& turn : d.turns) {
    for (const auto& seg : turn.segments) {
      if (const auto* audio = std::get_if<AudioRef>(&seg)) d.audio_index[next++] = audio->path;
    }
  }
  return d;
}

void validate(const Dialogue& d) {
  int next = 1;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    const auto& turn = d.turns[t];
    const Role expected = t % 2 == 0 ? Role::User : Role::Assistant;
    if (turn.role != expected) {
      throw Error(ErrorCode::InvalidDialogue, "roles must alternate starting with user", t);
    }
    bool previous_text = false;
    for (const auto& seg : turn.segments) {
      if (const auto* audio = std::get_if<AudioRef>(&seg)) {
        if (turn.role != Role::User) {
          throw Error(ErrorCode::InvalidDialogue, "audio in assistant turn", t);
        }
        if (audio->path.empty() || audio->path.find(kAudioClose) != std::string::npos) {
          throw Error(ErrorCode::InvalidDialogue, "bad audio path", t);
        }
        const auto it = d.audio_index.find(next);
        if (it == d.audio_index.end() || it->second != audio->path) {
          throw Error(ErrorCode::InvalidDialogue, "audio index out of sync", t);
        }
        ++next;
        previous_text = false;
      } else {
        const auto& text = std::get<Text>(seg).content;
        if (text.empty()) throw Error(ErrorCode::InvalidDialogue, "empty text segment", t);
        if (previous_text) throw Error(ErrorCode::InvalidDialogue, "adjacent text segments", t);
        if (text.find(kAudioOpen) != std::string::npos ||
            text.find(kAudioClose) != std::string::npos) {
          throw Error(ErrorCode::InvalidDialogue, "audio markup inside text", t);
        }
        previous_text = true;
      }
    }
  }
  if (static_cast<std::size_t>(next - 1) != d.audio_index.size()) {
    throw Error(ErrorCode::InvalidDialogue, "audio index has extra entries");
  }
}

Rendered render(const Dialogue& d, const Vocabulary& vocab) {
  validate(d);
  Rendered out;
  const TokenId im_start = vocab.tag(SpecialTag::ImStart);
  const TokenId im_end = vocab.tag(SpecialTag::ImEnd);
  auto append = [&](const TokenSequence& ids, bool masked) {
    out.tokens.insert(out.tokens.end(), ids.begin(), ids.end());
    out.loss_mask.insert(out.loss_mask.end(), ids.size(), masked ? 1 : 0);
  };
  int next = 1;
  for (const auto& turn : d.turns) {
    const bool assistant = turn.role == Role::Assistant;
    append({im_start}, false);
    append(vocab.tokenize(std::string(role_name(turn.role)) + "\n"), false);
    std::string content;
    for (const auto& seg : turn.segments) {
      if (const auto* audio = std::get_if<AudioRef>(&seg)) {
        content += render_audio(next++, audio->path);
      } else {
        content += std::get<Text>(seg).content;
      }
    }
    append(vocab.tokenize(content), assistant);
    append({im_end}, assistant);
  }
  return out;
}

Dialogue parse(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  const TokenId im_start = vocab.tag(SpecialTag::ImStart);
  const TokenId im_end = vocab.tag(SpecialTag::ImEnd);
  static const std::regex audio_re(R"(Audio (\d+): <audio>(.*?)</audio>)");

  std::vector<ChatTurn> turns;
  int next = 1;
  std::size_t pos = 0;
  while (pos < tokens.size()) {
    if (tokens[pos] != im_start) {
      throw Error(ErrorCode::MalformedDialogue,
                  tokens[pos] == im_end ? "stray im_end" : "expected im_start", pos);
    }
    const std::size_t open = pos++;
    const std::size_t body = pos;
    while (pos < tokens.size() && tokens[pos] != im_end) {
      if (!vocab.is_text(tokens[pos])) {
        throw Error(ErrorCode::MalformedDialogue, "special token inside turn", pos);
      }
      ++pos;
    }
    if (pos >= tokens.size()) throw Error(ErrorCode::MalformedDialogue, "unterminated turn", open);
    const std::string text = vocab.detokenize(tokens.subspan(body, pos - body));
    ++pos;

    const auto newline = text.find('\n');
    if (newline == std::string::npos) {
      throw Error(ErrorCode::MalformedDialogue, "missing role line", open);
    }
    const std::string role = text.substr(0, newline);
    ChatTurn turn;
    if (role == "user") {
      turn.role = Role::User;
    } else if (role == "assistant") {
      turn.role = Role::Assistant;
    } else {
      throw Error(ErrorCode::MalformedDialogue, "unknown role '" + role + "'", open);
    }
    if (turn.role != (turns.size() % 2 == 0 ? Role::User : Role::Assistant)) {
      throw Error(ErrorCode::MalformedDialogue, "roles do not alternate", open);
    }

    const std::string content = text.substr(newline + 1);
    auto cursor = content.cbegin();
    for (std::sregex_iterator it(content.begin(), content.end(), audio_re), end; it != end; ++it) {
      const auto& m = *it;
      if (m[0].first != cursor) turn.segments.push_back(Text{std::string(cursor, m[0].first)});
      if (std::stoi(m[1].str()) != next++) {
        throw Error(ErrorCode::MalformedDialogue, "audio ids out of order", open);
      }
      turn.segments.push_back(AudioRef{m[2].str()});
      cursor = m[0].second;
    }
    if (cursor != content.cend()) turn.segments.push_back(Text{std::string(cursor, content.cend())});
    turns.push_back(std::move(turn));
  }
  return make_dialogue(std::move(turns));
}

std::vector<std::pair<int, MelSpectrogram>> attach_audio(const Dialogue& d,
                                                         const std::filesystem::path& base_dir) {
  std::vector<std::pair<int, MelSpectrogram>> out;
  for (const auto& [id, path] : d.audio_index) {
    std::filesystem::path resolved(path);
    if (resolved.is_relative() && !base_dir.empty()) resolved = base_dir / resolved;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(resolved, ec)) {
      throw Error(ErrorCode::AudioNotFound, path, static_cast<std::size_t>(id));
    }
    AudioClip clip;
    try {
      clip = load_audio(resolved);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IoError) {
        throw Error(ErrorCode::AudioNotFound, path, static_cast<std::size_t>(id));
      }
      throw;
    }
    out.emplace_back(id, log_mel(clip));
  }
  return out;
}

MelSpectrogram concat_features(std::span<const std::pair<int, MelSpectrogram>> features) {
  MelSpectrogram out;
  Eigen::Index rows = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    rows += features[i].second.frames() + (i > 0 ? 1 : 0);
  }
  out.values = FeatureMatrix::Zero(rows, kMelChannels);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i > 0) ++at;
    const auto& v = features[i].second.values;
    out.values.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  return out;
}

nlohmann::json to_json(const Dialogue& d) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& turn : d.turns) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& seg : turn.segments) {
      if (const auto* audio = std::get_if<AudioRef>(&seg)) {
        segs.push_back({{"audio", audio->path}});
      } else {
        segs.push_back({{"text", std::get<Text>(seg).content}});
      }
    }
    turns.push_back({{"role", std::string(role_name(turn.role))}, {"segments", segs}});
  }
  return {{"turns", turns}};
}

Dialogue dialogue_from_json(const nlohmann::json& j) {
  std::vector<ChatTurn> turns;
  for (const auto& jt : j.at("turns")) {
    ChatTurn turn;
    const auto role = jt.at("role").get<std::string>();
    if (role == "user") {
      turn.role = Role::User;
    } else if (role == "assistant") {
      turn.role = Role::Assistant;
    } else {
      throw Error(ErrorCode::InvalidDialogue, "unknown role '" + role + "'");
    }
    for (const auto& js : jt.at("segments")) {
      if (js.contains("audio")) {
        turn.segments.push_back(AudioRef{js.at("audio").get<std::string>()});
      } else {
        turn.segments.push_back(Text{js.at("text").get<std::string>()});
      }
    }
    turns.push_back(std::move(turn));
  }
  auto d = make_dialogue(std::move(turns));
  validate(d);
  return d;
}

}  // namespace audiomt::chat
