#include "audiomt/corpus.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <fstream>

#include "audiomt/error.hpp"

namespace audiomt {

namespace {

struct TaskEntry {
  TaskCode code;
  std::string_view name;
  HeaderRule rule;
};

using TK = TranscriptionKind;
using TaskK = TaskKind;

constexpr std::array<TaskEntry, 30> kTaskTable = {{
    {TaskCode::ASR, "ASR", {TK::Transcripts, TaskK::Transcribe, false, ""}},
    {TaskCode::S2TT, "S2TT", {TK::Transcripts, TaskK::Translate, false, ""}},
    {TaskCode::OSR, "OSR", {TK::Transcripts, TaskK::Transcribe, false, "overlapped speech"}},
    {TaskCode::DialectASR, "DialectASR", {TK::Transcripts, TaskK::Transcribe, false, "dialect"}},
    {TaskCode::SRWT, "SRWT", {TK::Transcripts, TaskK::Transcribe, true, ""}},
    {TaskCode::DID, "DID", {TK::Analysis, TaskK::Analysis, false, "dialect identification"}},
    {TaskCode::LID, "LID", {TK::Analysis, TaskK::Analysis, false, "language identification"}},
    {TaskCode::SGC, "SGC", {TK::Analysis, TaskK::Analysis, false, "speaker gender"}},
    {TaskCode::ER, "ER", {TK::Analysis, TaskK::Analysis, false, "emotion"}},
    {TaskCode::SV, "SV", {TK::Analysis, TaskK::Analysis, false, "speaker verification"}},
    {TaskCode::SD, "SD", {TK::Analysis, TaskK::Analysis, false, "speaker diarization"}},
    {TaskCode::SER, "SER", {TK::Analysis, TaskK::Analysis, false, "speech entities"}},
    {TaskCode::KS, "KS", {TK::Analysis, TaskK::Analysis, false, "keyword spotting"}},
    {TaskCode::IC, "IC", {TK::Analysis, TaskK::Analysis, false, "intent"}},
    {TaskCode::SF, "SF", {TK::Analysis, TaskK::Analysis, false, "slot filling"}},
    {TaskCode::SAP, "SAP", {TK::Analysis, TaskK::Analysis, false, "speaker age"}},
    {TaskCode::VSC, "VSC", {TK::Analysis, TaskK::Analysis, false, "vocal sound"}},
    {TaskCode::AAC, "AAC", {TK::Analysis, TaskK::Caption, false, ""}},
    {TaskCode::SEC, "SEC", {TK::Analysis, TaskK::Analysis, false, "sound event"}},
    {TaskCode::ASC, "ASC", {TK::Analysis, TaskK::Analysis, false, "acoustic scene"}},
    {TaskCode::SED, "SED", {TK::Analysis, TaskK::Analysis, false, "sound event detection"}},
    {TaskCode::AQA, "AQA", {TK::Analysis, TaskK::QuestionAnswer, false, ""}},
    {TaskCode::SID, "SID", {TK::Analysis, TaskK::Analysis, false, "singer"}},
    {TaskCode::SMER, "SMER", {TK::Analysis, TaskK::Analysis, false, "music emotion"}},
    {TaskCode::MC, "MC", {TK::Analysis, TaskK::Caption, false, "music"}},
    {TaskCode::MIC, "MIC", {TK::Analysis, TaskK::Analysis, false, "instrument"}},
    {TaskCode::MNA, "MNA", {TK::Analysis, TaskK::Analysis, false, "music note"}},
    {TaskCode::MGR, "MGR", {TK::Analysis, TaskK::Analysis, false, "genre"}},
    {TaskCode::MR, "MR", {TK::Analysis, TaskK::Analysis, false, "music recognition"}},
    {TaskCode::MQA, "MQA", {TK::Analysis, TaskK::QuestionAnswer, false, ""}},
}};

constexpr auto make_code_list() {
  std::array<TaskCode, kTaskTable.size()> codes{};
  for (std::size_t i = 0; i < kTaskTable.size(); ++i) codes[i] = kTaskTable[i].code;
  return codes;
}

constexpr auto kTaskCodes = make_code_list();

constexpr bool table_in_enum_order() {
  for (std::size_t i = 0; i < kTaskTable.size(); ++i) {
    if (static_cast<std::size_t>(kTaskTable[i].code) != i) return false;
  }
  return true;
}
static_assert(table_in_enum_order());

const TaskEntry& entry(TaskCode code) {
  return kTaskTable[static_cast<std::size_t>(code)];
}

[[noreturn]] void manifest_error(std::size_t line, const std::string& rule) {
  throw Error(ErrorCode::ManifestError, rule, line);
}

}  // namespace

std::span<const TaskCode> all_task_codes() { return kTaskCodes; }

std::string_view to_string(TaskCode code) { return entry(code).name; }

std::optional<TaskCode> parse_task_code(std::string_view name) {
  for (const auto& e : kTaskTable) {
    if (e.name == name) return e.code;
  }
  return std::nullopt;
}

const HeaderRule& header_rule(TaskCode code) { return entry(code).rule; }

TaskHeader derive_header(const ManifestRecord& r) {
  const HeaderRule& rule = header_rule(r.task_type);
  TaskHeader h;
  h.kind = rule.kind;
  h.audio_language.code = r.audio_language;
  h.task.kind = rule.task;
  if (rule.task == TaskKind::QuestionAnswer) h.task.question = r.question.value_or("");
  h.text_language.code = r.text_language;
  h.timestamps = rule.timestamps;
  h.instruction = std::string(rule.instruction);
  return h;
}

void validate(const ManifestRecord& r) {
  if (r.audio_path.empty()) manifest_error(r.line, "audio_path is empty");
  if (r.audio_language.empty()) manifest_error(r.line, "audio_language is empty");
  if (r.text_language.empty() || r.text_language == kUnknownLanguage) {
    manifest_error(r.line, "text_language must be a language code");
  }
  const HeaderRule& rule = header_rule(r.task_type);
  if (rule.timestamps) {
    if (!r.timed_target) manifest_error(r.line, "SRWT record requires timed_target");
    try {
      validate(*r.timed_target);
    } catch (const Error& e) {
      manifest_error(r.line, "timed_target: " + std::string(e.what()));
    }
  }
  if (rule.task == TaskKind::QuestionAnswer && (!r.question || r.question->empty())) {
    manifest_error(r.line, "QA record requires question");
  }
  if (const auto v = validate(derive_header(r)); !v.empty()) {
    manifest_error(r.line, "header: " + std::string(to_string(v.front())));
  }
}

ManifestRecord parse_manifest_line(std::string_view line, std::size_t line_number,
                                   const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    manifest_error(line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) manifest_error(line_number, "expected a JSON object");
  ManifestRecord r;
  r.line = line_number;
  try {
    std::filesystem::path audio(j.at("audio_path").get<std::string>());
    r.audio_path = audio.is_relative() && !base_dir.empty() ? base_dir / audio : audio;
    const auto task = j.at("task_type").get<std::string>();
    const auto code = parse_task_code(task);
    if (!code) manifest_error(line_number, "unknown task_type '" + task + "'");
    r.task_type = *code;
    r.audio_language = j.at("audio_language").get<std::string>();
    r.text_language = j.at("text_language").get<std::string>();
    r.target = j.at("target").get<std::string>();
    if (j.contains("timed_target") && !j["timed_target"].is_null()) {
      r.timed_target = timed_transcript_from_json(j["timed_target"]);
    }
    if (j.contains("question") && !j["question"].is_null()) {
      r.question = j["question"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    manifest_error(line_number, std::string("field error: ") + e.what());
  }
  validate(r);
  return r;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
  std::vector<ManifestRecord> records;
  std::size_t line_number = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(parse_manifest_line(line, line_number, path.parent_path()));
  }
  return records;
}

std::string to_manifest_line(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["audio_path"] = r.audio_path.generic_string();
  j["task_type"] = std::string(to_string(r.task_type));
  j["audio_language"] = r.audio_language;
  j["text_language"] = r.text_language;
  j["target"] = r.target;
  if (r.timed_target) {
    nlohmann::ordered_json words = nlohmann::ordered_json::array();
    for (const auto& w : r.timed_target->words) {
      nlohmann::ordered_json jw;
      jw["w"] = w.word;
      jw["s"] = w.start;
      jw["e"] = w.end;
      words.push_back(jw);
    }
    j["timed_target"]["words"] = words;
  }
  if (r.question) j["question"] = *r.question;
  return j.dump();
}

void validate(const TrainingExample& ex) {
  if (ex.tokens.size() != ex.loss_mask.size()) {
    throw Error(ErrorCode::InvalidExample, "loss_mask length differs from tokens");
  }
  if (ex.tokens.size() < 2) throw Error(ErrorCode::InvalidExample, "fewer than two tokens");
  if (ex.loss_mask[0]) throw Error(ErrorCode::InvalidExample, "position 0 cannot carry loss");
  bool any = false;
  for (auto m : ex.loss_mask) any = any || m;
  if (!any) throw Error(ErrorCode::InvalidExample, "loss_mask selects no position");
}

TokenSequence decode_prompt(const ManifestRecord& r, const Vocabulary& vocab, HeaderMode mode) {
  if (mode == HeaderMode::Unconditioned) return {vocab.tag(SpecialTag::Unconditioned)};
  return build_header(derive_header(r), vocab);
}

TokenSequence assemble_tokens(const ManifestRecord& r, const Vocabulary& vocab, HeaderMode mode) {
  TokenSequence tokens = decode_prompt(r, vocab, mode);
  if (header_rule(r.task_type).timestamps) {
    if (!r.timed_target) throw Error(ErrorCode::ManifestError, "missing timed_target", r.line);
    const auto body = encode_timed(*r.timed_target, vocab);
    tokens.insert(tokens.end(), body.begin(), body.end());
  } else {
    const auto body = vocab.tokenize(r.target);
    tokens.insert(tokens.end(), body.begin(), body.end());
  }
  tokens.push_back(vocab.tag(SpecialTag::EndOfText));
  return tokens;
}

TrainingExample assemble(const ManifestRecord& r, const Vocabulary& vocab,
                         MelSpectrogram features, HeaderMode mode) {
  TrainingExample ex;
  ex.tokens = assemble_tokens(r, vocab, mode);
  ex.loss_mask.assign(ex.tokens.size(), 1);
  ex.loss_mask[0] = 0;
  ex.features = std::move(features);
  return ex;
}

TrainingExample assemble(const ManifestRecord& r, const Vocabulary& vocab, HeaderMode mode) {
  const AudioClip clip = load_audio(r.audio_path);
  if (clip.duration() > kMaxClipSeconds) {
    throw Error(ErrorCode::ClipTooLong, r.audio_path.string(), r.line);
  }
  return assemble(r, vocab, log_mel(clip), mode);
}

}  // namespace audiomt
