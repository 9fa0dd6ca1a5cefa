#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "audiomt/frontend.hpp"
#include "audiomt/srwt.hpp"
#include "audiomt/tag_grammar.hpp"
#include "audiomt/vocabulary.hpp"

namespace audiomt {

// Multi-task pre-training task codes (speech, sound, music & song).
enum class TaskCode {
  ASR, S2TT, OSR, DialectASR, SRWT, DID, LID, SGC, ER, SV, SD, SER, KS, IC, SF, SAP, VSC,
  AAC, SEC, ASC, SED, AQA,
  SID, SMER, MC, MIC, MNA, MGR, MR, MQA,
};

std::span<const TaskCode> all_task_codes();
std::string_view to_string(TaskCode code);
std::optional<TaskCode> parse_task_code(std::string_view name);

// How a task code fills the header slots.
struct HeaderRule {
  TranscriptionKind kind;
  TaskKind task;
  bool timestamps;
  std::string_view instruction;
};

const HeaderRule& header_rule(TaskCode code);

struct ManifestRecord {
  std::filesystem::path audio_path;
  TaskCode task_type = TaskCode::ASR;
  std::string audio_language;
  std::string text_language;
  std::string target;
  std::optional<TimedTranscript> timed_target;
  std::optional<std::string> question;
  std::size_t line = 0;  // 1-based, 0 when not loaded from a file
};

// Throws ManifestError(line, rule).
void validate(const ManifestRecord& record);

// One JSON object per line; blank lines are skipped. Relative audio paths are
// resolved against the manifest's directory.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
ManifestRecord parse_manifest_line(std::string_view line, std::size_t line_number,
                                   const std::filesystem::path& base_dir = {});
std::string to_manifest_line(const ManifestRecord& record);

TaskHeader derive_header(const ManifestRecord& record);

struct TrainingExample {
  MelSpectrogram features;
  TokenSequence tokens;
  std::vector<std::uint8_t> loss_mask;
};

// Throws InvalidExample on mask/token length mismatch or an empty mask.
void validate(const TrainingExample& example);

enum class HeaderMode {
  Full,
  // Header replaced by the single <|unconditioned|> tag.
  Unconditioned,
};

inline constexpr double kMaxClipSeconds = 30.0;

// header ++ body ++ <|endoftext|>; the body is the SRWT encoding for
// timestamped records, the tokenized target otherwise. Loss on every position
// except 0.
TrainingExample assemble(const ManifestRecord& record, const Vocabulary& vocab,
                         HeaderMode mode = HeaderMode::Full);
// As above with already computed features.
TrainingExample assemble(const ManifestRecord& record, const Vocabulary& vocab,
                         MelSpectrogram features, HeaderMode mode = HeaderMode::Full);

// Target-side tokens only (no features).
TokenSequence assemble_tokens(const ManifestRecord& record, const Vocabulary& vocab,
                              HeaderMode mode = HeaderMode::Full);

// Tokens forced at decode time: the header (or <|unconditioned|>).
TokenSequence decode_prompt(const ManifestRecord& record, const Vocabulary& vocab,
                            HeaderMode mode = HeaderMode::Full);

}  // namespace audiomt
