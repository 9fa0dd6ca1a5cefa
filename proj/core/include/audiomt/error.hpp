#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace audiomt {

enum class ErrorCode {
  // frontend
  EmptyAudio,
  AudioTooShort,
  SampleRateMismatch,
  InvalidIndex,
  ChannelCountUnsupported,
  UnsupportedWavFormat,
  MalformedWav,
  IoError,
  // tag grammar / vocabulary
  InvalidHeader,
  MalformedHeader,
  DuplicateLanguage,
  UnknownLanguage,
  UnencodableText,
  MalformedVocabulary,
  // srwt
  TimeOutOfRange,
  InvalidTranscript,
  MalformedSrwt,
  ScoreUndefined,
  // corpus
  ManifestError,
  UnknownDataset,
  UnknownTask,
  ClipTooLong,
  InvalidExample,
  // model
  InvalidConfig,
  AudioTooLong,
  VocabMismatch,
  DivergenceDetected,
  MalformedCheckpoint,
  CheckpointNotFound,
  // chat
  InvalidDialogue,
  MalformedDialogue,
  AudioNotFound,
  // metrics
  Undefined,
  InputMismatch,
  // harness
  RunLocked,
  Usage,
};

std::string_view to_string(ErrorCode code);

// Process exit code for an error: 1 usage, 2 data, 3 numerical failure.
int exit_code_for(ErrorCode code);

// Single exception type for the library. `detail` carries the rule, reason or
// expected class; `position` carries a token index, line number or audio id
// depending on the error.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail,
        std::optional<std::size_t> position = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  std::optional<std::size_t> position() const noexcept { return position_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<std::size_t> position_;
};

}  // namespace audiomt
