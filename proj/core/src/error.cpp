#include "audiomt/error.hpp"

namespace audiomt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::AudioTooShort: return "AudioTooShort";
    case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::InvalidIndex: return "InvalidIndex";
    case ErrorCode::ChannelCountUnsupported: return "ChannelCountUnsupported";
    case ErrorCode::UnsupportedWavFormat: return "UnsupportedWavFormat";
    case ErrorCode::MalformedWav: return "MalformedWav";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidHeader: return "InvalidHeader";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::DuplicateLanguage: return "DuplicateLanguage";
    case ErrorCode::UnknownLanguage: return "UnknownLanguage";
    case ErrorCode::UnencodableText: return "UnencodableText";
    case ErrorCode::MalformedVocabulary: return "MalformedVocabulary";
    case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorCode::InvalidTranscript: return "InvalidTranscript";
    case ErrorCode::MalformedSrwt: return "MalformedSRWT";
    case ErrorCode::ScoreUndefined: return "ScoreUndefined";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::ClipTooLong: return "ClipTooLong";
    case ErrorCode::InvalidExample: return "InvalidExample";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::AudioTooLong: return "AudioTooLong";
    case ErrorCode::VocabMismatch: return "VocabMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::MalformedCheckpoint: return "MalformedCheckpoint";
    case ErrorCode::CheckpointNotFound: return "CheckpointNotFound";
    case ErrorCode::InvalidDialogue: return "InvalidDialogue";
    case ErrorCode::MalformedDialogue: return "MalformedDialogue";
    case ErrorCode::AudioNotFound: return "AudioNotFound";
    case ErrorCode::Undefined: return "Undefined";
    case ErrorCode::InputMismatch: return "InputMismatch";
    case ErrorCode::RunLocked: return "RunLocked";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage:
    case ErrorCode::UnknownTask:
    case ErrorCode::InvalidConfig:
      return 1;
    case ErrorCode::DivergenceDetected:
      return 3;
    default:
      return 2;
  }
}

namespace {

std::string format_message(ErrorCode code, const std::string& detail,
                           std::optional<std::size_t> position) {
  std::string msg(to_string(code));
  if (position) msg += "@" + std::to_string(*position);
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}

}  // namespace

Error::Error(ErrorCode code, std::string detail,
             std::optional<std::size_t> position)
    : std::runtime_error(format_message(code, detail, position)),
      code_(code),
      detail_(std::move(detail)),
      position_(position) {}

}  // namespace audiomt
