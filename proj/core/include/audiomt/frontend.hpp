#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace audiomt {

inline constexpr int kTargetSampleRate = 16000;
inline constexpr int kWindowSamples = 400;  // 25 ms at 16 kHz
inline constexpr int kHopSamples = 160;     // 10 ms at 16 kHz
inline constexpr int kFftSize = 400;
inline constexpr int kMelChannels = 80;
inline constexpr double kHopSeconds = 0.010;
inline constexpr double kWindowSeconds = 0.025;
inline constexpr double kMelMaxHz = 8000.0;
// Conv stem stride 2 followed by pooling stride 2.
inline constexpr int kEncoderDownsample = 4;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kTargetSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Throws InvalidConfig when the rate is not positive or a sample is not finite.
void validate(const AudioClip& clip);

using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Log-mel features, one row per 10 ms frame, kMelChannels columns.
struct MelSpectrogram {
  FeatureMatrix values;
  double hop_seconds = kHopSeconds;
  double window_seconds = kWindowSeconds;

  Eigen::Index frames() const { return values.rows(); }
  double frame_start(Eigen::Index frame) const { return frame * hop_seconds; }
};

struct MelOptions {
  double log_floor = 1e-10;
  // When false the raw floored log10 energies are returned.
  bool normalize = true;
};

struct SpecAugmentPolicy {
  int freq_mask_width_max = 0;
  int n_freq_masks = 0;
  int time_mask_width_max = 0;
  int n_time_masks = 0;
  std::uint64_t seed = 0;

  // SpecAugment LB policy without time warping.
  static SpecAugmentPolicy librispeech_basic(std::uint64_t seed) {
    return {27, 1, 100, 1, seed};
  }
};

// Windowed-sinc polyphase resampler (Kaiser window, 16 zero crossings,
// cutoff at 0.95 of the lower Nyquist frequency).
AudioClip resample(const AudioClip& clip, int target_rate);

// Frame count for `samples` input samples; 0 when shorter than one window.
Eigen::Index mel_frame_count(std::size_t samples);

// HTK-scale triangular filterbank over 0..8 kHz, kFftSize/2+1 rows by
// kMelChannels columns.
const FeatureMatrix& mel_filterbank();

// Log-mel spectrogram without centering or padding. Normalization: clamp to
// (max - 8), then (x + 4) / 4.
MelSpectrogram log_mel(const AudioClip& clip, const MelOptions& options = {});

// Masks are filled with the per-utterance mean; widths larger than the
// corresponding dimension are clamped to it.
MelSpectrogram spec_augment(const MelSpectrogram& mel,
                            const SpecAugmentPolicy& policy);

// Start time of an encoder output frame (40 ms per frame).
double encoder_frame_to_time(std::int64_t frame_index);

AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Reads a WAV and resamples it to 16 kHz when needed.
AudioClip load_audio(const std::filesystem::path& path);

}  // namespace audiomt
