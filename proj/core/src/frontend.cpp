#include "audiomt/frontend.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "audiomt/error.hpp"
#include "audiomt/random.hpp"

namespace audiomt {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

constexpr int kZeroCrossings = 16;
constexpr double kRolloff = 0.95;
constexpr double kKaiserBeta = 8.0;

double kaiser(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  static const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) / norm;
}

FeatureMatrix build_filterbank() {
  const int bins = kFftSize / 2 + 1;
  FeatureMatrix fb = FeatureMatrix::Zero(bins, kMelChannels);
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(kMelMaxHz);
  std::vector<double> edges(kMelChannels + 2);
  for (int i = 0; i < kMelChannels + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kMelChannels + 1));
  }
  for (int m = 0; m < kMelChannels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kTargetSampleRate / kFftSize;
      const double rising = (f - lo) / (center - lo);
      const double falling = (hi - f) / (hi - center);
      fb(k, m) = std::max(0.0, std::min(rising, falling));
    }
  }
  return fb;
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) {
    throw Error(ErrorCode::InvalidConfig, "sample_rate must be positive");
  }
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw Error(ErrorCode::InvalidConfig, "non-finite sample");
  }
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.samples.empty()) throw Error(ErrorCode::EmptyAudio, "resample of empty clip");
  if (target_rate <= 0) {
    throw Error(ErrorCode::SampleRateMismatch, "target rate must be positive");
  }
  validate(clip);
  if (target_rate == clip.sample_rate) return clip;

  const std::int64_t g = std::gcd(clip.sample_rate, target_rate);
  const std::int64_t up = target_rate / g;
  const std::int64_t down = clip.sample_rate / g;
  const auto n_in = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t n_out = (n_in * up + down - 1) / down;

  // Cutoff in cycles per input sample, relative to the input Nyquist.
  const double cutoff = kRolloff * std::min(1.0, static_cast<double>(up) / down);
  const auto half = static_cast<std::int64_t>(std::ceil(kZeroCrossings / cutoff));
  const std::int64_t taps = 2 * half;

  auto kernel = [&](double tau) {
    return cutoff * sinc(cutoff * tau) * kaiser(tau / static_cast<double>(half));
  };

  // One row of taps per output phase; tap j multiplies input i0 - half + 1 + j.
  const bool tabulate = up <= 4096;
  std::vector<double> table;
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up * taps));
    for (std::int64_t p = 0; p < up; ++p) {
      const double frac = static_cast<double>(p) / up;
      for (std::int64_t j = 0; j < taps; ++j) {
        table[p * taps + j] = kernel(frac + static_cast<double>(half - 1 - j));
      }
    }
  }

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (std::int64_t n = 0; n < n_out; ++n) {
    const std::int64_t num = n * down;
    const std::int64_t i0 = num / up;
    const std::int64_t phase = num % up;
    const double frac = static_cast<double>(phase) / up;
    double acc = 0.0;
    for (std::int64_t j = 0; j < taps; ++j) {
      const std::int64_t k = i0 - half + 1 + j;
      if (k < 0 || k >= n_in) continue;
      const double w = tabulate ? table[phase * taps + j]
                                : kernel(frac + static_cast<double>(half - 1 - j));
      acc += w * clip.samples[static_cast<std::size_t>(k)];
    }
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

Eigen::Index mel_frame_count(std::size_t samples) {
  if (samples < static_cast<std::size_t>(kWindowSamples)) return 0;
  return 1 + static_cast<Eigen::Index>((samples - kWindowSamples) / kHopSamples);
}

const FeatureMatrix& mel_filterbank() {
  static const FeatureMatrix fb = build_filterbank();
  return fb;
}

MelSpectrogram log_mel(const AudioClip& clip, const MelOptions& options) {
  if (clip.sample_rate != kTargetSampleRate) {
    throw Error(ErrorCode::SampleRateMismatch,
                "expected 16000 Hz, got " + std::to_string(clip.sample_rate));
  }
  validate(clip);
  const Eigen::Index frames = mel_frame_count(clip.samples.size());
  if (frames == 0) {
    throw Error(ErrorCode::AudioTooShort,
                std::to_string(clip.samples.size()) + " samples < one 25 ms window");
  }

  std::vector<double> window(kWindowSamples);
  for (int n = 0; n < kWindowSamples; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kWindowSamples);
  }

  const int bins = kFftSize / 2 + 1;
  FeatureMatrix power(frames, bins);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(kFftSize, 0.0);
  std::vector<std::complex<double>> spectrum;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::size_t offset = static_cast<std::size_t>(t) * kHopSamples;
    for (int n = 0; n < kWindowSamples; ++n) {
      frame[n] = clip.samples[offset + n] * window[n];
    }
    fft.fwd(spectrum, frame);
    for (int k = 0; k < bins; ++k) power(t, k) = std::norm(spectrum[k]);
  }

  MelSpectrogram mel;
  mel.values = power * mel_filterbank();
  const double floor = options.log_floor;
  mel.values = mel.values.unaryExpr([floor](double e) { return std::log10(std::max(e, floor)); });
  if (options.normalize) {
    const double ceiling = mel.values.maxCoeff();
    mel.values = mel.values.unaryExpr(
        [ceiling](double v) { return (std::max(v, ceiling - 8.0) + 4.0) / 4.0; });
  }
  return mel;
}

MelSpectrogram spec_augment(const MelSpectrogram& mel, const SpecAugmentPolicy& policy) {
  MelSpectrogram out = mel;
  const Eigen::Index frames = mel.values.rows();
  const Eigen::Index channels = mel.values.cols();
  if (frames == 0 || channels == 0) return out;
  if (policy.n_freq_masks <= 0 && policy.n_time_masks <= 0) return out;

  const double mean = mel.values.mean();
  Rng rng(policy.seed);
  for (int i = 0; i < policy.n_freq_masks; ++i) {
    const std::int64_t max_w = std::clamp<std::int64_t>(policy.freq_mask_width_max, 0, channels);
    const std::int64_t w = uniform_int(rng, 0, max_w);
    const std::int64_t f0 = uniform_int(rng, 0, channels - w);
    out.values.middleCols(f0, w).setConstant(mean);
  }
  for (int i = 0; i < policy.n_time_masks; ++i) {
    const std::int64_t max_w = std::clamp<std::int64_t>(policy.time_mask_width_max, 0, frames);
    const std::int64_t w = uniform_int(rng, 0, max_w);
    const std::int64_t t0 = uniform_int(rng, 0, frames - w);
    out.values.middleRows(t0, w).setConstant(mean);
  }
  return out;
}

double encoder_frame_to_time(std::int64_t frame_index) {
  if (frame_index < 0) {
    throw Error(ErrorCode::InvalidIndex, "negative encoder frame " + std::to_string(frame_index));
  }
  return kHopSeconds * kEncoderDownsample * static_cast<double>(frame_index);
}

}  // namespace audiomt
