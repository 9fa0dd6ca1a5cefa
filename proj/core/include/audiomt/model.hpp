#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "audiomt/corpus.hpp"
#include "audiomt/frontend.hpp"
#include "audiomt/vocabulary.hpp"

namespace audiomt {

struct ModelConfig {
  int d_model = 128;
  int n_heads = 4;
  int n_encoder_layers = 4;
  int n_decoder_layers = 4;
  int ff_multiplier = 4;
  int vocab_size = 0;
  int max_audio_frames = 750;  // encoder output frames (30 s)
  int max_text_len = 448;
  std::uint64_t seed = 0;

  // Throws InvalidConfig.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Audio encoder weights (conv stem included) vs language-model weights.
enum class ParamBlock { Encoder, Decoder };

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct ParamTensor {
  std::string name;
  ParamBlock block = ParamBlock::Encoder;
  Matrix<S> value;
};

template <typename S>
struct Parameters {
  ModelConfig config;
  std::vector<ParamTensor<S>> tensors;

  std::size_t scalar_count() const;
  std::size_t scalar_count(ParamBlock block) const;
  // Throws InvalidConfig when absent.
  std::size_t index_of(std::string_view name) const;
  Parameters zeros_like() const;

  template <typename T>
  Parameters<T> cast() const {
    Parameters<T> out;
    out.config = config;
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.block, t.value.template cast<T>()});
    return out;
  }
};

// Seeded initialization; identical seeds give identical parameters.
template <typename S>
Parameters<S> init_parameters(const ModelConfig& config);

// Conv stem (stride 1, then stride 2), transformer layers, average pooling
// with stride 2. Output rows = ceil(ceil(T / 2) / 2). Throws AudioTooLong.
template <typename S>
Matrix<S> encode(const MelSpectrogram& mel, const Parameters<S>& params);

inline Eigen::Index encoded_length(Eigen::Index frames) {
  return ((frames + 1) / 2 + 1) / 2;
}

// Mean negative log-likelihood of tokens[t] given tokens[<t] and the audio,
// over positions where loss_mask is set.
template <typename S>
double loss(const TrainingExample& example, const Parameters<S>& params);

// Row t: next-token distribution after tokens[0..t], for t < len(tokens) - 1.
template <typename S>
Matrix<S> next_token_probabilities(const TrainingExample& example, const Parameters<S>& params);

struct LossSum {
  double nll = 0.0;        // summed over selected positions
  std::size_t count = 0;   // selected positions
};

// Which parameter blocks receive gradients.
struct GradientScope {
  bool encoder = true;
  bool decoder = true;
};

// Adds scale * d(summed NLL)/d(params) into `grads` for the blocks in scope.
template <typename S>
LossSum accumulate_gradients(const TrainingExample& example, const Parameters<S>& params,
                             S scale, Parameters<S>& grads, GradientScope scope = {});

// Emits `forced_header` verbatim, then argmax tokens until <|endoftext|>
// (included) or max_len new tokens. The header must parse as a task header.
template <typename S>
TokenSequence greedy_decode(const MelSpectrogram& mel, const TokenSequence& forced_header,
                            const Parameters<S>& params, std::size_t max_len,
                            const Vocabulary& vocab);

// As greedy_decode with an arbitrary forced prefix (no header check).
template <typename S>
TokenSequence greedy_decode_prefix(const MelSpectrogram& mel, const TokenSequence& prefix,
                                   const Parameters<S>& params, std::size_t max_len,
                                   TokenId end_of_text);

}  // namespace audiomt
