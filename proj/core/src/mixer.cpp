#include "audiomt/mixer.hpp"

#include <cmath>
#include <numeric>

#include "audiomt/error.hpp"

namespace audiomt {

Mixer::Mixer(MixSpec spec, const std::map<std::string, std::size_t>& dataset_sizes)
    : spec_(std::move(spec)), pick_rng_(mix_seed(spec_.seed, 0)) {
  if (spec_.sources.empty()) throw Error(ErrorCode::InvalidConfig, "mix has no sources");
  double total = 0.0;
  for (std::size_t s = 0; s < spec_.sources.size(); ++s) {
    const auto& src = spec_.sources[s];
    const auto it = dataset_sizes.find(src.id);
    if (it == dataset_sizes.end()) throw Error(ErrorCode::UnknownDataset, src.id);
    if (!(src.weight >= 0.0) || !std::isfinite(src.weight)) {
      throw Error(ErrorCode::InvalidConfig, "weight of '" + src.id + "' must be >= 0");
    }
    if (src.weight > 0.0 && it->second == 0) {
      throw Error(ErrorCode::InvalidConfig, "dataset '" + src.id + "' is empty");
    }
    total += src.weight;
    cumulative_.push_back(total);
    SourceState state;
    state.size = it->second;
    state.order.resize(state.size);
    std::iota(state.order.begin(), state.order.end(), std::size_t{0});
    state.rng.seed(mix_seed(spec_.seed, s + 1));
    shuffle(state.order, state.rng);
    states_.push_back(std::move(state));
  }
  if (total <= 0.0) throw Error(ErrorCode::InvalidConfig, "mix weights are all zero");
}

Draw Mixer::next() {
  const double u = uniform01(pick_rng_) * cumulative_.back();
  std::size_t s = 0;
  while (s + 1 < cumulative_.size() && !(u < cumulative_[s])) ++s;

  auto& state = states_[s];
  if (state.cursor == state.size) {
    shuffle(state.order, state.rng);
    state.cursor = 0;
  }
  ++drawn_;
  return {s, state.order[state.cursor++]};
}

void Mixer::skip(std::uint64_t n) {
  for (std::uint64_t i = 0; i < n; ++i) next();
}

}  // namespace audiomt
