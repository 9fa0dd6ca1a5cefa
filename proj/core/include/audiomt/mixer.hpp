#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "audiomt/random.hpp"

namespace audiomt {

struct MixSource {
  std::string id;
  double weight = 1.0;
};

struct MixSpec {
  std::vector<MixSource> sources;
  std::uint64_t seed = 0;
};

struct Draw {
  std::size_t source = 0;  // index into MixSpec::sources
  std::size_t index = 0;   // example index within that dataset
};

// Infinite deterministic stream over weighted datasets. Each draw picks a
// source with probability weight / sum(weights), then takes the next item of
// that source's shuffled order, reshuffling at the end of every pass.
// Not thread-safe; independently seeded mixers may run concurrently.
class Mixer {
 public:
  // `dataset_sizes` maps dataset id -> number of examples. Throws
  // UnknownDataset for ids not in the map, InvalidConfig for bad weights or
  // an empty dataset with positive weight.
  Mixer(MixSpec spec, const std::map<std::string, std::size_t>& dataset_sizes);

  Draw next();
  void skip(std::uint64_t n);
  std::uint64_t position() const { return drawn_; }
  const MixSpec& spec() const { return spec_; }

 private:
  struct SourceState {
    std::size_t size = 0;
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    Rng rng;
  };

  MixSpec spec_;
  std::vector<double> cumulative_;
  std::vector<SourceState> states_;
  Rng pick_rng_;
  std::uint64_t drawn_ = 0;
};

}  // namespace audiomt
