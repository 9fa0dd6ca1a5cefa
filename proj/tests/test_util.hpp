#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

#include "audiomt/error.hpp"
#include "audiomt/frontend.hpp"

namespace audiomt::testing {

#define EXPECT_AUDIOMT_ERROR(expr, error_code)                                   \
  do {                                                                           \
    try {                                                                        \
      (void)(expr);                                                              \
      ADD_FAILURE() << "expected " << ::audiomt::to_string(error_code);          \
    } catch (const ::audiomt::Error& e) {                                        \
      EXPECT_EQ(e.code(), error_code) << e.what();                               \
    }                                                                            \
  } while (0)

inline AudioClip sine(double hz, double seconds, int rate, double amplitude = 0.5) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = amplitude * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  }
  return clip;
}

// Fresh directory under the test working directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::current_path() / ("tmp_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace audiomt::testing
