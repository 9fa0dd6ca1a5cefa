#pragma once

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "audiomt/corpus.hpp"
#include "audiomt/metrics.hpp"
#include "audiomt/mixer.hpp"
#include "audiomt/model.hpp"
#include "audiomt/optimizer.hpp"
#include "audiomt/synth.hpp"

namespace audiomt::harness {

enum class Precision { Float64, Float32 };

struct EvalSpec {
  std::string split = "heldout";
  std::vector<std::string> datasets;  // empty: every dataset in the mix
  std::size_t max_items = 0;          // per dataset; 0 = all
  std::size_t max_decode_len = 64;
};

struct AblationSpec {
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::int64_t steps = 1500;
  std::vector<std::string> arms = {"A", "B", "C", "D"};
};

struct RunConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path run_dir;
  synth::SynthSpec synth;
  std::size_t max_merges = 64;
  std::vector<std::string> languages = default_language_codes();
  ModelConfig model;  // vocab_size is filled from the prepared vocabulary
  Precision precision = Precision::Float64;
  MixSpec mix;
  // Per-dataset cap on training examples (first n of the manifest).
  std::map<std::string, std::size_t> train_limit;
  std::string train_split = "train";
  HeaderMode header_mode = HeaderMode::Full;
  TrainStage stage = TrainStage::Joint;
  std::int64_t steps = 3000;
  std::size_t batch_size = 32;
  LrSchedule lr{3e-4, 3e-5, 200, 0};  // total <= 0 means `steps`
  AdamWConfig adamw;
  std::int64_t checkpoint_every = 0;  // 0: only at the end
  bool spec_augment = false;
  std::uint64_t seed = 0;
  EvalSpec eval;
  AblationSpec ablation;

  // Relative paths resolve against base_dir. Unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  nlohmann::json to_json() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Derived streams so each consumer of the run seed is independent.
std::uint64_t model_seed(std::uint64_t seed);
std::uint64_t mixer_seed(std::uint64_t seed);
std::uint64_t augment_seed(std::uint64_t seed, std::int64_t step, std::size_t slot);

std::filesystem::path vocab_path(const RunConfig& config);
std::filesystem::path checkpoint_path(const RunConfig& config);
std::filesystem::path step_checkpoint_path(const RunConfig& config, std::int64_t step);
std::filesystem::path train_log_path(const RunConfig& config);

// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

// FIFO handoff between one producer and one consumer. close() wakes a
// waiting consumer; pop() returns nullopt once closed and drained.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  // Returns false when the queue was closed.
  bool push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable not_empty_, not_full_;
};

synth::SynthResult cmd_synth(const RunConfig& config);

// Learns merges from the training targets and writes the vocabulary.
Vocabulary cmd_prepare(const RunConfig& config);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<StepResult> steps;  // steps run by this invocation
};

// Resumes from `resume` when given; the log keeps earlier lines up to the
// resumed step. Throws DivergenceDetected after logging the failing step.
TrainResult cmd_train(const RunConfig& config,
                      const std::optional<std::filesystem::path>& resume = std::nullopt);

// Reports per dataset; toy_conflict reports each task code separately.
// Accuracy tasks pick the most likely of the dataset's distinct labels; the
// free-decoding accuracy goes to extra["free_decode_accuracy"].
// Writes eval_<split>.json and eval_<split>.txt into the run directory.
std::vector<EvalReport> cmd_eval(const RunConfig& config,
                                 const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

struct DecodeRequest {
  std::filesystem::path audio;
  TaskCode task = TaskCode::ASR;
  std::string audio_language = "en";
  std::string text_language = "en";
  std::optional<std::string> question;
  std::size_t max_len = 64;
};

struct DecodeResult {
  TokenSequence tokens;
  std::string text;  // body text, special tokens dropped
  std::optional<TimedTranscript> timed;
};

DecodeResult cmd_decode(const RunConfig& config, const DecodeRequest& request,
                        const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

struct AblationRun {
  std::string arm;
  std::uint64_t seed = 0;
  std::vector<EvalReport> reports;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  nlohmann::json summary;
};

// Arms: A all tasks, B all minus toy_srwt, C toy_conflict with headers,
// D toy_conflict with the single <|unconditioned|> tag. A and B run once per
// ablation seed; C and D use the first seed. Writes ablation.json and
// ablation.txt into the run directory.
AblationReport cmd_ablate(const RunConfig& config);

// Summary of a checkpoint (config, sizes, per-block hashes, optimizer step).
nlohmann::json inspect_checkpoint(const std::filesystem::path& path);

// FNV-1a over the raw bytes of every tensor in the block.
template <typename S>
std::uint64_t block_hash(const Parameters<S>& params, ParamBlock block);

}  // namespace audiomt::harness
