#include "audiomt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "audiomt/checkpoint.hpp"
#include "audiomt/error.hpp"
#include "audiomt/srwt.hpp"
#include "audiomt/text.hpp"
#include "audiomt/tag_grammar.hpp"

namespace audiomt::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, std::string_view where,
                         std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) {
    throw Error(ErrorCode::InvalidConfig, std::string(where) + " must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::InvalidConfig, "unknown key " + std::string(where) + "." + key);
    }
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string(key) + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::string_view precision_name(Precision p) {
  return p == Precision::Float64 ? "float64" : "float32";
}

Precision parse_precision(std::string_view s) {
  if (s == "float64") return Precision::Float64;
  if (s == "float32") return Precision::Float32;
  throw Error(ErrorCode::InvalidConfig, "precision must be float64 or float32");
}

std::string_view header_mode_name(HeaderMode m) {
  return m == HeaderMode::Full ? "full" : "unconditioned";
}

HeaderMode parse_header_mode(std::string_view s) {
  if (s == "full") return HeaderMode::Full;
  if (s == "unconditioned") return HeaderMode::Unconditioned;
  throw Error(ErrorCode::InvalidConfig, "header_mode must be full or unconditioned");
}

ModelConfig model_from_json(const json& j) {
  reject_unknown_keys(j, "model",
                      {"d_model", "n_heads", "n_encoder_layers", "n_decoder_layers",
                       "ff_multiplier", "max_audio_frames", "max_text_len"});
  ModelConfig m;
  read(j, "d_model", m.d_model);
  read(j, "n_heads", m.n_heads);
  read(j, "n_encoder_layers", m.n_encoder_layers);
  read(j, "n_decoder_layers", m.n_decoder_layers);
  read(j, "ff_multiplier", m.ff_multiplier);
  read(j, "max_audio_frames", m.max_audio_frames);
  read(j, "max_text_len", m.max_text_len);
  return m;
}

json model_to_json(const ModelConfig& m) {
  return {{"d_model", m.d_model},
          {"n_heads", m.n_heads},
          {"n_encoder_layers", m.n_encoder_layers},
          {"n_decoder_layers", m.n_decoder_layers},
          {"ff_multiplier", m.ff_multiplier},
          {"max_audio_frames", m.max_audio_frames},
          {"max_text_len", m.max_text_len}};
}

std::vector<std::string> source_ids(const RunConfig& config) {
  std::vector<std::string> ids;
  for (const auto& s : config.mix.sources) ids.push_back(s.id);
  return ids;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  reject_unknown_keys(j, "config",
                      {"corpus_dir", "run_dir", "synth", "max_merges", "languages", "model",
                       "precision", "mix", "train_limit", "train_split", "header_mode", "stage",
                       "steps", "batch_size", "lr", "adamw", "checkpoint_every", "spec_augment",
                       "seed", "eval", "ablation"});
  RunConfig c;
  std::string corpus = "corpus", run = "run";
  read(j, "corpus_dir", corpus);
  read(j, "run_dir", run);
  c.corpus_dir = resolve(base_dir, corpus);
  c.run_dir = resolve(base_dir, run);
  if (auto it = j.find("synth"); it != j.end()) {
    reject_unknown_keys(*it, "synth",
                        {"tasks", "train_per_task", "heldout_per_task", "min_symbols",
                         "max_symbols", "amplitude", "noise"});
    if (auto t = it->find("tasks"); t != it->end()) {
      c.synth.tasks.clear();
      for (const auto& name : *t) {
        const auto task = synth::parse_toy_task(name.get<std::string>());
        if (!task) throw Error(ErrorCode::UnknownTask, name.get<std::string>());
        c.synth.tasks.push_back(*task);
      }
    }
    read(*it, "train_per_task", c.synth.train_per_task);
    read(*it, "heldout_per_task", c.synth.heldout_per_task);
    read(*it, "min_symbols", c.synth.min_symbols);
    read(*it, "max_symbols", c.synth.max_symbols);
    read(*it, "amplitude", c.synth.amplitude);
    read(*it, "noise", c.synth.noise);
  }
  read(j, "max_merges", c.max_merges);
  read(j, "languages", c.languages);
  if (auto it = j.find("model"); it != j.end()) c.model = model_from_json(*it);
  std::string precision = "float64";
  read(j, "precision", precision);
  c.precision = parse_precision(precision);
  if (auto it = j.find("mix"); it != j.end()) {
    reject_unknown_keys(*it, "mix", {"sources"});
    const json& sources = it->at("sources");
    if (!sources.is_object()) throw Error(ErrorCode::InvalidConfig, "mix.sources must map id to weight");
    for (const auto& [id, weight] : sources.items()) {
      if (!weight.is_number()) throw Error(ErrorCode::InvalidConfig, "weight for " + id);
      c.mix.sources.push_back({id, weight.get<double>()});
    }
  } else {
    for (auto task : synth::all_toy_tasks()) c.mix.sources.push_back({synth::dataset_id(task), 1.0});
  }
  read(j, "train_limit", c.train_limit);
  read(j, "train_split", c.train_split);
  std::string header_mode = "full", stage = "joint";
  read(j, "header_mode", header_mode);
  c.header_mode = parse_header_mode(header_mode);
  read(j, "stage", stage);
  try {
    c.stage = parse_stage(stage);
  } catch (const Error&) {
    throw Error(ErrorCode::InvalidConfig, "unknown stage " + stage);
  }
  read(j, "steps", c.steps);
  read(j, "batch_size", c.batch_size);
  c.lr.total = 0;
  if (auto it = j.find("lr"); it != j.end()) {
    reject_unknown_keys(*it, "lr", {"peak", "min", "warmup", "total"});
    read(*it, "peak", c.lr.peak);
    read(*it, "min", c.lr.minimum);
    read(*it, "warmup", c.lr.warmup);
    read(*it, "total", c.lr.total);
  }
  if (auto it = j.find("adamw"); it != j.end()) {
    reject_unknown_keys(*it, "adamw", {"beta1", "beta2", "eps", "weight_decay", "grad_clip"});
    read(*it, "beta1", c.adamw.beta1);
    read(*it, "beta2", c.adamw.beta2);
    read(*it, "eps", c.adamw.eps);
    read(*it, "weight_decay", c.adamw.weight_decay);
    read(*it, "grad_clip", c.adamw.grad_clip);
  }
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "spec_augment", c.spec_augment);
  read(j, "seed", c.seed);
  if (auto it = j.find("eval"); it != j.end()) {
    reject_unknown_keys(*it, "eval", {"split", "datasets", "max_items", "max_decode_len"});
    read(*it, "split", c.eval.split);
    read(*it, "datasets", c.eval.datasets);
    read(*it, "max_items", c.eval.max_items);
    read(*it, "max_decode_len", c.eval.max_decode_len);
  }
  if (auto it = j.find("ablation"); it != j.end()) {
    reject_unknown_keys(*it, "ablation", {"seeds", "steps", "arms"});
    read(*it, "seeds", c.ablation.seeds);
    read(*it, "steps", c.ablation.steps);
    read(*it, "arms", c.ablation.arms);
  }
  if (c.steps < 0) throw Error(ErrorCode::InvalidConfig, "steps must be >= 0");
  if (c.batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
  if (c.mix.sources.empty()) throw Error(ErrorCode::InvalidConfig, "mix has no sources");
  return c;
}

json RunConfig::to_json() const {
  json tasks = json::array();
  for (auto t : synth.tasks) tasks.push_back(synth::to_string(t));
  json sources = json::object();
  for (const auto& s : mix.sources) sources[s.id] = s.weight;
  return {{"corpus_dir", corpus_dir.string()},
          {"run_dir", run_dir.string()},
          {"synth",
           {{"tasks", tasks},
            {"train_per_task", synth.train_per_task},
            {"heldout_per_task", synth.heldout_per_task},
            {"min_symbols", synth.min_symbols},
            {"max_symbols", synth.max_symbols},
            {"amplitude", synth.amplitude},
            {"noise", synth.noise}}},
          {"max_merges", max_merges},
          {"languages", languages},
          {"model", model_to_json(model)},
          {"precision", precision_name(precision)},
          {"mix", {{"sources", sources}}},
          {"train_limit", train_limit},
          {"train_split", train_split},
          {"header_mode", header_mode_name(header_mode)},
          {"stage", to_string(stage)},
          {"steps", steps},
          {"batch_size", batch_size},
          {"lr", {{"peak", lr.peak}, {"min", lr.minimum}, {"warmup", lr.warmup}, {"total", lr.total}}},
          {"adamw",
           {{"beta1", adamw.beta1},
            {"beta2", adamw.beta2},
            {"eps", adamw.eps},
            {"weight_decay", adamw.weight_decay},
            {"grad_clip", adamw.grad_clip}}},
          {"checkpoint_every", checkpoint_every},
          {"spec_augment", spec_augment},
          {"seed", seed},
          {"eval",
           {{"split", eval.split},
            {"datasets", eval.datasets},
            {"max_items", eval.max_items},
            {"max_decode_len", eval.max_decode_len}}},
          {"ablation", {{"seeds", ablation.seeds}, {"steps", ablation.steps}, {"arms", ablation.arms}}}};
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not JSON: ") + e.what());
  }
  return RunConfig::from_json(j, path.parent_path());
}

std::uint64_t model_seed(std::uint64_t seed) { return mix_seed(seed, 1); }
std::uint64_t mixer_seed(std::uint64_t seed) { return mix_seed(seed, 2); }
std::uint64_t augment_seed(std::uint64_t seed, std::int64_t step, std::size_t slot) {
  return mix_seed(mix_seed(mix_seed(seed, 3), static_cast<std::uint64_t>(step)), slot);
}

fs::path vocab_path(const RunConfig& c) { return c.run_dir / "vocab.txt"; }
fs::path checkpoint_path(const RunConfig& c) { return c.run_dir / "checkpoint.bin"; }
fs::path step_checkpoint_path(const RunConfig& c, std::int64_t step) {
  return c.run_dir / "checkpoints" / ("step_" + std::to_string(step) + ".bin");
}
fs::path train_log_path(const RunConfig& c) { return c.run_dir / "train_log.jsonl"; }

RunLock::RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
  fs::create_directories(run_dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    throw Error(ErrorCode::RunLocked,
                path_.string() + " exists; another command owns this run directory");
  }
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

template <typename S>
std::uint64_t block_hash(const Parameters<S>& params, ParamBlock block) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : params.tensors) {
    if (t.block != block) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.value.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.value.size()) * sizeof(S); ++i) {
      h = (h ^ bytes[i]) * 0x100000001b3ULL;
    }
  }
  return h;
}

template std::uint64_t block_hash<double>(const Parameters<double>&, ParamBlock);
template std::uint64_t block_hash<float>(const Parameters<float>&, ParamBlock);

synth::SynthResult cmd_synth(const RunConfig& config) {
  return synth::synth_corpus(config.synth, config.seed, config.corpus_dir);
}

Vocabulary cmd_prepare(const RunConfig& config) {
  RunLock lock(config.run_dir);
  std::vector<std::string> texts;
  for (const auto& id : source_ids(config)) {
    for (const auto& rec : load_manifest(synth::manifest_path(config.corpus_dir, id, config.train_split))) {
      texts.push_back(rec.target);
      if (rec.question) texts.push_back(*rec.question);
    }
  }
  const auto merges = learn_merges(texts, config.max_merges);
  Vocabulary vocab = default_vocabulary(config.languages, 256 + merges.size(), merges);
  vocab.save(vocab_path(config));
  return vocab;
}

namespace {

Vocabulary load_vocab(const RunConfig& config) {
  const auto path = vocab_path(config);
  if (!fs::exists(path)) {
    throw Error(ErrorCode::IoError, path.string() + " missing; run prepare first");
  }
  return Vocabulary::load(path);
}

class FeatureCache {
 public:
  const MelSpectrogram& get(const fs::path& audio) {
    auto it = cache_.find(audio);
    if (it == cache_.end()) it = cache_.emplace(audio, log_mel(load_audio(audio))).first;
    return it->second;
  }

 private:
  std::map<fs::path, MelSpectrogram> cache_;
};

std::vector<ManifestRecord> load_records(const RunConfig& config, const std::string& id,
                                         const std::string& split, std::size_t limit) {
  auto records = load_manifest(synth::manifest_path(config.corpus_dir, id, split));
  if (limit > 0 && records.size() > limit) records.resize(limit);
  return records;
}

std::size_t train_limit_for(const RunConfig& config, const std::string& id) {
  auto it = config.train_limit.find(id);
  return it == config.train_limit.end() ? 0 : it->second;
}

ModelConfig resolved_model(const RunConfig& config, const Vocabulary& vocab) {
  ModelConfig m = config.model;
  m.vocab_size = static_cast<int>(vocab.size());
  m.seed = model_seed(config.seed);
  return m;
}

json step_json(const StepResult& r) {
  return {{"step", r.step}, {"lr", r.lr}, {"loss", r.loss}, {"grad_norm", r.grad_norm}};
}

// Keeps log lines for steps <= last_step.
void rewrite_log(const fs::path& path, std::int64_t last_step) {
  std::vector<std::string> kept;
  if (std::ifstream in(path); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.contains("step") && j["step"].get<std::int64_t>() <= last_step &&
          !j.contains("error")) {
        kept.push_back(line);
      }
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : kept) out << line << '\n';
}

using Batch = std::vector<TrainingExample>;

template <typename S>
TrainResult train_impl(const RunConfig& config, const std::optional<fs::path>& resume) {
  RunLock lock(config.run_dir);
  const Vocabulary vocab = load_vocab(config);
  const ModelConfig model_config = resolved_model(config, vocab);

  FeatureCache features;
  std::vector<std::vector<TrainingExample>> data;
  std::map<std::string, std::size_t> sizes;
  for (const auto& id : source_ids(config)) {
    std::vector<TrainingExample> examples;
    for (const auto& rec : load_records(config, id, config.train_split, train_limit_for(config, id))) {
      examples.push_back(assemble(rec, vocab, features.get(rec.audio_path), config.header_mode));
    }
    sizes[id] = examples.size();
    data.push_back(std::move(examples));
  }
  MixSpec spec = config.mix;
  spec.seed = mixer_seed(config.seed);
  Mixer mixer(spec, sizes);

  Parameters<S> params;
  OptimizerState<S> opt;
  if (resume) {
    Checkpoint<S> ck = load_checkpoint<S>(*resume, config.adamw);
    if (!(ck.params.config == model_config)) {
      throw Error(ErrorCode::InvalidConfig, "checkpoint model config differs from the run config");
    }
    if (!ck.optimizer) throw Error(ErrorCode::MalformedCheckpoint, "checkpoint has no optimizer state");
    params = std::move(ck.params);
    opt = std::move(*ck.optimizer);
  } else {
    params = init_parameters<S>(model_config);
    opt = OptimizerState<S>::init(params, config.adamw);
  }
  const std::int64_t first = opt.step + 1;
  mixer.skip(static_cast<std::uint64_t>(opt.step) * config.batch_size);
  rewrite_log(train_log_path(config), opt.step);
  std::ofstream log(train_log_path(config), std::ios::app);

  LrSchedule schedule = config.lr;
  if (schedule.total <= 0) schedule.total = config.steps;

  BoundedQueue<Batch> queue(2);
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      for (std::int64_t step = first; step <= config.steps; ++step) {
        Batch batch;
        for (std::size_t slot = 0; slot < config.batch_size; ++slot) {
          const Draw d = mixer.next();
          TrainingExample ex = data[d.source][d.index];
          if (config.spec_augment) {
            ex.features = spec_augment(
                ex.features,
                SpecAugmentPolicy::librispeech_basic(augment_seed(config.seed, step, slot)));
          }
          batch.push_back(std::move(ex));
        }
        if (!queue.push(std::move(batch))) return;
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  struct Joiner {
    BoundedQueue<Batch>& q;
    std::thread& t;
    ~Joiner() {
      q.close();
      if (t.joinable()) t.join();
    }
  } joiner{queue, producer};

  TrainResult result;
  for (std::int64_t step = first; step <= config.steps; ++step) {
    std::optional<Batch> batch = queue.pop();
    if (!batch) break;
    StepResult r;
    try {
      r = train_step<S>(*batch, params, opt, config.stage, schedule);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DivergenceDetected) {
        log << json{{"step", step}, {"error", to_string(e.code())}}.dump() << '\n';
      }
      throw;
    }
    log << step_json(r).dump() << '\n';
    result.steps.push_back(r);
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step < config.steps) {
      fs::create_directories(step_checkpoint_path(config, step).parent_path());
      save_checkpoint(step_checkpoint_path(config, step), params, &opt);
    }
  }
  queue.close();
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
  log.flush();
  result.checkpoint = checkpoint_path(config);
  save_checkpoint(result.checkpoint, params, &opt);
  if (config.checkpoint_every > 0 && opt.step > 0) {
    fs::create_directories(step_checkpoint_path(config, opt.step).parent_path());
    save_checkpoint(step_checkpoint_path(config, opt.step), params, &opt);
  }
  return result;
}

// Body tokens between the forced prefix and <|endoftext|>.
TokenSequence body_of(const TokenSequence& out, std::size_t prefix, TokenId eot) {
  TokenSequence body;
  for (std::size_t i = prefix; i < out.size() && out[i] != eot; ++i) body.push_back(out[i]);
  return body;
}

std::string text_of(const TokenSequence& body, const Vocabulary& vocab) {
  TokenSequence text;
  for (TokenId t : body) {
    if (vocab.is_text(t)) text.push_back(t);
  }
  return vocab.detokenize(text);
}

std::string timed_words(const TimedTranscript& t) {
  std::vector<std::string> words;
  for (const auto& w : t.words) words.push_back(w.word);
  return text::join_words(words);
}

enum class MetricKind { Wer, Alignment, Bleu, Accuracy };

MetricKind metric_for(TaskCode code) {
  switch (code) {
    case TaskCode::ASR:
    case TaskCode::OSR:
    case TaskCode::DialectASR: return MetricKind::Wer;
    case TaskCode::SRWT: return MetricKind::Alignment;
    case TaskCode::S2TT: return MetricKind::Bleu;
    default: return MetricKind::Accuracy;
  }
}

struct Decoded {
  std::string id;
  ManifestRecord record;
  TokenSequence body;
  // Closed-set pick among the dataset's labels (accuracy tasks only).
  std::optional<std::string> chosen;
};

EvalReport make_report(const std::string& task, MetricKind kind, const std::vector<Decoded>& items,
                       const Vocabulary& vocab) {
  EvalReport r;
  r.task = task;
  r.support = items.size();
  std::vector<std::string> hyps, refs;
  for (const auto& d : items) {
    hyps.push_back(text_of(d.body, vocab));
    refs.push_back(d.record.target);
  }
  switch (kind) {
    case MetricKind::Wer: {
      r.metric = "wer";
      std::size_t errors = 0, ref_words = 0;
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto h = wer_words(hyps[i]);
        const auto ref = wer_words(refs[i]);
        const EditCounts c = edit_counts(h, ref);
        errors += c.errors();
        ref_words += c.ref_words;
        r.items.push_back({items[i].id, hyps[i], refs[i],
                           c.ref_words ? static_cast<double>(c.errors()) / c.ref_words : 0.0});
      }
      if (ref_words == 0) throw Error(ErrorCode::Undefined, task + ": references have no words");
      r.value = static_cast<double>(errors) / static_cast<double>(ref_words);
      break;
    }
    case MetricKind::Alignment: {
      r.metric = "alignment_ms";
      double total_ms = 0.0;
      std::size_t matched = 0, insertions = 0, deletions = 0, malformed = 0, errors = 0, ref_words = 0;
      for (std::size_t i = 0; i < items.size(); ++i) {
        TimedTranscript pred;
        try {
          pred = decode_timed(items[i].body, vocab);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::MalformedSrwt) throw;
          ++malformed;
        }
        const TimedTranscript& ref = *items[i].record.timed_target;
        const std::string hyp_text = timed_words(pred);
        const EditCounts c = edit_counts(wer_words(hyp_text), wer_words(items[i].record.target));
        errors += c.errors();
        ref_words += c.ref_words;
        double item_ms = std::numeric_limits<double>::quiet_NaN();
        try {
          const AlignmentScore s = alignment_score(pred, ref);
          total_ms += s.mean_ms * static_cast<double>(s.matched);
          matched += s.matched;
          insertions += s.insertions;
          deletions += s.deletions;
          item_ms = s.mean_ms;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ScoreUndefined) throw;
          deletions += ref.words.size();
          insertions += pred.words.size();
        }
        r.items.push_back({items[i].id, hyp_text, items[i].record.target, item_ms});
      }
      r.value = matched ? total_ms / static_cast<double>(matched)
                        : std::numeric_limits<double>::quiet_NaN();
      r.extra = {{"matched", matched},
                 {"insertions", insertions},
                 {"deletions", deletions},
                 {"malformed", malformed},
                 {"wer", ref_words ? static_cast<double>(errors) / ref_words : 0.0}};
      break;
    }
    case MetricKind::Bleu: {
      r.metric = "bleu";
      try {
        r.value = bleu(hyps, refs);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Undefined) throw;
        r.value = 0.0;
        r.extra = {{"note", e.detail()}};
      }
      for (std::size_t i = 0; i < items.size(); ++i) r.items.push_back({items[i].id, hyps[i], refs[i], 0.0});
      break;
    }
    case MetricKind::Accuracy: {
      r.metric = "accuracy";
      std::vector<std::string> picks;
      for (std::size_t i = 0; i < items.size(); ++i) picks.push_back(items[i].chosen.value_or(hyps[i]));
      r.value = accuracy(picks, refs);
      r.extra = {{"free_decode_accuracy", accuracy(hyps, refs)}};
      for (std::size_t i = 0; i < items.size(); ++i) {
        r.items.push_back({items[i].id, picks[i], refs[i],
                           accuracy(std::span(&picks[i], 1), std::span(&refs[i], 1))});
      }
      break;
    }
  }
  return r;
}

// Label with the highest summed log-likelihood after the prompt; ties go to
// the first label in sorted order.
template <typename S>
std::string pick_label(const MelSpectrogram& mel, const TokenSequence& prompt,
                       const std::set<std::string>& labels, const Parameters<S>& params,
                       const Vocabulary& vocab) {
  std::string best;
  double best_nll = std::numeric_limits<double>::infinity();
  for (const auto& label : labels) {
    TrainingExample ex;
    ex.features = mel;
    ex.tokens = prompt;
    const auto body = vocab.tokenize(label);
    ex.tokens.insert(ex.tokens.end(), body.begin(), body.end());
    ex.tokens.push_back(vocab.tag(SpecialTag::EndOfText));
    ex.loss_mask.assign(ex.tokens.size(), 0);
    std::fill(ex.loss_mask.begin() + static_cast<std::ptrdiff_t>(prompt.size()), ex.loss_mask.end(), 1);
    const double nll = loss(ex, params) * static_cast<double>(body.size() + 1);
    if (nll < best_nll) {
      best_nll = nll;
      best = label;
    }
  }
  return best;
}

template <typename S>
std::vector<EvalReport> eval_impl(const RunConfig& config, const fs::path& ckpt) {
  const Vocabulary vocab = load_vocab(config);
  const Checkpoint<S> ck = load_checkpoint<S>(ckpt);
  if (ck.params.config.vocab_size != static_cast<int>(vocab.size())) {
    throw Error(ErrorCode::VocabMismatch, "checkpoint vocabulary size differs from vocab.txt");
  }
  const TokenId eot = vocab.tag(SpecialTag::EndOfText);
  const auto datasets = config.eval.datasets.empty() ? source_ids(config) : config.eval.datasets;
  FeatureCache features;
  std::vector<EvalReport> reports;
  for (const auto& id : datasets) {
    std::size_t limit = config.eval.max_items;
    if (config.eval.split == config.train_split) {
      const std::size_t tl = train_limit_for(config, id);
      if (tl > 0) limit = limit > 0 ? std::min(limit, tl) : tl;
    }
    const auto records = load_records(config, id, config.eval.split, limit);
    if (records.empty()) {
      throw Error(ErrorCode::Undefined, "eval manifest for " + id + " has no records");
    }
    std::set<std::string> labels;
    for (const auto& rec : records) {
      if (metric_for(rec.task_type) == MetricKind::Accuracy) labels.insert(rec.target);
    }
    std::map<TaskCode, std::vector<Decoded>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      const TokenSequence prompt = decode_prompt(rec, vocab, config.header_mode);
      const MelSpectrogram& mel = features.get(rec.audio_path);
      const TokenSequence out =
          config.header_mode == HeaderMode::Full
              ? greedy_decode(mel, prompt, ck.params, config.eval.max_decode_len, vocab)
              : greedy_decode_prefix(mel, prompt, ck.params, config.eval.max_decode_len, eot);
      Decoded d{rec.audio_path.filename().string(), rec, body_of(out, prompt.size(), eot), {}};
      if (metric_for(rec.task_type) == MetricKind::Accuracy) {
        d.chosen = pick_label(mel, prompt, labels, ck.params, vocab);
      }
      groups[rec.task_type].push_back(std::move(d));
    }
    for (const auto& [code, items] : groups) {
      const std::string task = groups.size() == 1 ? id : id + "/" + std::string(to_string(code));
      reports.push_back(make_report(task, metric_for(code), items, vocab));
    }
  }
  json all = json::array();
  for (const auto& r : reports) all.push_back(to_json(r, true));
  fs::create_directories(config.run_dir);
  std::ofstream(config.run_dir / ("eval_" + config.eval.split + ".json")) << all.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
  std::ofstream table(config.run_dir / ("eval_" + config.eval.split + ".txt"));
  write_table(table, reports);
  return reports;
}

template <typename S>
DecodeResult decode_impl(const RunConfig& config, const DecodeRequest& req, const fs::path& ckpt) {
  const Vocabulary vocab = load_vocab(config);
  const Checkpoint<S> ck = load_checkpoint<S>(ckpt);
  ManifestRecord rec;
  rec.audio_path = req.audio;
  rec.task_type = req.task;
  rec.audio_language = req.audio_language;
  rec.text_language = req.text_language;
  rec.question = req.question;
  const TokenSequence prompt = decode_prompt(rec, vocab, config.header_mode);
  const MelSpectrogram mel = log_mel(load_audio(req.audio));
  const TokenId eot = vocab.tag(SpecialTag::EndOfText);
  DecodeResult r;
  r.tokens = config.header_mode == HeaderMode::Full
                 ? greedy_decode(mel, prompt, ck.params, req.max_len, vocab)
                 : greedy_decode_prefix(mel, prompt, ck.params, req.max_len, eot);
  const TokenSequence body = body_of(r.tokens, prompt.size(), eot);
  if (req.task == TaskCode::SRWT) {
    r.timed = decode_timed(body, vocab);
    r.text = timed_words(*r.timed);
  } else {
    r.text = text_of(body, vocab);
  }
  return r;
}

fs::path default_checkpoint(const RunConfig& config, const std::optional<fs::path>& ckpt) {
  const fs::path p = ckpt ? *ckpt : checkpoint_path(config);
  if (!fs::exists(p)) throw Error(ErrorCode::CheckpointNotFound, p.string());
  return p;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const EvalReport* find_report(const std::vector<EvalReport>& reports, std::string_view task) {
  for (const auto& r : reports) {
    if (r.task == task) return &r;
  }
  return nullptr;
}

}  // namespace

TrainResult cmd_train(const RunConfig& config, const std::optional<fs::path>& resume) {
  return config.precision == Precision::Float64 ? train_impl<double>(config, resume)
                                                : train_impl<float>(config, resume);
}

std::vector<EvalReport> cmd_eval(const RunConfig& config, const std::optional<fs::path>& checkpoint) {
  const fs::path p = default_checkpoint(config, checkpoint);
  return config.precision == Precision::Float64 ? eval_impl<double>(config, p)
                                                : eval_impl<float>(config, p);
}

DecodeResult cmd_decode(const RunConfig& config, const DecodeRequest& request,
                        const std::optional<fs::path>& checkpoint) {
  const fs::path p = default_checkpoint(config, checkpoint);
  return config.precision == Precision::Float64 ? decode_impl<double>(config, request, p)
                                                : decode_impl<float>(config, request, p);
}

AblationReport cmd_ablate(const RunConfig& config) {
  const Vocabulary vocab = load_vocab(config);
  const std::string asr = synth::dataset_id(synth::ToyTask::ToyASR);
  const std::string srwt = synth::dataset_id(synth::ToyTask::ToySRWT);
  const std::string conflict = synth::dataset_id(synth::ToyTask::ToyConflict);
  const std::vector<std::string> all_tasks = {
      asr, srwt, synth::dataset_id(synth::ToyTask::ToyClassify),
      synth::dataset_id(synth::ToyTask::ToyTranslate)};
  if (config.ablation.seeds.empty()) throw Error(ErrorCode::InvalidConfig, "ablation needs a seed");

  auto weight_of = [&](const std::string& id) {
    for (const auto& s : config.mix.sources) {
      if (s.id == id) return s.weight;
    }
    return 1.0;
  };

  AblationReport report;
  for (const auto& arm : config.ablation.arms) {
    std::vector<std::string> datasets;
    HeaderMode mode = HeaderMode::Full;
    if (arm == "A") {
      datasets = all_tasks;
    } else if (arm == "B") {
      for (const auto& id : all_tasks) {
        if (id != srwt) datasets.push_back(id);
      }
    } else if (arm == "C" || arm == "D") {
      datasets = {conflict};
      if (arm == "D") mode = HeaderMode::Unconditioned;
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown ablation arm " + arm);
    }
    const bool per_seed = arm == "A" || arm == "B";
    const std::size_t n_seeds = per_seed ? config.ablation.seeds.size() : 1;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      RunConfig sub = config;
      sub.seed = config.ablation.seeds[k];
      sub.steps = config.ablation.steps;
      sub.lr.total = config.ablation.steps;
      sub.checkpoint_every = 0;
      sub.header_mode = mode;
      sub.stage = TrainStage::Joint;
      sub.train_limit.clear();
      sub.mix.sources.clear();
      for (const auto& id : datasets) sub.mix.sources.push_back({id, weight_of(id)});
      sub.run_dir = config.run_dir / "ablate" / (arm + "_seed" + std::to_string(sub.seed));
      sub.eval.split = "heldout";
      sub.eval.datasets = arm == "A" ? std::vector<std::string>{asr, srwt}
                          : arm == "B" ? std::vector<std::string>{asr}
                                       : std::vector<std::string>{conflict};
      fs::remove_all(sub.run_dir);
      fs::create_directories(sub.run_dir);
      vocab.save(vocab_path(sub));
      cmd_train(sub);
      report.runs.push_back({arm, sub.seed, cmd_eval(sub)});
    }
  }

  json runs = json::array();
  std::vector<double> wer_a, wer_b, align_a;
  std::optional<double> c_caption, c_analysis, d_caption, d_analysis;
  const std::string caption = conflict + "/" + std::string(to_string(synth::kConflictCaptionCode));
  const std::string analysis = conflict + "/" + std::string(to_string(synth::kConflictAnalysisCode));
  for (const auto& run : report.runs) {
    json metrics = json::object();
    for (const auto& r : run.reports) metrics[r.task] = {{"metric", r.metric}, {"value", r.value}};
    runs.push_back({{"arm", run.arm}, {"seed", run.seed}, {"metrics", metrics}});
    const EvalReport* w = find_report(run.reports, asr);
    if (run.arm == "A") {
      if (w) wer_a.push_back(w->value);
      if (const EvalReport* s = find_report(run.reports, srwt)) align_a.push_back(s->value);
    } else if (run.arm == "B") {
      if (w) wer_b.push_back(w->value);
    } else {
      const EvalReport* cap = find_report(run.reports, caption);
      const EvalReport* ana = find_report(run.reports, analysis);
      auto& dst_cap = run.arm == "C" ? c_caption : d_caption;
      auto& dst_ana = run.arm == "C" ? c_analysis : d_analysis;
      if (cap) dst_cap = cap->value;
      if (ana) dst_ana = ana->value;
    }
  }
  json summary = {{"runs", runs}};
  if (!wer_a.empty()) {
    summary["A"] = {{"asr_wer", wer_a}, {"asr_wer_median", median(wer_a)},
                    {"srwt_alignment_ms", align_a}, {"srwt_alignment_ms_median", median(align_a)}};
  }
  if (!wer_b.empty()) summary["B"] = {{"asr_wer", wer_b}, {"asr_wer_median", median(wer_b)}};
  auto conflict_json = [](std::optional<double> cap, std::optional<double> ana) {
    json j = json::object();
    if (cap) j["caption_accuracy"] = *cap;
    if (ana) j["analysis_accuracy"] = *ana;
    if (cap && ana) j["mean_accuracy"] = 0.5 * (*cap + *ana);
    return j;
  };
  if (c_caption || c_analysis) summary["C"] = conflict_json(c_caption, c_analysis);
  if (d_caption || d_analysis) summary["D"] = conflict_json(d_caption, d_analysis);
  report.summary = summary;

  std::ofstream(config.run_dir / "ablation.json") << summary.dump(2) << '\n';
  std::ofstream table(config.run_dir / "ablation.txt");
  table << "arm  seed  task                 metric        value\n";
  for (const auto& run : report.runs) {
    for (const auto& r : run.reports) {
      char line[160];
      std::snprintf(line, sizeof line, "%-4s %5llu  %-20s %-12s %8.4f\n", run.arm.c_str(),
                    static_cast<unsigned long long>(run.seed), r.task.c_str(), r.metric.c_str(),
                    r.value);
      table << line;
    }
  }
  if (!wer_a.empty() && !wer_b.empty()) {
    table << "median toy_asr wer: A " << median(wer_a) << "  B " << median(wer_b) << '\n';
  }
  if (!align_a.empty()) table << "median toy_srwt alignment_ms (A): " << median(align_a) << '\n';
  return report;
}

json inspect_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::CheckpointNotFound, path.string());
  const Checkpoint<double> ck = load_checkpoint<double>(path);
  const ModelConfig& m = ck.params.config;
  char enc[17], dec[17];
  std::snprintf(enc, sizeof enc, "%016llx",
                static_cast<unsigned long long>(block_hash(ck.params, ParamBlock::Encoder)));
  std::snprintf(dec, sizeof dec, "%016llx",
                static_cast<unsigned long long>(block_hash(ck.params, ParamBlock::Decoder)));
  json j = model_to_json(m);
  j["vocab_size"] = m.vocab_size;
  j["seed"] = m.seed;
  return {{"model", j},
          {"tensors", ck.params.tensors.size()},
          {"encoder_params", ck.params.scalar_count(ParamBlock::Encoder)},
          {"decoder_params", ck.params.scalar_count(ParamBlock::Decoder)},
          {"encoder_hash", enc},
          {"decoder_hash", dec},
          {"optimizer_step", ck.optimizer ? json(ck.optimizer->step) : json(nullptr)}};
}

}  // namespace audiomt::harness
