#include "audiomt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "audiomt/error.hpp"

namespace audiomt {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

constexpr char kMagic[8] = {'A', 'U', 'D', 'I', 'O', 'M', 'T', '\0'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    if (n > data_.size() - pos_) throw Error(ErrorCode::MalformedCheckpoint, "truncated", pos_);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const ModelConfig& config,
                           const std::vector<NamedTensor>& tensors) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    Writer w(out);
    w.bytes(kMagic, sizeof kMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    for (int v : {config.d_model, config.n_heads, config.n_encoder_layers, config.n_decoder_layers,
                  config.ff_multiplier, config.vocab_size, config.max_audio_frames,
                  config.max_text_len}) {
      w.put<std::int32_t>(v);
    }
    w.put<std::uint64_t>(config.seed);
    w.put<std::uint64_t>(tensors.size());
    for (const auto& t : tensors) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
      w.bytes(t.name.data(), t.name.size());
      w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
      for (auto d : t.shape) w.put<std::uint64_t>(d);
      w.bytes(t.values.data(), t.values.size() * sizeof(double));
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::CheckpointNotFound, path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::MalformedCheckpoint, "bad magic", 0);
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::MalformedCheckpoint, "unsupported version " + std::to_string(version), 8);
  }
  CheckpointFile f;
  for (int* field : {&f.config.d_model, &f.config.n_heads, &f.config.n_encoder_layers,
                     &f.config.n_decoder_layers, &f.config.ff_multiplier, &f.config.vocab_size,
                     &f.config.max_audio_frames, &f.config.max_text_len}) {
    *field = r.get<std::int32_t>();
  }
  f.config.seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > r.remaining()) throw Error(ErrorCode::MalformedCheckpoint, "name length", r.pos());
    t.name.resize(name_len);
    r.bytes(t.name.data(), name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorCode::MalformedCheckpoint, "rank " + std::to_string(rank), r.pos());
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.get<std::uint64_t>());
      if (t.shape.back() != 0 && n > r.remaining() / t.shape.back()) {
        throw Error(ErrorCode::MalformedCheckpoint, "tensor size", r.pos());
      }
      n *= t.shape.back();
    }
    if (n > r.remaining() / sizeof(double)) {
      throw Error(ErrorCode::MalformedCheckpoint, "truncated tensor " + t.name, r.pos());
    }
    t.values.resize(n);
    r.bytes(t.values.data(), n * sizeof(double));
    f.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw Error(ErrorCode::MalformedCheckpoint, "trailing bytes", r.pos());
  return f;
}

namespace {

template <typename S>
NamedTensor to_named(const std::string& name, const Matrix<S>& m) {
  NamedTensor t;
  t.name = name;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.values.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) t.values[i] = static_cast<double>(m.data()[i]);
  return t;
}

template <typename S>
void fill(Matrix<S>& m, const NamedTensor& t) {
  if (t.shape.size() != 2 || t.shape[0] != static_cast<std::uint64_t>(m.rows()) ||
      t.shape[1] != static_cast<std::uint64_t>(m.cols())) {
    throw Error(ErrorCode::MalformedCheckpoint, "shape mismatch for " + t.name);
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(t.values[i]);
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Parameters<S>& params,
                     const OptimizerState<S>* optimizer) {
  std::vector<NamedTensor> tensors;
  for (const auto& t : params.tensors) tensors.push_back(to_named(t.name, t.value));
  if (optimizer != nullptr) {
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
      tensors.push_back(to_named("opt.m." + params.tensors[i].name, optimizer->m[i]));
      tensors.push_back(to_named("opt.v." + params.tensors[i].name, optimizer->v[i]));
    }
    tensors.push_back({"opt.step", {1, 1}, {static_cast<double>(optimizer->step)}});
  }
  write_checkpoint_file(path, params.config, tensors);
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path, AdamWConfig hp) {
  CheckpointFile f = read_checkpoint_file(path);
  try {
    f.config.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedCheckpoint, e.detail());
  }
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : f.tensors) {
    if (!by_name.emplace(t.name, &t).second) {
      throw Error(ErrorCode::MalformedCheckpoint, "duplicate tensor " + t.name);
    }
  }
  auto need = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::MalformedCheckpoint, "missing tensor " + name);
    return *it->second;
  };
  Checkpoint<S> ck;
  ck.params = init_parameters<S>(f.config);
  for (auto& t : ck.params.tensors) fill(t.value, need(t.name));
  std::size_t expected = ck.params.tensors.size();
  if (by_name.contains("opt.step")) {
    auto opt = OptimizerState<S>::init(ck.params, hp);
    for (std::size_t i = 0; i < ck.params.tensors.size(); ++i) {
      fill(opt.m[i], need("opt.m." + ck.params.tensors[i].name));
      fill(opt.v[i], need("opt.v." + ck.params.tensors[i].name));
    }
    const auto& st = need("opt.step");
    if (st.values.size() != 1) throw Error(ErrorCode::MalformedCheckpoint, "opt.step shape");
    opt.step = static_cast<std::int64_t>(st.values[0]);
    ck.optimizer = std::move(opt);
    expected += 2 * ck.params.tensors.size() + 1;
  }
  if (expected != f.tensors.size()) {
    throw Error(ErrorCode::MalformedCheckpoint, "unexpected extra tensors");
  }
  return ck;
}

template void save_checkpoint<double>(const std::filesystem::path&, const Parameters<double>&,
                                      const OptimizerState<double>*);
template void save_checkpoint<float>(const std::filesystem::path&, const Parameters<float>&,
                                     const OptimizerState<float>*);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&, AdamWConfig);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&, AdamWConfig);

}  // namespace audiomt
