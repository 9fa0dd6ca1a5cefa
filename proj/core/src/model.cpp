#include "audiomt/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "audiomt/error.hpp"
#include "audiomt/random.hpp"
#include "audiomt/tag_grammar.hpp"

namespace audiomt {

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
  };
  require(d_model > 0 && n_heads > 0 && n_encoder_layers > 0 && n_decoder_layers > 0 &&
              ff_multiplier > 0 && vocab_size > 0 && max_audio_frames > 0 && max_text_len > 0,
          "model sizes must be positive");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
}

namespace {

template <typename S>
using Mat = Matrix<S>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct Lin {
  std::size_t w = 0, b = 0;
};
struct Norm {
  std::size_t g = 0, b = 0;
};
struct Attn {
  Lin q, k, v, o;
};
struct Ff {
  Lin up, down;
};
struct EncLayer {
  Norm ln1;
  Attn attn;
  Norm ln2;
  Ff ff;
};
struct DecLayer {
  Norm ln1;
  Attn self;
  Norm ln2;
  Attn cross;
  Norm ln3;
  Ff ff;
};

enum class Init { Normal, Zero, One };

struct TensorSpec {
  std::string name;
  ParamBlock block;
  int rows, cols;
  Init init;
  double stddev;
};

struct Layout {
  Lin conv1, conv2;
  std::vector<EncLayer> enc;
  Norm enc_ln;
  std::size_t embed = 0;
  std::vector<DecLayer> dec;
  Norm dec_ln;
  Lin out;
  std::vector<TensorSpec> specs;
};

class LayoutBuilder {
 public:
  explicit LayoutBuilder(std::vector<TensorSpec>& specs) : specs_(specs) {}

  std::size_t add(std::string name, ParamBlock block, int rows, int cols, Init init,
                  double stddev = 0.0) {
    specs_.push_back({std::move(name), block, rows, cols, init, stddev});
    return specs_.size() - 1;
  }
  Lin linear(const std::string& name, ParamBlock block, int in, int out) {
    Lin l;
    l.w = add(name + ".weight", block, in, out, Init::Normal, 1.0 / std::sqrt(in));
    l.b = add(name + ".bias", block, 1, out, Init::Zero);
    return l;
  }
  Norm norm(const std::string& name, ParamBlock block, int d) {
    Norm n;
    n.g = add(name + ".gain", block, 1, d, Init::One);
    n.b = add(name + ".bias", block, 1, d, Init::Zero);
    return n;
  }
  Attn attention(const std::string& name, ParamBlock block, int d) {
    return {linear(name + ".q", block, d, d), linear(name + ".k", block, d, d),
            linear(name + ".v", block, d, d), linear(name + ".o", block, d, d)};
  }
  Ff feed_forward(const std::string& name, ParamBlock block, int d, int hidden) {
    return {linear(name + ".up", block, d, hidden), linear(name + ".down", block, hidden, d)};
  }

 private:
  std::vector<TensorSpec>& specs_;
};

Layout build_layout(const ModelConfig& c) {
  Layout lay;
  LayoutBuilder b(lay.specs);
  const int d = c.d_model;
  const int hidden = d * c.ff_multiplier;
  const auto E = ParamBlock::Encoder;
  const auto D = ParamBlock::Decoder;
  lay.conv1 = b.linear("encoder.conv1", E, 3 * kMelChannels, d);
  lay.conv2 = b.linear("encoder.conv2", E, 3 * d, d);
  for (int i = 0; i < c.n_encoder_layers; ++i) {
    const std::string p = "encoder.layers." + std::to_string(i);
    EncLayer l;
    l.ln1 = b.norm(p + ".ln1", E, d);
    l.attn = b.attention(p + ".attn", E, d);
    l.ln2 = b.norm(p + ".ln2", E, d);
    l.ff = b.feed_forward(p + ".ff", E, d, hidden);
    lay.enc.push_back(l);
  }
  lay.enc_ln = b.norm("encoder.ln_post", E, d);
  lay.embed = b.add("decoder.embed.weight", D, c.vocab_size, d, Init::Normal, 1.0);
  for (int i = 0; i < c.n_decoder_layers; ++i) {
    const std::string p = "decoder.layers." + std::to_string(i);
    DecLayer l;
    l.ln1 = b.norm(p + ".ln1", D, d);
    l.self = b.attention(p + ".self_attn", D, d);
    l.ln2 = b.norm(p + ".ln2", D, d);
    l.cross = b.attention(p + ".cross_attn", D, d);
    l.ln3 = b.norm(p + ".ln3", D, d);
    l.ff = b.feed_forward(p + ".ff", D, d, hidden);
    lay.dec.push_back(l);
  }
  lay.dec_ln = b.norm("decoder.ln", D, d);
  lay.out = b.linear("decoder.out", D, d, c.vocab_size);
  return lay;
}

// Cached per config; layouts are small.
const Layout& layout_for(const ModelConfig& c) {
  thread_local ModelConfig cached_config{};
  thread_local Layout cached;
  thread_local bool valid = false;
  if (!valid || !(cached_config == c)) {
    cached = build_layout(c);
    cached_config = c;
    valid = true;
  }
  return cached;
}

template <typename S>
Mat<S> sinusoids(Eigen::Index length, int d) {
  Mat<S> pos(length, d);
  const int half = d / 2;
  const double step = half > 1 ? std::log(10000.0) / (half - 1) : 0.0;
  for (Eigen::Index t = 0; t < length; ++t) {
    for (int i = 0; i < d; ++i) {
      const double freq = std::exp(-step * (i % half));
      const double angle = static_cast<double>(t) * freq;
      pos(t, i) = static_cast<S>(i < half ? std::sin(angle) : std::cos(angle));
    }
  }
  return pos;
}

template <typename S>
const Mat<S>& positions(Eigen::Index length, int d) {
  thread_local Mat<S> table;
  if (table.rows() < length || table.cols() != d) {
    table = sinusoids<S>(std::max<Eigen::Index>(length, 64), d);
  }
  return table;
}

// Gradient destination that ignores out-of-scope blocks.
template <typename S>
struct Sink {
  Parameters<S>* grads = nullptr;
  GradientScope scope;

  Mat<S>* get(std::size_t i) const {
    if (grads == nullptr) return nullptr;
    auto& t = grads->tensors[i];
    const bool on = t.block == ParamBlock::Encoder ? scope.encoder : scope.decoder;
    return on ? &t.value : nullptr;
  }
};

template <typename S>
struct Ctx {
  const Parameters<S>& params;
  const Layout& lay;
  const Mat<S>& operator[](std::size_t i) const { return params.tensors[i].value; }
};

template <typename S>
Mat<S> linear_fwd(const Ctx<S>& P, const Mat<S>& x, const Lin& l) {
  Mat<S> y(x.rows(), P[l.w].cols());
  y.noalias() = x * P[l.w];
  y.rowwise() += P[l.b].row(0);
  return y;
}

template <typename S>
Mat<S> linear_bwd(const Ctx<S>& P, const Mat<S>& x, const Mat<S>& dy, const Lin& l,
                  const Sink<S>& sink, bool need_dx = true) {
  if (auto* gw = sink.get(l.w)) gw->noalias() += x.transpose() * dy;
  if (auto* gb = sink.get(l.b)) *gb += dy.colwise().sum();
  if (!need_dx) return {};
  Mat<S> dx(dy.rows(), P[l.w].rows());
  dx.noalias() = dy * P[l.w].transpose();
  return dx;
}

constexpr double kNormEps = 1e-5;

template <typename S>
struct NormCache {
  Mat<S> xhat;
  Vec<S> rstd;
};

template <typename S>
Mat<S> norm_fwd(const Ctx<S>& P, const Mat<S>& x, const Norm& n, NormCache<S>& c) {
  const auto d = x.cols();
  Vec<S> mean = x.rowwise().mean();
  c.xhat = x.colwise() - mean;
  Vec<S> var = c.xhat.rowwise().squaredNorm() / static_cast<S>(d);
  c.rstd = (var.array() + static_cast<S>(kNormEps)).rsqrt();
  c.xhat = c.xhat.array().colwise() * c.rstd.array();
  Mat<S> y = c.xhat.array().rowwise() * P[n.g].row(0).array();
  y.rowwise() += P[n.b].row(0);
  return y;
}

template <typename S>
Mat<S> norm_bwd(const Ctx<S>& P, const Mat<S>& dy, const Norm& n, const NormCache<S>& c,
                const Sink<S>& sink) {
  if (auto* gg = sink.get(n.g)) *gg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  if (auto* gb = sink.get(n.b)) *gb += dy.colwise().sum();
  const auto d = static_cast<S>(dy.cols());
  Mat<S> g = dy.array().rowwise() * P[n.g].row(0).array();
  Vec<S> mean_g = g.rowwise().sum() / d;
  Vec<S> mean_gx = (g.array() * c.xhat.array()).rowwise().sum().matrix() / d;
  Mat<S> dx = (g.colwise() - mean_g).array() - c.xhat.array().colwise() * mean_gx.array();
  return dx.array().colwise() * c.rstd.array();
}

template <typename S>
S gelu(S x) {
  return static_cast<S>(0.5) * x * (1 + std::erf(x * static_cast<S>(std::numbers::sqrt2 / 2)));
}

template <typename S>
S gelu_grad(S x) {
  const S cdf = static_cast<S>(0.5) * (1 + std::erf(x * static_cast<S>(std::numbers::sqrt2 / 2)));
  const S pdf = std::exp(-x * x / 2) * static_cast<S>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename S>
struct FfCache {
  Mat<S> x, pre, act;
};

template <typename S>
Mat<S> ff_fwd(const Ctx<S>& P, const Mat<S>& x, const Ff& f, FfCache<S>& c) {
  c.x = x;
  c.pre = linear_fwd(P, x, f.up);
  c.act = c.pre.unaryExpr([](S v) { return gelu(v); });
  return linear_fwd(P, c.act, f.down);
}

template <typename S>
Mat<S> ff_bwd(const Ctx<S>& P, const Mat<S>& dy, const Ff& f, const FfCache<S>& c,
              const Sink<S>& sink) {
  Mat<S> dact = linear_bwd(P, c.act, dy, f.down, sink);
  Mat<S> dpre = dact.array() * c.pre.unaryExpr([](S v) { return gelu_grad(v); }).array();
  return linear_bwd(P, c.x, dpre, f.up, sink);
}

template <typename S>
void softmax_rows(Mat<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    row /= row.sum();
  }
}

template <typename S>
struct AttnCache {
  Mat<S> xq, xkv, q, k, v, concat;
  std::vector<Mat<S>> probs;
};

template <typename S>
Mat<S> attn_fwd(const Ctx<S>& P, const Mat<S>& xq, const Mat<S>& xkv, bool causal,
                const Attn& a, AttnCache<S>& c) {
  const int heads = P.params.config.n_heads;
  const auto d = xq.cols();
  const auto dh = d / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  c.xq = xq;
  c.xkv = xkv;
  c.q = linear_fwd(P, xq, a.q);
  c.k = linear_fwd(P, xkv, a.k);
  c.v = linear_fwd(P, xkv, a.v);
  c.concat.resize(xq.rows(), d);
  c.probs.resize(heads);
  for (int h = 0; h < heads; ++h) {
    Mat<S> s(xq.rows(), xkv.rows());
    s.noalias() = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose();
    s *= scale;
    if (causal) {
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < s.cols(); ++j) {
          s(i, j) = -std::numeric_limits<S>::infinity();
        }
      }
    }
    softmax_rows(s);
    c.concat.middleCols(h * dh, dh).noalias() = s * c.v.middleCols(h * dh, dh);
    c.probs[h] = std::move(s);
  }
  return linear_fwd(P, c.concat, a.o);
}

// Returns dxq; adds the key/value-side gradient into *dxkv when given.
template <typename S>
Mat<S> attn_bwd(const Ctx<S>& P, const Mat<S>& dy, const Attn& a, const AttnCache<S>& c,
                const Sink<S>& sink, Mat<S>* dxkv) {
  const int heads = P.params.config.n_heads;
  const auto d = c.xq.cols();
  const auto dh = d / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  Mat<S> dconcat = linear_bwd(P, c.concat, dy, a.o, sink);
  Mat<S> dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Mat<S>& p = c.probs[h];
    auto d_out = dconcat.middleCols(h * dh, dh);
    Mat<S> dp(p.rows(), p.cols());
    dp.noalias() = d_out * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * d_out;
    Vec<S> row_dot = (dp.array() * p.array()).rowwise().sum();
    Mat<S> ds = p.array() * (dp.colwise() - row_dot).array();
    ds *= scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  Mat<S> dxq = linear_bwd(P, c.xq, dq, a.q, sink);
  const bool need = dxkv != nullptr;
  Mat<S> from_k = linear_bwd(P, c.xkv, dk, a.k, sink, need);
  Mat<S> from_v = linear_bwd(P, c.xkv, dv, a.v, sink, need);
  if (need) {
    *dxkv += from_k;
    *dxkv += from_v;
  }
  return dxq;
}

// Kernel 3, padding 1: row t gathers input rows t*stride-1 .. t*stride+1.
template <typename S>
Mat<S> im2col(const Mat<S>& x, int stride) {
  const auto rows = x.rows();
  const auto ch = x.cols();
  const auto out_rows = (rows - 1) / stride + 1;
  Mat<S> cols = Mat<S>::Zero(out_rows, 3 * ch);
  for (Eigen::Index t = 0; t < out_rows; ++t) {
    for (int k = 0; k < 3; ++k) {
      const auto src = t * stride + k - 1;
      if (src >= 0 && src < rows) cols.block(t, k * ch, 1, ch) = x.row(src);
    }
  }
  return cols;
}

template <typename S>
Mat<S> col2im(const Mat<S>& dcols, Eigen::Index rows, Eigen::Index ch, int stride) {
  Mat<S> dx = Mat<S>::Zero(rows, ch);
  for (Eigen::Index t = 0; t < dcols.rows(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const auto src = t * stride + k - 1;
      if (src >= 0 && src < rows) dx.row(src) += dcols.block(t, k * ch, 1, ch);
    }
  }
  return dx;
}

template <typename S>
struct EncLayerCache {
  NormCache<S> ln1, ln2;
  AttnCache<S> attn;
  FfCache<S> ff;
};

template <typename S>
struct EncoderCache {
  Mat<S> cols1, pre1, cols2, pre2;
  Eigen::Index frames = 0, mid = 0;
  std::vector<EncLayerCache<S>> layers;
  NormCache<S> ln_post;
};

template <typename S>
Mat<S> encoder_fwd(const Ctx<S>& P, const MelSpectrogram& mel, EncoderCache<S>& c) {
  const auto& cfg = P.params.config;
  const auto frames = mel.frames();
  if (frames <= 0) throw Error(ErrorCode::EmptyAudio, "mel has no frames");
  if (frames > static_cast<Eigen::Index>(cfg.max_audio_frames) * kEncoderDownsample) {
    throw Error(ErrorCode::AudioTooLong,
                std::to_string(frames) + " frames exceed " +
                    std::to_string(cfg.max_audio_frames * kEncoderDownsample));
  }
  if (mel.values.cols() != kMelChannels) {
    throw Error(ErrorCode::InvalidConfig, "mel must have 80 channels");
  }
  const auto& L = P.lay;
  c.frames = frames;
  Mat<S> x = mel.values.template cast<S>();
  c.cols1 = im2col(x, 1);
  c.pre1 = linear_fwd(P, c.cols1, L.conv1);
  Mat<S> h1 = c.pre1.unaryExpr([](S v) { return gelu(v); });
  c.cols2 = im2col(h1, 2);
  c.pre2 = linear_fwd(P, c.cols2, L.conv2);
  Mat<S> h = c.pre2.unaryExpr([](S v) { return gelu(v); });
  c.mid = h.rows();
  h += positions<S>(h.rows(), cfg.d_model).topRows(h.rows());
  c.layers.resize(L.enc.size());
  for (std::size_t i = 0; i < L.enc.size(); ++i) {
    auto& lc = c.layers[i];
    const auto& l = L.enc[i];
    Mat<S> a = norm_fwd(P, h, l.ln1, lc.ln1);
    h += attn_fwd(P, a, a, false, l.attn, lc.attn);
    Mat<S> b = norm_fwd(P, h, l.ln2, lc.ln2);
    h += ff_fwd(P, b, l.ff, lc.ff);
  }
  // Average pooling, kernel 2 stride 2; a trailing odd frame passes through.
  const auto out_rows = (h.rows() + 1) / 2;
  Mat<S> pooled(out_rows, h.cols());
  for (Eigen::Index t = 0; t < out_rows; ++t) {
    if (2 * t + 1 < h.rows()) {
      pooled.row(t) = (h.row(2 * t) + h.row(2 * t + 1)) * static_cast<S>(0.5);
    } else {
      pooled.row(t) = h.row(2 * t);
    }
  }
  return norm_fwd(P, pooled, L.enc_ln, c.ln_post);
}

template <typename S>
void encoder_bwd(const Ctx<S>& P, const Mat<S>& dout, const EncoderCache<S>& c,
                 const Sink<S>& sink) {
  const auto& L = P.lay;
  Mat<S> dpooled = norm_bwd(P, dout, L.enc_ln, c.ln_post, sink);
  Mat<S> dh(c.mid, dpooled.cols());
  for (Eigen::Index t = 0; t < dpooled.rows(); ++t) {
    if (2 * t + 1 < c.mid) {
      dh.row(2 * t) = dpooled.row(t) * static_cast<S>(0.5);
      dh.row(2 * t + 1) = dpooled.row(t) * static_cast<S>(0.5);
    } else {
      dh.row(2 * t) = dpooled.row(t);
    }
  }
  for (std::size_t i = L.enc.size(); i-- > 0;) {
    const auto& lc = c.layers[i];
    const auto& l = L.enc[i];
    Mat<S> db = ff_bwd(P, dh, l.ff, lc.ff, sink);
    dh += norm_bwd(P, db, l.ln2, lc.ln2, sink);
    Mat<S> dkv = Mat<S>::Zero(dh.rows(), dh.cols());
    Mat<S> da = attn_bwd(P, dh, l.attn, lc.attn, sink, &dkv);
    da += dkv;
    dh += norm_bwd(P, da, l.ln1, lc.ln1, sink);
  }
  Mat<S> dpre2 = dh.array() * c.pre2.unaryExpr([](S v) { return gelu_grad(v); }).array();
  Mat<S> dcols2 = linear_bwd(P, c.cols2, dpre2, L.conv2, sink);
  Mat<S> dh1 = col2im(dcols2, c.frames, c.pre1.cols(), 2);
  Mat<S> dpre1 = dh1.array() * c.pre1.unaryExpr([](S v) { return gelu_grad(v); }).array();
  linear_bwd(P, c.cols1, dpre1, L.conv1, sink, false);
}

template <typename S>
struct DecLayerCache {
  NormCache<S> ln1, ln2, ln3;
  AttnCache<S> self, cross;
  FfCache<S> ff;
};

template <typename S>
struct DecoderCache {
  std::vector<DecLayerCache<S>> layers;
  NormCache<S> ln;
  Mat<S> normed;
};

// Returns the final normalized hidden states, one row per input token.
template <typename S>
Mat<S> decoder_fwd(const Ctx<S>& P, std::span<const TokenId> inputs, const Mat<S>& audio,
                   DecoderCache<S>& c) {
  const auto& cfg = P.params.config;
  const auto& L = P.lay;
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const Mat<S>& embed = P[L.embed];
  Mat<S> x(n, cfg.d_model);
  for (Eigen::Index t = 0; t < n; ++t) x.row(t) = embed.row(inputs[t]);
  x += positions<S>(n, cfg.d_model).topRows(n);
  c.layers.resize(L.dec.size());
  for (std::size_t i = 0; i < L.dec.size(); ++i) {
    auto& lc = c.layers[i];
    const auto& l = L.dec[i];
    Mat<S> a = norm_fwd(P, x, l.ln1, lc.ln1);
    x += attn_fwd(P, a, a, true, l.self, lc.self);
    Mat<S> b = norm_fwd(P, x, l.ln2, lc.ln2);
    x += attn_fwd(P, b, audio, false, l.cross, lc.cross);
    Mat<S> f = norm_fwd(P, x, l.ln3, lc.ln3);
    x += ff_fwd(P, f, l.ff, lc.ff);
  }
  c.normed = norm_fwd(P, x, L.dec_ln, c.ln);
  return c.normed;
}

// Backward from d(normed); returns d(audio) when requested.
template <typename S>
void decoder_bwd(const Ctx<S>& P, std::span<const TokenId> inputs, const Mat<S>& dnormed,
                 const DecoderCache<S>& c, const Sink<S>& sink, Mat<S>* daudio) {
  const auto& L = P.lay;
  Mat<S> dx = norm_bwd(P, dnormed, L.dec_ln, c.ln, sink);
  for (std::size_t i = L.dec.size(); i-- > 0;) {
    const auto& lc = c.layers[i];
    const auto& l = L.dec[i];
    Mat<S> df = ff_bwd(P, dx, l.ff, lc.ff, sink);
    dx += norm_bwd(P, df, l.ln3, lc.ln3, sink);
    Mat<S> db = attn_bwd(P, dx, l.cross, lc.cross, sink, daudio);
    dx += norm_bwd(P, db, l.ln2, lc.ln2, sink);
    Mat<S> dkv = Mat<S>::Zero(dx.rows(), dx.cols());
    Mat<S> da = attn_bwd(P, dx, l.self, lc.self, sink, &dkv);
    da += dkv;
    dx += norm_bwd(P, da, l.ln1, lc.ln1, sink);
  }
  if (auto* ge = sink.get(L.embed)) {
    for (std::size_t t = 0; t < inputs.size(); ++t) ge->row(inputs[t]) += dx.row(static_cast<Eigen::Index>(t));
  }
}

template <typename S>
void check_tokens(const Parameters<S>& params, const TokenSequence& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= params.config.vocab_size) {
      throw Error(ErrorCode::VocabMismatch,
                  "token " + std::to_string(tokens[i]) + " outside model vocabulary of " +
                      std::to_string(params.config.vocab_size),
                  i);
    }
  }
}

template <typename S>
void check_example(const TrainingExample& ex, const Parameters<S>& params) {
  validate(ex);
  if (ex.loss_mask[0] != 0) {
    throw Error(ErrorCode::InvalidExample, "position 0 has no prediction context");
  }
  if (ex.tokens.size() - 1 > static_cast<std::size_t>(params.config.max_text_len)) {
    throw Error(ErrorCode::InvalidExample, "token sequence longer than max_text_len");
  }
  check_tokens(params, ex.tokens);
}

template <typename S>
Mat<S> output_logits(const Ctx<S>& P, const Mat<S>& normed) {
  return linear_fwd(P, normed, P.lay.out);
}

}  // namespace

template <typename S>
std::size_t Parameters<S>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.value.size());
  return n;
}

template <typename S>
std::size_t Parameters<S>::scalar_count(ParamBlock block) const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    if (t.block == block) n += static_cast<std::size_t>(t.value.size());
  }
  return n;
}

template <typename S>
std::size_t Parameters<S>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return i;
  }
  throw Error(ErrorCode::InvalidConfig, "no parameter named " + std::string(name));
}

template <typename S>
Parameters<S> Parameters<S>::zeros_like() const {
  Parameters out;
  out.config = config;
  for (const auto& t : tensors) {
    out.tensors.push_back({t.name, t.block, Matrix<S>::Zero(t.value.rows(), t.value.cols())});
  }
  return out;
}

template <typename S>
Parameters<S> init_parameters(const ModelConfig& config) {
  config.validate();
  const Layout lay = build_layout(config);
  Rng rng(mix_seed(config.seed, 0x1417));
  Parameters<S> params;
  params.config = config;
  for (const auto& spec : lay.specs) {
    Matrix<S> m(spec.rows, spec.cols);
    switch (spec.init) {
      case Init::Zero: m.setZero(); break;
      case Init::One: m.setOnes(); break;
      case Init::Normal:
        for (Eigen::Index i = 0; i < m.size(); ++i) {
          m.data()[i] = static_cast<S>(spec.stddev * standard_normal(rng));
        }
        break;
    }
    params.tensors.push_back({spec.name, spec.block, std::move(m)});
  }
  return params;
}

template <typename S>
Matrix<S> encode(const MelSpectrogram& mel, const Parameters<S>& params) {
  const Ctx<S> P{params, layout_for(params.config)};
  EncoderCache<S> cache;
  return encoder_fwd(P, mel, cache);
}

template <typename S>
Matrix<S> next_token_probabilities(const TrainingExample& example, const Parameters<S>& params) {
  validate(example);
  check_tokens(params, example.tokens);
  const Ctx<S> P{params, layout_for(params.config)};
  EncoderCache<S> ec;
  const Mat<S> audio = encoder_fwd(P, example.features, ec);
  DecoderCache<S> dc;
  std::span<const TokenId> inputs(example.tokens.data(), example.tokens.size() - 1);
  Mat<S> probs = output_logits(P, decoder_fwd(P, inputs, audio, dc));
  softmax_rows(probs);
  return probs;
}

template <typename S>
LossSum accumulate_gradients(const TrainingExample& example, const Parameters<S>& params,
                             S scale, Parameters<S>& grads, GradientScope scope) {
  check_example(example, params);
  const Ctx<S> P{params, layout_for(params.config)};
  const Sink<S> sink{&grads, scope};
  EncoderCache<S> ec;
  const Mat<S> audio = encoder_fwd(P, example.features, ec);
  DecoderCache<S> dc;
  std::span<const TokenId> inputs(example.tokens.data(), example.tokens.size() - 1);
  const Mat<S> normed = decoder_fwd(P, inputs, audio, dc);

  // Only rows feeding a selected target need logits.
  std::vector<Eigen::Index> rows;
  for (std::size_t t = 1; t < example.tokens.size(); ++t) {
    if (example.loss_mask[t] != 0) rows.push_back(static_cast<Eigen::Index>(t - 1));
  }
  Mat<S> selected(static_cast<Eigen::Index>(rows.size()), normed.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) selected.row(r) = normed.row(rows[r]);
  Mat<S> logits = output_logits(P, selected);

  LossSum out;
  out.count = rows.size();
  Mat<S> dlogits(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const S mx = row.maxCoeff();
    const S lse = mx + std::log((row.array() - mx).exp().sum());
    const TokenId target = example.tokens[static_cast<std::size_t>(rows[r]) + 1];
    out.nll += static_cast<double>(lse - row(target));
    dlogits.row(r) = (row.array() - lse).exp() * scale;
    dlogits(r, target) -= scale;
  }

  const bool any_decoder = scope.decoder;
  const bool any_encoder = scope.encoder;
  if (!any_decoder && !any_encoder) return out;
  Mat<S> dselected = linear_bwd(P, selected, dlogits, P.lay.out, sink);
  Mat<S> dnormed = Mat<S>::Zero(normed.rows(), normed.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) dnormed.row(rows[r]) = dselected.row(r);
  Mat<S> daudio = Mat<S>::Zero(audio.rows(), audio.cols());
  decoder_bwd(P, inputs, dnormed, dc, sink, any_encoder ? &daudio : nullptr);
  if (any_encoder) encoder_bwd(P, daudio, ec, sink);
  return out;
}

template <typename S>
double loss(const TrainingExample& example, const Parameters<S>& params) {
  check_example(example, params);
  const Ctx<S> P{params, layout_for(params.config)};
  EncoderCache<S> ec;
  const Mat<S> audio = encoder_fwd(P, example.features, ec);
  DecoderCache<S> dc;
  std::span<const TokenId> inputs(example.tokens.data(), example.tokens.size() - 1);
  const Mat<S> logits = output_logits(P, decoder_fwd(P, inputs, audio, dc));
  double nll = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 1; t < example.tokens.size(); ++t) {
    if (example.loss_mask[t] == 0) continue;
    auto row = logits.row(static_cast<Eigen::Index>(t - 1));
    const S mx = row.maxCoeff();
    const S lse = mx + std::log((row.array() - mx).exp().sum());
    nll += static_cast<double>(lse - row(example.tokens[t]));
    ++count;
  }
  return nll / static_cast<double>(count);
}

template <typename S>
TokenSequence greedy_decode_prefix(const MelSpectrogram& mel, const TokenSequence& prefix,
                                   const Parameters<S>& params, std::size_t max_len,
                                   TokenId end_of_text) {
  if (prefix.empty()) throw Error(ErrorCode::InvalidHeader, "empty decode prefix");
  check_tokens(params, prefix);
  const Ctx<S> P{params, layout_for(params.config)};
  EncoderCache<S> ec;
  const Mat<S> audio = encoder_fwd(P, mel, ec);
  TokenSequence out = prefix;
  const auto limit = static_cast<std::size_t>(params.config.max_text_len) + 1;
  for (std::size_t n = 0; n < max_len && out.size() < limit; ++n) {
    DecoderCache<S> dc;
    const Mat<S> normed = decoder_fwd(P, std::span<const TokenId>(out), audio, dc);
    const Mat<S> logits = output_logits<S>(P, normed.bottomRows(1));
    Eigen::Index best = 0;
    logits.row(0).maxCoeff(&best);
    out.push_back(static_cast<TokenId>(best));
    if (best == end_of_text) break;
  }
  return out;
}

template <typename S>
TokenSequence greedy_decode(const MelSpectrogram& mel, const TokenSequence& forced_header,
                            const Parameters<S>& params, std::size_t max_len,
                            const Vocabulary& vocab) {
  if (static_cast<int>(vocab.size()) != params.config.vocab_size) {
    throw Error(ErrorCode::VocabMismatch, "vocabulary size differs from the model's");
  }
  const ParsedHeader parsed = parse_header(forced_header, vocab);
  if (parsed.header_length != forced_header.size()) {
    throw Error(ErrorCode::MalformedHeader, "tokens after header", parsed.header_length);
  }
  return greedy_decode_prefix(mel, forced_header, params, max_len, vocab.tag(SpecialTag::EndOfText));
}

#define AUDIOMT_INSTANTIATE(S)                                                                  \
  template struct Parameters<S>;                                                                \
  template Parameters<S> init_parameters<S>(const ModelConfig&);                                \
  template Matrix<S> encode<S>(const MelSpectrogram&, const Parameters<S>&);                    \
  template double loss<S>(const TrainingExample&, const Parameters<S>&);                        \
  template Matrix<S> next_token_probabilities<S>(const TrainingExample&, const Parameters<S>&); \
  template LossSum accumulate_gradients<S>(const TrainingExample&, const Parameters<S>&, S,     \
                                           Parameters<S>&, GradientScope);                      \
  template TokenSequence greedy_decode<S>(const MelSpectrogram&, const TokenSequence&,          \
                                          const Parameters<S>&, std::size_t, const Vocabulary&); \
  template TokenSequence greedy_decode_prefix<S>(const MelSpectrogram&, const TokenSequence&,   \
                                                 const Parameters<S>&, std::size_t, TokenId);

AUDIOMT_INSTANTIATE(double)
AUDIOMT_INSTANTIATE(float)

}  // namespace audiomt
