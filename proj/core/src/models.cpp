// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "nastar/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "nastar/rng.hpp"

namespace nastar::models {

namespace {

// Fixed affine normalization of log-magnitude features. Keeps typical
// speech/noise frames roughly in [-1, 1] without per-utterance statistics,
// which would erase the overall level and the encoder must stay sensitive
// to level.
constexpr double kFeatureOffset = 5.0;
constexpr double kFeatureScale = 4.0;

constexpr char kCheckpointMagic[8] = {'N', 'A', 'S', 'T', 'A', 'R', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void check_finite(const ParamSet& p, const char* where) {
  for (const auto& t : p.tensors) {
    for (double v : t.data) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(std::string(where) +
                                 ": non-finite value in tensor " + t.name);
      }
    }
  }
}

std::size_t shape_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void validate_extractor_config(const ExtractorConfig& cfg) {
  if (cfg.depth < 1 || cfg.base_channels < 1 || cfg.kernel < 1 ||
      cfg.stride < 1) {
    throw std::invalid_argument("extractor config fields must be positive");
  }
  if (cfg.stride > cfg.kernel) {
    throw std::invalid_argument(
        "extractor stride must not exceed the kernel size");
  }
}

void validate_encoder_config(const EncoderConfig& cfg) {
  if (cfg.recurrent_layers < 1 || cfg.hidden < 1) {
    throw std::invalid_argument("encoder config fields must be positive");
  }
  if (cfg.embed_dim < 8) {
    throw std::invalid_argument("encoder embed_dim must be at least 8");
  }
  if (cfg.log_floor <= 0.0) {
    throw std::invalid_argument("encoder log_floor must be positive");
  }
}

// Channel count per level; level 0 is the raw waveform.
std::size_t level_channels(const ExtractorConfig& cfg, int level) {
  if (level == 0) return 1;
  return static_cast<std::size_t>(cfg.base_channels) << (level - 1);
}

// Output length of one strided valid convolution after right padding.
std::size_t conv_out_len(std::size_t in_len, std::size_t kernel,
                         std::size_t stride) {
  const std::size_t over = in_len > kernel ? in_len - kernel : 0;
  return (over + stride - 1) / stride + 1;
}

Tensor uniform_tensor(Rng& rng, std::string name,
                      std::vector<std::size_t> shape, std::size_t fan_in) {
  Tensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.data.resize(shape_count(t.shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

void check_param_shape(const Tensor& t, const std::vector<std::size_t>& want) {
  if (t.shape != want) {
    throw std::runtime_error("parameter tensor " + t.name +
                             " has an unexpected shape");
  }
}

// out[co][t] = bias[co] + sum_{ci,k} w[co][ci][k] * in[ci][t*S + k]
void conv_forward(const std::vector<double>& w, const std::vector<double>& b,
                  const std::vector<double>& in, std::size_t c_in,
                  std::size_t padded_len, std::size_t c_out,
                  std::size_t out_len, std::size_t kernel, std::size_t stride,
                  std::vector<double>& out) {
  out.assign(c_out * out_len, 0.0);
  for (std::size_t co = 0; co < c_out; ++co) {
    double* orow = out.data() + co * out_len;
    for (std::size_t t = 0; t < out_len; ++t) orow[t] = b[co];
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* irow = in.data() + ci * padded_len;
      const double* wrow = w.data() + (co * c_in + ci) * kernel;
      for (std::size_t t = 0; t < out_len; ++t) {
        const double* seg = irow + t * stride;
        double acc = 0.0;
        for (std::size_t k = 0; k < kernel; ++k) acc += wrow[k] * seg[k];
        orow[t] += acc;
      }
    }
  }
}

// dW, dB, and dIn of conv_forward for upstream gradient `dout`.
void conv_backward(const std::vector<double>& w, const std::vector<double>& in,
                   std::size_t c_in, std::size_t padded_len, std::size_t c_out,
                   std::size_t out_len, std::size_t kernel, std::size_t stride,
                   const std::vector<double>& dout, std::vector<double>& dw,
                   std::vector<double>& db, std::vector<double>* din) {
  if (din != nullptr) din->assign(c_in * padded_len, 0.0);
  for (std::size_t co = 0; co < c_out; ++co) {
    const double* drow = dout.data() + co * out_len;
    double bacc = 0.0;
    for (std::size_t t = 0; t < out_len; ++t) bacc += drow[t];
    db[co] += bacc;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* irow = in.data() + ci * padded_len;
      double* dwrow = dw.data() + (co * c_in + ci) * kernel;
      const double* wrow = w.data() + (co * c_in + ci) * kernel;
      double* dirow = din != nullptr ? din->data() + ci * padded_len : nullptr;
      for (std::size_t t = 0; t < out_len; ++t) {
        const double g = drow[t];
        const double* seg = irow + t * stride;
        for (std::size_t k = 0; k < kernel; ++k) dwrow[k] += g * seg[k];
        if (dirow != nullptr) {
          double* dseg = dirow + t * stride;
          for (std::size_t k = 0; k < kernel; ++k) dseg[k] += g * wrow[k];
        }
      }
    }
  }
}

// out[co][t*S + k] += w[ci][co][k] * in[ci][t]; out spans the padded length.
void tconv_forward(const std::vector<double>& w, const std::vector<double>& b,
                   const std::vector<double>& in, std::size_t c_in,
                   std::size_t in_len, std::size_t c_out,
                   std::size_t padded_len, std::size_t kernel,
                   std::size_t stride, std::vector<double>& out) {
  out.assign(c_out * padded_len, 0.0);
  for (std::size_t co = 0; co < c_out; ++co) {
    double* orow = out.data() + co * padded_len;
    for (std::size_t u = 0; u < padded_len; ++u) orow[u] = b[co];
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* irow = in.data() + ci * in_len;
      const double* wrow = w.data() + (ci * c_out + co) * kernel;
      for (std::size_t t = 0; t < in_len; ++t) {
        double* seg = orow + t * stride;
        const double g = irow[t];
        for (std::size_t k = 0; k < kernel; ++k) seg[k] += g * wrow[k];
      }
    }
  }
}

// dW, dB, and dIn of tconv_forward; `dout` spans the padded length.
void tconv_backward(const std::vector<double>& w, const std::vector<double>& in,
                    std::size_t c_in, std::size_t in_len, std::size_t c_out,
                    std::size_t padded_len, std::size_t kernel,
                    std::size_t stride, const std::vector<double>& dout,
                    std::vector<double>& dw, std::vector<double>& db,
                    std::vector<double>& din) {
  din.assign(c_in * in_len, 0.0);
  for (std::size_t co = 0; co < c_out; ++co) {
    const double* drow = dout.data() + co * padded_len;
    double bacc = 0.0;
    for (std::size_t u = 0; u < padded_len; ++u) bacc += drow[u];
    db[co] += bacc;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* irow = in.data() + ci * in_len;
      double* dwrow = dw.data() + (ci * c_out + co) * kernel;
      const double* wrow = w.data() + (ci * c_out + co) * kernel;
      double* dirow = din.data() + ci * in_len;
      for (std::size_t t = 0; t < in_len; ++t) {
        const double* dseg = drow + t * stride;
        double acc = 0.0;
        for (std::size_t k = 0; k < kernel; ++k) {
          dwrow[k] += irow[t] * dseg[k];
          acc += wrow[k] * dseg[k];
        }
        dirow[t] += acc;
      }
    }
  }
}

std::string enc_name(int level, const char* part) {
  return "enc" + std::to_string(level) + "." + part;
}

std::string dec_name(int level, const char* part) {
  return "dec" + std::to_string(level) + "." + part;
}

std::string rnn_name(int layer, const char* dir, const char* part) {
  return "rnn" + std::to_string(layer) + "." + dir + "." + part;
}

// Little-endian byte packing for the checkpoint format.
void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void push_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void push_f32(std::vector<std::uint8_t>& out, float v) {
  push_u32(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes)
      : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw std::runtime_error("corrupt checkpoint: truncated data");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor& ParamSet::at(std::string_view name) {
  for (auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw std::runtime_error("no parameter tensor named " + std::string(name));
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw std::runtime_error("no parameter tensor named " + std::string(name));
}

bool ParamSet::has(std::string_view name) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const Tensor& t) { return t.name == name; });
}

std::size_t ParamSet::total_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.count();
  return n;
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z;
  z.tensors.reserve(p.tensors.size());
  for (const auto& t : p.tensors) {
    Tensor zt;
    zt.name = t.name;
    zt.shape = t.shape;
    zt.data.assign(t.data.size(), 0.0);
    z.tensors.push_back(std::move(zt));
  }
  return z;
}

bool same_shapes(const ParamSet& a, const ParamSet& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].name != b.tensors[i].name ||
        a.tensors[i].shape != b.tensors[i].shape) {
      return false;
    }
  }
  return true;
}

ParamSet init_extractor(const ExtractorConfig& cfg, std::uint64_t seed) {
  validate_extractor_config(cfg);
  Rng rng(seed);
  const auto kernel = static_cast<std::size_t>(cfg.kernel);
  ParamSet p;
  for (int i = 1; i <= cfg.depth; ++i) {
    const std::size_t c_in = level_channels(cfg, i - 1);
    const std::size_t c_out = level_channels(cfg, i);
    const std::size_t fan = c_in * kernel;
    p.tensors.push_back(
        uniform_tensor(rng, enc_name(i, "weight"), {c_out, c_in, kernel}, fan));
    p.tensors.push_back(uniform_tensor(rng, enc_name(i, "bias"), {c_out}, fan));
  }
  for (int i = cfg.depth; i >= 1; --i) {
    const std::size_t c_in = level_channels(cfg, i);
    const std::size_t c_out = level_channels(cfg, i - 1);
    const std::size_t fan = c_in * kernel;
    p.tensors.push_back(
        uniform_tensor(rng, dec_name(i, "weight"), {c_in, c_out, kernel}, fan));
    p.tensors.push_back(uniform_tensor(rng, dec_name(i, "bias"), {c_out}, fan));
  }
  return p;
}

ParamSet init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  validate_encoder_config(cfg);
  Rng rng(seed);
  const std::size_t feat = cfg.feature_fft / 2 + 1;
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  ParamSet p;
  for (int l = 1; l <= cfg.recurrent_layers; ++l) {
    const std::size_t in_dim = l == 1 ? feat : 2 * hidden;
    for (const char* dir : {"fwd", "bwd"}) {
      p.tensors.push_back(uniform_tensor(rng, rnn_name(l, dir, "w_in"),
                                         {hidden, in_dim}, in_dim));
      p.tensors.push_back(uniform_tensor(rng, rnn_name(l, dir, "w_rec"),
                                         {hidden, hidden}, hidden));
      p.tensors.push_back(
          uniform_tensor(rng, rnn_name(l, dir, "bias"), {hidden}, hidden));
    }
  }
  const auto embed = static_cast<std::size_t>(cfg.embed_dim);
  p.tensors.push_back(
      uniform_tensor(rng, "proj.weight", {embed, 2 * hidden}, 2 * hidden));
  p.tensors.push_back(
      uniform_tensor(rng, "proj.bias", {embed}, 2 * hidden));
  return p;
}

audio::Waveform denoiser_forward(const ParamSet& p, const ExtractorConfig& cfg,
                                 const audio::Waveform& input,
                                 DenoiserTrace* trace) {
  validate_extractor_config(cfg);
  if (input.empty()) {
    throw std::invalid_argument("denoiser_forward: input is empty");
  }
  const auto kernel = static_cast<std::size_t>(cfg.kernel);
  const auto stride = static_cast<std::size_t>(cfg.stride);
  const int depth = cfg.depth;

  DenoiserTrace local;
  DenoiserTrace& tr = trace != nullptr ? *trace : local;
  tr.enc_in.assign(depth, {});
  tr.enc_out.assign(depth, {});
  tr.dec_out.assign(depth > 1 ? depth - 1 : 0, {});
  tr.level_len.assign(depth + 1, 0);
  tr.padded_len.assign(depth, 0);
  tr.input_len = input.size();
  tr.level_len[0] = input.size();

  // Encoder: pad right, strided conv, relu.
  std::vector<double> x = input.samples;
  for (int i = 1; i <= depth; ++i) {
    const std::size_t c_in = level_channels(cfg, i - 1);
    const std::size_t c_out = level_channels(cfg, i);
    const std::size_t t_in = tr.level_len[i - 1];
    const std::size_t t_out = conv_out_len(t_in, kernel, stride);
    const std::size_t padded = (t_out - 1) * stride + kernel;
    tr.level_len[i] = t_out;
    tr.padded_len[i - 1] = padded;

    std::vector<double>& in = tr.enc_in[i - 1];
    in.assign(c_in * padded, 0.0);
    for (std::size_t c = 0; c < c_in; ++c) {
      std::copy_n(x.begin() + c * t_in, t_in, in.begin() + c * padded);
    }

    const Tensor& w = p.at(enc_name(i, "weight"));
    const Tensor& b = p.at(enc_name(i, "bias"));
    check_param_shape(w, {c_out, c_in, kernel});
    check_param_shape(b, {c_out});

    std::vector<double>& out = tr.enc_out[i - 1];
    conv_forward(w.data, b.data, in, c_in, padded, c_out, t_out, kernel,
                 stride, out);
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    x = out;
  }

  // Decoder: transposed conv, trim to the matching encoder length, add the
  // skip activation, relu. The final stage has no skip and no relu so the
  // output range stays unconstrained.
  std::vector<double> g = tr.enc_out[depth - 1];
  std::vector<double> u;
  for (int i = depth; i >= 1; --i) {
    const std::size_t c_in = level_channels(cfg, i);
    const std::size_t c_out = level_channels(cfg, i - 1);
    const std::size_t t_in = tr.level_len[i];
    const std::size_t t_out = tr.level_len[i - 1];
    const std::size_t padded = tr.padded_len[i - 1];

    const Tensor& w = p.at(dec_name(i, "weight"));
    const Tensor& b = p.at(dec_name(i, "bias"));
    check_param_shape(w, {c_in, c_out, kernel});
    check_param_shape(b, {c_out});

    tconv_forward(w.data, b.data, g, c_in, t_in, c_out, padded, kernel,
                  stride, u);

    std::vector<double> v(c_out * t_out);
    for (std::size_t c = 0; c < c_out; ++c) {
      std::copy_n(u.begin() + c * padded, t_out, v.begin() + c * t_out);
    }

    if (i > 1) {
      const std::vector<double>& skip = tr.enc_out[i - 2];
      for (std::size_t j = 0; j < v.size(); ++j) {
        const double s = v[j] + skip[j];
        v[j] = s > 0.0 ? s : 0.0;
      }
      tr.dec_out[depth - 1 - (i - 1)] = v;
      g = std::move(v);
    } else {
      g = std::move(v);
    }
  }

  audio::Waveform out;
  out.sample_rate_hz = input.sample_rate_hz;
  out.samples = std::move(g);
  return out;
}

void denoiser_backward(const ParamSet& p, const ExtractorConfig& cfg,
                       const DenoiserTrace& trace,
                       const std::vector<double>& dout, ParamSet& grad) {
  validate_extractor_config(cfg);
  const auto kernel = static_cast<std::size_t>(cfg.kernel);
  const auto stride = static_cast<std::size_t>(cfg.stride);
  const int depth = cfg.depth;
  if (dout.size() != trace.input_len) {
    throw std::invalid_argument(
        "denoiser_backward: gradient length does not match the traced input");
  }

  // Skip-path gradients into each encoder output, filled by the decoder
  // stages and consumed by the encoder stages.
  std::vector<std::vector<double>> dx(depth + 1);
  for (int i = 1; i <= depth; ++i) {
    dx[i].assign(level_channels(cfg, i) * trace.level_len[i], 0.0);
  }

  // Decoder stages, from the output back to the bottleneck.
  std::vector<double> dv = dout;
  for (int i = 1; i <= depth; ++i) {
    const std::size_t c_in = level_channels(cfg, i);
    const std::size_t c_out = level_channels(cfg, i - 1);
    const std::size_t t_in = trace.level_len[i];
    const std::size_t t_out = trace.level_len[i - 1];
    const std::size_t padded = trace.padded_len[i - 1];

    std::vector<double> du(c_out * padded, 0.0);
    for (std::size_t c = 0; c < c_out; ++c) {
      std::copy_n(dv.begin() + c * t_out, t_out, du.begin() + c * padded);
    }

    const std::vector<double>& g_in =
        i == depth ? trace.enc_out[depth - 1] : trace.dec_out[depth - 1 - i];
    const Tensor& w = p.at(dec_name(i, "weight"));
    std::vector<double> dg;
    tconv_backward(w.data, g_in, c_in, t_in, c_out, padded, kernel, stride,
                   du, grad.at(dec_name(i, "weight")).data,
                   grad.at(dec_name(i, "bias")).data, dg);

    if (i < depth) {
      // g_in = relu(v + skip); one masked gradient feeds both branches.
      const std::vector<double>& post = trace.dec_out[depth - 1 - i];
      dv.assign(dg.size(), 0.0);
      for (std::size_t j = 0; j < dg.size(); ++j) {
        dv[j] = post[j] > 0.0 ? dg[j] : 0.0;
      }
      for (std::size_t j = 0; j < dg.size(); ++j) dx[i][j] += dv[j];
    } else {
      for (std::size_t j = 0; j < dg.size(); ++j) dx[depth][j] += dg[j];
    }
  }

  // Encoder stages, from the bottleneck back to the input.
  for (int i = depth; i >= 1; --i) {
    const std::size_t c_in = level_channels(cfg, i - 1);
    const std::size_t c_out = level_channels(cfg, i);
    const std::size_t t_in = trace.level_len[i - 1];
    const std::size_t t_out = trace.level_len[i];
    const std::size_t padded = trace.padded_len[i - 1];

    const std::vector<double>& post = trace.enc_out[i - 1];
    std::vector<double> da(dx[i].size());
    for (std::size_t j = 0; j < da.size(); ++j) {
      da[j] = post[j] > 0.0 ? dx[i][j] : 0.0;
    }

    const Tensor& w = p.at(enc_name(i, "weight"));
    std::vector<double> din;
    conv_backward(w.data, trace.enc_in[i - 1], c_in, padded, c_out, t_out,
                  kernel, stride, da, grad.at(enc_name(i, "weight")).data,
                  grad.at(enc_name(i, "bias")).data, i > 1 ? &din : nullptr);

    if (i > 1) {
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t t = 0; t < t_in; ++t) {
          dx[i - 1][c * t_in + t] += din[c * padded + t];
        }
      }
    }
  }
}

audio::Waveform extractor_forward(const ParamSet& p,
                                  const ExtractorConfig& cfg,
                                  const audio::Waveform& noisy) {
  return denoiser_forward(p, cfg, noisy);
}

audio::Waveform se_forward(const ParamSet& p, const ExtractorConfig& cfg,
                           const audio::Waveform& noisy) {
  return denoiser_forward(p, cfg, noisy);
}

Embedding retrieval_embed(const ParamSet& p, const EncoderConfig& cfg,
                          const audio::Waveform& w, EncoderTrace* trace) {
  validate_encoder_config(cfg);
  if (w.size() < cfg.feature_fft) {
    throw std::invalid_argument(
        "retrieval_embed requires at least one full analysis frame");
  }
  const dsp::StftConfig stft_cfg{cfg.feature_fft, cfg.feature_hop};
  const dsp::Spectrogram spec = dsp::stft(w, stft_cfg);
  const std::size_t frames = spec.frames;
  const std::size_t feat = spec.bins;
  const auto hidden = static_cast<std::size_t>(cfg.hidden);

  EncoderTrace local;
  EncoderTrace& tr = trace != nullptr ? *trace : local;
  tr.frames = frames;
  tr.layer_in.assign(cfg.recurrent_layers, {});
  tr.h_fwd.assign(cfg.recurrent_layers, {});
  tr.h_bwd.assign(cfg.recurrent_layers, {});

  std::vector<double>& feats = tr.layer_in[0];
  feats.resize(frames * feat);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < feat; ++f) {
      const double mag = std::abs(spec.at(t, f));
      feats[t * feat + f] =
          (std::log(mag + cfg.log_floor) + kFeatureOffset) / kFeatureScale;
    }
  }

  for (int l = 1; l <= cfg.recurrent_layers; ++l) {
    const std::size_t in_dim = l == 1 ? feat : 2 * hidden;
    const std::vector<double>& in = tr.layer_in[l - 1];
    for (const char* dir : {"fwd", "bwd"}) {
      const bool forward_dir = dir[0] == 'f';
      const Tensor& w_in = p.at(rnn_name(l, dir, "w_in"));
      const Tensor& w_rec = p.at(rnn_name(l, dir, "w_rec"));
      const Tensor& bias = p.at(rnn_name(l, dir, "bias"));
      check_param_shape(w_in, {hidden, in_dim});
      check_param_shape(w_rec, {hidden, hidden});
      check_param_shape(bias, {hidden});

      std::vector<double>& h_all =
          forward_dir ? tr.h_fwd[l - 1] : tr.h_bwd[l - 1];
      h_all.assign(frames * hidden, 0.0);
      std::vector<double> h(hidden, 0.0);
      std::vector<double> a(hidden);
      for (std::size_t step = 0; step < frames; ++step) {
        const std::size_t t = forward_dir ? step : frames - 1 - step;
        const double* x = in.data() + t * in_dim;
        for (std::size_t j = 0; j < hidden; ++j) {
          const double* wi = w_in.data.data() + j * in_dim;
          const double* wr = w_rec.data.data() + j * hidden;
          double acc = bias.data[j];
          for (std::size_t d = 0; d < in_dim; ++d) acc += wi[d] * x[d];
          for (std::size_t k = 0; k < hidden; ++k) acc += wr[k] * h[k];
          a[j] = acc;
        }
        for (std::size_t j = 0; j < hidden; ++j) h[j] = std::tanh(a[j]);
        std::copy_n(h.begin(), hidden, h_all.begin() + t * hidden);
      }
    }
    if (l < cfg.recurrent_layers) {
      std::vector<double>& next = tr.layer_in[l];
      next.resize(frames * 2 * hidden);
      for (std::size_t t = 0; t < frames; ++t) {
        std::copy_n(tr.h_fwd[l - 1].begin() + t * hidden, hidden,
                    next.begin() + t * 2 * hidden);
        std::copy_n(tr.h_bwd[l - 1].begin() + t * hidden, hidden,
                    next.begin() + t * 2 * hidden + hidden);
      }
    }
  }

  const int top = cfg.recurrent_layers - 1;
  tr.pooled.assign(2 * hidden, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < hidden; ++j) {
      tr.pooled[j] += tr.h_fwd[top][t * hidden + j];
      tr.pooled[hidden + j] += tr.h_bwd[top][t * hidden + j];
    }
  }
  for (double& v : tr.pooled) v /= static_cast<double>(frames);

  const Tensor& pw = p.at("proj.weight");
  const Tensor& pb = p.at("proj.bias");
  const auto embed = static_cast<std::size_t>(cfg.embed_dim);
  check_param_shape(pw, {embed, 2 * hidden});
  check_param_shape(pb, {embed});
  tr.z.assign(embed, 0.0);
  for (std::size_t i = 0; i < embed; ++i) {
    const double* row = pw.data.data() + i * 2 * hidden;
    double acc = pb.data[i];
    for (std::size_t j = 0; j < 2 * hidden; ++j) acc += row[j] * tr.pooled[j];
    tr.z[i] = acc;
  }

  double norm_sq = 0.0;
  for (double v : tr.z) norm_sq += v * v;
  tr.z_norm = std::sqrt(norm_sq);
  if (!(tr.z_norm > 1e-12)) {
    throw std::runtime_error("retrieval_embed produced a degenerate embedding");
  }

  Embedding e;
  e.vector.resize(embed);
  for (std::size_t i = 0; i < embed; ++i) e.vector[i] = tr.z[i] / tr.z_norm;
  return e;
}

void encoder_backward(const ParamSet& p, const EncoderConfig& cfg,
                      const EncoderTrace& trace,
                      const std::vector<double>& dembedding, ParamSet& grad) {
  validate_encoder_config(cfg);
  const auto embed = static_cast<std::size_t>(cfg.embed_dim);
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  const std::size_t frames = trace.frames;
  if (dembedding.size() != embed) {
    throw std::invalid_argument(
        "encoder_backward: gradient length does not match embed_dim");
  }

  // Through L2 normalization: dz = (de - (e . de) e) / ||z||.
  std::vector<double> e(embed);
  for (std::size_t i = 0; i < embed; ++i) e[i] = trace.z[i] / trace.z_norm;
  double dot = 0.0;
  for (std::size_t i = 0; i < embed; ++i) dot += e[i] * dembedding[i];
  std::vector<double> dz(embed);
  for (std::size_t i = 0; i < embed; ++i) {
    dz[i] = (dembedding[i] - dot * e[i]) / trace.z_norm;
  }

  const Tensor& pw = p.at("proj.weight");
  Tensor& dpw = grad.at("proj.weight");
  Tensor& dpb = grad.at("proj.bias");
  std::vector<double> dpooled(2 * hidden, 0.0);
  for (std::size_t i = 0; i < embed; ++i) {
    dpb.data[i] += dz[i];
    const double* row = pw.data.data() + i * 2 * hidden;
    double* drow = dpw.data.data() + i * 2 * hidden;
    for (std::size_t j = 0; j < 2 * hidden; ++j) {
      drow[j] += dz[i] * trace.pooled[j];
      dpooled[j] += dz[i] * row[j];
    }
  }

  // Mean pool spreads the gradient evenly over frames.
  const double inv_frames = 1.0 / static_cast<double>(frames);
  std::vector<double> dlayer_out(frames * 2 * hidden);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < 2 * hidden; ++j) {
      dlayer_out[t * 2 * hidden + j] = dpooled[j] * inv_frames;
    }
  }

  for (int l = cfg.recurrent_layers; l >= 1; --l) {
    const std::size_t feat = trace.layer_in[0].size() / frames;
    const std::size_t in_dim = l == 1 ? feat : 2 * hidden;
    const std::vector<double>& in = trace.layer_in[l - 1];
    std::vector<double> dlayer_in(frames * in_dim, 0.0);

    for (const char* dir : {"fwd", "bwd"}) {
      const bool forward_dir = dir[0] == 'f';
      const Tensor& w_in = p.at(rnn_name(l, dir, "w_in"));
      const Tensor& w_rec = p.at(rnn_name(l, dir, "w_rec"));
      Tensor& dw_in = grad.at(rnn_name(l, dir, "w_in"));
      Tensor& dw_rec = grad.at(rnn_name(l, dir, "w_rec"));
      Tensor& db = grad.at(rnn_name(l, dir, "bias"));
      const std::vector<double>& h_all =
          forward_dir ? trace.h_fwd[l - 1] : trace.h_bwd[l - 1];
      const std::size_t half = forward_dir ? 0 : hidden;

      std::vector<double> carry(hidden, 0.0);
      std::vector<double> da(hidden);
      // Reverse of the recurrence order: last-computed frame first.
      for (std::size_t step = 0; step < frames; ++step) {
        const std::size_t t =
            forward_dir ? frames - 1 - step : step;
        const double* h = h_all.data() + t * hidden;
        for (std::size_t j = 0; j < hidden; ++j) {
          const double dh =
              dlayer_out[t * 2 * hidden + half + j] + carry[j];
          da[j] = dh * (1.0 - h[j] * h[j]);
        }
        const double* x = in.data() + t * in_dim;
        double* dx = dlayer_in.data() + t * in_dim;
        for (std::size_t j = 0; j < hidden; ++j) {
          db.data[j] += da[j];
          double* dwi = dw_in.data.data() + j * in_dim;
          const double* wi = w_in.data.data() + j * in_dim;
          for (std::size_t d = 0; d < in_dim; ++d) {
            dwi[d] += da[j] * x[d];
            dx[d] += wi[d] * da[j];
          }
        }
        // Previous hidden state in recurrence order.
        const bool has_prev = forward_dir ? t > 0 : t + 1 < frames;
        const std::size_t tp = forward_dir ? t - 1 : t + 1;
        const double* h_prev =
            has_prev ? h_all.data() + tp * hidden : nullptr;
        std::fill(carry.begin(), carry.end(), 0.0);
        for (std::size_t j = 0; j < hidden; ++j) {
          double* dwr = dw_rec.data.data() + j * hidden;
          const double* wr = w_rec.data.data() + j * hidden;
          if (h_prev != nullptr) {
            for (std::size_t k = 0; k < hidden; ++k) {
              dwr[k] += da[j] * h_prev[k];
            }
          }
          for (std::size_t k = 0; k < hidden; ++k) {
            carry[k] += wr[k] * da[j];
          }
        }
      }
    }

    if (l > 1) dlayer_out = std::move(dlayer_in);
  }
}

double ConstantLoss::value_and_grad(const ParamSet& p, ParamSet& grad) const {
  for (auto& t : grad.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
  (void)p;
  return c_;
}

double QuadraticLoss::value(const ParamSet& p) const {
  double s = 0.0;
  for (const auto& t : p.tensors) {
    for (double v : t.data) s += v * v;
  }
  return 0.5 * s;
}

double QuadraticLoss::value_and_grad(const ParamSet& p,
                                     ParamSet& grad) const {
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    grad.tensors[i].data = p.tensors[i].data;
  }
  return value(p);
}

DenoiserObjective::DenoiserObjective(std::vector<TrainItem> batch,
                                     ExtractorConfig cfg,
                                     dsp::MultiResConfig loss_cfg)
    : batch_(std::move(batch)), cfg_(cfg), loss_cfg_(std::move(loss_cfg)) {
  if (batch_.empty()) {
    throw std::invalid_argument("DenoiserObjective requires a non-empty batch");
  }
  for (const auto& item : batch_) {
    if (item.input.size() != item.target.size()) {
      throw std::invalid_argument(
          "DenoiserObjective: input and target lengths differ");
    }
  }
}

double DenoiserObjective::value(const ParamSet& p) const {
  double total = 0.0;
  for (const auto& item : batch_) {
    const audio::Waveform est = denoiser_forward(p, cfg_, item.input);
    total += dsp::extractor_objective(item.target, est, loss_cfg_);
  }
  return total / static_cast<double>(batch_.size());
}

double DenoiserObjective::value_and_grad(const ParamSet& p,
                                         ParamSet& grad) const {
  if (!same_shapes(p, grad)) {
    throw std::runtime_error(
        "DenoiserObjective: gradient buffer shapes differ from parameters");
  }
  for (auto& t : grad.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch_.size());
  std::vector<double> dout;
  for (const auto& item : batch_) {
    DenoiserTrace trace;
    const audio::Waveform est = denoiser_forward(p, cfg_, item.input, &trace);
    total += dsp::extractor_objective_with_grad(item.target, est, loss_cfg_,
                                                dout);
    for (double& v : dout) v *= inv_batch;
    denoiser_backward(p, cfg_, trace, dout, grad);
  }
  return total * inv_batch;
}

ParamSet gradient(const ParamSet& p, const ParamLoss& loss) {
  ParamSet grad = zeros_like(p);
  const double v = loss.value_and_grad(p, grad);
  if (!std::isfinite(v)) {
    throw std::runtime_error("gradient: loss value is not finite");
  }
  check_finite(grad, "gradient");
  return grad;
}

AdamState make_adam_state(const ParamSet& p, double lr) {
  if (!(lr > 0.0)) {
    throw std::invalid_argument("adam learning rate must be positive");
  }
  AdamState s;
  s.lr = lr;
  s.m = zeros_like(p);
  s.v = zeros_like(p);
  return s;
}

void adam_step(ParamSet& p, const ParamSet& g, AdamState& s) {
  if (!same_shapes(p, g) || !same_shapes(p, s.m) || !same_shapes(p, s.v)) {
    throw std::runtime_error("adam_step: parameter and state shapes differ");
  }
  check_finite(g, "adam_step");
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
    auto& pv = p.tensors[ti].data;
    const auto& gv = g.tensors[ti].data;
    auto& mv = s.m.tensors[ti].data;
    auto& vv = s.v.tensors[ti].data;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = s.beta1 * mv[i] + (1.0 - s.beta1) * gv[i];
      vv[i] = s.beta2 * vv[i] + (1.0 - s.beta2) * gv[i] * gv[i];
      const double m_hat = mv[i] / bc1;
      const double v_hat = vv[i] / bc2;
      pv[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
  }
}

ParamSet momentum_update(const ParamSet& theta_k, const ParamSet& theta_q,
                         double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) {
    throw std::invalid_argument("momentum coefficient must be in [0, 1]");
  }
  if (!same_shapes(theta_k, theta_q)) {
    throw std::runtime_error("momentum_update: parameter shapes differ");
  }
  ParamSet out = theta_k;
  for (std::size_t ti = 0; ti < out.tensors.size(); ++ti) {
    auto& ov = out.tensors[ti].data;
    const auto& qv = theta_q.tensors[ti].data;
    for (std::size_t i = 0; i < ov.size(); ++i) {
      ov[i] = mu * ov[i] + (1.0 - mu) * qv[i];
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const ParamSet& p) {
  std::vector<std::uint8_t> out;
  out.reserve(64 + p.total_count() * 4);
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  push_u32(out, kCheckpointVersion);
  push_u32(out, static_cast<std::uint32_t>(p.tensors.size()));
  for (const auto& t : p.tensors) {
    push_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    push_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) push_u64(out, d);
    for (double v : t.data) push_f32(out, static_cast<float>(v));
  }
  return out;
}

void save_checkpoint(const ParamSet& p, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(p);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());

  ByteReader r(bytes);
  const std::string magic = r.str(8);
  if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("corrupt checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("corrupt checkpoint: unsupported version");
  }
  const std::uint32_t count = r.u32();

  ParamSet p;
  p.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    const std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > 4096) {
      throw std::runtime_error("corrupt checkpoint: bad tensor name length");
    }
    t.name = r.str(name_len);
    if (p.has(t.name)) {
      throw std::runtime_error("corrupt checkpoint: duplicate tensor name");
    }
    const std::uint32_t ndim = r.u32();
    if (ndim == 0 || ndim > 8) {
      throw std::runtime_error("corrupt checkpoint: bad tensor rank");
    }
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint64_t dim = r.u64();
      if (dim == 0 || dim > (1u << 30) || n > (1u << 30) / dim) {
        throw std::runtime_error("corrupt checkpoint: bad tensor shape");
      }
      t.shape.push_back(static_cast<std::size_t>(dim));
      n *= static_cast<std::size_t>(dim);
    }
    t.data.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const float v = r.f32();
      if (!std::isfinite(v)) {
        throw std::runtime_error("corrupt checkpoint: non-finite value");
      }
      t.data[j] = static_cast<double>(v);
    }
    p.tensors.push_back(std::move(t));
  }
  if (!r.done()) {
    throw std::runtime_error("corrupt checkpoint: trailing bytes");
  }
  return p;
}

std::uint64_t checkpoint_fingerprint(const ParamSet& p) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(p);
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace nastar::models
