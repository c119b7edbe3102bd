// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nastar/audio.hpp"
#include "nastar/dsp.hpp"

namespace nastar::models {

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t count() const { return data.size(); }
};

// Named parameter tensors. Names are unique; shapes are fixed after
// initialization. Values are held in double precision; checkpoints store
// 32-bit reals.
struct ParamSet {
  std::vector<Tensor> tensors;

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool has(std::string_view name) const;
  std::size_t total_count() const;
};

ParamSet zeros_like(const ParamSet& p);

// True when both sets have the same tensor names and shapes in the same
// order.
bool same_shapes(const ParamSet& a, const ParamSet& b);

// Strided 1-D convolutional encoder with a mirrored transposed-convolution
// decoder and additive skip connections between matching levels. Channel
// width doubles per level starting at base_channels.
struct ExtractorConfig {
  int depth = 3;
  int base_channels = 8;
  int kernel = 8;
  int stride = 4;
};

// Bidirectional tanh recurrent encoder over log-magnitude STFT frames,
// mean-pooled over time and projected to embed_dim.
struct EncoderConfig {
  int recurrent_layers = 2;
  int hidden = 64;
  int embed_dim = 128;
  std::size_t feature_fft = 512;
  std::size_t feature_hop = 128;
  double log_floor = 1e-7;
};

// Unit-norm vector of length embed_dim.
struct Embedding {
  std::vector<double> vector;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization, seeded.
ParamSet init_extractor(const ExtractorConfig& cfg, std::uint64_t seed);
ParamSet init_encoder(const EncoderConfig& cfg, std::uint64_t seed);

// Forward activations captured for the backward pass. Contents are
// implementation state; treat as opaque.
struct DenoiserTrace {
  std::vector<std::vector<double>> enc_in;   // padded conv inputs per level
  std::vector<std::vector<double>> enc_out;  // post-relu encoder outputs
  std::vector<std::vector<double>> dec_out;  // post-relu decoder outputs
  std::vector<std::size_t> level_len;        // time length per level, [0..depth]
  std::vector<std::size_t> padded_len;       // padded input length per level
  std::size_t input_len = 0;
};

struct EncoderTrace {
  std::vector<std::vector<double>> layer_in;  // per layer: frames x input dim
  std::vector<std::vector<double>> h_fwd;     // per layer: frames x hidden
  std::vector<std::vector<double>> h_bwd;
  std::vector<double> pooled;  // 2*hidden
  std::vector<double> z;       // pre-normalization projection
  double z_norm = 0.0;
  std::size_t frames = 0;
};

// Waveform-to-waveform map shared by the noise extractor and the SE model.
// Output length always equals input length. Pass a trace to enable the
// backward pass.
audio::Waveform denoiser_forward(const ParamSet& p, const ExtractorConfig& cfg,
                                 const audio::Waveform& input,
                                 DenoiserTrace* trace = nullptr);

// Accumulates parameter gradients for dLoss/d(output) into `grad`, which
// must be zeros_like(p)-shaped.
void denoiser_backward(const ParamSet& p, const ExtractorConfig& cfg,
                       const DenoiserTrace& trace,
                       const std::vector<double>& dout, ParamSet& grad);

// The noise extractor estimates the noise floor of a noisy input.
audio::Waveform extractor_forward(const ParamSet& p,
                                  const ExtractorConfig& cfg,
                                  const audio::Waveform& noisy);

// The speech enhancement model estimates clean speech; same architecture,
// separate parameters.
audio::Waveform se_forward(const ParamSet& p, const ExtractorConfig& cfg,
                           const audio::Waveform& noisy);

// log-magnitude STFT frames -> bidirectional recurrence -> temporal mean
// pool -> affine projection -> L2 normalization. Requires
// len(w) >= feature_fft.
Embedding retrieval_embed(const ParamSet& p, const EncoderConfig& cfg,
                          const audio::Waveform& w,
                          EncoderTrace* trace = nullptr);

// Accumulates parameter gradients for dLoss/d(embedding) into `grad`.
void encoder_backward(const ParamSet& p, const EncoderConfig& cfg,
                      const EncoderTrace& trace,
                      const std::vector<double>& dembedding, ParamSet& grad);

// A scalar training objective over a ParamSet, with exact reverse-mode
// gradients.
class ParamLoss {
 public:
  virtual ~ParamLoss() = default;
  virtual double value(const ParamSet& p) const = 0;
  // Returns the loss and writes the full gradient (same shapes as p).
  virtual double value_and_grad(const ParamSet& p, ParamSet& grad) const = 0;
};

// Exact gradient of the loss at p. Errors on a non-finite loss value.
ParamSet gradient(const ParamSet& p, const ParamLoss& loss);

class ConstantLoss final : public ParamLoss {
 public:
  explicit ConstantLoss(double c) : c_(c) {}
  double value(const ParamSet&) const override { return c_; }
  double value_and_grad(const ParamSet& p, ParamSet& grad) const override;

 private:
  double c_;
};

// ||p||^2 / 2 over every tensor element.
class QuadraticLoss final : public ParamLoss {
 public:
  double value(const ParamSet& p) const override;
  double value_and_grad(const ParamSet& p, ParamSet& grad) const override;
};

struct TrainItem {
  audio::Waveform input;
  audio::Waveform target;
};

// Mean over a batch of the waveform reconstruction objective (time L1 plus
// multi-resolution spectral loss) of denoiser_forward(p, input) against
// target.
class DenoiserObjective final : public ParamLoss {
 public:
  DenoiserObjective(std::vector<TrainItem> batch, ExtractorConfig cfg,
                    dsp::MultiResConfig loss_cfg);
  double value(const ParamSet& p) const override;
  double value_and_grad(const ParamSet& p, ParamSet& grad) const override;

 private:
  std::vector<TrainItem> batch_;
  ExtractorConfig cfg_;
  dsp::MultiResConfig loss_cfg_;
};

// Standard bias-corrected Adam.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  ParamSet m;
  ParamSet v;
};

AdamState make_adam_state(const ParamSet& p, double lr);

// One optimizer step in place. Errors on non-finite gradients or shape
// mismatch.
void adam_step(ParamSet& p, const ParamSet& g, AdamState& s);

// Elementwise mu * theta_k + (1 - mu) * theta_q. Requires matching shapes
// and mu in [0, 1].
ParamSet momentum_update(const ParamSet& theta_k, const ParamSet& theta_q,
                         double mu);

// Checkpoint format: "NASTARCK" magic, u32 version, u32 tensor count, then
// per tensor a u32 name length, the name bytes, u32 ndim, u64 dims, and the
// values as little-endian 32-bit reals.
std::vector<std::uint8_t> serialize_checkpoint(const ParamSet& p);
void save_checkpoint(const ParamSet& p, const std::string& path);
ParamSet load_checkpoint(const std::string& path);

// FNV-1a 64 over the serialized checkpoint bytes. Identifies the encoder
// that produced an embedding index.
std::uint64_t checkpoint_fingerprint(const ParamSet& p);

}  // namespace nastar::models
