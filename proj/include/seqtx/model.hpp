#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqtx/attention.hpp"
#include "seqtx/common.hpp"
#include "seqtx/positional.hpp"
#include "seqtx/tensor.hpp"

namespace seqtx {

struct ModelConfig {
  std::size_t n_enc_blocks = 3;
  std::size_t n_dec_blocks = 2;
  std::size_t heads = 4;
  std::size_t d_m = 64;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 16;
  PeMode enc_pe_mode = PeMode::kSinusoidal;
  PeMode dec_pe_mode = PeMode::kSinusoidal;
  std::optional<std::size_t> enc_rpe_k;
  std::optional<std::size_t> dec_rpe_k;
  float dropout = 0.1f;
  std::vector<std::size_t> frontend_dims = {128, 64};  // last entry must equal d_m
  std::size_t input_feature_dim = 16;
  // Table sizes for learned positional modes.
  std::size_t enc_learned_max_len = 128;
  std::size_t dec_learned_max_len = 32;
  // Multiply decoder token embeddings by sqrt(d_m) before positional addition.
  bool scale_embedding = true;

  // 5 encoder / 3 decoder blocks, 16 heads, d_m 768, d_ff 2048.
  static ModelConfig full_scale(std::size_t vocab_size, std::size_t input_feature_dim);

  std::size_t d_k() const { return d_m / heads; }
  void validate() const;
};

// Closed-form parameter count for config.
std::uint64_t count_params(const ModelConfig& config);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct FeedForward {
  Tensor w1, b1, w2, b2;
};

struct EncoderBlock {
  MhaLayer self_attn;
  LayerNormParams norm1;
  FeedForward ffn;
  LayerNormParams norm2;
};

struct DecoderBlock {
  MhaLayer self_attn;
  LayerNormParams norm1;
  MhaLayer src_attn;
  LayerNormParams norm2;
  FeedForward ffn;
  LayerNormParams norm3;
};

// Per-call state: dropout switch and its generator, optional attention dump.
struct ForwardContext {
  bool train = false;
  Rng* rng = nullptr;
  // Training-time dropout rate; the model config's rate when unset.
  std::optional<float> dropout;
  // When set, receives one attention map per attention layer in call order.
  std::vector<Tensor>* attention_maps = nullptr;
};

// Decoder input ids, row-major [batch, length].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> ids;

  static TokenBatch from_rows(const std::vector<TokenSequence>& rows, TokenId fill = kPad);
  TokenId at(std::size_t b, std::size_t t) const { return ids[b * length + t]; }
};

using NamedTensor = std::pair<std::string, Tensor>;

class TransformerModel {
 public:
  TransformerModel(const ModelConfig& config, std::uint64_t seed);
  TransformerModel(const TransformerModel&) = delete;
  TransformerModel& operator=(const TransformerModel&) = delete;

  const ModelConfig& config() const { return config_; }

  // frames [b, n, input_feature_dim] -> [b, n, d_m]. Frames past
  // frame_lengths[b] are padding and are masked as attention keys.
  Tensor encode(const Tensor& frames, const std::vector<std::size_t>& frame_lengths,
                const ForwardContext& ctx = {}) const;

  // All decoder positions in one pass under a causal mask: logits [b, u, V]
  // where position t sees dec_input[0..t] and the encoder output.
  Tensor decode_step_parallel(const Tensor& enc_out, const std::vector<std::size_t>& enc_lengths,
                              const TokenBatch& dec_input, const ForwardContext& ctx = {}) const;

  // Every trainable tensor with a stable name, in a fixed order.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::uint64_t parameter_count() const;

  std::uint64_t decoder_passes() const { return decoder_passes_.load(); }
  void reset_decoder_passes() { decoder_passes_.store(0); }

 private:
  Tensor sublayer(const Tensor& residual, const Tensor& update, const LayerNormParams& norm,
                  const ForwardContext& ctx) const;
  Tensor feed_forward(const FeedForward& ffn, const Tensor& x) const;

  ModelConfig config_;
  SinusoidalPE sinusoidal_;
  std::vector<std::pair<Tensor, Tensor>> frontend_;  // (weight, bias) per layer
  std::optional<LearnedAPE> enc_learned_;
  std::optional<LearnedAPE> dec_learned_;
  std::vector<EncoderBlock> encoder_;
  std::vector<DecoderBlock> decoder_;
  Tensor embedding_;   // [V, d_m]
  Tensor out_proj_;    // [d_m, V]
  mutable std::atomic<std::uint64_t> decoder_passes_{0};
};

}  // namespace seqtx
