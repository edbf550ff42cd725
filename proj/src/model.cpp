#include "seqtx/model.hpp"

#include <cmath>

#include "seqtx/ops.hpp"

namespace seqtx {

ModelConfig ModelConfig::full_scale(std::size_t vocab_size, std::size_t input_feature_dim) {
  ModelConfig c;
  c.n_enc_blocks = 5;
  c.n_dec_blocks = 3;
  c.heads = 16;
  c.d_m = 768;
  c.d_ff = 2048;
  c.frontend_dims = {2048, 768};
  c.vocab_size = vocab_size;
  c.input_feature_dim = input_feature_dim;
  c.dropout = 0.1f;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(n_enc_blocks, "n_enc_blocks");
  positive(n_dec_blocks, "n_dec_blocks");
  positive(heads, "heads");
  positive(d_m, "d_m");
  positive(d_ff, "d_ff");
  positive(input_feature_dim, "input_feature_dim");
  if (d_m % heads != 0)
    throw ConfigError("d_m (" + std::to_string(d_m) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  if (vocab_size <= static_cast<std::size_t>(kFirstContentToken))
    throw ConfigError("vocab_size must exceed the reserved PAD/SOS/EOS ids");
  if (frontend_dims.empty() || frontend_dims.back() != d_m)
    throw ConfigError("frontend_dims must end with d_m");
  for (auto d : frontend_dims) positive(d, "frontend dim");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0, 1)");
  if (enc_pe_mode == PeMode::kLearned) positive(enc_learned_max_len, "enc_learned_max_len");
  if (dec_pe_mode == PeMode::kLearned) positive(dec_learned_max_len, "dec_learned_max_len");
}

std::uint64_t count_params(const ModelConfig& c) {
  const std::uint64_t dm = c.d_m;
  const std::uint64_t mha = 4 * dm * dm;
  const std::uint64_t norm = 2 * dm;
  const std::uint64_t ffn = dm * c.d_ff + c.d_ff + c.d_ff * dm + dm;
  const std::uint64_t dk = c.heads ? dm / c.heads : 0;

  std::uint64_t total = 0;
  std::uint64_t fan_in = c.input_feature_dim;
  for (auto d : c.frontend_dims) {
    total += fan_in * d + d;
    fan_in = d;
  }
  if (c.enc_pe_mode == PeMode::kLearned) total += c.enc_learned_max_len * dm;
  if (c.dec_pe_mode == PeMode::kLearned) total += c.dec_learned_max_len * dm;

  std::uint64_t enc_block = mha + 2 * norm + ffn;
  if (c.enc_rpe_k) enc_block += (2 * *c.enc_rpe_k + 1) * dk;
  std::uint64_t dec_block = 2 * mha + 3 * norm + ffn;
  if (c.dec_rpe_k) dec_block += (2 * *c.dec_rpe_k + 1) * dk;

  total += c.n_enc_blocks * enc_block + c.n_dec_blocks * dec_block;
  total += 2 * c.vocab_size * dm;  // embedding + output projection
  return total;
}

TokenBatch TokenBatch::from_rows(const std::vector<TokenSequence>& rows, TokenId fill) {
  TokenBatch tb;
  tb.batch = rows.size();
  for (const auto& r : rows) tb.length = std::max(tb.length, r.size());
  tb.ids.assign(tb.batch * tb.length, fill);
  for (std::size_t b = 0; b < rows.size(); ++b)
    std::copy(rows[b].begin(), rows[b].end(), tb.ids.begin() + b * tb.length);
  return tb;
}

namespace {

LayerNormParams make_norm(std::size_t d) {
  return {Tensor(Shape{d}, 1.0f, true), Tensor(Shape{d}, 0.0f, true)};
}

FeedForward make_ffn(std::size_t d_m, std::size_t d_ff, Rng& rng) {
  FeedForward f;
  f.w1 = xavier_uniform(d_m, d_ff, rng);
  f.b1 = Tensor(Shape{d_ff}, 0.0f, true);
  f.w2 = xavier_uniform(d_ff, d_m, rng);
  f.b2 = Tensor(Shape{d_m}, 0.0f, true);
  return f;
}

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = static_cast<float>(stddev * rng.normal());
  return Tensor(std::move(shape), std::move(v), true);
}

void push_mha(std::vector<NamedTensor>& out, const std::string& prefix, const MhaLayer& m) {
  out.emplace_back(prefix + ".w_q", m.w_q);
  out.emplace_back(prefix + ".w_k", m.w_k);
  out.emplace_back(prefix + ".w_v", m.w_v);
  out.emplace_back(prefix + ".w_o", m.w_o);
  if (m.rpe) out.emplace_back(prefix + ".rpe", m.rpe->w);
}

void push_norm(std::vector<NamedTensor>& out, const std::string& prefix, const LayerNormParams& n) {
  out.emplace_back(prefix + ".gain", n.gain);
  out.emplace_back(prefix + ".bias", n.bias);
}

void push_ffn(std::vector<NamedTensor>& out, const std::string& prefix, const FeedForward& f) {
  out.emplace_back(prefix + ".w1", f.w1);
  out.emplace_back(prefix + ".b1", f.b1);
  out.emplace_back(prefix + ".w2", f.w2);
  out.emplace_back(prefix + ".b2", f.b2);
}

}  // namespace

TransformerModel::TransformerModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), sinusoidal_(config.d_m) {
  config_.validate();
  Rng rng(seed);
  std::size_t fan_in = config_.input_feature_dim;
  for (auto d : config_.frontend_dims) {
    frontend_.emplace_back(xavier_uniform(fan_in, d, rng), Tensor(Shape{d}, 0.0f, true));
    fan_in = d;
  }
  if (config_.enc_pe_mode == PeMode::kLearned)
    enc_learned_ = LearnedAPE::create(config_.enc_learned_max_len, config_.d_m, rng);
  if (config_.dec_pe_mode == PeMode::kLearned)
    dec_learned_ = LearnedAPE::create(config_.dec_learned_max_len, config_.d_m, rng);
  for (std::size_t i = 0; i < config_.n_enc_blocks; ++i) {
    EncoderBlock blk{MhaLayer::create(config_.d_m, config_.heads, rng, config_.enc_rpe_k),
                     make_norm(config_.d_m), make_ffn(config_.d_m, config_.d_ff, rng),
                     make_norm(config_.d_m)};
    encoder_.push_back(std::move(blk));
  }
  for (std::size_t i = 0; i < config_.n_dec_blocks; ++i) {
    // No relative table on source attention.
    DecoderBlock blk{MhaLayer::create(config_.d_m, config_.heads, rng, config_.dec_rpe_k),
                     make_norm(config_.d_m),
                     MhaLayer::create(config_.d_m, config_.heads, rng),
                     make_norm(config_.d_m),
                     make_ffn(config_.d_m, config_.d_ff, rng),
                     make_norm(config_.d_m)};
    decoder_.push_back(std::move(blk));
  }
  embedding_ = gaussian(Shape{config_.vocab_size, config_.d_m}, 0.02, rng);
  out_proj_ = xavier_uniform(config_.d_m, config_.vocab_size, rng);
}

Tensor TransformerModel::sublayer(const Tensor& residual, const Tensor& update,
                                  const LayerNormParams& norm, const ForwardContext& ctx) const {
  Tensor dropped = update;
  const float rate = ctx.dropout.value_or(config_.dropout);
  if (ctx.train && rate > 0.0f) {
    if (ctx.rng == nullptr) throw Error("training forward pass needs a dropout generator");
    dropped = ops::dropout(update, rate, true, *ctx.rng);
  }
  return ops::layer_norm(ops::add(residual, dropped), norm.gain, norm.bias);
}

Tensor TransformerModel::feed_forward(const FeedForward& ffn, const Tensor& x) const {
  return ops::linear(ops::relu(ops::linear(x, ffn.w1, ffn.b1)), ffn.w2, ffn.b2);
}

Tensor TransformerModel::encode(const Tensor& frames, const std::vector<std::size_t>& frame_lengths,
                                const ForwardContext& ctx) const {
  if (frames.rank() != 3 || frames.dim(2) != config_.input_feature_dim)
    throw ShapeError("encode expects [b, n, " + std::to_string(config_.input_feature_dim) +
                     "], got " + shape_str(frames.shape()));
  if (frame_lengths.size() != frames.dim(0))
    throw ShapeError("encode: one frame length per batch element required");
  for (auto len : frame_lengths) {
    if (len == 0) throw Error("encode: zero-length utterance");
    if (len > frames.dim(1)) throw Error("encode: frame length exceeds padded extent");
  }
  Tensor x = frames;
  for (std::size_t i = 0; i < frontend_.size(); ++i) {
    x = ops::linear(x, frontend_[i].first, frontend_[i].second);
    if (i + 1 < frontend_.size()) x = ops::relu(x);
  }
  x = apply_ape(x, config_.enc_pe_mode, sinusoidal_, enc_learned_ ? &*enc_learned_ : nullptr);
  const auto mask = AttentionMask::padding(frame_lengths);
  for (const auto& blk : encoder_) {
    Tensor weights;
    x = sublayer(x, mha(blk.self_attn, x, x, mask, ctx.attention_maps ? &weights : nullptr),
                 blk.norm1, ctx);
    if (ctx.attention_maps) ctx.attention_maps->push_back(weights);
    x = sublayer(x, feed_forward(blk.ffn, x), blk.norm2, ctx);
  }
  return x;
}

Tensor TransformerModel::decode_step_parallel(const Tensor& enc_out,
                                              const std::vector<std::size_t>& enc_lengths,
                                              const TokenBatch& dec_input,
                                              const ForwardContext& ctx) const {
  if (enc_out.rank() != 3 || enc_out.dim(2) != config_.d_m || enc_out.dim(0) != dec_input.batch)
    throw ShapeError("decoder: encoder output " + shape_str(enc_out.shape()) +
                     " does not match decoder batch of " + std::to_string(dec_input.batch));
  if (dec_input.length == 0) throw Error("decoder input is empty");
  for (auto id : dec_input.ids)
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size)
      throw Error("decoder input token " + std::to_string(id) + " outside vocabulary of " +
                  std::to_string(config_.vocab_size));
  ++decoder_passes_;

  Tensor y = ops::embedding_lookup(embedding_, dec_input.ids, Shape{dec_input.batch, dec_input.length});
  if (config_.scale_embedding) y = ops::scale(y, std::sqrt(static_cast<float>(config_.d_m)));
  y = apply_ape(y, config_.dec_pe_mode, sinusoidal_, dec_learned_ ? &*dec_learned_ : nullptr);

  const auto self_mask = AttentionMask::causal();
  const auto src_mask = AttentionMask::padding(enc_lengths);
  for (const auto& blk : decoder_) {
    Tensor w_self, w_src;
    const bool dump = ctx.attention_maps != nullptr;
    y = sublayer(y, mha(blk.self_attn, y, y, self_mask, dump ? &w_self : nullptr), blk.norm1, ctx);
    y = sublayer(y, mha(blk.src_attn, y, enc_out, src_mask, dump ? &w_src : nullptr), blk.norm2,
                 ctx);
    if (dump) {
      ctx.attention_maps->push_back(w_self);
      ctx.attention_maps->push_back(w_src);
    }
    y = sublayer(y, feed_forward(blk.ffn, y), blk.norm3, ctx);
  }
  return ops::linear(y, out_proj_);
}

std::vector<NamedTensor> TransformerModel::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < frontend_.size(); ++i) {
    out.emplace_back("frontend." + std::to_string(i) + ".w", frontend_[i].first);
    out.emplace_back("frontend." + std::to_string(i) + ".b", frontend_[i].second);
  }
  if (enc_learned_) out.emplace_back("enc_ape", enc_learned_->table);
  if (dec_learned_) out.emplace_back("dec_ape", dec_learned_->table);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "enc." + std::to_string(i);
    push_mha(out, p + ".self", encoder_[i].self_attn);
    push_norm(out, p + ".norm1", encoder_[i].norm1);
    push_ffn(out, p + ".ffn", encoder_[i].ffn);
    push_norm(out, p + ".norm2", encoder_[i].norm2);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = "dec." + std::to_string(i);
    push_mha(out, p + ".self", decoder_[i].self_attn);
    push_norm(out, p + ".norm1", decoder_[i].norm1);
    push_mha(out, p + ".src", decoder_[i].src_attn);
    push_norm(out, p + ".norm2", decoder_[i].norm2);
    push_ffn(out, p + ".ffn", decoder_[i].ffn);
    push_norm(out, p + ".norm3", decoder_[i].norm3);
  }
  out.emplace_back("embedding", embedding_);
  out.emplace_back("out_proj", out_proj_);
  return out;
}

std::vector<Tensor> TransformerModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::uint64_t TransformerModel::parameter_count() const {
  std::uint64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.size();
  return n;
}

}  // namespace seqtx
