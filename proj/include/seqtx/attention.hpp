#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "seqtx/positional.hpp"
#include "seqtx/tensor.hpp"

namespace seqtx {

inline constexpr float kMaskSentinel = -1e9f;

enum class MaskKind { kNone, kCausal, kPadding, kCausalPadding };

struct AttentionMask {
  MaskKind kind = MaskKind::kNone;
  std::vector<std::size_t> valid_lengths;  // key lengths per batch element (padding kinds)

  static AttentionMask none() { return {}; }
  static AttentionMask causal() { return {MaskKind::kCausal, {}}; }
  static AttentionMask padding(std::vector<std::size_t> lengths) {
    return {MaskKind::kPadding, std::move(lengths)};
  }
  static AttentionMask causal_padding(std::vector<std::size_t> lengths) {
    return {MaskKind::kCausalPadding, std::move(lengths)};
  }

  bool causal_part() const { return kind == MaskKind::kCausal || kind == MaskKind::kCausalPadding; }
  bool padding_part() const {
    return kind == MaskKind::kPadding || kind == MaskKind::kCausalPadding;
  }

  // Additive bias of shape [b or 1, 1, n_q, n_k]: 0 where visible, the
  // sentinel where masked. Undefined tensor for kNone. Throws when any
  // query row would see no key at all.
  Tensor bias(std::size_t batch, std::size_t n_q, std::size_t n_k) const;
};

// Multi-head attention parameters. Projections carry no bias; the head
// layout is [b, n, h*d_k] -> [b, h, n, d_k].
struct MhaLayer {
  Tensor w_q;  // [d_m, h*d_k]
  Tensor w_k;  // [d_m, h*d_k]
  Tensor w_v;  // [d_m, h*d_v]
  Tensor w_o;  // [h*d_v, d_m]
  std::size_t heads = 1;
  std::optional<RpeTable> rpe;

  static MhaLayer create(std::size_t d_m, std::size_t heads, Rng& rng,
                         std::optional<std::size_t> rpe_k = std::nullopt);

  std::size_t d_m() const { return w_q.dim(0); }
  std::size_t d_k() const { return d_m() / heads; }
};

// Xavier-uniform [fan_in, fan_out] matrix.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);

// softmax(QK^T / sqrt(d_k) + mask) V for Q[b,h,n_q,d_k], K[b,h,n_k,d_k],
// V[b,h,n_k,d_v]. When weights is non-null it receives the attention map.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask& mask, Tensor* weights = nullptr);

// (z_q z_k^T + z_q a^T) / sqrt(d_k) with a_ij the clipped relative row for
// key j seen from query i. The relative term runs as one batched product:
// for each query position, the [b*h, d_k] query block times the
// [d_k, n_k] block of its relative rows, reshaped back to [b,h,n_q,n_k].
Tensor rpe_logits(const Tensor& z_q, const Tensor& z_k, const RpeTable& table);

// Project, split into heads, attend (relative logits when the layer has a
// table), merge, output-project. q_in [b,n_q,d_m], kv_in [b,n_k,d_m].
Tensor mha(const MhaLayer& layer, const Tensor& q_in, const Tensor& kv_in,
           const AttentionMask& mask, Tensor* weights = nullptr);

}  // namespace seqtx
