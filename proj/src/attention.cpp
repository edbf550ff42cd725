#include "seqtx/attention.hpp"

#include <cmath>

#include "seqtx/ops.hpp"

namespace seqtx {

Tensor AttentionMask::bias(std::size_t batch, std::size_t n_q, std::size_t n_k) const {
  if (kind == MaskKind::kNone) return Tensor();
  const bool pad = padding_part();
  const bool causal = causal_part();
  if (pad && valid_lengths.size() != batch)
    throw ShapeError("padding mask has " + std::to_string(valid_lengths.size()) +
                     " lengths for batch of " + std::to_string(batch));
  const std::size_t planes = pad ? batch : 1;
  Tensor out(Shape{planes, 1, n_q, n_k}, 0.0f);
  auto d = out.data();
  for (std::size_t b = 0; b < planes; ++b) {
    const std::size_t limit = pad ? valid_lengths[b] : n_k;
    for (std::size_t i = 0; i < n_q; ++i) {
      std::size_t visible = 0;
      for (std::size_t j = 0; j < n_k; ++j) {
        const bool masked = j >= limit || (causal && j > i);
        d[(b * n_q + i) * n_k + j] = masked ? kMaskSentinel : 0.0f;
        visible += masked ? 0 : 1;
      }
      if (visible == 0)
        throw Error("attention query row " + std::to_string(i) + " of batch element " +
                    std::to_string(b) + " has every key masked");
    }
  }
  return out;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<float> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-limit, limit));
  return Tensor(Shape{fan_in, fan_out}, std::move(v), true);
}

MhaLayer MhaLayer::create(std::size_t d_m, std::size_t heads, Rng& rng,
                          std::optional<std::size_t> rpe_k) {
  if (heads == 0 || d_m % heads != 0)
    throw ConfigError("d_m (" + std::to_string(d_m) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  MhaLayer layer;
  layer.heads = heads;
  layer.w_q = xavier_uniform(d_m, d_m, rng);
  layer.w_k = xavier_uniform(d_m, d_m, rng);
  layer.w_v = xavier_uniform(d_m, d_m, rng);
  layer.w_o = xavier_uniform(d_m, d_m, rng);
  if (rpe_k) layer.rpe = RpeTable::create(*rpe_k, d_m / heads, rng);
  return layer;
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || x.dim(2) % heads != 0)
    throw ShapeError("split_heads expects [b, n, h*d], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2) / heads;
  return ops::permute(ops::reshape(x, Shape{b, n, heads, d}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("merge_heads expects [b, h, n, d]");
  const std::size_t b = x.dim(0), h = x.dim(1), n = x.dim(2), d = x.dim(3);
  return ops::reshape(ops::permute(x, {0, 2, 1, 3}), Shape{b, n, h * d});
}

namespace {

Tensor attend(const Tensor& logits, const Tensor& v, const AttentionMask& mask, Tensor* weights) {
  const Tensor bias = mask.bias(logits.dim(0), logits.dim(2), logits.dim(3));
  Tensor probs = ops::softmax(bias.defined() ? ops::add(logits, bias) : logits, 3);
  if (weights) *weights = probs.detach();
  return ops::matmul(probs, v);
}

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4)
    throw ShapeError("attention expects rank-4 [b, h, n, d] operands");
  if (q.dim(0) != k.dim(0) || q.dim(1) != k.dim(1) || q.dim(3) != k.dim(3))
    throw ShapeError("query " + shape_str(q.shape()) + " and key " + shape_str(k.shape()) +
                     " disagree");
  if (v.dim(0) != k.dim(0) || v.dim(1) != k.dim(1) || v.dim(2) != k.dim(2))
    throw ShapeError("value " + shape_str(v.shape()) + " and key " + shape_str(k.shape()) +
                     " disagree");
}

}  // namespace

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask& mask, Tensor* weights) {
  check_qkv(q, k, v);
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(q.dim(3)));
  Tensor logits = ops::scale(ops::matmul(q, ops::transpose_last2(k)), inv_sqrt);
  return attend(logits, v, mask, weights);
}

Tensor rpe_logits(const Tensor& z_q, const Tensor& z_k, const RpeTable& table) {
  if (z_q.rank() != 4 || z_k.rank() != 4) throw ShapeError("rpe_logits expects [b, h, n, d_k]");
  const std::size_t b = z_q.dim(0), h = z_q.dim(1), n_q = z_q.dim(2), d_k = z_q.dim(3);
  const std::size_t n_k = z_k.dim(2);
  if (table.d_k() != d_k)
    throw ShapeError("relative table width " + std::to_string(table.d_k()) +
                     " differs from head dim " + std::to_string(d_k));
  if (z_k.dim(0) != b || z_k.dim(1) != h || z_k.dim(3) != d_k)
    throw ShapeError("rpe_logits query/key shapes disagree");

  Tensor content = ops::matmul(z_q, ops::transpose_last2(z_k));

  Tensor rows_t = ops::transpose_last2(relative_rows(n_q, n_k, table));  // [n_q, d_k, n_k]
  Tensor q_by_pos =
      ops::reshape(ops::permute(z_q, {2, 0, 1, 3}), Shape{n_q, b * h, d_k});
  Tensor rel = ops::matmul(q_by_pos, rows_t);  // [n_q, b*h, n_k]
  Tensor position = ops::permute(ops::reshape(rel, Shape{n_q, b, h, n_k}), {1, 2, 0, 3});

  return ops::scale(ops::add(content, position), 1.0f / std::sqrt(static_cast<float>(d_k)));
}

Tensor mha(const MhaLayer& layer, const Tensor& q_in, const Tensor& kv_in,
           const AttentionMask& mask, Tensor* weights) {
  if (q_in.rank() != 3 || kv_in.rank() != 3 || q_in.dim(2) != layer.d_m() ||
      kv_in.dim(2) != layer.d_m() || q_in.dim(0) != kv_in.dim(0))
    throw ShapeError("mha inputs " + shape_str(q_in.shape()) + ", " + shape_str(kv_in.shape()) +
                     " do not fit d_m=" + std::to_string(layer.d_m()));
  Tensor q = split_heads(ops::linear(q_in, layer.w_q), layer.heads);
  Tensor k = split_heads(ops::linear(kv_in, layer.w_k), layer.heads);
  Tensor v = split_heads(ops::linear(kv_in, layer.w_v), layer.heads);
  Tensor context;
  if (layer.rpe) {
    context = attend(rpe_logits(q, k, *layer.rpe), v, mask, weights);
  } else {
    context = scaled_dot_attention(q, k, v, mask, weights);
  }
  return ops::linear(merge_heads(context), layer.w_o);
}

}  // namespace seqtx
