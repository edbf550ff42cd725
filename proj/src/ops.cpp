#include "seqtx/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seqtx::ops {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using NodePtr = std::shared_ptr<TensorNode>;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (Graph::active() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

// Registers a backward closure and marks out as differentiable.
template <typename Fn>
void attach(Tensor& out, Fn&& fn) {
  out.set_requires_grad(true);
  Graph::active()->record(std::forward<Fn>(fn));
}

Shape batch_dims(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// For each flat index of `out`, the flat index of an operand broadcast to it.
std::vector<std::size_t> broadcast_map(const Shape& out, const Shape& operand) {
  const std::size_t pad = out.size() - operand.size();
  Shape padded(pad, 1);
  padded.insert(padded.end(), operand.begin(), operand.end());
  auto ost = strides_of(padded);
  for (std::size_t i = 0; i < padded.size(); ++i)
    if (padded[i] == 1) ost[i] = 0;
  std::vector<std::size_t> map(numel(out));
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    map[flat] = src;
    for (std::size_t ax = out.size(); ax-- > 0;) {
      ++idx[ax];
      src += ost[ax];
      if (idx[ax] < out[ax]) break;
      src -= ost[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

void check_broadcastable(const Shape& target, const Shape& operand, const char* op) {
  bool ok = operand.size() <= target.size();
  for (std::size_t i = 0; ok && i < operand.size(); ++i) {
    const auto t = target[target.size() - operand.size() + i];
    ok = operand[i] == t || operand[i] == 1;
  }
  if (!ok)
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(operand) + " to " +
                     shape_str(target));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t p = a.dim(a.rank() - 1);
  const std::size_t p2 = b.dim(b.rank() - 2);
  const std::size_t n = b.dim(b.rank() - 1);
  if (p != p2)
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));

  // A shared rank-2 right operand: fold all left rows into one product.
  if (b.rank() == 2) {
    const std::size_t rows = a.size() / p;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    Tensor out(out_shape);
    MutMap(out.data().data(), rows, n).noalias() =
        ConstMap(a.data().data(), rows, p) * ConstMap(b.data().data(), p, n);
    if (wants_grad({&a, &b})) {
      attach(out, [an = a.node(), bn = b.node(), on = out.node(), rows, p, n] {
        if (!on->has_grad()) return;
        ConstMap dc(on->grad.data(), rows, n);
        if (an->requires_grad)
          MutMap(an->grad_buffer().data(), rows, p).noalias() +=
              dc * ConstMap(bn->data.data(), p, n).transpose();
        if (bn->requires_grad)
          MutMap(bn->grad_buffer().data(), p, n).noalias() +=
              ConstMap(an->data.data(), rows, p).transpose() * dc;
      });
    }
    return out;
  }

  Shape ab = batch_dims(a.shape());
  Shape bb = batch_dims(b.shape());
  const std::size_t rank = std::max(ab.size(), bb.size());
  ab.insert(ab.begin(), rank - ab.size(), 1);
  bb.insert(bb.begin(), rank - bb.size(), 1);
  Shape ob(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (ab[i] != bb[i] && ab[i] != 1 && bb[i] != 1)
      throw ShapeError("matmul batch dimensions not broadcastable: " + shape_str(a.shape()) +
                       " x " + shape_str(b.shape()));
    ob[i] = std::max(ab[i], bb[i]);
  }
  const auto a_map = broadcast_map(ob, ab);
  const auto b_map = broadcast_map(ob, bb);
  Shape out_shape = ob;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const std::size_t batches = numel(ob);
  for (std::size_t i = 0; i < batches; ++i) {
    MutMap(out.data().data() + i * m * n, m, n).noalias() =
        ConstMap(a.data().data() + a_map[i] * m * p, m, p) *
        ConstMap(b.data().data() + b_map[i] * p * n, p, n);
  }
  if (wants_grad({&a, &b})) {
    attach(out, [an = a.node(), bn = b.node(), on = out.node(), a_map, b_map, m, p, n] {
      if (!on->has_grad()) return;
      for (std::size_t i = 0; i < a_map.size(); ++i) {
        ConstMap dc(on->grad.data() + i * m * n, m, n);
        if (an->requires_grad)
          MutMap(an->grad_buffer().data() + a_map[i] * m * p, m, p).noalias() +=
              dc * ConstMap(bn->data.data() + b_map[i] * p * n, p, n).transpose();
        if (bn->requires_grad)
          MutMap(bn->grad_buffer().data() + b_map[i] * p * n, p, n).noalias() +=
              ConstMap(an->data.data() + a_map[i] * m * p, m, p).transpose() * dc;
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_broadcastable(a.shape(), b.shape(), "add");
  Tensor out(a.shape());
  auto o = out.data();
  const auto x = a.data();
  const auto y = b.data();
  const std::size_t total = o.size();
  const std::size_t bn = y.size();

  // b repeats contiguously when its non-unit dims form a suffix of a's shape.
  bool suffix = true;
  {
    std::size_t lead = 0;
    while (lead < b.rank() && b.dim(lead) == 1) ++lead;
    for (std::size_t i = lead; i < b.rank(); ++i)
      if (b.dim(i) != a.dim(a.rank() - b.rank() + i)) suffix = false;
  }

  std::vector<std::size_t> map;
  if (bn == total) {
    for (std::size_t i = 0; i < total; ++i) o[i] = x[i] + y[i];
  } else if (suffix) {
    for (std::size_t i = 0; i < total; ++i) o[i] = x[i] + y[i % bn];
  } else {
    map = broadcast_map(a.shape(), b.shape());
    for (std::size_t i = 0; i < total; ++i) o[i] = x[i] + y[map[i]];
  }
  if (wants_grad({&a, &b})) {
    attach(out, [an = a.node(), bnode = b.node(), on = out.node(), map = std::move(map), bn] {
      if (!on->has_grad()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bnode->requires_grad) {
        auto gb = bnode->grad_buffer();
        if (!map.empty())
          for (std::size_t i = 0; i < g.size(); ++i) gb[map[i]] += g[i];
        else
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % bn] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (wants_grad({&a, &b})) {
    attach(out, [an = a.node(), bn = b.node(), on = out.node()] {
      if (!on->has_grad()) return;
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, float factor) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] * factor;
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node(), factor] {
      if (!on->has_grad()) return;
      auto gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i] * factor;
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out(Shape{1}, static_cast<float>(acc));
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node()] {
      if (!on->has_grad()) return;
      const float g = on->grad[0];
      for (auto& v : xn->grad_buffer()) v += g;
    });
  }
  return out;
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2 needs rank >= 2");
  const std::size_t r = x.dim(x.rank() - 2);
  const std::size_t c = x.dim(x.rank() - 1);
  const std::size_t batches = x.size() / (r * c);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Tensor out(shape);
  for (std::size_t b = 0; b < batches; ++b)
    MutMap(out.data().data() + b * r * c, c, r) =
        ConstMap(x.data().data() + b * r * c, r, c).transpose();
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node(), r, c, batches] {
      if (!on->has_grad()) return;
      auto gx = xn->grad_buffer();
      for (std::size_t b = 0; b < batches; ++b)
        MutMap(gx.data() + b * r * c, r, c) +=
            ConstMap(on->grad.data() + b * r * c, c, r).transpose();
    });
  }
  return out;
}

Tensor permute(const Tensor& x, std::span<const std::size_t> axes) {
  const std::size_t rank = x.rank();
  if (axes.size() != rank) throw ShapeError("permute: axis count does not match rank");
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute: invalid axis list");
    seen[a] = true;
  }
  const auto in_strides = strides_of(x.shape());
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = x.dim(axes[i]);
    step[i] = in_strides[axes[i]];
  }
  // src[flat_out] = flat input index
  std::vector<std::size_t> src(x.size());
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    src[flat] = off;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      off += step[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= step[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  Tensor out(out_shape);
  for (std::size_t i = 0; i < src.size(); ++i) out.data()[i] = x.data()[src[i]];
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node(), src = std::move(src)] {
      if (!on->has_grad()) return;
      auto gx = xn->grad_buffer();
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += on->grad[i];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes) {
  return permute(x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  Tensor out(std::move(shape), x.values());
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node()] {
      if (!on->has_grad()) return;
      auto gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += on->grad[i];
    });
  }
  return out;
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_last of zero tensors");
  const Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin(), p.shape().end() - 1) != lead)
      throw ShapeError("concat_last leading shapes differ: " + shape_str(p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  const std::size_t rows = numel(lead);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src.data() + r * widths[k], widths[k], out.data().data() + r * total + col);
    col += widths[k];
  }
  bool any = false;
  for (const auto& p : parts) any = any || wants_grad({&p});
  if (any) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    attach(out, [nodes, on = out.node(), widths, rows, total] {
      if (!on->has_grad()) return;
      std::size_t col = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k]->requires_grad) {
          auto g = nodes[k]->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < widths[k]; ++c)
              g[r * widths[k] + c] += on->grad[r * total + col + c];
        }
        col += widths[k];
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids,
                        const Shape& index_shape) {
  if (table.rank() != 2) throw ShapeError("embedding table must be rank 2");
  if (numel(index_shape) != ids.size())
    throw ShapeError("embedding index shape " + shape_str(index_shape) + " does not match " +
                     std::to_string(ids.size()) + " ids");
  const std::size_t rows = table.dim(0);
  const std::size_t d = table.dim(1);
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= rows)
      throw Error("embedding index " + std::to_string(id) + " outside table of " +
                  std::to_string(rows) + " rows");
  Shape out_shape = index_shape;
  out_shape.push_back(d);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data().data() + i * d);
  if (wants_grad({&table})) {
    attach(out, [tn = table.node(), on = out.node(), ids = std::vector<std::int32_t>(
                                                          ids.begin(), ids.end()), d] {
      if (!on->has_grad()) return;
      auto g = tn->grad_buffer();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t c = 0; c < d; ++c)
          g[static_cast<std::size_t>(ids[i]) * d + c] += on->grad[i * d + c];
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(0.0f, x.data()[i]);
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node()] {
      if (!on->has_grad()) return;
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xn->data[i] > 0.0f) g[i] += on->grad[i];
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, float rate, bool train, Rng& rng) {
  if (rate < 0.0f || rate >= 1.0f) throw Error("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - rate);
  std::vector<float> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0f : keep_scale;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] * mask[i];
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node(), mask = std::move(mask)] {
      if (!on->has_grad()) return;
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("softmax axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  Tensor out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t c = 0; c < inner; ++c) {
      const std::size_t base = a * n * inner + c;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, in[base + k * inner]);
      double denom = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const float e = std::exp(in[base + k * inner] - mx);
        o[base + k * inner] = e;
        denom += e;
      }
      const float inv = static_cast<float>(1.0 / denom);
      for (std::size_t k = 0; k < n; ++k) o[base + k * inner] *= inv;
    }
  }
  if (wants_grad({&x})) {
    attach(out, [xn = x.node(), on = out.node(), outer, inner, n] {
      if (!on->has_grad()) return;
      auto g = xn->grad_buffer();
      const auto& y = on->data;
      const auto& gy = on->grad;
      for (std::size_t a = 0; a < outer; ++a) {
        for (std::size_t c = 0; c < inner; ++c) {
          const std::size_t base = a * n * inner + c;
          double dot = 0.0;
          for (std::size_t k = 0; k < n; ++k) dot += gy[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = base + k * inner;
            g[i] += y[i] * (gy[i] - static_cast<float>(dot));
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d)
    throw ShapeError("layer_norm gain/bias must have " + std::to_string(d) + " entries");
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  std::vector<float> xhat(x.size());
  std::vector<float> inv_std(rows);
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = in.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const float h = static_cast<float>(row[c] - mean) * inv;
      xhat[r * d + c] = h;
      out.data()[r * d + c] = h * gain.data()[c] + bias.data()[c];
    }
  }
  if (wants_grad({&x, &gain, &bias})) {
    attach(out, [xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                 xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
      if (!on->has_grad()) return;
      const auto& gy = on->grad;
      if (gn->requires_grad) {
        auto gg = gn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < d; ++c) gg[c] += gy[r * d + c] * xhat[r * d + c];
      }
      if (bn->requires_grad) {
        auto gb = bn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < d; ++c) gb[c] += gy[r * d + c];
      }
      if (xn->requires_grad) {
        auto gx = xn->grad_buffer();
        std::vector<float> dh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            dh[c] = gy[r * d + c] * gn->data[c];
            mean_dh += dh[c];
            mean_dh_h += dh[c] * xhat[r * d + c];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          for (std::size_t c = 0; c < d; ++c)
            gx[r * d + c] += inv_std[r] * static_cast<float>(dh[c] - mean_dh -
                                                             xhat[r * d + c] * mean_dh_h);
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2) throw ShapeError("linear weight must be rank 2");
  Tensor y = matmul(x, w);
  return bias.defined() ? add(y, bias) : y;
}

Tensor cross_entropy_ls(const Tensor& logits, std::span<const TokenId> targets, float epsilon,
                        TokenId pad_id) {
  if (epsilon < 0.0f || epsilon >= 1.0f) throw Error("label smoothing must be in [0, 1)");
  const std::size_t V = logits.shape().back();
  const std::size_t rows = logits.size() / V;
  if (targets.size() != rows)
    throw ShapeError("cross_entropy_ls: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " logit rows");
  if (V < 2) throw ShapeError("cross_entropy_ls needs at least two classes");
  const double off = epsilon / static_cast<double>(V - 1);
  const double on_true = 1.0 - epsilon;

  std::size_t valid = 0;
  for (auto t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V)
      throw Error("target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(V));
    ++valid;
  }
  if (valid == 0) throw Error("cross_entropy_ls: every target position is padding");

  std::vector<float> probs(logits.size(), 0.0f);
  double total = 0.0;
  const auto in = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad_id) continue;
    const float* row = in.data() + r * V;
    const float mx = *std::max_element(row, row + V);
    double denom = 0.0;
    for (std::size_t c = 0; c < V; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    const double log_z = std::log(denom) + mx;
    double loss = 0.0;
    for (std::size_t c = 0; c < V; ++c) {
      const double logp = row[c] - log_z;
      const double q = static_cast<std::size_t>(targets[r]) == c ? on_true : off;
      loss -= q * logp;
      probs[r * V + c] = static_cast<float>(std::exp(logp));
    }
    total += loss;
  }
  Tensor out(Shape{1}, static_cast<float>(total / static_cast<double>(valid)));
  if (wants_grad({&logits})) {
    attach(out, [ln = logits.node(), on = out.node(), probs = std::move(probs),
                 tg = std::vector<TokenId>(targets.begin(), targets.end()), V, rows, valid, off,
                 on_true, pad_id] {
      if (!on->has_grad()) return;
      const double g = on->grad[0] / static_cast<double>(valid);
      auto gl = ln->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        if (tg[r] == pad_id) continue;
        for (std::size_t c = 0; c < V; ++c) {
          const double q = static_cast<std::size_t>(tg[r]) == c ? on_true : off;
          gl[r * V + c] += static_cast<float>(g * (probs[r * V + c] - q));
        }
      }
    });
  }
  return out;
}

}  // namespace seqtx::ops
