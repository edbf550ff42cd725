#include "seqtx/positional.hpp"

#include <algorithm>
#include <cmath>

#include "seqtx/ops.hpp"

namespace seqtx {

std::string to_string(PeMode mode) {
  switch (mode) {
    case PeMode::kNone: return "none";
    case PeMode::kSinusoidal: return "sinusoidal";
    case PeMode::kLearned: return "learned";
  }
  return "?";
}

PeMode pe_mode_from_string(const std::string& name) {
  if (name == "none") return PeMode::kNone;
  if (name == "sinusoidal") return PeMode::kSinusoidal;
  if (name == "learned") return PeMode::kLearned;
  throw ConfigError("unknown positional mode '" + name + "' (none|sinusoidal|learned)");
}

double sinusoidal_pe(std::size_t pos, std::size_t i, std::size_t d_m) {
  if (i >= d_m) throw Error("positional dim index out of range");
  const bool even = i % 2 == 0;
  const double exponent = static_cast<double>(even ? i : i - 1) / static_cast<double>(d_m);
  const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
  return even ? std::sin(angle) : std::cos(angle);
}

SinusoidalPE::SinusoidalPE(std::size_t d_m, std::size_t max_precomputed) : d_m_(d_m) {
  if (d_m == 0) throw ConfigError("d_m must be positive");
  reserve(max_precomputed);
}

void SinusoidalPE::reserve(std::size_t positions) {
  const std::size_t have = cached();
  if (positions <= have) return;
  cache_.resize(positions * d_m_);
  for (std::size_t p = have; p < positions; ++p)
    for (std::size_t i = 0; i < d_m_; ++i)
      cache_[p * d_m_ + i] = static_cast<float>(sinusoidal_pe(p, i, d_m_));
}

Tensor SinusoidalPE::matrix(std::size_t n) const {
  std::vector<float> values(n * d_m_);
  const std::size_t from_cache = std::min(n, cached());
  std::copy_n(cache_.begin(), from_cache * d_m_, values.begin());
  for (std::size_t p = from_cache; p < n; ++p)
    for (std::size_t i = 0; i < d_m_; ++i)
      values[p * d_m_ + i] = static_cast<float>(sinusoidal_pe(p, i, d_m_));
  return Tensor(Shape{n, d_m_}, std::move(values));
}

LearnedAPE LearnedAPE::create(std::size_t max_len, std::size_t d_m, Rng& rng) {
  std::vector<float> v(max_len * d_m);
  for (auto& x : v) x = static_cast<float>(0.02 * rng.normal());
  return LearnedAPE{Tensor(Shape{max_len, d_m}, std::move(v), true)};
}

RpeTable RpeTable::create(std::size_t k, std::size_t d_k, Rng& rng, float stddev) {
  std::vector<float> v((2 * k + 1) * d_k);
  for (auto& x : v) x = static_cast<float>(stddev * rng.normal());
  return RpeTable{k, Tensor(Shape{2 * k + 1, d_k}, std::move(v), true)};
}

std::size_t RpeTable::row_index(std::int64_t offset) const {
  const auto kk = static_cast<std::int64_t>(k);
  return static_cast<std::size_t>(std::clamp(offset, -kk, kk) + kk);
}

Tensor apply_ape(const Tensor& x, PeMode mode, const SinusoidalPE& sinusoidal,
                 const LearnedAPE* learned) {
  if (x.rank() != 3) throw ShapeError("apply_ape expects [b, n, d_m], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(1);
  const std::size_t d = x.dim(2);
  switch (mode) {
    case PeMode::kNone:
      return x;
    case PeMode::kSinusoidal:
      if (sinusoidal.d_m() != d) throw ShapeError("sinusoidal table width differs from input");
      return ops::add(x, sinusoidal.matrix(n));
    case PeMode::kLearned: {
      if (learned == nullptr) throw Error("learned positional mode without a table");
      if (n > learned->max_len())
        throw Error("position overflow: sequence of " + std::to_string(n) +
                    " exceeds learned positional table of " + std::to_string(learned->max_len()));
      std::vector<std::int32_t> ids(n);
      for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int32_t>(i);
      return ops::add(x, ops::embedding_lookup(learned->table, ids, Shape{n}));
    }
  }
  return x;
}

Tensor relative_rows(std::size_t n_q, std::size_t n_k, const RpeTable& table) {
  std::vector<std::int32_t> ids(n_q * n_k);
  for (std::size_t i = 0; i < n_q; ++i)
    for (std::size_t j = 0; j < n_k; ++j)
      ids[i * n_k + j] = static_cast<std::int32_t>(
          table.row_index(static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i)));
  return ops::embedding_lookup(table.w, ids, Shape{n_q, n_k});
}

}  // namespace seqtx
