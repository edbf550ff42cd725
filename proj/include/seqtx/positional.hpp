#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "seqtx/common.hpp"
#include "seqtx/tensor.hpp"

namespace seqtx {

enum class PeMode { kNone, kSinusoidal, kLearned };

std::string to_string(PeMode mode);
PeMode pe_mode_from_string(const std::string& name);

// sin(pos / 10000^(i/d_m)) for even i, cos(pos / 10000^((i-1)/d_m)) for odd
// i, so dims (2t, 2t+1) share one wavelength.
double sinusoidal_pe(std::size_t pos, std::size_t i, std::size_t d_m);

// Fixed sinusoidal table. Positions past the cached range are computed on
// the fly; reserve() grows the cache.
class SinusoidalPE {
 public:
  explicit SinusoidalPE(std::size_t d_m, std::size_t max_precomputed = 512);

  std::size_t d_m() const { return d_m_; }
  std::size_t cached() const { return cache_.size() / d_m_; }
  void reserve(std::size_t positions);

  // [n, d_m] block for positions 0..n-1.
  Tensor matrix(std::size_t n) const;

 private:
  std::size_t d_m_;
  std::vector<float> cache_;
};

// Trainable per-position table. Lookups past max_len are an error.
struct LearnedAPE {
  Tensor table;  // [max_len, d_m]

  static LearnedAPE create(std::size_t max_len, std::size_t d_m, Rng& rng);
  std::size_t max_len() const { return table.dim(0); }
};

// Clipped relative-position embeddings w_{-k} .. w_{k}, one table per layer,
// shared by all heads of that layer.
struct RpeTable {
  std::size_t k = 0;
  Tensor w;  // [2k+1, d_k]

  static RpeTable create(std::size_t k, std::size_t d_k, Rng& rng, float stddev = 0.02f);

  std::size_t d_k() const { return w.dim(1); }
  std::size_t rows() const { return w.dim(0); }

  // clip(offset, -k, k) + k
  std::size_t row_index(std::int64_t offset) const;
};

// Adds the positional matrix for mode to x[b, n, d_m]; kNone is identity.
// The learned table is required for kLearned.
Tensor apply_ape(const Tensor& x, PeMode mode, const SinusoidalPE& sinusoidal,
                 const LearnedAPE* learned = nullptr);

// [n_q, n_k, d_k]; entry (i, j) is row clip(j - i, -k, k) + k of table.w.
// Gradients accumulate into the shared rows.
Tensor relative_rows(std::size_t n_q, std::size_t n_k, const RpeTable& table);

}  // namespace seqtx
