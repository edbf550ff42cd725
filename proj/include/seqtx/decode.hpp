#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seqtx/common.hpp"
#include "seqtx/model.hpp"

namespace seqtx {

struct BeamConfig {
  std::size_t width = 5;
  std::size_t max_len = 64;
  bool length_norm = false;

  void validate() const;
};

struct DecodeResult {
  TokenSequence tokens;  // without SOS/EOS
  bool truncated = false;
};

struct Hypothesis {
  TokenSequence tokens;  // without SOS/EOS
  double score = 0.0;    // total log-probability (length-normalized when requested)
  bool finished = false; // ended with EOS
};

// Auto-regressive argmax from SOS until EOS or max_len decoding steps.
// enc_out is [1, n, d_m]. PAD and SOS are never emitted.
DecodeResult greedy_decode(const TransformerModel& model, const Tensor& enc_out,
                           std::size_t enc_length, std::size_t max_len);

// Lock-step greedy decoding of a padded batch; enc_out is [b, n, d_m].
std::vector<DecodeResult> greedy_decode_batch(const TransformerModel& model, const Tensor& enc_out,
                                              const std::vector<std::size_t>& enc_lengths,
                                              std::size_t max_len);

// Beam search over decoder log-probabilities. Each step keeps the best
// `width` expansions; those ending in EOS retire to the completed pool.
// Hypotheses still open after max_len steps are returned as unfinished.
// The result is ranked best first and holds at most `width` entries.
std::vector<Hypothesis> beam_decode(const TransformerModel& model, const Tensor& enc_out,
                                    std::size_t enc_length, const BeamConfig& cfg);

// Log-probabilities of one logit row, computed in double.
std::vector<double> log_softmax_row(std::span<const float> logits);

}  // namespace seqtx
