#pragma once

#include "seqtx/model.hpp"

namespace fixture {

// Two-block model small enough for exhaustive checks: one encoder and one
// decoder block, 3 content tokens, no dropout.
inline seqtx::ModelConfig micro_config() {
  seqtx::ModelConfig c;
  c.n_enc_blocks = 1;
  c.n_dec_blocks = 1;
  c.heads = 2;
  c.d_m = 8;
  c.d_ff = 16;
  c.vocab_size = 6;
  c.frontend_dims = {8};
  c.input_feature_dim = 4;
  c.dropout = 0.0f;
  return c;
}

}  // namespace fixture
