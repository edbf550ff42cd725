#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqtx/config_io.hpp"
#include "seqtx/decode.hpp"
#include "seqtx/metrics.hpp"
#include "seqtx/model.hpp"
#include "seqtx/task.hpp"

namespace seqtx {

struct UtteranceResult {
  std::string id;
  std::string bucket;
  TokenSequence hypothesis;
  AlignmentReport report;
  bool truncated = false;
  // Self-loop spans in the hypothesis beyond those already in the reference.
  std::size_t self_loops = 0;
};

struct BucketMetrics {
  std::string name;
  std::size_t n_utts = 0;
  std::size_t ref_len = 0;
  std::size_t n_sub = 0, n_del = 0, n_ins = 0, n_hit = 0;
  std::size_t n_tail_del = 0, n_internal_del = 0;
  std::size_t n_self_loops = 0;
  std::size_t n_truncated = 0;

  double cer() const;
  void add(const UtteranceResult& r);
};

struct EvalReport {
  std::vector<UtteranceResult> utterances;
  std::vector<BucketMetrics> buckets;  // dataset bucket order
  BucketMetrics corpus;

  const BucketMetrics& bucket(const std::string& name) const;
  std::string to_text() const;
  Json to_json() const;
};

// Maps an utterance to its best hypothesis; `truncated` may be set.
using Recognizer = std::function<TokenSequence(const Utterance&, bool& truncated)>;

inline constexpr std::size_t kSelfLoopMinRepeat = 3;

EvalReport evaluate(const Dataset& data, const Recognizer& recognize);

// Beam decoding of every utterance with the frozen model.
EvalReport evaluate(const TransformerModel& model, const Dataset& data, const BeamConfig& beam);

// Best beam hypothesis for one utterance.
Hypothesis recognize(const TransformerModel& model, const Utterance& utt, const BeamConfig& beam);

}  // namespace seqtx
