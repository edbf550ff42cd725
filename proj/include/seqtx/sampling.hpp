#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqtx/common.hpp"
#include "seqtx/model.hpp"

namespace seqtx {

enum class StepUnit { kEpoch, kBatch };
enum class MixLevel { kToken, kSentence };

std::string to_string(StepUnit unit);
std::string to_string(MixLevel level);
StepUnit step_unit_from_string(const std::string& name);
MixLevel mix_level_from_string(const std::string& name);

// Teacher-force schedule: rate 1 until n_st, linear down to p_min at n_ed,
// p_min afterwards.
struct ScheduleConfig {
  double p_min = 1.0;
  double n_st = 0.0;
  double n_ed = 1.0;
  StepUnit step_unit = StepUnit::kBatch;
  MixLevel mix_level = MixLevel::kToken;

  void validate() const;
};

// max(min(1, 1 - (1 - p_min) * (i - n_st) / (n_ed - n_st)), p_min)
double teacher_force_rate(double step, const ScheduleConfig& cfg);

// Decoder input built from ground truth and a hypothesis. mixed has the
// ground-truth length; teacher_mask[j] is true where mixed[j] == y[j] was
// taken from the ground truth.
struct MixPlan {
  TokenSequence mixed;
  std::vector<bool> teacher_mask;
};

// Token level: each position independently keeps y[j] with probability p,
// otherwise takes y_hat[j] (PAD past the hypothesis end). Sentence level:
// one draw picks y or y_hat (padded or truncated to |y|) wholesale.
MixPlan mix_tokens(const TokenSequence& y, const TokenSequence& y_hat, double p, MixLevel level,
                   Rng& rng);

enum class HypothesisKind { kExternalFile, kErrorChannel, kOfflineSelf, kOnlineSelf };

std::string to_string(HypothesisKind kind);
HypothesisKind hypothesis_kind_from_string(const std::string& name);

struct ErrorChannel {
  double sub_rate = 0.0;
  double del_rate = 0.0;
  double ins_rate = 0.0;

  void validate() const;
};

struct HypothesisSource {
  HypothesisKind kind = HypothesisKind::kErrorChannel;
  ErrorChannel channel;            // error_channel
  std::size_t n_passes = 1;        // online_self
  std::filesystem::path path;      // external_file / offline_self transcripts
  std::uint64_t seed = 0;
};

// Per-utterance hypothesis transcripts keyed by utterance id.
using HypothesisTable = std::unordered_map<std::string, TokenSequence>;

// UTF-8 text, one line per utterance: "<utt_id>\t<space-separated ids>".
HypothesisTable read_hypothesis_file(const std::filesystem::path& path);
void write_hypothesis_file(const std::filesystem::path& path, const std::vector<std::string>& ids,
                           const std::vector<TokenSequence>& hyps);

// Seeded substitutions, deletions and insertions over content tokens
// [kFirstContentToken, vocab_size).
TokenSequence apply_error_channel(const TokenSequence& y, const ErrorChannel& channel,
                                  std::size_t vocab_size, Rng& rng);

// Everything a hypothesis source may need for one training batch. Targets
// are the label sequences the decoder is trained on (reference then EOS).
struct HypothesisBatch {
  std::vector<std::string> utt_ids;
  std::vector<TokenSequence> targets;
  // Online self-decoding only.
  const TransformerModel* model = nullptr;
  Tensor enc_out;
  std::vector<std::size_t> enc_lengths;
  double teacher_rate = 1.0;
  MixLevel mix_level = MixLevel::kToken;
};

// Supplies hypotheses for the batch, aligned position-by-position with the
// targets. File-backed sources look transcripts up by utterance id (and
// append EOS); the error channel corrupts the reference; online
// self-decoding runs n_passes greedy parallel passes where pass 1 feeds the
// ground truth and pass m feeds the mixture built from pass m-1.
class HypothesisProvider {
 public:
  HypothesisProvider(HypothesisSource source, std::size_t vocab_size);

  const HypothesisSource& source() const { return source_; }

  std::vector<TokenSequence> hypothesize(const HypothesisBatch& batch, Rng& mix_rng);

 private:
  HypothesisSource source_;
  std::size_t vocab_size_;
  HypothesisTable table_;
  Rng channel_rng_;
};

// SOS followed by all but the last label of each row, PAD filled.
TokenBatch decoder_inputs(const std::vector<TokenSequence>& labels);

// Argmax over emittable tokens (everything except PAD and SOS) at every
// position of a [b, u, V] logit tensor; row b keeps lengths[b] positions.
std::vector<TokenSequence> argmax_rows(const Tensor& logits, const std::vector<std::size_t>& lengths);

// Conventional scheduled sampling, one decoder pass per output position:
// at step t the decoder sees the inputs chosen so far and position t keeps
// y[t] with probability p, otherwise takes the model's prediction. Used as a
// reference for the pass-count comparison.
std::vector<MixPlan> sequential_scheduled_sampling(const TransformerModel& model,
                                                   const Tensor& enc_out,
                                                   const std::vector<std::size_t>& enc_lengths,
                                                   const std::vector<TokenSequence>& targets,
                                                   double p, Rng& rng);

}  // namespace seqtx
