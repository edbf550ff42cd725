#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seqtx/model.hpp"
#include "seqtx/sampling.hpp"
#include "seqtx/task.hpp"

namespace seqtx {

struct TrainConfig {
  std::size_t epochs = 12;
  float lr = 2e-4f;
  std::size_t lr_halve_from_epoch = 7;  // 1-based
  std::size_t batch_size = 32;
  float label_smoothing = 0.1f;
  float dropout = 0.1f;
  std::optional<ScheduleConfig> schedule;
  std::optional<HypothesisSource> hyp_source;
  std::uint64_t seed = 1;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoint written

  void validate() const;
};

// lr for 1-based epoch: constant before lr_halve_from_epoch, then halved
// once per epoch starting at that epoch.
float learning_rate(const TrainConfig& cfg, std::size_t epoch);

struct StepRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // global batch counter, 0-based
  double loss = 0.0;
  double teacher_rate = 1.0;
  double lr = 0.0;
  std::size_t decoder_passes = 0;
  double teacher_fraction = 1.0;  // share of label positions kept from ground truth
};

struct TrainLog {
  std::vector<StepRecord> steps;

  // One line per step with fixed formatting; identical runs give identical text.
  std::string to_text() const;
  double mean_loss(std::size_t epoch) const;
};

struct TrainHooks {
  // Called after every epoch with the 1-based epoch and the log so far.
  std::function<void(std::size_t, const TrainLog&)> on_epoch;
};

// Label sequence the decoder is trained to emit: reference then EOS.
TokenSequence target_labels(const TokenSequence& reference);

// Length-bucketed batches: a seeded shuffle, a stable sort by frame count,
// fixed-size chunks, then a shuffled chunk order.
std::vector<std::vector<std::size_t>> make_batches(const Dataset& data, std::size_t batch_size,
                                                   Rng& rng);

// Adam training with label-smoothed cross entropy and optional parallel
// scheduled sampling. Throws on a non-finite loss after writing a state
// dump next to the checkpoint (or to the working directory).
TrainLog train(TransformerModel& model, const Dataset& data, const TrainConfig& cfg,
               const TrainHooks& hooks = {});

}  // namespace seqtx
