#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seqtx/config_io.hpp"
#include "seqtx/evaluate.hpp"
#include "seqtx/train.hpp"

namespace seqtx {

// One row of the comparison grid: positional modes for both sides plus the
// scheduled-sampling setup.
struct ExperimentPreset {
  std::string id;
  std::string description;
  PeMode enc_pe_mode = PeMode::kSinusoidal;
  PeMode dec_pe_mode = PeMode::kSinusoidal;
  std::optional<std::size_t> enc_rpe_k;
  std::optional<std::size_t> dec_rpe_k;
  std::optional<ScheduleConfig> schedule;
  std::optional<HypothesisSource> hyp_source;
  // The hypothesis file comes from beam-decoding the training set with a
  // model trained under the B1 row first.
  bool offline_self_decode = false;
};

// B1, E1, E2, E3, E5, E6, E7, E8, E8+E3.
const std::vector<std::string>& preset_ids();

// Resolves an id against the task and training settings (relative ranges
// scale with frames_per_token, schedules with the epoch count).
ExperimentPreset make_preset(const std::string& id, const TaskConfig& task,
                             const TrainConfig& train);

// Model and training configs for the preset on top of the experiment base.
void apply_preset(const ExperimentPreset& preset, const TaskConfig& task, ModelConfig& model,
                  TrainConfig& train);

struct PresetReport {
  std::string id;
  ModelConfig model;
  TrainLog log;
  EvalReport eval;

  // "<id> <bucket CER%>... corpus" in the dataset bucket order.
  std::string row() const;
};

// Generates the task, trains the preset model on it, evaluates the test
// buckets with beam search. With a non-empty out_dir, the checkpoint,
// training log and reports are written there.
PresetReport run_preset(const std::string& id, const ExperimentConfig& base,
                        const std::filesystem::path& out_dir = {});

// Same, on already generated data.
PresetReport run_preset(const std::string& id, const ExperimentConfig& base, const TaskData& data,
                        const std::filesystem::path& out_dir = {});

}  // namespace seqtx
