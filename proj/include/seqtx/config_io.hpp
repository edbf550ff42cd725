#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "seqtx/decode.hpp"
#include "seqtx/model.hpp"
#include "seqtx/sampling.hpp"
#include "seqtx/task.hpp"
#include "seqtx/train.hpp"

namespace seqtx {

using Json = nlohmann::ordered_json;

// Field-by-field JSON mapping. Missing keys keep their defaults; unknown
// keys are rejected so that typos in config files surface immediately.
void to_json(Json& j, const ModelConfig& c);
void from_json(const Json& j, ModelConfig& c);
void to_json(Json& j, const ScheduleConfig& c);
void from_json(const Json& j, ScheduleConfig& c);
void to_json(Json& j, const ErrorChannel& c);
void from_json(const Json& j, ErrorChannel& c);
void to_json(Json& j, const HypothesisSource& c);
void from_json(const Json& j, HypothesisSource& c);
void to_json(Json& j, const LengthBucket& c);
void from_json(const Json& j, LengthBucket& c);
void to_json(Json& j, const TaskConfig& c);
void from_json(const Json& j, TaskConfig& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const BeamConfig& c);
void from_json(const Json& j, BeamConfig& c);

// Everything one experiment needs; the config-file root object.
struct ExperimentConfig {
  TaskConfig task;
  ModelConfig model;
  TrainConfig train;
  BeamConfig beam;
};

void to_json(Json& j, const ExperimentConfig& c);
void from_json(const Json& j, ExperimentConfig& c);

Json read_json_file(const std::filesystem::path& path);

// Sets a dotted key ("train.epochs") in doc. value is parsed as JSON when
// it is valid JSON and kept as a string otherwise.
void apply_override(Json& doc, const std::string& dotted_key, const std::string& value);

// Consumes "--key value" pairs; anything else is an error.
void apply_overrides(Json& doc, const std::vector<std::string>& args);

// SEQTX_SEED when set, otherwise fallback. A non-numeric value is an error.
std::uint64_t default_seed(std::uint64_t fallback);

}  // namespace seqtx
