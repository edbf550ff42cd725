#pragma once

#include <filesystem>
#include <memory>

#include "seqtx/model.hpp"

namespace seqtx {

// <dir>/model.manifest: header "seqtx-checkpoint 1", a "config <json>" line,
// a "tensors <count>" line, then per tensor
// "<name> f32 <d0>x<d1>... <byte offset> <element count>".
// <dir>/model.bin: the tensors back to back as little-endian float32.
void save_checkpoint(const TransformerModel& model, const std::filesystem::path& dir);

// Builds a model from the stored config and fills every parameter.
std::unique_ptr<TransformerModel> load_checkpoint(const std::filesystem::path& dir);

// Overwrites the parameters of an existing model; names and shapes must match.
void load_parameters(TransformerModel& model, const std::filesystem::path& dir);

}  // namespace seqtx
