#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqtx/common.hpp"
#include "seqtx/tensor.hpp"

namespace seqtx {

// copy: the reference is a uniformly sampled token string.
// repeated_segment: one sub-span is planted at two distinct, non-overlapping
// positions of every utterance.
// mixed: each utterance is drawn from either of the above with equal odds.
enum class TaskKind { kCopy, kRepeatedSegment, kMixed };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct LengthBucket {
  std::string name;
  std::size_t min_len = 1;  // tokens, inclusive
  std::size_t max_len = 1;  // tokens, inclusive
  std::size_t count = 0;    // utterances to generate
};

struct TaskConfig {
  TaskKind task = TaskKind::kCopy;
  std::size_t vocab_size = 12;  // including PAD/SOS/EOS
  std::size_t frames_per_token = 3;
  std::size_t frame_dim = 16;
  double frame_noise_std = 0.1;
  std::size_t train_min_len = 1;
  std::size_t train_max_len = 8;
  std::size_t n_train = 2000;
  std::vector<LengthBucket> test_buckets;
  std::size_t segment_len = 3;  // planted span length (repeated_segment)
  std::uint64_t seed = 1;

  void validate() const;
};

struct Utterance {
  std::string id;
  std::string bucket;  // "train" for training data
  std::size_t n_frames = 0;
  std::vector<float> frames;  // [n_frames, frame_dim] row-major
  TokenSequence reference;    // content tokens only
};

struct Dataset {
  std::size_t frame_dim = 0;
  std::size_t vocab_size = 0;
  std::vector<Utterance> utterances;

  std::vector<std::string> bucket_names() const;  // in first-seen order
};

struct TaskData {
  Dataset train;
  Dataset test;
};

// Every token emits frames_per_token copies of its fixed prototype vector
// plus Gaussian noise. A pure function of the config (seed included).
TaskData generate_task(const TaskConfig& cfg);

// One utterance of the given token string, drawing frame noise from rng.
Utterance synthesize_utterance(const TaskConfig& cfg, const std::vector<float>& prototypes,
                               std::string id, std::string bucket, TokenSequence reference,
                               Rng& rng);

// [vocab_size, frame_dim] prototypes; rows for reserved ids are zero.
std::vector<float> token_prototypes(const TaskConfig& cfg);

// On disk: <dir>/manifest.tsv with one line per utterance
// "<utt_id>\t<bucket>\t<n_frames>\t<space-separated ids>" after a header
// line, plus <dir>/frames/<utt_id>.f32 holding little-endian float32 frames.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

// Padded batch assembled from selected utterances.
struct FrameBatch {
  Tensor frames;  // [b, n_max, frame_dim]
  std::vector<std::size_t> lengths;
};

FrameBatch collate_frames(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace seqtx
