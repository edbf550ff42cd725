#include "seqtx/task.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "binary_io.hpp"

namespace seqtx {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kRepeatedSegment: return "repeated_segment";
    case TaskKind::kMixed: return "mixed";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "repeated_segment") return TaskKind::kRepeatedSegment;
  if (name == "mixed") return TaskKind::kMixed;
  throw ConfigError("unknown task '" + name + "' (copy|repeated_segment|mixed)");
}

void TaskConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(kFirstContentToken))
    throw ConfigError("task vocabulary needs at least one content token");
  if (frames_per_token == 0) throw ConfigError("frames_per_token must be positive");
  if (frame_dim == 0) throw ConfigError("frame_dim must be positive");
  if (frame_noise_std < 0.0) throw ConfigError("frame_noise_std must be nonnegative");
  auto check_range = [&](std::size_t lo, std::size_t hi, const std::string& what) {
    if (lo == 0) throw ConfigError(what + ": minimum length must be positive");
    if (lo > hi) throw ConfigError(what + ": length range min > max");
    if (task != TaskKind::kCopy && lo < 2)
      throw ConfigError(what + ": repeated segments need utterances of at least 2 tokens");
  };
  check_range(train_min_len, train_max_len, "train");
  for (const auto& b : test_buckets) check_range(b.min_len, b.max_len, "bucket " + b.name);
  if (task != TaskKind::kCopy && segment_len == 0)
    throw ConfigError("segment_len must be positive");
}

std::vector<std::string> Dataset::bucket_names() const {
  std::vector<std::string> names;
  for (const auto& u : utterances)
    if (std::find(names.begin(), names.end(), u.bucket) == names.end()) names.push_back(u.bucket);
  return names;
}

namespace {

// Independent stream per purpose so adding test buckets never perturbs the
// training data.
Rng stream(std::uint64_t seed, std::uint64_t purpose) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (purpose + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

TokenSequence sample_tokens(const TaskConfig& cfg, std::size_t len, Rng& rng) {
  TokenSequence t(len);
  for (auto& x : t)
    x = static_cast<TokenId>(rng.uniform_int(kFirstContentToken,
                                             static_cast<std::int64_t>(cfg.vocab_size) - 1));
  return t;
}

TokenSequence plant_segment(const TaskConfig& cfg, TokenSequence t, Rng& rng) {
  const std::size_t len = t.size();
  const std::size_t seg = std::max<std::size_t>(1, std::min(cfg.segment_len, len / 2));
  const auto first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(len - 2 * seg)));
  const auto second = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(first + seg), static_cast<std::int64_t>(len - seg)));
  std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(first), seg,
              t.begin() + static_cast<std::ptrdiff_t>(second));
  return t;
}

std::vector<Utterance> generate_split(const TaskConfig& cfg, const std::vector<float>& protos,
                                      const std::string& bucket, std::size_t min_len,
                                      std::size_t max_len, std::size_t count, Rng rng) {
  std::vector<Utterance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto len = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(min_len), static_cast<std::int64_t>(max_len)));
    TokenSequence ref = sample_tokens(cfg, len, rng);
    bool repeated = cfg.task == TaskKind::kRepeatedSegment;
    if (cfg.task == TaskKind::kMixed) repeated = rng.bernoulli(0.5);
    if (repeated) ref = plant_segment(cfg, std::move(ref), rng);
    std::ostringstream id;
    id << bucket << '-' << std::setw(6) << std::setfill('0') << i;
    out.push_back(synthesize_utterance(cfg, protos, id.str(), bucket, std::move(ref), rng));
  }
  return out;
}

}  // namespace

std::vector<float> token_prototypes(const TaskConfig& cfg) {
  Rng rng = stream(cfg.seed, 0);
  std::vector<float> protos(cfg.vocab_size * cfg.frame_dim, 0.0f);
  for (std::size_t v = kFirstContentToken; v < cfg.vocab_size; ++v)
    for (std::size_t d = 0; d < cfg.frame_dim; ++d)
      protos[v * cfg.frame_dim + d] = static_cast<float>(rng.normal());
  return protos;
}

Utterance synthesize_utterance(const TaskConfig& cfg, const std::vector<float>& prototypes,
                               std::string id, std::string bucket, TokenSequence reference,
                               Rng& rng) {
  Utterance u;
  u.id = std::move(id);
  u.bucket = std::move(bucket);
  u.n_frames = reference.size() * cfg.frames_per_token;
  u.frames.resize(u.n_frames * cfg.frame_dim);
  std::size_t f = 0;
  for (TokenId tok : reference) {
    const float* proto = prototypes.data() + static_cast<std::size_t>(tok) * cfg.frame_dim;
    for (std::size_t rep = 0; rep < cfg.frames_per_token; ++rep, ++f)
      for (std::size_t d = 0; d < cfg.frame_dim; ++d) {
        float v = proto[d];
        if (cfg.frame_noise_std > 0.0) v += static_cast<float>(cfg.frame_noise_std * rng.normal());
        u.frames[f * cfg.frame_dim + d] = v;
      }
  }
  u.reference = std::move(reference);
  return u;
}

TaskData generate_task(const TaskConfig& cfg) {
  cfg.validate();
  const auto protos = token_prototypes(cfg);
  TaskData data;
  data.train.frame_dim = data.test.frame_dim = cfg.frame_dim;
  data.train.vocab_size = data.test.vocab_size = cfg.vocab_size;
  data.train.utterances = generate_split(cfg, protos, "train", cfg.train_min_len,
                                         cfg.train_max_len, cfg.n_train, stream(cfg.seed, 1));
  for (std::size_t b = 0; b < cfg.test_buckets.size(); ++b) {
    const auto& bk = cfg.test_buckets[b];
    auto part = generate_split(cfg, protos, bk.name, bk.min_len, bk.max_len, bk.count,
                               stream(cfg.seed, 2 + b));
    std::move(part.begin(), part.end(), std::back_inserter(data.test.utterances));
  }
  return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "frames");
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw Error("cannot write " + (dir / "manifest.tsv").string());
  manifest << "# seqtx-dataset 1 frame_dim=" << data.frame_dim << " vocab_size=" << data.vocab_size
           << '\n';
  for (const auto& u : data.utterances) {
    manifest << u.id << '\t' << u.bucket << '\t' << u.n_frames << '\t';
    for (std::size_t i = 0; i < u.reference.size(); ++i) manifest << (i ? " " : "") << u.reference[i];
    manifest << '\n';
    std::ofstream blob(dir / "frames" / (u.id + ".f32"), std::ios::binary);
    if (!blob) throw Error("cannot write frames for " + u.id);
    detail::write_f32_le(blob, u.frames);
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw Error("cannot open " + (dir / "manifest.tsv").string());
  Dataset data;
  std::string line;
  if (!std::getline(manifest, line) || line.rfind("# seqtx-dataset 1", 0) != 0)
    throw Error("not a dataset manifest: " + (dir / "manifest.tsv").string());
  {
    std::istringstream hdr(line.substr(17));
    std::string kv;
    while (hdr >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const auto key = kv.substr(0, eq);
      const auto val = std::stoull(kv.substr(eq + 1));
      if (key == "frame_dim") data.frame_dim = val;
      if (key == "vocab_size") data.vocab_size = val;
    }
  }
  if (data.frame_dim == 0) throw Error("dataset manifest lacks frame_dim");
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    Utterance u;
    std::string n_frames, ids;
    if (!std::getline(fields, u.id, '\t') || !std::getline(fields, u.bucket, '\t') ||
        !std::getline(fields, n_frames, '\t'))
      throw Error("malformed manifest line: " + line);
    std::getline(fields, ids);
    u.n_frames = std::stoull(n_frames);
    std::istringstream tok(ids);
    long long v;
    while (tok >> v) u.reference.push_back(static_cast<TokenId>(v));
    u.frames.resize(u.n_frames * data.frame_dim);
    std::ifstream blob(dir / "frames" / (u.id + ".f32"), std::ios::binary);
    if (!blob) throw Error("missing frames for " + u.id);
    detail::read_f32_le(blob, u.frames);
    data.utterances.push_back(std::move(u));
  }
  return data;
}

FrameBatch collate_frames(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw Error("empty batch");
  std::size_t n_max = 0;
  for (auto i : indices) n_max = std::max(n_max, data.utterances.at(i).n_frames);
  if (n_max == 0) throw Error("batch holds only zero-length utterances");
  FrameBatch fb;
  fb.frames = Tensor(Shape{indices.size(), n_max, data.frame_dim}, 0.0f);
  auto dst = fb.frames.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& u = data.utterances[indices[b]];
    std::copy(u.frames.begin(), u.frames.end(),
              dst.begin() + static_cast<std::ptrdiff_t>(b * n_max * data.frame_dim));
    fb.lengths.push_back(u.n_frames);
  }
  return fb;
}

}  // namespace seqtx
