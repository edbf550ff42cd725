#include "seqtx/config_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>

namespace seqtx {

namespace {

void check_keys(const Json& j, const char* what, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + what);
  }
}

template <typename T>
void get(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
void get_optional(const Json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  get(j, key, v);
  out = v;
}

template <typename E, typename Parse>
void get_enum(const Json& j, const char* key, E& out, Parse parse) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
  out = parse(j.at(key).get<std::string>());
}

// Shortest decimal that reads back as the same float, so 0.1f prints as 0.1.
double short_float(float f) {
  char buf[32];
  for (int prec = 6; prec < 9; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, static_cast<double>(f));
    const double d = std::strtod(buf, nullptr);
    if (static_cast<float>(d) == f) return d;
  }
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(f));
  return std::strtod(buf, nullptr);
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace

void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"n_enc_blocks", c.n_enc_blocks},
           {"n_dec_blocks", c.n_dec_blocks},
           {"heads", c.heads},
           {"d_m", c.d_m},
           {"d_ff", c.d_ff},
           {"vocab_size", c.vocab_size},
           {"enc_pe_mode", to_string(c.enc_pe_mode)},
           {"dec_pe_mode", to_string(c.dec_pe_mode)},
           {"enc_rpe_k", optional_json(c.enc_rpe_k)},
           {"dec_rpe_k", optional_json(c.dec_rpe_k)},
           {"dropout", short_float(c.dropout)},
           {"frontend_dims", c.frontend_dims},
           {"input_feature_dim", c.input_feature_dim},
           {"enc_learned_max_len", c.enc_learned_max_len},
           {"dec_learned_max_len", c.dec_learned_max_len},
           {"scale_embedding", c.scale_embedding}};
}

void from_json(const Json& j, ModelConfig& c) {
  check_keys(j, "model",
             {"n_enc_blocks", "n_dec_blocks", "heads", "d_m", "d_ff", "vocab_size", "enc_pe_mode",
              "dec_pe_mode", "enc_rpe_k", "dec_rpe_k", "dropout", "frontend_dims",
              "input_feature_dim", "enc_learned_max_len", "dec_learned_max_len",
              "scale_embedding"});
  get(j, "n_enc_blocks", c.n_enc_blocks);
  get(j, "n_dec_blocks", c.n_dec_blocks);
  get(j, "heads", c.heads);
  get(j, "d_m", c.d_m);
  get(j, "d_ff", c.d_ff);
  get(j, "vocab_size", c.vocab_size);
  get_enum(j, "enc_pe_mode", c.enc_pe_mode, pe_mode_from_string);
  get_enum(j, "dec_pe_mode", c.dec_pe_mode, pe_mode_from_string);
  get_optional(j, "enc_rpe_k", c.enc_rpe_k);
  get_optional(j, "dec_rpe_k", c.dec_rpe_k);
  get(j, "dropout", c.dropout);
  get(j, "frontend_dims", c.frontend_dims);
  get(j, "input_feature_dim", c.input_feature_dim);
  get(j, "enc_learned_max_len", c.enc_learned_max_len);
  get(j, "dec_learned_max_len", c.dec_learned_max_len);
  get(j, "scale_embedding", c.scale_embedding);
}

void to_json(Json& j, const ScheduleConfig& c) {
  j = Json{{"p_min", c.p_min},
           {"n_st", c.n_st},
           {"n_ed", c.n_ed},
           {"step_unit", to_string(c.step_unit)},
           {"mix_level", to_string(c.mix_level)}};
}

void from_json(const Json& j, ScheduleConfig& c) {
  check_keys(j, "schedule", {"p_min", "n_st", "n_ed", "step_unit", "mix_level"});
  get(j, "p_min", c.p_min);
  get(j, "n_st", c.n_st);
  get(j, "n_ed", c.n_ed);
  get_enum(j, "step_unit", c.step_unit, step_unit_from_string);
  get_enum(j, "mix_level", c.mix_level, mix_level_from_string);
}

void to_json(Json& j, const ErrorChannel& c) {
  j = Json{{"sub_rate", c.sub_rate}, {"del_rate", c.del_rate}, {"ins_rate", c.ins_rate}};
}

void from_json(const Json& j, ErrorChannel& c) {
  check_keys(j, "channel", {"sub_rate", "del_rate", "ins_rate"});
  get(j, "sub_rate", c.sub_rate);
  get(j, "del_rate", c.del_rate);
  get(j, "ins_rate", c.ins_rate);
}

void to_json(Json& j, const HypothesisSource& c) {
  j = Json{{"kind", to_string(c.kind)},
           {"channel", c.channel},
           {"n_passes", c.n_passes},
           {"path", c.path.string()},
           {"seed", c.seed}};
}

void from_json(const Json& j, HypothesisSource& c) {
  check_keys(j, "hyp_source", {"kind", "channel", "n_passes", "path", "seed"});
  get_enum(j, "kind", c.kind, hypothesis_kind_from_string);
  get(j, "channel", c.channel);
  get(j, "n_passes", c.n_passes);
  std::string path = c.path.string();
  get(j, "path", path);
  c.path = path;
  get(j, "seed", c.seed);
}

void to_json(Json& j, const LengthBucket& c) {
  j = Json{{"name", c.name}, {"min_len", c.min_len}, {"max_len", c.max_len}, {"count", c.count}};
}

void from_json(const Json& j, LengthBucket& c) {
  check_keys(j, "bucket", {"name", "min_len", "max_len", "count"});
  get(j, "name", c.name);
  get(j, "min_len", c.min_len);
  get(j, "max_len", c.max_len);
  get(j, "count", c.count);
}

void to_json(Json& j, const TaskConfig& c) {
  j = Json{{"task", to_string(c.task)},
           {"vocab_size", c.vocab_size},
           {"frames_per_token", c.frames_per_token},
           {"frame_dim", c.frame_dim},
           {"frame_noise_std", c.frame_noise_std},
           {"train_min_len", c.train_min_len},
           {"train_max_len", c.train_max_len},
           {"n_train", c.n_train},
           {"test_buckets", c.test_buckets},
           {"segment_len", c.segment_len},
           {"seed", c.seed}};
}

void from_json(const Json& j, TaskConfig& c) {
  check_keys(j, "task",
             {"task", "vocab_size", "frames_per_token", "frame_dim", "frame_noise_std",
              "train_min_len", "train_max_len", "n_train", "test_buckets", "segment_len", "seed"});
  get_enum(j, "task", c.task, task_kind_from_string);
  get(j, "vocab_size", c.vocab_size);
  get(j, "frames_per_token", c.frames_per_token);
  get(j, "frame_dim", c.frame_dim);
  get(j, "frame_noise_std", c.frame_noise_std);
  get(j, "train_min_len", c.train_min_len);
  get(j, "train_max_len", c.train_max_len);
  get(j, "n_train", c.n_train);
  get(j, "test_buckets", c.test_buckets);
  get(j, "segment_len", c.segment_len);
  get(j, "seed", c.seed);
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"epochs", c.epochs},
           {"lr", short_float(c.lr)},
           {"lr_halve_from_epoch", c.lr_halve_from_epoch},
           {"batch_size", c.batch_size},
           {"label_smoothing", short_float(c.label_smoothing)},
           {"dropout", short_float(c.dropout)},
           {"schedule", optional_json(c.schedule)},
           {"hyp_source", optional_json(c.hyp_source)},
           {"seed", c.seed},
           {"checkpoint_dir", c.checkpoint_dir.string()}};
}

void from_json(const Json& j, TrainConfig& c) {
  check_keys(j, "train",
             {"epochs", "lr", "lr_halve_from_epoch", "batch_size", "label_smoothing", "dropout",
              "schedule", "hyp_source", "seed", "checkpoint_dir"});
  get(j, "epochs", c.epochs);
  get(j, "lr", c.lr);
  get(j, "lr_halve_from_epoch", c.lr_halve_from_epoch);
  get(j, "batch_size", c.batch_size);
  get(j, "label_smoothing", c.label_smoothing);
  get(j, "dropout", c.dropout);
  get_optional(j, "schedule", c.schedule);
  get_optional(j, "hyp_source", c.hyp_source);
  get(j, "seed", c.seed);
  std::string dir = c.checkpoint_dir.string();
  get(j, "checkpoint_dir", dir);
  c.checkpoint_dir = dir;
}

void to_json(Json& j, const BeamConfig& c) {
  j = Json{{"width", c.width}, {"max_len", c.max_len}, {"length_norm", c.length_norm}};
}

void from_json(const Json& j, BeamConfig& c) {
  check_keys(j, "beam", {"width", "max_len", "length_norm"});
  get(j, "width", c.width);
  get(j, "max_len", c.max_len);
  get(j, "length_norm", c.length_norm);
}

void to_json(Json& j, const ExperimentConfig& c) {
  j = Json{{"task", c.task}, {"model", c.model}, {"train", c.train}, {"beam", c.beam}};
}

void from_json(const Json& j, ExperimentConfig& c) {
  check_keys(j, "config", {"task", "model", "train", "beam"});
  get(j, "task", c.task);
  get(j, "model", c.model);
  get(j, "train", c.train);
  get(j, "beam", c.beam);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_override(Json& doc, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("empty override key");
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + dotted_key + "'");
    if (node->is_null()) *node = Json::object();
    if (!node->is_object())
      throw ConfigError("override '" + dotted_key + "' descends into a non-object");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json parsed = Json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? Json(value) : std::move(parsed);
}

void apply_overrides(Json& doc, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); i += 2) {
    const auto& key = args[i];
    if (key.rfind("--", 0) != 0) throw ConfigError("expected --key, got '" + key + "'");
    if (i + 1 >= args.size()) throw ConfigError("override " + key + " has no value");
    apply_override(doc, key.substr(2), args[i + 1]);
  }
}

std::uint64_t default_seed(std::uint64_t fallback) {
  const char* env = std::getenv("SEQTX_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  char* end = nullptr;
  const auto v = std::strtoull(env, &end, 10);
  if (end == nullptr || *end != '\0') throw ConfigError("SEQTX_SEED must be an unsigned integer");
  return v;
}

}  // namespace seqtx
