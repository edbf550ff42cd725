#include "seqtx/sampling.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace seqtx {

std::string to_string(StepUnit unit) { return unit == StepUnit::kEpoch ? "epoch" : "batch"; }
std::string to_string(MixLevel level) { return level == MixLevel::kToken ? "token" : "sentence"; }

StepUnit step_unit_from_string(const std::string& name) {
  if (name == "epoch") return StepUnit::kEpoch;
  if (name == "batch") return StepUnit::kBatch;
  throw ConfigError("unknown step unit '" + name + "' (epoch|batch)");
}

MixLevel mix_level_from_string(const std::string& name) {
  if (name == "token") return MixLevel::kToken;
  if (name == "sentence") return MixLevel::kSentence;
  throw ConfigError("unknown mix level '" + name + "' (token|sentence)");
}

void ScheduleConfig::validate() const {
  if (!(p_min > 0.0 && p_min <= 1.0)) throw ConfigError("p_min must lie in (0, 1]");
  if (n_st < 0.0 || n_ed < 0.0) throw ConfigError("schedule steps must be nonnegative");
  if (n_ed == n_st) throw ConfigError("schedule needs n_ed != n_st");
  if (n_ed < n_st) throw ConfigError("schedule needs n_st < n_ed");
}

double teacher_force_rate(double step, const ScheduleConfig& cfg) {
  cfg.validate();
  if (step < 0.0) throw Error("schedule step must be nonnegative");
  const double linear = 1.0 - (1.0 - cfg.p_min) * (step - cfg.n_st) / (cfg.n_ed - cfg.n_st);
  return std::max(std::min(1.0, linear), cfg.p_min);
}

MixPlan mix_tokens(const TokenSequence& y, const TokenSequence& y_hat, double p, MixLevel level,
                   Rng& rng) {
  if (p < 0.0 || p > 1.0) throw Error("teacher-force rate must lie in [0, 1]");
  MixPlan plan;
  plan.mixed.resize(y.size());
  plan.teacher_mask.resize(y.size());
  auto hyp_at = [&](std::size_t j) { return j < y_hat.size() ? y_hat[j] : kPad; };
  if (level == MixLevel::kSentence) {
    const bool teacher = rng.uniform() < p;
    for (std::size_t j = 0; j < y.size(); ++j) {
      plan.mixed[j] = teacher ? y[j] : hyp_at(j);
      plan.teacher_mask[j] = teacher;
    }
    return plan;
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    const bool teacher = rng.uniform() < p;
    plan.mixed[j] = teacher ? y[j] : hyp_at(j);
    plan.teacher_mask[j] = teacher;
  }
  return plan;
}

std::string to_string(HypothesisKind kind) {
  switch (kind) {
    case HypothesisKind::kExternalFile: return "external_file";
    case HypothesisKind::kErrorChannel: return "error_channel";
    case HypothesisKind::kOfflineSelf: return "offline_self";
    case HypothesisKind::kOnlineSelf: return "online_self";
  }
  return "?";
}

HypothesisKind hypothesis_kind_from_string(const std::string& name) {
  if (name == "external_file") return HypothesisKind::kExternalFile;
  if (name == "error_channel") return HypothesisKind::kErrorChannel;
  if (name == "offline_self") return HypothesisKind::kOfflineSelf;
  if (name == "online_self") return HypothesisKind::kOnlineSelf;
  throw ConfigError("unknown hypothesis source '" + name +
                    "' (external_file|error_channel|offline_self|online_self)");
}

void ErrorChannel::validate() const {
  if (sub_rate < 0.0 || del_rate < 0.0 || ins_rate < 0.0)
    throw ConfigError("error channel rates must be nonnegative");
  if (sub_rate + del_rate + ins_rate >= 1.0)
    throw ConfigError("error channel rates must sum to less than 1");
}

HypothesisTable read_hypothesis_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open hypothesis file " + path.string());
  HypothesisTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": missing tab after utterance id");
    std::string id = line.substr(0, tab);
    std::istringstream ids(line.substr(tab + 1));
    TokenSequence seq;
    long long v;
    while (ids >> v) seq.push_back(static_cast<TokenId>(v));
    if (!ids.eof())
      throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed token id");
    table[std::move(id)] = std::move(seq);
  }
  return table;
}

void write_hypothesis_file(const std::filesystem::path& path, const std::vector<std::string>& ids,
                           const std::vector<TokenSequence>& hyps) {
  if (ids.size() != hyps.size()) throw Error("hypothesis ids and sequences differ in count");
  std::ofstream out(path);
  if (!out) throw Error("cannot write hypothesis file " + path.string());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << '\t';
    for (std::size_t j = 0; j < hyps[i].size(); ++j) out << (j ? " " : "") << hyps[i][j];
    out << '\n';
  }
}

TokenSequence apply_error_channel(const TokenSequence& y, const ErrorChannel& channel,
                                  std::size_t vocab_size, Rng& rng) {
  channel.validate();
  const auto first = static_cast<std::int64_t>(kFirstContentToken);
  const auto last = static_cast<std::int64_t>(vocab_size) - 1;
  if (last < first) throw ConfigError("vocabulary has no content tokens");
  TokenSequence out;
  out.reserve(y.size() + 4);
  for (TokenId tok : y) {
    const double r = rng.uniform();
    if (r < channel.sub_rate) {
      TokenId sub = tok;
      if (last > first) {
        // Uniform over content tokens other than tok.
        while (sub == tok) sub = static_cast<TokenId>(rng.uniform_int(first, last));
      }
      out.push_back(sub);
    } else if (r >= channel.sub_rate + channel.del_rate) {
      out.push_back(tok);
    }
    if (rng.uniform() < channel.ins_rate)
      out.push_back(static_cast<TokenId>(rng.uniform_int(first, last)));
  }
  return out;
}

TokenBatch decoder_inputs(const std::vector<TokenSequence>& labels) {
  std::vector<TokenSequence> rows;
  rows.reserve(labels.size());
  for (const auto& y : labels) {
    TokenSequence row{kSos};
    if (!y.empty()) row.insert(row.end(), y.begin(), y.end() - 1);
    rows.push_back(std::move(row));
  }
  return TokenBatch::from_rows(rows);
}

std::vector<TokenSequence> argmax_rows(const Tensor& logits, const std::vector<std::size_t>& lengths) {
  const std::size_t b = logits.dim(0), u = logits.dim(1), V = logits.dim(2);
  if (lengths.size() != b) throw ShapeError("argmax_rows: one length per row required");
  std::vector<TokenSequence> out(b);
  const auto d = logits.data();
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t n = std::min(lengths[i], u);
    out[i].resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const float* row = d.data() + (i * u + t) * V;
      std::size_t best = kEos;
      for (std::size_t c = kEos; c < V; ++c)
        if (row[c] > row[best]) best = c;
      out[i][t] = static_cast<TokenId>(best);
    }
  }
  return out;
}

HypothesisProvider::HypothesisProvider(HypothesisSource source, std::size_t vocab_size)
    : source_(std::move(source)), vocab_size_(vocab_size), channel_rng_(source_.seed) {
  switch (source_.kind) {
    case HypothesisKind::kExternalFile:
    case HypothesisKind::kOfflineSelf:
      table_ = read_hypothesis_file(source_.path);
      break;
    case HypothesisKind::kErrorChannel:
      source_.channel.validate();
      break;
    case HypothesisKind::kOnlineSelf:
      break;
  }
}

std::vector<TokenSequence> HypothesisProvider::hypothesize(const HypothesisBatch& batch,
                                                           Rng& mix_rng) {
  std::vector<TokenSequence> hyps;
  hyps.reserve(batch.targets.size());
  switch (source_.kind) {
    case HypothesisKind::kExternalFile:
    case HypothesisKind::kOfflineSelf: {
      if (batch.utt_ids.size() != batch.targets.size())
        throw Error("hypothesis lookup needs one utterance id per target");
      for (const auto& id : batch.utt_ids) {
        auto it = table_.find(id);
        if (it == table_.end())
          throw Error("hypothesis file " + source_.path.string() + " has no entry for utterance '" +
                      id + "'");
        TokenSequence h = it->second;
        h.push_back(kEos);
        hyps.push_back(std::move(h));
      }
      return hyps;
    }
    case HypothesisKind::kErrorChannel: {
      for (const auto& y : batch.targets) {
        // The channel corrupts the reference; EOS stays terminal.
        TokenSequence ref(y.begin(), y.end());
        const bool has_eos = !ref.empty() && ref.back() == kEos;
        if (has_eos) ref.pop_back();
        TokenSequence h = apply_error_channel(ref, source_.channel, vocab_size_, channel_rng_);
        if (has_eos) h.push_back(kEos);
        hyps.push_back(std::move(h));
      }
      return hyps;
    }
    case HypothesisKind::kOnlineSelf: {
      if (source_.n_passes == 0) return batch.targets;
      if (batch.model == nullptr || !batch.enc_out.defined())
        throw Error("online self-decoding needs the model and encoder output");
      Graph::Pause no_record;
      std::vector<std::size_t> lengths;
      for (const auto& y : batch.targets) lengths.push_back(y.size());
      std::vector<TokenSequence> inputs = batch.targets;
      for (std::size_t pass = 0; pass < source_.n_passes; ++pass) {
        const Tensor logits = batch.model->decode_step_parallel(batch.enc_out, batch.enc_lengths,
                                                                decoder_inputs(inputs));
        hyps = argmax_rows(logits, lengths);
        if (pass + 1 < source_.n_passes) {
          for (std::size_t i = 0; i < inputs.size(); ++i)
            inputs[i] =
                mix_tokens(batch.targets[i], hyps[i], batch.teacher_rate, batch.mix_level, mix_rng)
                    .mixed;
        }
      }
      return hyps;
    }
  }
  return hyps;
}

std::vector<MixPlan> sequential_scheduled_sampling(const TransformerModel& model,
                                                   const Tensor& enc_out,
                                                   const std::vector<std::size_t>& enc_lengths,
                                                   const std::vector<TokenSequence>& targets,
                                                   double p, Rng& rng) {
  Graph::Pause no_record;
  std::size_t u = 0;
  for (const auto& y : targets) u = std::max(u, y.size());
  std::vector<MixPlan> plans(targets.size());
  for (std::size_t t = 0; t < u; ++t) {
    std::vector<TokenSequence> rows;
    for (const auto& plan : plans) {
      TokenSequence row{kSos};
      row.insert(row.end(), plan.mixed.begin(), plan.mixed.end());
      row.resize(t + 1, kPad);
      rows.push_back(std::move(row));
    }
    const Tensor logits = model.decode_step_parallel(enc_out, enc_lengths, TokenBatch::from_rows(rows));
    const std::size_t V = logits.dim(2);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (t >= targets[i].size()) continue;
      const float* row = logits.data().data() + (i * (t + 1) + t) * V;
      std::size_t best = kEos;
      for (std::size_t c = kEos; c < V; ++c)
        if (row[c] > row[best]) best = c;
      const bool teacher = rng.uniform() < p;
      plans[i].mixed.push_back(teacher ? targets[i][t] : static_cast<TokenId>(best));
      plans[i].teacher_mask.push_back(teacher);
    }
  }
  return plans;
}

}  // namespace seqtx
