#include "seqtx/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "seqtx/checkpoint.hpp"
#include "seqtx/ops.hpp"
#include "seqtx/optim.hpp"

namespace seqtx {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(lr > 0.0f)) throw ConfigError("lr must be positive");
  if (lr_halve_from_epoch == 0 || lr_halve_from_epoch > epochs)
    throw ConfigError("lr_halve_from_epoch must lie in [1, epochs]");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (label_smoothing < 0.0f || label_smoothing >= 1.0f)
    throw ConfigError("label_smoothing must be in [0, 1)");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0, 1)");
  if (schedule) schedule->validate();
  if (schedule && !hyp_source) throw ConfigError("a sampling schedule needs a hypothesis source");
}

float learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch < cfg.lr_halve_from_epoch) return cfg.lr;
  const auto halvings = static_cast<int>(epoch - cfg.lr_halve_from_epoch + 1);
  return static_cast<float>(std::ldexp(static_cast<double>(cfg.lr), -halvings));
}

std::string TrainLog::to_text() const {
  std::string out;
  char line[256];
  for (const auto& s : steps) {
    std::snprintf(line, sizeof line,
                  "epoch=%zu step=%zu loss=%.9g p=%.9g lr=%.9g passes=%zu teacher=%.9g\n", s.epoch,
                  s.step, s.loss, s.teacher_rate, s.lr, s.decoder_passes, s.teacher_fraction);
    out += line;
  }
  return out;
}

double TrainLog::mean_loss(std::size_t epoch) const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : steps)
    if (s.epoch == epoch) {
      total += s.loss;
      ++n;
    }
  if (n == 0) throw Error("no steps logged for epoch " + std::to_string(epoch));
  return total / static_cast<double>(n);
}

TokenSequence target_labels(const TokenSequence& reference) {
  TokenSequence y = reference;
  y.push_back(kEos);
  return y;
}

std::vector<std::vector<std::size_t>> make_batches(const Dataset& data, std::size_t batch_size,
                                                   Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(data.utterances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data.utterances[a].n_frames < data.utterances[b].n_frames;
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  rng.shuffle(batches);
  return batches;
}

namespace {

void dump_state(const std::filesystem::path& dir, const TransformerModel& model,
                const StepRecord& rec, const std::vector<std::string>& ids) {
  const auto path = (dir.empty() ? std::filesystem::path(".") : dir) / "nan_dump.txt";
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream os(path);
  os << "epoch " << rec.epoch << " step " << rec.step << " lr " << rec.lr << " p "
     << rec.teacher_rate << "\nbatch";
  for (const auto& id : ids) os << ' ' << id;
  os << '\n';
  for (const auto& [name, t] : model.named_parameters()) {
    double sq = 0.0;
    std::size_t bad = 0;
    for (float v : t.data()) {
      if (!std::isfinite(v)) ++bad;
      sq += static_cast<double>(v) * v;
    }
    os << name << " norm " << std::sqrt(sq) << " non_finite " << bad << '\n';
  }
}

}  // namespace

TrainLog train(TransformerModel& model, const Dataset& data, const TrainConfig& cfg,
               const TrainHooks& hooks) {
  cfg.validate();
  const auto& mc = model.config();
  if (data.frame_dim != mc.input_feature_dim)
    throw ConfigError("dataset frame_dim " + std::to_string(data.frame_dim) +
                      " does not match model input_feature_dim " +
                      std::to_string(mc.input_feature_dim));
  if (data.vocab_size > mc.vocab_size)
    throw ConfigError("dataset vocabulary exceeds the model's");
  if (data.utterances.empty()) throw Error("empty training set");

  Rng root(cfg.seed);
  Rng order_rng = root.split();
  Rng dropout_rng = root.split();
  Rng mix_rng = root.split();

  std::optional<HypothesisProvider> provider;
  if (cfg.hyp_source && cfg.schedule) provider.emplace(*cfg.hyp_source, mc.vocab_size);

  AdamOptimizer opt(model.parameters());
  TrainLog log;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const float lr = learning_rate(cfg, epoch);
    const auto batches = make_batches(data, cfg.batch_size, order_rng);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& idx = batches[bi];
      std::vector<std::string> ids;
      std::vector<TokenSequence> targets;
      for (auto i : idx) {
        ids.push_back(data.utterances[i].id);
        targets.push_back(target_labels(data.utterances[i].reference));
      }

      double p = 1.0;
      if (cfg.schedule) {
        const double i = cfg.schedule->step_unit == StepUnit::kEpoch
                             ? static_cast<double>(epoch - 1) +
                                   static_cast<double>(bi) / static_cast<double>(batches.size())
                             : static_cast<double>(step);
        p = teacher_force_rate(i, *cfg.schedule);
      }

      const auto passes_before = model.decoder_passes();
      Graph graph;
      Graph::Scope scope(graph);
      const FrameBatch fb = collate_frames(data, idx);
      ForwardContext ctx;
      ctx.train = true;
      ctx.rng = &dropout_rng;
      ctx.dropout = cfg.dropout;
      const Tensor enc = model.encode(fb.frames, fb.lengths, ctx);

      std::vector<TokenSequence> inputs = targets;
      std::size_t kept = 0, total = 0;
      for (const auto& y : targets) total += y.size();
      kept = total;
      if (provider && cfg.schedule) {
        HypothesisBatch hb;
        hb.utt_ids = ids;
        hb.targets = targets;
        hb.model = &model;
        hb.enc_out = enc.detach();
        hb.enc_lengths = fb.lengths;
        hb.teacher_rate = p;
        hb.mix_level = cfg.schedule->mix_level;
        const auto hyps = provider->hypothesize(hb, mix_rng);
        kept = 0;
        for (std::size_t b = 0; b < targets.size(); ++b) {
          MixPlan plan = mix_tokens(targets[b], hyps[b], p, cfg.schedule->mix_level, mix_rng);
          kept += static_cast<std::size_t>(
              std::count(plan.teacher_mask.begin(), plan.teacher_mask.end(), true));
          inputs[b] = std::move(plan.mixed);
        }
      }

      const TokenBatch dec_in = decoder_inputs(inputs);
      const Tensor logits = model.decode_step_parallel(enc, fb.lengths, dec_in, ctx);
      const TokenBatch labels = TokenBatch::from_rows(targets);
      const Tensor loss = ops::cross_entropy_ls(logits, labels.ids, cfg.label_smoothing, kPad);

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.loss = loss.item();
      rec.teacher_rate = p;
      rec.lr = lr;
      rec.decoder_passes = static_cast<std::size_t>(model.decoder_passes() - passes_before);
      rec.teacher_fraction = static_cast<double>(kept) / static_cast<double>(total);
      if (!std::isfinite(rec.loss)) {
        dump_state(cfg.checkpoint_dir, model, rec, ids);
        throw Error("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(step));
      }

      graph.backward(loss);
      opt.step(lr);
      opt.zero_grad();
      log.steps.push_back(rec);
      ++step;
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, log);
  }

  if (!cfg.checkpoint_dir.empty()) {
    save_checkpoint(model, cfg.checkpoint_dir);
    std::ofstream os(cfg.checkpoint_dir / "train.log", std::ios::binary);
    os << log.to_text();
  }
  return log;
}

}  // namespace seqtx
