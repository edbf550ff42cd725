#include "seqtx/presets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace seqtx {

const std::vector<std::string>& preset_ids() {
  static const std::vector<std::string> ids = {"B1", "E1", "E2", "E3", "E5",
                                               "E6", "E7", "E8", "E8+E3"};
  return ids;
}

namespace {

// Ramp from a quarter to three quarters of training, in epochs.
ScheduleConfig ramp(double p_min, const TrainConfig& train) {
  ScheduleConfig s;
  s.p_min = p_min;
  s.n_st = 0.25 * static_cast<double>(train.epochs);
  s.n_ed = std::max(s.n_st + 1.0, 0.75 * static_cast<double>(train.epochs));
  s.step_unit = StepUnit::kEpoch;
  s.mix_level = MixLevel::kToken;
  return s;
}

HypothesisSource online(std::uint64_t seed) {
  HypothesisSource h;
  h.kind = HypothesisKind::kOnlineSelf;
  h.n_passes = 1;
  h.seed = seed;
  return h;
}

}  // namespace

ExperimentPreset make_preset(const std::string& id, const TaskConfig& task,
                             const TrainConfig& train) {
  ExperimentPreset p;
  p.id = id;
  const std::size_t enc_k = 2 * task.frames_per_token;
  const std::size_t dec_k = 4;
  if (id == "B1") {
    p.description = "sinusoidal APE in encoder and decoder, teacher forcing";
  } else if (id == "E1") {
    p.description = "B1 + PSS from a noisy-channel hypothesis source, P_min 0.8";
    p.schedule = ramp(0.8, train);
    HypothesisSource h;
    h.kind = HypothesisKind::kErrorChannel;
    h.channel = ErrorChannel{0.08, 0.03, 0.03};
    h.seed = train.seed + 101;
    p.hyp_source = h;
  } else if (id == "E2") {
    p.description = "B1 + PSS from offline self-decoding of the training set, P_min 0.8";
    p.schedule = ramp(0.8, train);
    HypothesisSource h;
    h.kind = HypothesisKind::kOfflineSelf;
    h.seed = train.seed + 102;
    p.hyp_source = h;
    p.offline_self_decode = true;
  } else if (id == "E3") {
    p.description = "B1 + PSS from online self-decoding, P_min 0.5, N=1";
    p.schedule = ramp(0.5, train);
    p.hyp_source = online(train.seed + 103);
  } else if (id == "E5") {
    p.description = "no positional information in the encoder, sinusoidal APE in the decoder";
    p.enc_pe_mode = PeMode::kNone;
  } else if (id == "E6") {
    p.description = "learned APE in the encoder, sinusoidal APE in the decoder";
    p.enc_pe_mode = PeMode::kLearned;
  } else if (id == "E7") {
    p.description = "RPE in the encoder, sinusoidal APE in the decoder";
    p.enc_pe_mode = PeMode::kNone;
    p.enc_rpe_k = enc_k;
  } else if (id == "E8" || id == "E8+E3") {
    p.description = "RPE in encoder and decoder";
    p.enc_pe_mode = PeMode::kNone;
    p.dec_pe_mode = PeMode::kNone;
    p.enc_rpe_k = enc_k;
    p.dec_rpe_k = dec_k;
    if (id == "E8+E3") {
      p.description += " + online PSS, P_min 0.5, N=1";
      p.schedule = ramp(0.5, train);
      p.hyp_source = online(train.seed + 103);
    }
  } else {
    std::string valid;
    for (const auto& v : preset_ids()) valid += (valid.empty() ? "" : ", ") + v;
    throw ConfigError("unknown preset '" + id + "'; valid ids: " + valid);
  }
  return p;
}

void apply_preset(const ExperimentPreset& preset, const TaskConfig& task, ModelConfig& model,
                  TrainConfig& train) {
  model.vocab_size = task.vocab_size;
  model.input_feature_dim = task.frame_dim;
  model.enc_pe_mode = preset.enc_pe_mode;
  model.dec_pe_mode = preset.dec_pe_mode;
  model.enc_rpe_k = preset.enc_rpe_k;
  model.dec_rpe_k = preset.dec_rpe_k;
  train.schedule = preset.schedule;
  train.hyp_source = preset.hyp_source;
}

std::string PresetReport::row() const {
  std::string out = id;
  char cell[64];
  for (const auto& b : eval.buckets) {
    std::snprintf(cell, sizeof cell, " %s=%.2f", b.name.c_str(), 100.0 * b.cer());
    out += cell;
  }
  std::snprintf(cell, sizeof cell, " corpus=%.2f", 100.0 * eval.corpus.cer());
  return out + cell;
}

PresetReport run_preset(const std::string& id, const ExperimentConfig& base,
                        const std::filesystem::path& out_dir) {
  return run_preset(id, base, generate_task(base.task), out_dir);
}

PresetReport run_preset(const std::string& id, const ExperimentConfig& base, const TaskData& data,
                        const std::filesystem::path& out_dir) {
  const ExperimentPreset preset = make_preset(id, base.task, base.train);
  ModelConfig mc = base.model;
  TrainConfig tc = base.train;
  apply_preset(preset, base.task, mc, tc);
  tc.checkpoint_dir = out_dir.empty() ? std::filesystem::path() : out_dir / "checkpoint";

  if (preset.offline_self_decode) {
    const auto hyp_dir = out_dir.empty() ? std::filesystem::temp_directory_path() /
                                               ("seqtx-offline-" + std::to_string(tc.seed))
                                         : out_dir;
    // First stage: a B1 model whose beam output over the training set
    // becomes the hypothesis file.
    ModelConfig b1_mc = base.model;
    TrainConfig b1_tc = base.train;
    apply_preset(make_preset("B1", base.task, base.train), base.task, b1_mc, b1_tc);
    b1_tc.checkpoint_dir = out_dir.empty() ? std::filesystem::path() : out_dir / "first_stage";
    TransformerModel teacher(b1_mc, b1_tc.seed);
    train(teacher, data.train, b1_tc);
    std::vector<std::string> ids;
    std::vector<TokenSequence> hyps;
    for (const auto& utt : data.train.utterances) {
      ids.push_back(utt.id);
      hyps.push_back(recognize(teacher, utt, base.beam).tokens);
    }
    std::filesystem::create_directories(hyp_dir);
    tc.hyp_source->path = hyp_dir / "offline_hyps.txt";
    write_hypothesis_file(tc.hyp_source->path, ids, hyps);
  }

  PresetReport rep;
  rep.id = id;
  rep.model = mc;
  TransformerModel model(mc, tc.seed);
  rep.log = train(model, data.train, tc);
  if (!data.test.utterances.empty()) rep.eval = evaluate(model, data.test, base.beam);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "report.txt") << rep.eval.to_text() << rep.row() << '\n';
    Json j = rep.eval.to_json();
    j["preset"] = id;
    j["description"] = preset.description;
    j["model"] = mc;
    j["train"] = tc;
    std::ofstream(out_dir / "report.json") << j.dump(2) << '\n';
  }
  return rep;
}

}  // namespace seqtx
