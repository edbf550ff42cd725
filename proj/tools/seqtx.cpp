// seqtx command-line front end: dataset generation, training, evaluation,
// preset runs and offline corpus mixing.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "seqtx/checkpoint.hpp"
#include "seqtx/config_io.hpp"
#include "seqtx/evaluate.hpp"
#include "seqtx/presets.hpp"

namespace fs = std::filesystem;
using namespace seqtx;

namespace {

// Defaults, then the config file, then --key value overrides.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& extras) {
  ExperimentConfig defaults;
  defaults.task.seed = default_seed(defaults.task.seed);
  defaults.train.seed = default_seed(defaults.train.seed);
  Json doc = defaults;
  if (!path.empty()) doc.merge_patch(read_json_file(path));
  apply_overrides(doc, extras);
  return doc.get<ExperimentConfig>();
}

fs::path split_dir(const fs::path& dir, const char* part) {
  return fs::exists(dir / part / "manifest.tsv") ? dir / part : dir;
}

void write_reports(const EvalReport& rep, const std::string& prefix) {
  std::cout << rep.to_text();
  if (prefix.empty()) return;
  std::ofstream(prefix + ".txt") << rep.to_text();
  std::ofstream(prefix + ".json") << rep.to_json().dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqtx: transformer sequence transduction workbench"};
  app.require_subcommand(1);
  std::string config_path;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_out;
  gen->add_option("--config", config_path, "experiment config (JSON)");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->allow_extras();

  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_out, tr_init;
  tr->add_option("--config", config_path, "experiment config (JSON)");
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint directory")->required();
  tr->add_option("--init", tr_init, "checkpoint to start from");
  tr->allow_extras();

  auto* ev = app.add_subcommand("eval", "beam-decode and score a dataset");
  std::string ev_ckpt, ev_data, ev_report;
  ev->add_option("--config", config_path, "experiment config (JSON), beam section used");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--report", ev_report, "write <prefix>.txt and <prefix>.json");
  ev->allow_extras();

  auto* pr = app.add_subcommand("preset", "run one row of the experiment grid");
  std::string pr_id, pr_out;
  pr->add_option("--config", config_path, "experiment config (JSON)");
  pr->add_option("--id", pr_id, "preset id")->required();
  pr->add_option("--out", pr_out, "output directory");
  pr->allow_extras();

  auto* mx = app.add_subcommand("mix", "mix references with hypotheses into decoder inputs");
  std::string mx_data, mx_hyps, mx_out, mx_level = "token";
  double mx_p = 1.0;
  std::uint64_t mx_seed = default_seed(1);
  mx->add_option("--data", mx_data, "dataset directory")->required();
  mx->add_option("--hyps", mx_hyps, "hypothesis file")->required();
  mx->add_option("--out", mx_out, "output file (hypothesis-file format)")->required();
  mx->add_option("--p", mx_p, "teacher-force probability")->check(CLI::Range(0.0, 1.0));
  mx->add_option("--level", mx_level, "token or sentence");
  mx->add_option("--seed", mx_seed, "mixing seed");

  auto* show = app.add_subcommand("config", "print the effective configuration");
  show->add_option("--config", config_path, "experiment config (JSON)");
  show->allow_extras();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = load_config(config_path, gen->remaining());
      const TaskData data = generate_task(cfg.task);
      write_dataset(fs::path(gen_out) / "train", data.train);
      write_dataset(fs::path(gen_out) / "test", data.test);
      std::printf("wrote %zu train / %zu test utterances to %s\n", data.train.utterances.size(),
                  data.test.utterances.size(), gen_out.c_str());
    } else if (*tr) {
      auto cfg = load_config(config_path, tr->remaining());
      const Dataset data = read_dataset(split_dir(tr_data, "train"));
      cfg.model.vocab_size = std::max(cfg.model.vocab_size, data.vocab_size);
      cfg.model.input_feature_dim = data.frame_dim;
      cfg.train.checkpoint_dir = tr_out;
      TransformerModel model(cfg.model, cfg.train.seed);
      if (!tr_init.empty()) load_parameters(model, tr_init);
      TrainHooks hooks;
      hooks.on_epoch = [](std::size_t epoch, const TrainLog& log) {
        std::printf("epoch %zu mean loss %.4f\n", epoch, log.mean_loss(epoch));
        std::fflush(stdout);
      };
      train(model, data, cfg.train, hooks);
      std::ofstream(fs::path(tr_out) / "config.json") << Json(cfg).dump(2) << '\n';
    } else if (*ev) {
      const auto cfg = load_config(config_path, ev->remaining());
      const auto model = load_checkpoint(ev_ckpt);
      const Dataset data = read_dataset(split_dir(ev_data, "test"));
      write_reports(evaluate(*model, data, cfg.beam), ev_report);
    } else if (*pr) {
      const auto cfg = load_config(config_path, pr->remaining());
      const PresetReport rep = run_preset(pr_id, cfg, pr_out);
      std::cout << rep.eval.to_text() << rep.row() << '\n';
    } else if (*mx) {
      const Dataset data = read_dataset(split_dir(mx_data, "train"));
      const HypothesisTable table = read_hypothesis_file(mx_hyps);
      Rng rng(mx_seed);
      const MixLevel level = mix_level_from_string(mx_level);
      std::vector<std::string> ids;
      std::vector<TokenSequence> mixed;
      for (const auto& utt : data.utterances) {
        auto it = table.find(utt.id);
        if (it == table.end()) throw Error("no hypothesis for utterance '" + utt.id + "'");
        ids.push_back(utt.id);
        mixed.push_back(mix_tokens(utt.reference, it->second, mx_p, level, rng).mixed);
      }
      write_hypothesis_file(mx_out, ids, mixed);
    } else if (*show) {
      std::cout << Json(load_config(config_path, show->remaining())).dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "seqtx: %s\n", e.what());
    return 1;
  }
  return 0;
}
