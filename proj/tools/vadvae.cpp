// Command-line front end: train, eval, gen-data, sweep, mi-probe,
// export-latents, swap-demo.

#include "vadvae/errors.hpp"
#include "vadvae/experiments.hpp"
#include "vadvae/train.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace vadvae;

namespace {

struct ConfigOverrides {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "flat JSON config file");
    for (const auto& field : config_fields()) {
      std::string name = field.key;
      std::replace(name.begin(), name.end(), '_', '-');
      const bool is_bool = std::holds_alternative<bool TrainConfig::*>(field.member);
      options[field.key] = is_bool ? app.add_flag("--" + name, flags[field.key], field.help)
                                   : app.add_option("--" + name, values[field.key], field.help);
    }
  }

  TrainConfig resolve() const {
    TrainConfig c = config_path.empty() ? TrainConfig{} : load_config(config_path);
    for (const auto& field : config_fields()) {
      const CLI::Option* opt = options.at(field.key);
      if (opt->count() == 0) continue;
      const std::string& text = values.count(field.key) ? values.at(field.key) : std::string();
      try {
        std::visit(
            [&](auto member) {
              auto& slot = c.*member;
              using T = std::remove_reference_t<decltype(slot)>;
              if constexpr (std::is_same_v<T, bool>) {
                slot = flags.at(field.key);
              } else if constexpr (std::is_same_v<T, int>) {
                slot = std::stoi(text);
              } else if constexpr (std::is_same_v<T, double>) {
                slot = std::stod(text);
              } else {
                slot = text;
              }
            },
            field.member);
      } catch (const std::logic_error&) {
        throw UsageError(std::string("bad value for --") + field.key + ": '" + text + "'");
      }
    }
    validate(c);
    return c;
  }
};

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw UsageError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_doubles(text)) {
    if (v != std::floor(v)) throw UsageError("expected integers in '" + text + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

CorpusSplits load_splits(const std::string& data, const std::string& valid, const std::string& test,
                         const std::vector<std::string>& labels) {
  Corpus corpus = load_corpus(data, labels);
  if (valid.empty() && test.empty()) return split_corpus(corpus);
  if (valid.empty() || test.empty()) throw UsageError("--valid and --test go together");
  return {std::move(corpus), load_corpus(valid, labels), load_corpus(test, labels)};
}

Corpus select_split(const Corpus& corpus, const std::string& split) {
  if (split == "all") return corpus;
  CorpusSplits s = split_corpus(corpus);
  if (split == "train") return s.train;
  if (split == "valid") return s.valid;
  if (split == "test") return s.test;
  throw UsageError("unknown split '" + split + "'");
}

template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw FileError("cannot write " + path);
  fn(out);
  if (!out) throw FileError("failed writing " + path);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::default_logger()->clone("vadvae"));
  CLI::App app{"Disentangled VAD variational autoencoder for emotion recognition in dialogue"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only log warnings and errors");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model; artifacts go to <out>/<hash>-s<seed>");
  ConfigOverrides train_cfg;
  train_cfg.attach(*train_cmd);
  std::string data_path;
  std::string valid_path;
  std::string test_path;
  std::string out_root = "runs";
  train_cmd->add_option("--data", data_path, "training corpus (JSONL); split 80/10/10 unless --valid/--test")
      ->required()
      ;
  train_cmd->add_option("--valid", valid_path, "validation corpus");
  train_cmd->add_option("--test", test_path, "test corpus");
  train_cmd->add_option("--out", out_root, "root directory for run directories");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint and print the report as JSON");
  std::string checkpoint;
  std::string split = "all";
  std::string eval_out;
  std::string eval_lexicon;
  bool no_mi = false;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  eval_cmd->add_option("--data", data_path, "corpus (JSONL)")->required();
  eval_cmd->add_option("--split", split, "all|train|valid|test of the 80/10/10 split");
  eval_cmd->add_option("--lexicon", eval_lexicon, "label set the corpus is declared against");
  eval_cmd->add_option("--out", eval_out, "report path (default stdout)");
  eval_cmd->add_flag("--no-mi", no_mi, "skip the refit MI report");

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "write a seeded synthetic corpus");
  SyntheticOptions gen;
  std::string gen_lexicon = "iemocap";
  std::string gen_out;
  gen_cmd->add_option("--dialogues", gen.n_dialogues, "number of dialogues");
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--lexicon", gen_lexicon, "label set: iemocap|meld|dailydialog or TSV path");
  gen_cmd->add_option("--min-turns", gen.min_turns, "minimum utterances per dialogue");
  gen_cmd->add_option("--max-turns", gen.max_turns, "maximum utterances per dialogue");
  gen_cmd->add_option("--marker-confusion", gen.marker_confusion,
                      "probability a marker comes from another label's bank");
  gen_cmd->add_option("--out", gen_out, "output JSONL")->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run a grid of trainings and write one CSV row per run");
  ConfigOverrides sweep_cfg;
  sweep_cfg.attach(*sweep_cmd);
  std::string kind;
  std::string grid_text;
  std::string seeds_text = "0";
  std::string sweep_out;
  std::string retention_out;
  std::size_t jobs = 1;
  sweep_cmd->add_option("--kind", kind, "context_window|mi_coefficient|robustness")->required();
  sweep_cmd->add_option("--grid", grid_text, "comma-separated grid values")->required();
  sweep_cmd->add_option("--seeds", seeds_text, "comma-separated seeds");
  sweep_cmd->add_option("--data", data_path, "corpus (JSONL)")->required();
  sweep_cmd->add_option("--valid", valid_path, "validation corpus");
  sweep_cmd->add_option("--test", test_path, "test corpus");
  sweep_cmd->add_option("--runs", out_root, "root directory for run directories");
  sweep_cmd->add_option("--out", sweep_out, "CSV path (default stdout)");
  sweep_cmd->add_option("--retention-out", retention_out, "robustness: retention CSV path");
  sweep_cmd->add_option("--jobs", jobs, "parallel training runs")->check(CLI::PositiveNumber);

  // mi-probe
  auto* probe_cmd = app.add_subcommand(
      "mi-probe", "vCLUB estimates on correlated Gaussians (oracle) or on a checkpoint's latents");
  std::string rho_text = "0,0.5,0.9";
  Index n_samples = 2048;
  Index probe_dim = 1;
  int probe_steps = 2000;
  double probe_lr = 1e-2;
  Index probe_hidden = 0;
  std::uint64_t probe_seed = 0;
  std::string probe_out;
  probe_cmd->add_option("--rho", rho_text, "oracle mode: comma-separated correlations");
  probe_cmd->add_option("--n", n_samples, "oracle mode: samples")->check(CLI::Range(2, 1 << 24));
  probe_cmd->add_option("--dim", probe_dim, "oracle mode: dimensions per side")->check(CLI::PositiveNumber);
  probe_cmd->add_option("--steps", probe_steps, "estimator fitting steps");
  probe_cmd->add_option("--lr", probe_lr, "estimator learning rate");
  probe_cmd->add_option("--hidden", probe_hidden, "estimator hidden width (default 2 x dim)");
  probe_cmd->add_option("--seed", probe_seed, "random seed");
  probe_cmd->add_option("--checkpoint", checkpoint, "model mode: checkpoint.bin");
  probe_cmd->add_option("--data", data_path, "model mode: corpus (JSONL)");
  probe_cmd->add_option("--split", split, "model mode: all|train|valid|test");
  probe_cmd->add_option("--out", probe_out, "CSV path (default stdout)");

  // export-latents
  auto* export_cmd = app.add_subcommand("export-latents", "write evaluation-mode latent means as CSV");
  std::string export_out;
  export_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  export_cmd->add_option("--data", data_path, "corpus (JSONL)")->required();
  export_cmd->add_option("--split", split, "all|train|valid|test");
  export_cmd->add_option("--out", export_out, "CSV path")->required();

  // swap-demo
  auto* swap_cmd = app.add_subcommand("swap-demo", "decode a source's content with a donor's VAD latents");
  std::string source_id;
  std::string donor_id;
  swap_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required();
  swap_cmd->add_option("--data", data_path, "corpus (JSONL)")->required();
  swap_cmd->add_option("--source", source_id, "source utterance id, <dialogue id>#<index>")->required();
  swap_cmd->add_option("--donor", donor_id, "donor utterance id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*train_cmd) {
      const TrainConfig config = train_cfg.resolve();
      const VadLexicon lexicon = resolve_lexicon(config.lexicon);
      const CorpusSplits splits = load_splits(data_path, valid_path, test_path, lexicon.labels());
      TrainOptions options;
      options.out_root = out_root;
      const TrainResult r = train(config, splits, options);
      spdlog::info("best epoch {} (valid weighted-F1 {:.4f})", r.best_epoch, r.best_valid.weighted_f1);
      if (r.test) std::cout << r.test->to_json().dump(2) << '\n';
      std::cout << r.run_dir.string() << '\n';
    } else if (*eval_cmd) {
      const LoadedModel loaded = load_model(checkpoint);
      if (!eval_lexicon.empty()) check_labels(loaded, resolve_lexicon(eval_lexicon).labels());
      const Corpus corpus = select_split(load_corpus(data_path, loaded.lexicon.labels()), split);
      EvalOptions options = eval_options(loaded.config);
      if (no_mi) options.mi_report = false;
      const EvalReport report =
          evaluate(*loaded.model, loaded.assemble(corpus), loaded.lexicon.labels(), options);
      with_output(eval_out, [&](std::ostream& out) { out << report.to_json().dump(2) << '\n'; });
    } else if (*gen_cmd) {
      gen.labels = resolve_lexicon(gen_lexicon).labels();
      const Corpus corpus = generate_synthetic(gen);
      save_corpus(gen_out, corpus);
      spdlog::info("wrote {} dialogues, {} utterances to {}", corpus.size(), count_utterances(corpus),
                   gen_out);
    } else if (*sweep_cmd) {
      const TrainConfig base = sweep_cfg.resolve();
      const SweepKind sweep_kind = parse_sweep_kind(kind);
      const std::vector<double> grid = parse_doubles(grid_text);
      const std::vector<int> seeds = parse_ints(seeds_text);
      const VadLexicon lexicon = resolve_lexicon(base.lexicon);
      const CorpusSplits splits = load_splits(data_path, valid_path, test_path, lexicon.labels());
      TrainOptions options;
      options.out_root = out_root;
      const auto rows = run_sweep(sweep_kind, grid, base, splits, seeds, jobs, options);
      with_output(sweep_out, [&](std::ostream& out) { write_sweep_csv(out, rows); });
      if (!retention_out.empty()) {
        if (sweep_kind != SweepKind::Robustness) throw UsageError("--retention-out needs --kind robustness");
        with_output(retention_out, [&](std::ostream& out) {
          write_retention_csv(out, retention_from_sweep(rows, grid, seeds));
        });
      }
    } else if (*probe_cmd) {
      with_output(probe_out, [&](std::ostream& out) {
        out << "pair,estimate_nats,analytic_mi,n_samples\n";
        char line[160];
        if (!checkpoint.empty()) {
          if (data_path.empty()) throw UsageError("mi-probe: --checkpoint needs --data");
          const LoadedModel loaded = load_model(checkpoint);
          if (!loaded.config.uses_vad_heads()) throw UsageError("mi-probe: model has no VAD latents");
          const Corpus corpus = select_split(load_corpus(data_path, loaded.lexicon.labels()), split);
          const auto inputs = loaded.assemble(corpus);
          const ModelOutputs outputs = run_model(*loaded.model, inputs);
          const EvalOptions options = eval_options(loaded.config);
          const MiReport report = refit_mi_report(vad_blocks(outputs.mu, loaded.config),
                                                  options.hidden_scale, options.estimator_lr,
                                                  probe_steps, probe_seed);
          for (std::size_t i = 0; i < kMiPairs.size(); ++i) {
            std::snprintf(line, sizeof(line), "%s,%.6f,,%zu\n", pair_name(i).c_str(),
                          report.pairs[i], inputs.size());
            out << line;
          }
          return;
        }
        for (double rho : parse_doubles(rho_text)) {
          Rng rng(probe_seed);
          const auto [x, y] = correlated_gaussians(rho, n_samples, probe_dim, rng);
          const Index hidden = probe_hidden > 0 ? probe_hidden : 2 * probe_dim;
          const double estimate = fit_vclub(x, y, hidden, probe_lr, probe_steps, probe_seed + 1);
          const double analytic = -0.5 * static_cast<double>(probe_dim) * std::log(1.0 - rho * rho);
          std::snprintf(line, sizeof(line), "rho=%g,%.6f,%.6f,%lld\n", rho, estimate, analytic,
                        static_cast<long long>(n_samples));
          out << line;
        }
      });
    } else if (*export_cmd) {
      const LoadedModel loaded = load_model(checkpoint);
      const Corpus corpus = select_split(load_corpus(data_path, loaded.lexicon.labels()), split);
      export_latents(*loaded.model, loaded.assemble(corpus), loaded.lexicon.labels(), export_out);
    } else if (*swap_cmd) {
      const LoadedModel loaded = load_model(checkpoint);
      const Corpus corpus = load_corpus(data_path, loaded.lexicon.labels());
      print_swap(std::cout, latent_swap(loaded, corpus, source_id, donor_id));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code(e);
  }
  return 0;
}
