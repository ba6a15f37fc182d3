#include "vadvae/errors.hpp"
#include "vadvae/experiments.hpp"
#include "vadvae/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace vadvae;
namespace fs = std::filesystem;

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.d_v = c.d_a = c.d_d = 2;
  c.d_c = 6;
  c.hidden = 16;
  c.embed = 12;
  c.epochs = 2;
  c.log_every = 5;
  c.mi_refit_steps = 20;
  return c;
}

const CorpusSplits& small_splits() {
  static const CorpusSplits splits = [] {
    SyntheticOptions o;
    o.n_dialogues = 30;
    o.labels = VadLexicon::builtin("iemocap").labels();
    o.seed = 1;
    return split_corpus(generate_synthetic(o));
  }();
  return splits;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  TempDir() : path(fs::temp_directory_path() / ("vadvae_train_" + std::to_string(counter++))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path path;
  static inline int counter = 0;
};

}  // namespace

TEST(Train, SeedStreamsAreDistinct) {
  EXPECT_NE(derive_seed(0, 0), derive_seed(0, 1));
  EXPECT_NE(derive_seed(0, 0), derive_seed(1, 0));
  EXPECT_EQ(derive_seed(7, 2), derive_seed(7, 2));
  const TrainConfig c;
  EXPECT_EQ(run_dir_name(c), config_hash_hex(c) + "-s0");
}

TEST(Train, ArtifactsAndLogRecords) {
  TempDir dir;
  TrainOptions opts;
  opts.out_root = dir.path;
  const TrainResult r = train(quick_config(), small_splits(), opts);
  for (const char* name : {"config.json", "train_log.jsonl", "checkpoint.bin", "eval.json"}) {
    EXPECT_TRUE(fs::exists(r.run_dir / name)) << name;
  }
  EXPECT_EQ(r.run_dir.filename(), run_dir_name(quick_config()));
  ASSERT_TRUE(r.test);
  EXPECT_TRUE(r.test->mi);
  EXPECT_GE(r.best_epoch, 1);
  EXPECT_LE(r.best_epoch, 2);

  int steps = 0, epochs = 0, tests = 0;
  for (const auto& rec : r.log) {
    const std::string type = rec.at("type");
    if (type == "step") {
      ++steps;
      for (const char* k : {"epoch", "step", "lr", "l_erc", "l_recon", "kl_V", "l_info", "l_mi", "total"}) {
        EXPECT_TRUE(rec.contains(k)) << k;
      }
    } else if (type == "epoch") {
      ++epochs;
      EXPECT_TRUE(rec.contains("train_loss"));
      EXPECT_TRUE(rec.contains("valid"));
    } else if (type == "test") {
      ++tests;
    }
  }
  EXPECT_GT(steps, 0);
  EXPECT_EQ(epochs, 2);
  EXPECT_EQ(tests, 1);
}

TEST(Train, NoDecoderLogsOmitElboTerms) {
  TrainConfig c = quick_config();
  c.no_decoder = true;
  c.epochs = 1;
  TrainOptions opts;
  opts.write_artifacts = false;
  opts.evaluate_test = false;
  const TrainResult r = train(c, small_splits(), opts);
  for (const auto& rec : r.log) {
    if (rec.at("type") != "step") continue;
    EXPECT_FALSE(rec.contains("l_recon"));
    EXPECT_FALSE(rec.contains("kl_C"));
  }
  EXPECT_FALSE(r.test);
}

TEST(Train, BitwiseDeterministic) {
  TempDir a, b;
  TrainOptions oa, ob;
  oa.out_root = a.path;
  ob.out_root = b.path;
  const TrainResult ra = train(quick_config(), small_splits(), oa);
  const TrainResult rb = train(quick_config(), small_splits(), ob);
  for (const char* name : {"checkpoint.bin", "train_log.jsonl", "eval.json", "config.json"}) {
    EXPECT_EQ(slurp(ra.run_dir / name), slurp(rb.run_dir / name)) << name;
  }
}

TEST(Train, ReloadedCheckpointReproducesEvaluation) {
  TempDir dir;
  TrainOptions opts;
  opts.out_root = dir.path;
  const TrainResult r = train(quick_config(), small_splits(), opts);
  const LoadedModel loaded = load_model(r.run_dir / "checkpoint.bin");
  EXPECT_EQ(loaded.config, quick_config());
  EXPECT_EQ(loaded.best_epoch, r.best_epoch);
  check_labels(loaded, loaded.lexicon.labels());
  EXPECT_THROW(check_labels(loaded, VadLexicon::builtin("meld").labels()), SchemaError);

  const auto inputs = loaded.assemble(small_splits().test);
  const auto opts_eval = eval_options(loaded.config);
  const EvalReport first = evaluate(*loaded.model, inputs, loaded.lexicon.labels(), opts_eval);
  const EvalReport second = evaluate(*loaded.model, inputs, loaded.lexicon.labels(), opts_eval);
  EXPECT_EQ(first.to_json(), second.to_json());
  EXPECT_EQ(first.to_json(), r.test->to_json());
}

TEST(Experiments, LatentSwapAndExport) {
  TempDir dir;
  TrainConfig c = quick_config();
  c.epochs = 1;
  TrainOptions opts;
  opts.out_root = dir.path;
  opts.evaluate_test = false;
  const TrainResult r = train(c, small_splits(), opts);
  const LoadedModel loaded = load_model(r.run_dir / "checkpoint.bin");
  const Corpus& corpus = small_splits().test;
  const std::string a = corpus[0].id + "#0", b = corpus[0].id + "#1";

  const SwapResult self = latent_swap(loaded, corpus, a, a);
  EXPECT_EQ(self.swapped, self.original);
  const SwapResult swap = latent_swap(loaded, corpus, a, b);
  std::ostringstream printed;
  print_swap(printed, swap);
  EXPECT_EQ(printed.str().rfind("original:", 0), 0u);
  EXPECT_THROW(latent_swap(loaded, corpus, a, "missing#3"), UsageError);

  const fs::path csv = dir.path / "latents.csv";
  export_latents(*loaded.model, loaded.assemble(corpus), loaded.lexicon.labels(), csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("utterance_id,emotion,mu_V_0,mu_V_1,mu_A_0", 0), 0u);
  EXPECT_NE(header.find(",mu_C_5"), std::string::npos);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, count_utterances(corpus));
}

TEST(Experiments, SweepPointSettings) {
  const TrainConfig base;
  const auto ctx = sweep_points(SweepKind::ContextWindow, {2, -1}, base);
  ASSERT_EQ(ctx.size(), 6u);
  EXPECT_EQ(ctx[0].setting, "past=2");
  EXPECT_EQ(ctx[0].config.window_past, 2);
  EXPECT_EQ(ctx[0].config.window_future, 0);
  EXPECT_EQ(ctx[5].setting, "both=all");
  EXPECT_EQ(ctx[5].config.window_future, kWholeDialogue);

  const auto mi = sweep_points(SweepKind::MiCoefficient, {0.0, 0.005}, base);
  EXPECT_EQ(mi[1].setting, "mu_mi=0.005");
  EXPECT_EQ(mi[1].config.mu_mi, 0.005);

  const auto rob = sweep_points(SweepKind::Robustness, {0.5}, base);
  bool entangled = false;
  for (const auto& p : rob) {
    if (p.setting == "entangled/alpha=0.50") entangled = p.config.entangled_baseline && p.config.label_noise == 0.5;
  }
  EXPECT_TRUE(entangled);
  EXPECT_THROW(parse_sweep_kind("other"), UsageError);
}

TEST(Experiments, RetentionIsRatioToCleanRun) {
  const auto f1 = [](const std::string& variant, double alpha, std::uint64_t seed) {
    const double clean = 0.8 + 0.01 * static_cast<double>(seed);
    return variant == "vadvae" ? clean * (1.0 - alpha) : clean * (1.0 - 2.0 * alpha);
  };
  const auto rows = robustness_curve(f1, {0.25}, {0, 1});
  for (const auto& row : rows) {
    if (row.alpha == 0.0) EXPECT_DOUBLE_EQ(row.retention, 1.0);
    if (row.alpha == 0.25 && row.variant == "vadvae") EXPECT_NEAR(row.retention, 0.75, 1e-12);
    if (row.alpha == 0.25 && row.variant == "entangled") EXPECT_NEAR(row.retention, 0.5, 1e-12);
    EXPECT_EQ(row.seeds, 2u);
  }
  std::ostringstream csv;
  write_retention_csv(csv, rows);
  EXPECT_FALSE(csv.str().empty());
}
