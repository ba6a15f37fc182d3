#include "vadvae/experiments.hpp"

#include "vadvae/errors.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace vadvae {

namespace {

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string noise_setting(const std::string& variant, double alpha) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/alpha=%.2f", variant.c_str(), alpha);
  return buf;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "context_window") return SweepKind::ContextWindow;
  if (name == "mi_coefficient") return SweepKind::MiCoefficient;
  if (name == "robustness") return SweepKind::Robustness;
  throw UsageError("unknown sweep kind '" + name + "'");
}

std::vector<SweepPoint> sweep_points(SweepKind kind, const std::vector<double>& grid,
                                     const TrainConfig& base) {
  if (grid.empty()) throw UsageError("sweep: empty grid");
  std::vector<SweepPoint> points;
  switch (kind) {
    case SweepKind::ContextWindow:
      for (const std::string mode : {"past", "future", "both"}) {
        for (double g : grid) {
          const int w = static_cast<int>(g);
          if (w < kWholeDialogue || static_cast<double>(w) != g) {
            throw UsageError("sweep: context windows must be integers >= -1");
          }
          TrainConfig c = base;
          c.window_past = mode == "future" ? 0 : w;
          c.window_future = mode == "past" ? 0 : w;
          points.push_back({mode + "=" + (w == kWholeDialogue ? "all" : std::to_string(w)), c});
        }
      }
      break;
    case SweepKind::MiCoefficient:
      for (double g : grid) {
        TrainConfig c = base;
        c.mu_mi = g;
        points.push_back({"mu_mi=" + format_value(g), c});
      }
      break;
    case SweepKind::Robustness:
      for (const std::string variant : {"vadvae", "entangled"}) {
        for (double g : grid) {
          TrainConfig c = base;
          c.label_noise = g;
          c.entangled_baseline = variant == "entangled";
          points.push_back({noise_setting(variant, g), c});
        }
      }
      break;
  }
  for (const auto& p : points) validate(p.config);
  return points;
}

std::vector<SweepRow> run_sweep(SweepKind kind, const std::vector<double>& grid,
                                const TrainConfig& base, const CorpusSplits& data,
                                const std::vector<int>& seeds, std::size_t jobs,
                                const TrainOptions& options) {
  if (seeds.empty()) throw UsageError("sweep: need at least one seed");
  const auto points = sweep_points(kind, grid, base);
  const std::size_t total = points.size() * seeds.size();
  std::vector<SweepRow> rows(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t task = next++; task < total; task = next++) {
      const SweepPoint& point = points[task / seeds.size()];
      TrainConfig config = point.config;
      config.seed = seeds[task % seeds.size()];
      try {
        const TrainResult r = train(config, data, options);
        SweepRow& row = rows[task];
        row.setting = point.setting;
        row.seed = config.seed;
        row.f1 = r.test ? r.test->weighted_f1 : r.best_valid.weighted_f1;
        const EvalReport& report = r.test ? *r.test : r.best_valid;
        row.pearson = report.pearson;
        if (report.mi) row.mi_average = report.mi->average;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, total));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "setting,seed,weighted_f1,pearson_v,pearson_a,pearson_d,mi_average\n";
  auto cell = [](bool defined, double v) { return defined ? format_value(v) : std::string(); };
  for (const auto& r : rows) {
    out << r.setting << ',' << r.seed << ',' << format_value(r.f1);
    for (const auto& p : r.pearson) out << ',' << cell(p.defined, p.value);
    out << ',' << cell(r.mi_average.has_value(), r.mi_average.value_or(0.0)) << '\n';
  }
}

std::vector<RetentionRow> retention_from_sweep(const std::vector<SweepRow>& rows,
                                               const std::vector<double>& grid,
                                               const std::vector<int>& seeds) {
  std::map<std::pair<std::string, int>, double> f1;
  for (const auto& r : rows) f1[{r.setting, r.seed}] = r.f1;
  std::vector<std::uint64_t> seed_list(seeds.begin(), seeds.end());
  auto lookup = [&](const std::string& variant, double alpha, std::uint64_t seed) {
    const auto it = f1.find({noise_setting(variant, alpha), static_cast<int>(seed)});
    if (it == f1.end()) throw UsageError("robustness: grid must include alpha = 0");
    return it->second;
  };
  return robustness_curve(lookup, grid, seed_list);
}

SwapResult latent_swap(const LoadedModel& loaded, const Corpus& corpus, const std::string& source_id,
                       const std::string& donor_id) {
  if (loaded.config.entangled_baseline) {
    throw UsageError("swap-demo: the entangled baseline has no separate VAD latents");
  }
  const auto inputs = loaded.assemble(corpus);
  const ModelInput* source = nullptr;
  const ModelInput* donor = nullptr;
  for (const auto& in : inputs) {
    if (in.utterance_id == source_id) source = &in;
    if (in.utterance_id == donor_id) donor = &in;
  }
  if (!source) throw UsageError("swap-demo: no utterance '" + source_id + "'");
  if (!donor) throw UsageError("swap-demo: no utterance '" + donor_id + "'");

  NoGradGuard no_grad;
  TapeScope scope;
  Rng unused(0);
  const VadVae& model = *loaded.model;
  const LatentBlock s = model.encode({source}, Mode::Eval, unused);
  const LatentBlock d = model.encode({donor}, Mode::Eval, unused);
  const Tensor swapped = VadVae::join({d.sample(Factor::Valence), d.sample(Factor::Arousal),
                                       d.sample(Factor::Dominance), s.sample(Factor::Content)});
  const auto max_len = static_cast<std::size_t>(loaded.config.max_len);
  auto render = [&](const Tensor& joint) {
    return join_tokens(loaded.tokenizer.decode(model.greedy_reconstruct(joint, max_len)));
  };
  return {render(s.joint), render(d.joint), render(swapped)};
}

void print_swap(std::ostream& out, const SwapResult& swap) {
  out << "original: " << swap.original << '\n';
  out << "donor:    " << swap.donor << '\n';
  out << "swapped:  " << swap.swapped << '\n';
}

}  // namespace vadvae
