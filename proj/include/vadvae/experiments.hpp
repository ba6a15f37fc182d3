#pragma once

#include "vadvae/train.hpp"

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace vadvae {

enum class SweepKind { ContextWindow, MiCoefficient, Robustness };

SweepKind parse_sweep_kind(const std::string& name);

struct SweepPoint {
  std::string setting;
  TrainConfig config;
};

// Context windows expand each W into past=W, future=W and both=W (-1 = all);
// MI coefficients set mu_mi; robustness fractions set label_noise for the
// full model and the entangled baseline.
std::vector<SweepPoint> sweep_points(SweepKind kind, const std::vector<double>& grid,
                                     const TrainConfig& base);

struct SweepRow {
  std::string setting;
  int seed = 0;
  double f1 = 0.0;
  std::array<FlaggedValue, 3> pearson{};
  std::optional<double> mi_average;
};

// One training run per (point, seed), on up to `jobs` threads. Rows come back
// ordered by point then seed regardless of completion order.
std::vector<SweepRow> run_sweep(SweepKind kind, const std::vector<double>& grid,
                                const TrainConfig& base, const CorpusSplits& data,
                                const std::vector<int>& seeds, std::size_t jobs,
                                const TrainOptions& options);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// Retention table rebuilt from the rows of a robustness sweep.
std::vector<RetentionRow> retention_from_sweep(const std::vector<SweepRow>& rows,
                                               const std::vector<double>& grid,
                                               const std::vector<int>& seeds);

struct SwapResult {
  std::string original;
  std::string donor;
  std::string swapped;
};

// Greedy reconstructions of the source, the donor, and the source's content
// latent joined with the donor's V/A/D latents. Ids are "<dialogue id>#<index>".
SwapResult latent_swap(const LoadedModel& loaded, const Corpus& corpus, const std::string& source_id,
                       const std::string& donor_id);

void print_swap(std::ostream& out, const SwapResult& swap);

}  // namespace vadvae
