#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bixse/io.hpp"
#include "bixse/trainer.hpp"

namespace bixse {

/// Shared inputs for the experiment sweeps: a training set, a held-out
/// evaluation split, and a baseline config whose loss each sweep overrides.
struct SweepContext {
  std::vector<GradedRecord> records;
  std::vector<TextItem> eval_queries;
  std::vector<TextItem> corpus;
  Qrels qrels;
  TrainConfig base;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int k = 10;
  int jobs = 1;
};

struct NoiseRow {
  LossKind loss;
  double p = 0.0;
  std::uint64_t seed = 0;
  double ndcg = 0.0;
};

/// Label-flip robustness: for each p, loss in {InfoNCE, BiXSE} and seed,
/// inject noise, train, evaluate. Requires binary labels with one hard
/// negative per record.
std::vector<NoiseRow> sweep_noise(const SweepContext& ctx,
                                  const std::vector<double>& p_values);

struct CutoffRow {
  LossKind loss;
  double cutoff = 0.0;
  std::uint64_t seed = 0;
  double ndcg = 0.0;
  int retained = 0;
};

/// Relevance-cutoff filtering: InfoNCE trains on binarized survivors, BiXSE
/// keeps graded scores; all cutoffs subsampled to the smallest set.
std::vector<CutoffRow> sweep_cutoff(const SweepContext& ctx,
                                    const std::vector<double>& cutoffs);

struct BatchGridRow {
  LossKind loss;
  int k_negs = 0;
  int b = 0;
  std::uint64_t seed = 0;
  double ndcg = 0.0;
  std::string status = "ok";  // an error name when the cell failed
};

std::vector<BatchGridRow> sweep_batch_and_negatives(
    const SweepContext& ctx, const std::vector<std::pair<int, int>>& grid,
    const std::vector<LossKind>& losses);

struct BiasLrRow {
  double multiplier = 0.0;
  std::uint64_t seed = 0;
  double ndcg = 0.0;
};

/// BiXSE with the bias learning-rate multiplier swept over several decades.
std::vector<BiasLrRow> sweep_bias_lr(const SweepContext& ctx,
                                     const std::vector<double>& multipliers);

std::string to_csv(const std::vector<NoiseRow>& rows);
std::string to_csv(const std::vector<CutoffRow>& rows);
std::string to_csv(const std::vector<BatchGridRow>& rows);
std::string to_csv(const std::vector<BiasLrRow>& rows);
std::string to_csv(const std::vector<GradCheckEntry>& rows);

}  // namespace bixse
