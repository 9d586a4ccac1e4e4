#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bixse/data.hpp"
#include "bixse/eval.hpp"
#include "bixse/losses.hpp"

namespace bixse {

struct TrainConfig {
  LossKind loss = LossKind::BiXSE;
  int epochs = 4;
  int batch_size = 32;
  int hard_negatives = 1;
  double base_lr = 0.02;  // at reference batch 16; scaled by sqrt(B/16)
  double beta_lr_multiplier = 100.0;
  double alpha = 20.0;
  bool train_alpha = false;
  double warmup_fraction = 0.05;
  double binarize_threshold = 0.5;
  double teacher_scale = -1.0;  // < 0 means "use alpha"
  int hash_buckets = 4096;
  int dim = 64;
  bool task_conditioned = false;
  std::uint64_t seed = 0;
};

/// base_lr * sqrt(total_batch / 16).
double scale_lr(double base_lr, int total_batch);

/// Linear 0 -> peak over warmup_fraction of total_steps, then linear
/// peak -> 0 at total_steps.
double lr_at_step(std::int64_t step, std::int64_t total_steps, double peak_lr,
                  double warmup_fraction);

/// Adam moments for the three parameter groups (table, alpha, beta).
/// beta1=0.9, beta2=0.98, no weight decay.
struct AdamState {
  Matrix m_table, v_table;
  double m_alpha = 0.0, v_alpha = 0.0;
  double m_beta = 0.0, v_beta = 0.0;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

AdamState init_adam_state(const EncoderParams& params);

/// Bias-corrected Adam update: p -= lr * m_hat / (sqrt(v_hat) + eps). The
/// bias parameter group steps with lr * beta_lr_multiplier; alpha is only
/// touched when update_alpha is set.
void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state,
               double lr, double beta_lr_multiplier, bool update_alpha);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr_last = 0.0;
  double beta = 0.0;
  std::optional<double> validation_ndcg;
};

/// Optional held-out retrieval evaluation used for per-epoch validation and
/// best-checkpoint selection.
struct EvalContext {
  const std::vector<TextItem>* queries = nullptr;
  const std::vector<TextItem>* corpus = nullptr;
  const Qrels* qrels = nullptr;
  int k = 10;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochLog> log;
  std::int64_t dropped_records = 0;  // records unusable under the chosen loss
};

TrainResult train(const std::vector<GradedRecord>& records,
                  const TrainConfig& cfg,
                  const EvalContext* validation = nullptr);

struct GradCheckEntry {
  LossKind kind;
  double max_rel_error = 0.0;
  double table_error = 0.0;
  double alpha_error = 0.0;
  double beta_error = 0.0;
};

/// Central finite differences (step 1e-5) over every table entry, alpha and
/// beta against the analytic backward pass, for every LossKind, on a small
/// seeded batch.
std::vector<GradCheckEntry> grad_check(std::uint64_t seed);

/// Versioned JSON dump of EncoderParams; round-trips bit-exactly.
void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace bixse
