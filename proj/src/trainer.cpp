#include "bixse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "bixse/errors.hpp"
#include "bixse/io.hpp"
#include "bixse/rng.hpp"

namespace bixse {

double scale_lr(double base_lr, int total_batch) {
  if (total_batch < 1) {
    throw Error(ErrorCode::ConfigInvalid, "total batch must be >= 1");
  }
  return base_lr * std::sqrt(static_cast<double>(total_batch) / 16.0);
}

double lr_at_step(std::int64_t step, std::int64_t total_steps, double peak_lr,
                  double warmup_fraction) {
  if (step < 0 || step > total_steps || total_steps < 1) {
    throw Error(ErrorCode::ConfigInvalid, "step outside [0, total_steps]");
  }
  const double warmup = warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s <= warmup) return peak_lr * s / warmup;
  return peak_lr * (static_cast<double>(total_steps) - s) /
         (static_cast<double>(total_steps) - warmup);
}

AdamState init_adam_state(const EncoderParams& params) {
  AdamState state;
  state.m_table = Matrix::Zero(params.buckets(), params.dim());
  state.v_table = Matrix::Zero(params.buckets(), params.dim());
  return state;
}

namespace {

inline double adam_update(double grad, double& m, double& v, double lr,
                          const AdamState& state, double c1, double c2) {
  m = state.beta1 * m + (1.0 - state.beta1) * grad;
  v = state.beta2 * v + (1.0 - state.beta2) * grad * grad;
  return lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
}

}  // namespace

void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state,
               double lr, double beta_lr_multiplier, bool update_alpha) {
  if (grads.table.rows() != params.table.rows() ||
      grads.table.cols() != params.table.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient/table shape mismatch");
  }
  if (!grads.table.allFinite() || !std::isfinite(grads.alpha) ||
      !std::isfinite(grads.beta)) {
    throw Error(ErrorCode::NonFiniteGrad, "non-finite gradient");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  state.m_table = state.beta1 * state.m_table + (1.0 - state.beta1) * grads.table;
  state.v_table = state.beta2 * state.v_table +
                  (1.0 - state.beta2) * grads.table.cwiseProduct(grads.table);
  params.table.array() -=
      lr * (state.m_table.array() / c1) /
      ((state.v_table.array() / c2).sqrt() + state.eps);

  if (update_alpha) {
    params.alpha -=
        adam_update(grads.alpha, state.m_alpha, state.v_alpha, lr, state, c1, c2);
  } else {
    // Keep the moments untouched so enabling alpha training later starts cold.
    (void)grads.alpha;
  }
  params.beta -= adam_update(grads.beta, state.m_beta, state.v_beta,
                             lr * beta_lr_multiplier, state, c1, c2);
}

namespace {

std::vector<TextItem> batch_query_items(const Batch& batch) {
  std::vector<TextItem> items;
  items.reserve(batch.records.size());
  for (const auto& rec : batch.records) {
    items.push_back({rec.query_id, rec.query, std::nullopt, rec.task});
  }
  return items;
}

// Document layout mirrors the label matrix: positives first, then the
// hard-negative block grouped per query.
std::vector<TextItem> batch_doc_items(const Batch& batch) {
  std::vector<TextItem> items;
  items.reserve(batch.records.size() * (1 + batch.hard_negatives));
  for (const auto& rec : batch.records) {
    items.push_back({rec.doc_id, rec.doc, std::nullopt, rec.task});
  }
  for (const auto& rec : batch.records) {
    for (const auto& hn : rec.hard_negatives) {
      items.push_back({hn.doc_id, hn.doc, std::nullopt, rec.task});
    }
  }
  return items;
}

// Records a loss cannot consume are dropped up front: InfoNCE needs a
// positive per row, Soft InfoNCE needs nonzero label mass.
std::vector<GradedRecord> usable_records(const std::vector<GradedRecord>& records,
                                         const TrainConfig& cfg,
                                         std::int64_t& dropped) {
  std::vector<GradedRecord> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    bool keep = true;
    if (cfg.loss == LossKind::InfoNCE) {
      keep = rec.relevance >= cfg.binarize_threshold;
    } else if (cfg.loss == LossKind::SoftInfoNCE) {
      double mass = rec.relevance;
      const int k = std::min<int>(cfg.hard_negatives,
                                  static_cast<int>(rec.hard_negatives.size()));
      for (int n = 0; n < k; ++n) {
        mass += rec.hard_negatives[static_cast<std::size_t>(n)].relevance;
      }
      keep = mass > 0.0;
    }
    if (keep) {
      out.push_back(rec);
    } else {
      ++dropped;
    }
  }
  return out;
}

MetricsRow run_validation(const EncoderParams& params, const EvalContext& ctx);

}  // namespace

TrainResult train(const std::vector<GradedRecord>& records,
                  const TrainConfig& cfg, const EvalContext* validation) {
  if (records.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no training records");
  }
  TrainResult result;
  const std::vector<GradedRecord> usable =
      usable_records(records, cfg, result.dropped_records);
  if (usable.empty()) {
    throw Error(ErrorCode::EmptyDataset,
                "no record is usable under loss " +
                    std::string(loss_kind_name(cfg.loss)));
  }

  EncoderParams params =
      init_params(cfg.hash_buckets, cfg.dim, cfg.seed, cfg.alpha, 0.0);
  AdamState state = init_adam_state(params);

  const bool use_bias = loss_uses_bias(cfg.loss);
  LossOptions opts;
  opts.kind = cfg.loss;
  opts.binarize_threshold = cfg.binarize_threshold;
  opts.teacher_scale = cfg.teacher_scale < 0.0 ? cfg.alpha : cfg.teacher_scale;

  const std::int64_t steps_per_epoch = static_cast<std::int64_t>(
      make_batches(usable, cfg.batch_size, cfg.hard_negatives,
                   mix_seed(cfg.seed, 0), cfg.task_conditioned)
          .size());
  if (steps_per_epoch == 0) {
    throw Error(ErrorCode::EmptyDataset,
                "fewer records than one batch in every task group");
  }
  const std::int64_t total_steps =
      steps_per_epoch * static_cast<std::int64_t>(cfg.epochs);
  const double peak_lr = scale_lr(cfg.base_lr, cfg.batch_size);

  double best_validation = -1.0;
  EncoderParams best_params = params;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches =
        make_batches(usable, cfg.batch_size, cfg.hard_negatives,
                     mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)),
                     cfg.task_conditioned);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (const auto& batch : batches) {
      const auto queries = encode_batch(batch_query_items(batch), params);
      const auto docs = encode_batch(batch_doc_items(batch), params);
      const Matrix scores = score_matrix(queries, docs, params, use_bias);
      const LabelMatrix labels =
          build_label_matrix(batch.records, batch.hard_negatives);
      const LossResult res = evaluate_loss(scores, labels, opts);
      const Gradients grads =
          encoder_backward(res.score_grad, queries, docs, params, use_bias);
      lr = lr_at_step(step, total_steps, peak_lr, cfg.warmup_fraction);
      adam_step(params, grads, state, lr, cfg.beta_lr_multiplier,
                cfg.train_alpha);
      loss_sum += res.value;
      ++step;
    }

    EpochLog log;
    log.epoch = epoch + 1;
    log.mean_loss = loss_sum / static_cast<double>(batches.size());
    log.lr_last = lr;
    log.beta = params.beta;
    if (validation != nullptr) {
      const MetricsRow row = run_validation(params, *validation);
      log.validation_ndcg = row.ndcg;
      if (row.ndcg > best_validation) {
        best_validation = row.ndcg;
        best_params = params;
      }
    }
    result.log.push_back(log);
  }

  result.params = validation != nullptr ? best_params : params;
  return result;
}

namespace {

MetricsRow run_validation(const EncoderParams& params, const EvalContext& ctx) {
  return evaluate_run(params, *ctx.queries, *ctx.corpus, *ctx.qrels, ctx.k);
}

struct CheckSetup {
  std::vector<TextItem> queries;
  std::vector<TextItem> docs;
  LabelMatrix labels;
  EncoderParams params;
};

CheckSetup make_check_setup(std::uint64_t seed) {
  constexpr int kBatch = 3;
  constexpr int kNegs = 2;
  Rng rng(mix_seed(seed, 0x9c));
  auto random_text = [&rng]() {
    const std::size_t len = 6 + rng.uniform_int(8);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
      s.push_back(static_cast<char>('a' + rng.uniform_int(26)));
    }
    return s;
  };

  CheckSetup setup;
  std::vector<GradedRecord> records;
  for (int i = 0; i < kBatch; ++i) {
    GradedRecord rec;
    rec.query_id = "q" + std::to_string(i);
    rec.query = random_text();
    rec.doc_id = "d" + std::to_string(i);
    rec.doc = random_text();
    rec.task = "check";
    rec.relevance = 0.55 + 0.4 * rng.uniform();  // keeps every loss applicable
    for (int n = 0; n < kNegs; ++n) {
      rec.hard_negatives.push_back({"n" + std::to_string(i) + std::to_string(n),
                                    random_text(), 0.1 + 0.3 * rng.uniform()});
    }
    records.push_back(std::move(rec));
  }
  Batch batch{records, kNegs};
  setup.queries = batch_query_items(batch);
  setup.docs = batch_doc_items(batch);
  setup.labels = build_label_matrix(records, kNegs);
  setup.params = init_params(32, 6, seed, 4.0, 0.25);
  return setup;
}

double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-6) return 0.0;
  return std::abs(a - b) / scale;
}

}  // namespace

std::vector<GradCheckEntry> grad_check(std::uint64_t seed) {
  CheckSetup setup = make_check_setup(seed);
  LossOptions opts;
  opts.binarize_threshold = 0.0;
  opts.teacher_scale = setup.params.alpha;

  std::vector<GradCheckEntry> report;
  for (LossKind kind : all_loss_kinds()) {
    opts.kind = kind;
    const bool use_bias = loss_uses_bias(kind);

    auto forward = [&](const EncoderParams& p) {
      const auto q = encode_batch(setup.queries, p);
      const auto d = encode_batch(setup.docs, p);
      return evaluate_loss(score_matrix(q, d, p, use_bias), setup.labels, opts)
          .value;
    };

    const auto q = encode_batch(setup.queries, setup.params);
    const auto d = encode_batch(setup.docs, setup.params);
    const LossResult res = evaluate_loss(
        score_matrix(q, d, setup.params, use_bias), setup.labels, opts);
    const Gradients grads =
        encoder_backward(res.score_grad, q, d, setup.params, use_bias);

    constexpr double kStep = 1e-5;
    GradCheckEntry entry;
    entry.kind = kind;
    EncoderParams probe = setup.params;
    for (Index r = 0; r < probe.table.rows(); ++r) {
      for (Index c = 0; c < probe.table.cols(); ++c) {
        const double saved = probe.table(r, c);
        probe.table(r, c) = saved + kStep;
        const double up = forward(probe);
        probe.table(r, c) = saved - kStep;
        const double down = forward(probe);
        probe.table(r, c) = saved;
        entry.table_error = std::max(
            entry.table_error,
            rel_error(grads.table(r, c), (up - down) / (2.0 * kStep)));
      }
    }
    {
      const double saved = probe.alpha;
      probe.alpha = saved + kStep;
      const double up = forward(probe);
      probe.alpha = saved - kStep;
      const double down = forward(probe);
      probe.alpha = saved;
      entry.alpha_error = rel_error(grads.alpha, (up - down) / (2.0 * kStep));
    }
    {
      const double saved = probe.beta;
      probe.beta = saved + kStep;
      const double up = forward(probe);
      probe.beta = saved - kStep;
      const double down = forward(probe);
      probe.beta = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      entry.beta_error = use_bias ? rel_error(grads.beta, numeric)
                                  : std::abs(grads.beta - numeric);
    }
    entry.max_rel_error =
        std::max({entry.table_error, entry.alpha_error, entry.beta_error});
    report.push_back(entry);
  }
  return report;
}

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  nlohmann::ordered_json obj;
  obj["format"] = "bixse-checkpoint";
  obj["version"] = 1;
  obj["hash_buckets"] = params.buckets();
  obj["dim"] = params.dim();
  obj["hash_seed"] = params.hash_seed;
  obj["alpha"] = params.alpha;
  obj["beta"] = params.beta;
  std::vector<double> table(static_cast<std::size_t>(params.table.size()));
  for (Index r = 0; r < params.table.rows(); ++r) {
    for (Index c = 0; c < params.table.cols(); ++c) {
      table[static_cast<std::size_t>(r * params.table.cols() + c)] =
          params.table(r, c);
    }
  }
  obj["table"] = std::move(table);
  write_file_atomic(path, obj.dump() + "\n");
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint: ") + e.what());
  }
  if (obj.value("format", std::string{}) != "bixse-checkpoint" ||
      obj.value("version", 0) != 1) {
    throw Error(ErrorCode::ParseError, "not a v1 checkpoint: " + path);
  }
  EncoderParams params;
  const Index h = obj.at("hash_buckets").get<Index>();
  const Index d = obj.at("dim").get<Index>();
  params.hash_seed = obj.at("hash_seed").get<std::uint64_t>();
  params.alpha = obj.at("alpha").get<double>();
  params.beta = obj.at("beta").get<double>();
  const auto& table = obj.at("table");
  if (static_cast<Index>(table.size()) != h * d) {
    throw Error(ErrorCode::ParseError, "checkpoint table size mismatch");
  }
  params.table.resize(h, d);
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < d; ++c) {
      params.table(r, c) = table[static_cast<std::size_t>(r * d + c)].get<double>();
    }
  }
  return params;
}

}  // namespace bixse
