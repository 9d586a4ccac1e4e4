#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "bixse/errors.hpp"
#include "bixse/rng.hpp"
#include "bixse/trainer.hpp"

using namespace bixse;

namespace {

SynthConfig small_synth() {
  SynthConfig cfg;
  cfg.records = 600;
  cfg.corpus_size = 300;
  cfg.queries = 64;
  cfg.seed = 7;
  return cfg;
}

TrainConfig small_train(LossKind loss) {
  TrainConfig cfg;
  cfg.loss = loss;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.hard_negatives = 1;
  cfg.base_lr = 0.02;
  cfg.hash_buckets = 1024;
  cfg.dim = 32;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("scale_lr: square root of the batch ratio") {
  CHECK(scale_lr(0.1, 16) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(scale_lr(0.1, 256) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(scale_lr(0.1, 64) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("lr_at_step: warmup start, apex, decay end") {
  const double peak = 0.3;
  CHECK(lr_at_step(0, 100, peak, 0.05) == 0.0);
  CHECK(lr_at_step(5, 100, peak, 0.05) == doctest::Approx(peak).epsilon(1e-12));
  CHECK(lr_at_step(100, 100, peak, 0.05) == 0.0);
}

TEST_CASE("lr_at_step: piecewise linear, continuous, max at the apex") {
  const double peak = 1.0;
  double prev = lr_at_step(0, 200, peak, 0.05);
  double max_seen = prev;
  for (std::int64_t s = 1; s <= 200; ++s) {
    const double lr = lr_at_step(s, 200, peak, 0.05);
    CHECK(std::abs(lr - prev) < peak * 0.2);  // no jumps
    max_seen = std::max(max_seen, lr);
    prev = lr;
  }
  CHECK(max_seen == doctest::Approx(peak).epsilon(1e-12));
}

TEST_CASE("adam_step: zero gradients are a fixed point") {
  auto params = init_params(8, 4, 1);
  const Matrix before = params.table;
  auto state = init_adam_state(params);
  Gradients zero;
  zero.table = Matrix::Zero(8, 4);
  adam_step(params, zero, state, 0.1, 100.0, true);
  CHECK((params.table - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.step == 1);
}

TEST_CASE("adam_step: first step from zero state matches the scalar oracle") {
  // Bias-corrected update: m_hat = g, v_hat = g^2, so the first step is
  // lr * g / (|g| + eps), independent of |g|'s magnitude.
  auto params = init_params(1, 1, 1);
  const double before = params.table(0, 0);
  auto state = init_adam_state(params);
  Gradients grads;
  grads.table = Matrix::Constant(1, 1, 0.37);
  const double lr = 0.05;
  adam_step(params, grads, state, lr, 100.0, false);
  const double expected = lr * 0.37 / (std::abs(0.37) + state.eps);
  CHECK(before - params.table(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam_step: bias group steps with the multiplier") {
  auto params_a = init_params(2, 2, 1);
  auto params_b = init_params(2, 2, 1);
  auto state_a = init_adam_state(params_a);
  auto state_b = init_adam_state(params_b);
  Gradients grads;
  grads.table = Matrix::Zero(2, 2);
  grads.beta = 0.8;
  adam_step(params_a, grads, state_a, 0.01, 1.0, false);
  adam_step(params_b, grads, state_b, 0.01, 100.0, false);
  CHECK(params_b.beta == doctest::Approx(100.0 * params_a.beta).epsilon(1e-9));
}

TEST_CASE("adam_step: non-finite gradients abort") {
  auto params = init_params(2, 2, 1);
  auto state = init_adam_state(params);
  Gradients grads;
  grads.table = Matrix::Zero(2, 2);
  grads.table(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(params, grads, state, 0.1, 1.0, false);
    FAIL("expected NonFiniteGrad");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteGrad);
  }
}

TEST_CASE("grad_check: every loss within 1e-4, bias exact for non-bias losses") {
  const auto report = grad_check(12345);
  REQUIRE(report.size() == all_loss_kinds().size());
  for (const auto& entry : report) {
    INFO("loss: " << loss_kind_name(entry.kind));
    CHECK(entry.max_rel_error < 1e-4);
    if (!loss_uses_bias(entry.kind)) {
      CHECK(entry.beta_error == 0.0);
    }
  }
}

TEST_CASE("grad_check: deterministic under a fixed seed") {
  const auto a = grad_check(99);
  const auto b = grad_check(99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].max_rel_error == b[i].max_rel_error);
  }
}

TEST_CASE("train: empty dataset is an error") {
  try {
    train({}, small_train(LossKind::BiXSE));
    FAIL("expected EmptyDataset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyDataset);
  }
}

TEST_CASE("train: first reported loss equals the losses-module value") {
  // One batch, one epoch: the epoch-mean equals the single batch loss, and
  // the loss is computed before the optimizer step.
  const auto data = synth_generate(small_synth());
  std::vector<GradedRecord> records(data.records.begin(),
                                    data.records.begin() + 16);
  TrainConfig cfg = small_train(LossKind::BiXSE);
  cfg.epochs = 1;
  cfg.batch_size = 16;
  const auto result = train(records, cfg);
  REQUIRE(result.log.size() == 1);

  const auto batches = make_batches(records, 16, 1, mix_seed(cfg.seed, 0), false);
  REQUIRE(batches.size() == 1);
  auto params = init_params(cfg.hash_buckets, cfg.dim, cfg.seed, cfg.alpha, 0.0);
  std::vector<TextItem> queries, docs;
  for (const auto& rec : batches[0].records) {
    queries.push_back(TextItem{rec.query_id, rec.query, std::nullopt, rec.task});
  }
  for (const auto& rec : batches[0].records) {
    docs.push_back(TextItem{rec.doc_id, rec.doc, std::nullopt, rec.task});
  }
  for (const auto& rec : batches[0].records) {
    for (const auto& hn : rec.hard_negatives) {
      docs.push_back(TextItem{hn.doc_id, hn.doc, std::nullopt, rec.task});
    }
  }
  const auto q = encode_batch(queries, params);
  const auto d = encode_batch(docs, params);
  const auto labels = build_label_matrix(batches[0].records, 1);
  LossOptions opts;
  opts.kind = LossKind::BiXSE;
  const auto expected = evaluate_loss(score_matrix(q, d, params, true), labels, opts);
  CHECK(result.log[0].mean_loss == doctest::Approx(expected.value).epsilon(1e-12));
}

TEST_CASE("train: loss descends for every kind on a small synthetic set") {
  const auto data = synth_generate(small_synth());
  for (LossKind kind : all_loss_kinds()) {
    const auto result = train(data.records, small_train(kind));
    REQUIRE(result.log.size() == 3);
    INFO("loss: " << loss_kind_name(kind));
    CHECK(result.log.back().mean_loss < result.log.front().mean_loss);
  }
}

TEST_CASE("train: BiXSE bias goes negative within the first epoch") {
  const auto data = synth_generate(small_synth());
  const auto result = train(data.records, small_train(LossKind::BiXSE));
  CHECK(result.log.front().beta < 0.0);
}

TEST_CASE("train: bit-identical logs under a fixed seed") {
  const auto data = synth_generate(small_synth());
  const auto a = train(data.records, small_train(LossKind::BiXSE));
  const auto b = train(data.records, small_train(LossKind::BiXSE));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
    CHECK(a.log[i].beta == b.log[i].beta);
  }
  CHECK((a.params.table - b.params.table).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train: InfoNCE drops sub-threshold records") {
  const auto data = synth_generate(small_synth());
  const auto result = train(data.records, small_train(LossKind::InfoNCE));
  CHECK(result.dropped_records > 0);
  CHECK(result.dropped_records < static_cast<std::int64_t>(data.records.size()));
}

TEST_CASE("train: validation retains the best checkpoint") {
  const auto data = synth_generate(small_synth());
  EvalContext ctx{&data.eval_queries, &data.corpus, &data.qrels, 10};
  TrainConfig cfg = small_train(LossKind::BiXSE);
  const auto result = train(data.records, cfg, &ctx);
  double best = -1.0;
  for (const auto& epoch : result.log) {
    REQUIRE(epoch.validation_ndcg.has_value());
    best = std::max(best, *epoch.validation_ndcg);
  }
  const auto row =
      evaluate_run(result.params, data.eval_queries, data.corpus, data.qrels, 10);
  CHECK(row.ndcg == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("checkpoint: round-trips bit-exactly") {
  const auto params = init_params(64, 8, 42, 20.0, -3.14159);
  const std::string path =
      (std::filesystem::temp_directory_path() / "bixse_ckpt_test.json").string();
  save_checkpoint(params, path);
  const auto loaded = load_checkpoint(path);
  CHECK(loaded.alpha == params.alpha);
  CHECK(loaded.beta == params.beta);
  CHECK(loaded.hash_seed == params.hash_seed);
  REQUIRE(loaded.table.rows() == params.table.rows());
  REQUIRE(loaded.table.cols() == params.table.cols());
  CHECK((loaded.table - params.table).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint: rejects foreign files") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "bixse_ckpt_bad.json").string();
  {
    std::ofstream out(path);
    out << "{\"format\": \"other\"}\n";
  }
  try {
    load_checkpoint(path);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
  }
}
