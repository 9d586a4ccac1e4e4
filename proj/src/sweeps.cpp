#include "bixse/sweeps.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "bixse/errors.hpp"
#include "bixse/rng.hpp"

namespace bixse {

namespace {

// Runs cells on up to `jobs` threads; results land in pre-sized slots so the
// output order is the grid order regardless of completion order.
void run_cells(int jobs, const std::vector<std::function<void()>>& cells) {
  if (jobs <= 1) {
    for (const auto& cell : cells) cell();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        cells[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  const int n = std::min<int>(jobs, static_cast<int>(cells.size()));
  threads.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

double train_and_score(const SweepContext& ctx,
                       const std::vector<GradedRecord>& records,
                       const TrainConfig& cfg) {
  const TrainResult result = train(records, cfg);
  return evaluate_run(result.params, ctx.eval_queries, ctx.corpus, ctx.qrels,
                      ctx.k)
      .ndcg;
}

std::string format_double(double value, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, value);
  return buf;
}

}  // namespace

std::vector<NoiseRow> sweep_noise(const SweepContext& ctx,
                                  const std::vector<double>& p_values) {
  const std::vector<LossKind> losses = {LossKind::InfoNCE, LossKind::BiXSE};
  std::vector<NoiseRow> rows(p_values.size() * losses.size() *
                             ctx.seeds.size());
  std::vector<std::function<void()>> cells;
  std::size_t slot = 0;
  for (double p : p_values) {
    for (LossKind loss : losses) {
      for (std::uint64_t seed : ctx.seeds) {
        const std::size_t out = slot++;
        cells.push_back([&, p, loss, seed, out]() {
          auto noisy =
              inject_label_noise(ctx.records, p, mix_seed(seed, 0x40153));
          TrainConfig cfg = ctx.base;
          cfg.loss = loss;
          cfg.seed = seed;
          rows[out] = {loss, p, seed, train_and_score(ctx, noisy, cfg)};
        });
      }
    }
  }
  run_cells(ctx.jobs, cells);
  return rows;
}

std::vector<CutoffRow> sweep_cutoff(const SweepContext& ctx,
                                    const std::vector<double>& cutoffs) {
  // Membership is mode-independent, so the same seeded subsample indices
  // apply to the binarized and graded variants alike.
  std::vector<std::vector<GradedRecord>> binarized, graded;
  for (double c : cutoffs) {
    binarized.push_back(filter_by_cutoff(ctx.records, c, CutoffMode::Binarize));
    graded.push_back(filter_by_cutoff(ctx.records, c, CutoffMode::KeepGraded));
    if (binarized.back().empty()) {
      throw Error(ErrorCode::EmptyResult,
                  "cutoff " + std::to_string(c) + " eliminates all records");
    }
  }

  const std::vector<LossKind> losses = {LossKind::InfoNCE, LossKind::BiXSE};
  std::vector<CutoffRow> rows(cutoffs.size() * losses.size() *
                              ctx.seeds.size());
  std::vector<std::function<void()>> cells;
  std::size_t slot = 0;
  for (std::uint64_t seed : ctx.seeds) {
    const std::uint64_t subsample_seed = mix_seed(seed, 0xc07f);
    auto matched_bin = subsample_to_match(binarized, subsample_seed);
    auto matched_graded = subsample_to_match(graded, subsample_seed);
    const int retained = static_cast<int>(matched_bin.front().size());
    for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
      for (LossKind loss : losses) {
        const std::size_t out = slot++;
        auto records = loss == LossKind::InfoNCE
                           ? std::make_shared<std::vector<GradedRecord>>(
                                 matched_bin[ci])
                           : std::make_shared<std::vector<GradedRecord>>(
                                 matched_graded[ci]);
        const double cutoff = cutoffs[ci];
        cells.push_back([&, records, loss, seed, cutoff, retained, out]() {
          TrainConfig cfg = ctx.base;
          cfg.loss = loss;
          cfg.seed = seed;
          rows[out] = {loss, cutoff, seed, train_and_score(ctx, *records, cfg),
                       retained};
        });
      }
    }
  }
  run_cells(ctx.jobs, cells);
  return rows;
}

std::vector<BatchGridRow> sweep_batch_and_negatives(
    const SweepContext& ctx, const std::vector<std::pair<int, int>>& grid,
    const std::vector<LossKind>& losses) {
  std::vector<BatchGridRow> rows(grid.size() * losses.size() *
                                 ctx.seeds.size());
  std::vector<std::function<void()>> cells;
  std::size_t slot = 0;
  for (LossKind loss : losses) {
    for (const auto& [k_negs, batch] : grid) {
      for (std::uint64_t seed : ctx.seeds) {
        const std::size_t out = slot++;
        const int kn = k_negs;
        const int b = batch;
        cells.push_back([&, loss, kn, b, seed, out]() {
          BatchGridRow row;
          row.loss = loss;
          row.k_negs = kn;
          row.b = b;
          row.seed = seed;
          try {
            TrainConfig cfg = ctx.base;
            cfg.loss = loss;
            cfg.seed = seed;
            cfg.batch_size = b;
            cfg.hard_negatives = kn;
            row.ndcg = train_and_score(ctx, ctx.records, cfg);
          } catch (const Error& e) {
            // A cell that cannot run is reported, not fatal.
            row.ndcg = std::numeric_limits<double>::quiet_NaN();
            row.status = error_code_name(e.code());
          }
          rows[out] = row;
        });
      }
    }
  }
  run_cells(ctx.jobs, cells);
  return rows;
}

std::vector<BiasLrRow> sweep_bias_lr(const SweepContext& ctx,
                                     const std::vector<double>& multipliers) {
  std::vector<BiasLrRow> rows(multipliers.size() * ctx.seeds.size());
  std::vector<std::function<void()>> cells;
  std::size_t slot = 0;
  for (double mult : multipliers) {
    for (std::uint64_t seed : ctx.seeds) {
      const std::size_t out = slot++;
      cells.push_back([&, mult, seed, out]() {
        TrainConfig cfg = ctx.base;
        cfg.loss = LossKind::BiXSE;
        cfg.seed = seed;
        cfg.beta_lr_multiplier = mult;
        rows[out] = {mult, seed, train_and_score(ctx, ctx.records, cfg)};
      });
    }
  }
  run_cells(ctx.jobs, cells);
  return rows;
}

std::string to_csv(const std::vector<NoiseRow>& rows) {
  std::ostringstream os;
  os << "loss,p,seed,ndcg@10\n";
  for (const auto& r : rows) {
    os << loss_kind_name(r.loss) << ',' << format_double(r.p, "%g") << ','
       << r.seed << ',' << format_double(r.ndcg, "%.6f") << '\n';
  }
  return os.str();
}

std::string to_csv(const std::vector<CutoffRow>& rows) {
  std::ostringstream os;
  os << "loss,cutoff,seed,ndcg@10,retained_count\n";
  for (const auto& r : rows) {
    os << loss_kind_name(r.loss) << ',' << format_double(r.cutoff, "%g") << ','
       << r.seed << ',' << format_double(r.ndcg, "%.6f") << ',' << r.retained
       << '\n';
  }
  return os.str();
}

std::string to_csv(const std::vector<BatchGridRow>& rows) {
  std::ostringstream os;
  os << "loss,hard_negatives,batch_size,seed,ndcg@10,status\n";
  for (const auto& r : rows) {
    os << loss_kind_name(r.loss) << ',' << r.k_negs << ',' << r.b << ','
       << r.seed << ',';
    if (r.status == "ok") os << format_double(r.ndcg, "%.6f");
    os << ',' << r.status << '\n';
  }
  return os.str();
}

std::string to_csv(const std::vector<BiasLrRow>& rows) {
  std::ostringstream os;
  os << "loss,beta_lr_multiplier,seed,ndcg@10\n";
  for (const auto& r : rows) {
    os << "bixse," << format_double(r.multiplier, "%g") << ',' << r.seed << ','
       << format_double(r.ndcg, "%.6f") << '\n';
  }
  return os.str();
}

std::string to_csv(const std::vector<GradCheckEntry>& rows) {
  std::ostringstream os;
  os << "loss,max_rel_error,table_error,alpha_error,beta_error\n";
  for (const auto& r : rows) {
    os << loss_kind_name(r.kind) << ',' << format_double(r.max_rel_error, "%.3e")
       << ',' << format_double(r.table_error, "%.3e") << ','
       << format_double(r.alpha_error, "%.3e") << ','
       << format_double(r.beta_error, "%.3e") << '\n';
  }
  return os.str();
}

}  // namespace bixse
