// bixse: graded-relevance retrieval loss laboratory.
//
// Subcommands: synth (generate a synthetic graded dataset), train (fit the
// toy bi-encoder under a chosen loss), eval (retrieval metrics for a
// checkpoint), sweep (noise / cutoff / batchgrid / biaslr / gradcheck
// experiment grids). Every command writes a run manifest next to its outputs
// and rewrites outputs atomically, so reruns with identical flags and seeds
// are byte-identical.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bixse/data.hpp"
#include "bixse/errors.hpp"
#include "bixse/eval.hpp"
#include "bixse/losses.hpp"
#include "bixse/sweeps.hpp"
#include "bixse/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const json& config,
                    const std::vector<std::string>& artifacts,
                    std::uint64_t seed) {
  json manifest;
  manifest["tool"] = "bixse";
  manifest["version"] = kToolVersion;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["artifacts"] = artifacts;
  manifest["seed"] = seed;
  manifest["wall_clock_utc"] = utc_timestamp();
  bixse::write_file_atomic((fs::path(out_dir) / "manifest.json").string(),
                           manifest.dump(2) + "\n");
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Expands "--config <file>" into flags. The file is flat key=value text;
// keys already present on the command line win.
std::vector<std::string> apply_flat_config(std::vector<std::string> args) {
  std::size_t at = args.size();
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      at = i;
      path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      at = i;
      path = args[i].substr(9);
      break;
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) {
    throw bixse::Error(bixse::ErrorCode::IoError,
                       "cannot open config file " + path);
  }
  auto present = [&args](const std::string& flag) {
    for (const auto& arg : args) {
      if (arg == flag || arg.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw bixse::Error(bixse::ErrorCode::ConfigInvalid,
                         "config line is not key=value: '" + line + "'");
    }
    const std::string flag = "--" + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (present(flag)) continue;
    if (value == "true") {
      injected.push_back(flag);
    } else if (value != "false") {
      injected.push_back(flag + "=" + value);
    }
  }
  // Insert after the --config token so the flags stay inside the same
  // subcommand scope.
  args.insert(args.begin() + static_cast<long>(at), injected.begin(),
              injected.end());
  return args;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::vector<std::pair<int, int>> parse_grid(const std::string& spec) {
  std::vector<std::pair<int, int>> grid;
  std::stringstream ss(spec);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto colon = cell.find(':');
    if (colon == std::string::npos) {
      throw bixse::Error(bixse::ErrorCode::ConfigInvalid,
                         "grid cells are K:B pairs, got '" + cell + "'");
    }
    grid.emplace_back(std::stoi(cell.substr(0, colon)),
                      std::stoi(cell.substr(colon + 1)));
  }
  return grid;
}

std::vector<std::uint64_t> seed_list(int count, std::uint64_t first) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

struct TrainFlags {
  std::string loss = "bixse";
  int epochs = 4;
  int batch = 32;
  int hard_negs = 1;
  double lr = 0.02;
  double beta_lr_mult = 100.0;
  double alpha = 20.0;
  double warmup = 0.05;
  double binarize_threshold = 0.5;
  double teacher_scale = -1.0;
  int buckets = 4096;
  int dim = 64;
  bool task_batching = false;
  bool train_alpha = false;
  std::uint64_t seed = 0;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--loss", loss,
                    "one of infonce|bixse|soft_infonce|margin_mse|"
                    "pairwise_bce|lambda_ndcg1|lambda_ndcg2");
    cmd->add_option("--epochs", epochs, "training epochs (default 4)");
    cmd->add_option("--batch", batch, "batch size B");
    cmd->add_option("--hard-negs", hard_negs, "hard negatives per query K");
    cmd->add_option("--lr", lr, "base learning rate at batch 16");
    cmd->add_option("--beta-lr-mult", beta_lr_mult,
                    "learning-rate multiplier for the logit bias");
    cmd->add_option("--alpha", alpha, "logit scale");
    cmd->add_option("--warmup", warmup, "warmup fraction of total steps");
    cmd->add_option("--binarize-threshold", binarize_threshold,
                    "InfoNCE positive threshold on graded labels");
    cmd->add_option("--teacher-scale", teacher_scale,
                    "MarginMSE teacher margin scale (< 0 uses alpha)");
    cmd->add_option("--buckets", buckets, "feature hash buckets H");
    cmd->add_option("--dim", dim, "embedding dimension d");
    cmd->add_flag("--task-batching", task_batching,
                  "group batches by task tag");
    cmd->add_flag("--train-alpha", train_alpha, "unfreeze the logit scale");
    cmd->add_option("--seed", seed, "run seed");
  }

  bixse::TrainConfig to_config() const {
    bixse::TrainConfig cfg;
    cfg.loss = bixse::parse_loss_kind(loss);
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.hard_negatives = hard_negs;
    cfg.base_lr = lr;
    cfg.beta_lr_multiplier = beta_lr_mult;
    cfg.alpha = alpha;
    cfg.train_alpha = train_alpha;
    cfg.warmup_fraction = warmup;
    cfg.binarize_threshold = binarize_threshold;
    cfg.teacher_scale = teacher_scale;
    cfg.hash_buckets = buckets;
    cfg.dim = dim;
    cfg.task_conditioned = task_batching;
    cfg.seed = seed;
    return cfg;
  }

  json to_json() const {
    json j;
    j["loss"] = loss;
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["hard_negs"] = hard_negs;
    j["lr"] = lr;
    j["beta_lr_mult"] = beta_lr_mult;
    j["alpha"] = alpha;
    j["warmup"] = warmup;
    j["binarize_threshold"] = binarize_threshold;
    j["teacher_scale"] = teacher_scale;
    j["buckets"] = buckets;
    j["dim"] = dim;
    j["task_conditioned"] = task_batching;
    j["train_alpha"] = train_alpha;
    j["seed"] = seed;
    return j;
  }
};

int cmd_synth(const bixse::SynthConfig& cfg, const std::string& out_dir) {
  const bixse::SynthOutput output = bixse::synth_generate(cfg);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  bixse::save_text_items_jsonl(output.corpus, (dir / "corpus.jsonl").string());
  bixse::save_text_items_jsonl(output.queries, (dir / "queries.jsonl").string());
  bixse::save_text_items_jsonl(output.eval_queries,
                               (dir / "queries_eval.jsonl").string());
  bixse::save_records_jsonl(output.records, (dir / "records.jsonl").string());
  bixse::save_qrels_trec(output.qrels, (dir / "qrels.trec").string());

  json config;
  config["topics"] = cfg.topics;
  config["subtopics"] = cfg.subtopics;
  config["vocab"] = cfg.vocab;
  config["doc_len"] = cfg.doc_len;
  config["query_len"] = cfg.query_len;
  config["corpus_size"] = cfg.corpus_size;
  config["queries"] = cfg.queries;
  config["records"] = cfg.records;
  config["hard_negs"] = cfg.hard_negs;
  config["levels"] = cfg.levels;
  config["level_cap"] = cfg.level_cap;
  config["eval_query_fraction"] = cfg.eval_query_fraction;
  config["seed"] = cfg.seed;
  write_manifest(out_dir, "synth", config,
                 {"corpus.jsonl", "queries.jsonl", "queries_eval.jsonl",
                  "records.jsonl", "qrels.trec"},
                 cfg.seed);
  std::cout << "synth: " << output.records.size() << " records, "
            << output.corpus.size() << " corpus docs, "
            << output.queries.size() << " queries ("
            << output.eval_queries.size() << " held out) -> " << out_dir
            << "\n";
  return 0;
}

int cmd_train(const TrainFlags& flags, const std::string& data_path,
              const std::string& out_dir, const std::string& val_queries_path,
              const std::string& corpus_path, const std::string& qrels_path,
              int k) {
  const auto records = bixse::load_records_jsonl(data_path);
  const bixse::TrainConfig cfg = flags.to_config();

  std::vector<bixse::TextItem> queries, corpus;
  bixse::Qrels qrels;
  bixse::EvalContext ctx;
  const bool with_validation = !val_queries_path.empty();
  if (with_validation) {
    queries = bixse::load_text_items_jsonl(val_queries_path);
    corpus = bixse::load_text_items_jsonl(corpus_path);
    qrels = bixse::load_qrels_trec(qrels_path);
    ctx = {&queries, &corpus, &qrels, k};
  }

  const bixse::TrainResult result =
      bixse::train(records, cfg, with_validation ? &ctx : nullptr);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  bixse::save_checkpoint(result.params, (dir / "checkpoint.json").string());

  std::ostringstream log_csv;
  log_csv << "epoch,mean_loss,lr_last,beta,validation_ndcg\n";
  for (const auto& epoch : result.log) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f,%.8f,", epoch.epoch,
                  epoch.mean_loss, epoch.lr_last, epoch.beta);
    log_csv << buf;
    if (epoch.validation_ndcg) {
      std::snprintf(buf, sizeof(buf), "%.6f", *epoch.validation_ndcg);
      log_csv << buf;
    }
    log_csv << '\n';
  }
  bixse::write_file_atomic((dir / "train_log.csv").string(), log_csv.str());

  json config = flags.to_json();
  config["data"] = data_path;
  config["k"] = k;
  if (with_validation) {
    config["val_queries"] = val_queries_path;
    config["corpus"] = corpus_path;
    config["qrels"] = qrels_path;
  }
  write_manifest(out_dir, "train", config, {"checkpoint.json", "train_log.csv"},
                 flags.seed);

  for (const auto& epoch : result.log) {
    std::cout << "epoch " << epoch.epoch << ": loss=" << epoch.mean_loss
              << " beta=" << epoch.beta;
    if (epoch.validation_ndcg) {
      std::cout << " val_ndcg@" << k << "=" << *epoch.validation_ndcg;
    }
    std::cout << "\n";
  }
  if (result.dropped_records > 0) {
    std::cout << "dropped " << result.dropped_records
              << " records unusable under loss " << flags.loss << "\n";
  }
  std::cout << "checkpoint -> " << (dir / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& queries_path,
             const std::string& corpus_path, const std::string& qrels_path,
             int k, const std::string& out_dir) {
  const auto params = bixse::load_checkpoint(checkpoint_path);
  const auto queries = bixse::load_text_items_jsonl(queries_path);
  const auto corpus = bixse::load_text_items_jsonl(corpus_path);
  const auto qrels = bixse::load_qrels_trec(qrels_path);

  const bixse::RunRanking run = bixse::retrieve_topk(queries, corpus, params, k);
  const bixse::NdcgResult ndcg = bixse::ndcg_at_k(run, qrels, k);
  const bixse::MetricsRow row =
      bixse::evaluate_run(params, queries, corpus, qrels, k);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  bixse::save_run_trec(run, (dir / "run.trec").string(), "bixse");

  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d\n", row.ndcg,
                row.judged_coverage, row.query_count);
  bixse::write_file_atomic((dir / "metrics.csv").string(),
                           std::string("ndcg@k,judged_coverage,query_count\n") +
                               buf);

  json config;
  config["checkpoint"] = checkpoint_path;
  config["queries"] = queries_path;
  config["corpus"] = corpus_path;
  config["qrels"] = qrels_path;
  config["k"] = k;
  write_manifest(out_dir, "eval", config, {"run.trec", "metrics.csv"}, 0);

  std::cout << "ndcg@" << k << "=" << row.ndcg
            << " judged_coverage=" << row.judged_coverage
            << " queries=" << row.query_count
            << " (skipped_zero_ideal=" << ndcg.skipped_zero_ideal
            << ", missing_qrels=" << ndcg.missing_qrels << ")\n";
  return 0;
}

struct SweepFlags {
  std::string kind;
  std::string data_path, queries_path, corpus_path, qrels_path;
  std::string out_dir = "sweep_out";
  std::string p_grid = "0,0.1,0.2,0.3,0.4,0.5";
  std::string cutoff_grid = "0,0.2,0.4,0.6,0.8,0.9";
  std::string batch_grid = "15:16,7:32,3:64,1:128,0:256";
  std::string batch_losses = "bixse,pairwise_bce,lambda_ndcg2,margin_mse";
  std::string multipliers = "0.01,1,100,10000";
  double binarize_at = -1.0;
  int n_seeds = 5;
  std::uint64_t first_seed = 1;
  int k = 10;
  int jobs = 1;
};

int cmd_sweep(const SweepFlags& sf, const TrainFlags& tf) {
  fs::create_directories(sf.out_dir);
  const fs::path dir(sf.out_dir);
  json config = tf.to_json();
  config["kind"] = sf.kind;
  config["seeds"] = sf.n_seeds;
  config["first_seed"] = sf.first_seed;
  config["k"] = sf.k;
  config["jobs"] = sf.jobs;

  if (sf.kind == "gradcheck") {
    const auto report = bixse::grad_check(tf.seed);
    std::cout << "loss                max_rel_error\n";
    for (const auto& entry : report) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%-18s  %.3e\n",
                    bixse::loss_kind_name(entry.kind), entry.max_rel_error);
      std::cout << buf;
    }
    bixse::write_file_atomic((dir / "gradcheck.csv").string(),
                             bixse::to_csv(report));
    write_manifest(sf.out_dir, "sweep", config, {"gradcheck.csv"}, tf.seed);
    return 0;
  }

  bixse::SweepContext ctx;
  ctx.records = bixse::load_records_jsonl(sf.data_path);
  ctx.eval_queries = bixse::load_text_items_jsonl(sf.queries_path);
  ctx.corpus = bixse::load_text_items_jsonl(sf.corpus_path);
  ctx.qrels = bixse::load_qrels_trec(sf.qrels_path);
  ctx.base = tf.to_config();
  ctx.seeds = seed_list(sf.n_seeds, sf.first_seed);
  ctx.k = sf.k;
  ctx.jobs = sf.jobs;

  config["data"] = sf.data_path;
  config["queries"] = sf.queries_path;
  config["corpus"] = sf.corpus_path;
  config["qrels"] = sf.qrels_path;

  std::string csv_name, csv;
  if (sf.kind == "noise") {
    if (sf.binarize_at >= 0.0) {
      ctx.records = bixse::filter_by_cutoff(ctx.records, sf.binarize_at,
                                            bixse::CutoffMode::Binarize);
      config["binarize_at"] = sf.binarize_at;
    }
    csv_name = "noise.csv";
    config["p_grid"] = sf.p_grid;
    csv = bixse::to_csv(bixse::sweep_noise(ctx, parse_double_list(sf.p_grid)));
  } else if (sf.kind == "cutoff") {
    csv_name = "cutoff.csv";
    config["cutoff_grid"] = sf.cutoff_grid;
    csv = bixse::to_csv(
        bixse::sweep_cutoff(ctx, parse_double_list(sf.cutoff_grid)));
  } else if (sf.kind == "batchgrid") {
    csv_name = "batchgrid.csv";
    config["batch_grid"] = sf.batch_grid;
    config["losses"] = sf.batch_losses;
    std::vector<bixse::LossKind> losses;
    std::stringstream ss(sf.batch_losses);
    std::string name;
    while (std::getline(ss, name, ',')) {
      losses.push_back(bixse::parse_loss_kind(name));
    }
    csv = bixse::to_csv(bixse::sweep_batch_and_negatives(
        ctx, parse_grid(sf.batch_grid), losses));
  } else if (sf.kind == "biaslr") {
    csv_name = "biaslr.csv";
    config["multipliers"] = sf.multipliers;
    csv = bixse::to_csv(
        bixse::sweep_bias_lr(ctx, parse_double_list(sf.multipliers)));
  } else {
    throw bixse::Error(bixse::ErrorCode::ConfigInvalid,
                       "unknown sweep kind '" + sf.kind + "'");
  }

  bixse::write_file_atomic((dir / csv_name).string(), csv);
  write_manifest(sf.out_dir, "sweep", config, {csv_name}, tf.seed);
  std::cout << csv;
  std::cout << "sweep " << sf.kind << " -> " << (dir / csv_name).string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graded-relevance retrieval loss laboratory"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic graded dataset");
  std::string synth_config_file;
  synth->add_option("--config", synth_config_file,
                    "flat key=value config file; flags override");
  bixse::SynthConfig synth_cfg;
  std::string synth_out = "synth_out";
  std::string levels_csv = "0,0.25,0.5,0.75,1";
  synth->add_option("--topics", synth_cfg.topics);
  synth->add_option("--subtopics", synth_cfg.subtopics);
  synth->add_option("--vocab", synth_cfg.vocab);
  synth->add_option("--doc-len", synth_cfg.doc_len);
  synth->add_option("--query-len", synth_cfg.query_len);
  synth->add_option("--corpus-size", synth_cfg.corpus_size);
  synth->add_option("--queries", synth_cfg.queries);
  synth->add_option("--records", synth_cfg.records);
  synth->add_option("--hard-negs-per-record", synth_cfg.hard_negs);
  synth->add_option("--levels", levels_csv, "comma-separated relevance levels");
  synth->add_option("--level-cap", synth_cfg.level_cap);
  synth->add_option("--eval-fraction", synth_cfg.eval_query_fraction);
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--out", synth_out, "output directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the toy bi-encoder");
  std::string train_config_file;
  train_cmd->add_option("--config", train_config_file,
                        "flat key=value config file; flags override");
  TrainFlags train_flags;
  std::string train_data, train_out = "train_out";
  std::string val_queries, val_corpus, val_qrels;
  int train_k = 10;
  train_cmd->add_option("--data", train_data, "records JSONL")->required();
  train_cmd->add_option("--out", train_out, "output directory");
  train_flags.add_options(train_cmd);
  train_cmd->add_option("--val-queries", val_queries,
                        "optional validation queries JSONL");
  train_cmd->add_option("--corpus", val_corpus, "corpus JSONL for validation");
  train_cmd->add_option("--qrels", val_qrels, "qrels for validation");
  train_cmd->add_option("--k", train_k, "validation nDCG cutoff");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_config_file;
  eval_cmd->add_option("--config", eval_config_file,
                       "flat key=value config file; flags override");
  std::string eval_checkpoint, eval_queries, eval_corpus, eval_qrels;
  std::string eval_out = "eval_out";
  int eval_k = 10;
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
  eval_cmd->add_option("--queries", eval_queries)->required();
  eval_cmd->add_option("--corpus", eval_corpus)->required();
  eval_cmd->add_option("--qrels", eval_qrels)->required();
  eval_cmd->add_option("--k", eval_k, "nDCG cutoff (default 10)");
  eval_cmd->add_option("--out", eval_out, "output directory");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment grid");
  std::string sweep_config_file;
  sweep_cmd->add_option("--config", sweep_config_file,
                        "flat key=value config file; flags override");
  SweepFlags sweep_flags;
  TrainFlags sweep_train_flags;
  sweep_cmd
      ->add_option("--kind", sweep_flags.kind,
                   "noise|cutoff|batchgrid|biaslr|gradcheck")
      ->required();
  sweep_cmd->add_option("--data", sweep_flags.data_path);
  sweep_cmd->add_option("--queries", sweep_flags.queries_path);
  sweep_cmd->add_option("--corpus", sweep_flags.corpus_path);
  sweep_cmd->add_option("--qrels", sweep_flags.qrels_path);
  sweep_cmd->add_option("--out", sweep_flags.out_dir);
  sweep_cmd->add_option("--p-grid", sweep_flags.p_grid);
  sweep_cmd->add_option("--cutoff-grid", sweep_flags.cutoff_grid);
  sweep_cmd->add_option("--batch-grid", sweep_flags.batch_grid, "K:B cells");
  sweep_cmd->add_option("--losses", sweep_flags.batch_losses,
                        "losses for the batchgrid sweep");
  sweep_cmd->add_option("--multipliers", sweep_flags.multipliers);
  sweep_cmd->add_option("--binarize-at", sweep_flags.binarize_at,
                        "binarize records at this cutoff before a noise sweep");
  sweep_cmd->add_option("--seeds", sweep_flags.n_seeds, "number of seeds");
  sweep_cmd->add_option("--first-seed", sweep_flags.first_seed);
  sweep_cmd->add_option("--k", sweep_flags.k);
  sweep_cmd->add_option("--jobs", sweep_flags.jobs, "parallel sweep cells");
  sweep_train_flags.add_options(sweep_cmd);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = apply_flat_config(args);
    std::reverse(args.begin(), args.end());  // CLI11 vector parse order
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const bixse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.user_error() ? 2 : 1;
  }

  try {
    if (*synth) {
      synth_cfg.levels = parse_double_list(levels_csv);
      return cmd_synth(synth_cfg, synth_out);
    }
    if (*train_cmd) {
      if (!val_queries.empty() && (val_corpus.empty() || val_qrels.empty())) {
        throw bixse::Error(bixse::ErrorCode::ConfigInvalid,
                           "--val-queries needs --corpus and --qrels");
      }
      return cmd_train(train_flags, train_data, train_out, val_queries,
                       val_corpus, val_qrels, train_k);
    }
    if (*eval_cmd) {
      return cmd_eval(eval_checkpoint, eval_queries, eval_corpus, eval_qrels,
                      eval_k, eval_out);
    }
    if (*sweep_cmd) {
      if (sweep_flags.kind != "gradcheck" &&
          (sweep_flags.data_path.empty() || sweep_flags.queries_path.empty() ||
           sweep_flags.corpus_path.empty() || sweep_flags.qrels_path.empty())) {
        throw bixse::Error(bixse::ErrorCode::ConfigInvalid,
                           "sweep needs --data --queries --corpus --qrels");
      }
      return cmd_sweep(sweep_flags, sweep_train_flags);
    }
  } catch (const bixse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.user_error() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
