#include "bixse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bixse/errors.hpp"
#include "bixse/io.hpp"
#include "bixse/rng.hpp"

namespace bixse {

using json = nlohmann::ordered_json;

double llm_scores_to_relevance(const ScoreDistribution& dist) {
  if (dist.probs.size() < 2) {
    throw Error(ErrorCode::BadDistribution,
                "support must span at least two scores");
  }
  const int s_min = dist.probs.begin()->first;
  const int s_max = dist.probs.rbegin()->first;
  if (static_cast<int>(dist.probs.size()) != s_max - s_min + 1) {
    throw Error(ErrorCode::BadDistribution, "support must be contiguous");
  }
  double sum = 0.0;
  double z_raw = 0.0;
  for (const auto& [s, p] : dist.probs) {
    if (p < 0.0) {
      throw Error(ErrorCode::BadDistribution, "negative probability mass");
    }
    sum += p;
    z_raw += static_cast<double>(s) * p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::BadDistribution,
                "probabilities sum to " + std::to_string(sum));
  }
  return (z_raw - s_min) / static_cast<double>(s_max - s_min);
}

namespace {

double relevance_from_json(const json& obj, int line_no) {
  const bool has_rel = obj.contains("relevance");
  const bool has_probs = obj.contains("score_probs");
  if (has_rel && has_probs) {
    throw Error(ErrorCode::MixedSchema,
                "line " + std::to_string(line_no) +
                    " carries both relevance and score_probs");
  }
  if (!has_rel && !has_probs) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line_no) +
                    " carries neither relevance nor score_probs");
  }
  if (has_rel) {
    const double z = obj.at("relevance").get<double>();
    if (z < 0.0 || z > 1.0) {
      throw Error(ErrorCode::LabelRange, "line " + std::to_string(line_no) +
                                             ": relevance outside [0,1]");
    }
    return z;
  }
  ScoreDistribution dist;
  for (const auto& [key, value] : obj.at("score_probs").items()) {
    dist.probs[std::stoi(key)] = value.get<double>();
  }
  return llm_scores_to_relevance(dist);
}

std::string required_string(const json& obj, const char* field, int line_no) {
  if (!obj.contains(field) || !obj.at(field).is_string()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) +
                                           ": missing string field '" + field +
                                           "'");
  }
  std::string value = obj.at(field).get<std::string>();
  if (value.empty()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) +
                                           ": empty field '" + field + "'");
  }
  return value;
}

}  // namespace

std::vector<GradedRecord> load_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<GradedRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    GradedRecord rec;
    rec.query_id = required_string(obj, "query_id", line_no);
    rec.doc_id = required_string(obj, "doc_id", line_no);
    rec.query = required_string(obj, "query", line_no);
    rec.doc = required_string(obj, "doc", line_no);
    rec.task = obj.value("task", std::string{});
    rec.origin = obj.contains("score_probs") ? RecordOrigin::Converted
                                             : RecordOrigin::Labeled;
    try {
      rec.relevance = relevance_from_json(obj, line_no);
      if (obj.contains("hard_negatives")) {
        for (const auto& neg : obj.at("hard_negatives")) {
          HardNegative hn;
          hn.doc_id = required_string(neg, "doc_id", line_no);
          hn.doc = required_string(neg, "doc", line_no);
          hn.relevance = relevance_from_json(neg, line_no);
          rec.hard_negatives.push_back(std::move(hn));
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_records_jsonl(const std::vector<GradedRecord>& records,
                        const std::string& path) {
  std::ostringstream out;
  for (const auto& rec : records) {
    json obj;
    obj["query_id"] = rec.query_id;
    obj["doc_id"] = rec.doc_id;
    obj["query"] = rec.query;
    obj["doc"] = rec.doc;
    obj["task"] = rec.task;
    obj["relevance"] = rec.relevance;
    if (!rec.hard_negatives.empty()) {
      json negs = json::array();
      for (const auto& hn : rec.hard_negatives) {
        negs.push_back({{"doc_id", hn.doc_id},
                        {"doc", hn.doc},
                        {"relevance", hn.relevance}});
      }
      obj["hard_negatives"] = std::move(negs);
    }
    out << obj.dump() << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<TextItem> load_text_items_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<TextItem> items;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    TextItem item;
    item.id = required_string(obj, "id", line_no);
    item.text = required_string(obj, "text", line_no);
    item.task = obj.value("task", std::string{});
    if (obj.contains("instruction")) {
      item.instruction = obj.at("instruction").get<std::string>();
    }
    items.push_back(std::move(item));
  }
  return items;
}

void save_text_items_jsonl(const std::vector<TextItem>& items,
                           const std::string& path) {
  std::ostringstream out;
  for (const auto& item : items) {
    json obj;
    obj["id"] = item.id;
    obj["text"] = item.text;
    obj["task"] = item.task;
    if (item.instruction) obj["instruction"] = *item.instruction;
    out << obj.dump() << '\n';
  }
  write_file_atomic(path, out.str());
}

void swap_positive_with_negative(GradedRecord& record) {
  if (record.hard_negatives.size() != 1) {
    throw Error(ErrorCode::NeedsOneNegative,
                "record '" + record.query_id + "' must have exactly one hard "
                "negative");
  }
  HardNegative& hn = record.hard_negatives.front();
  std::swap(record.doc_id, hn.doc_id);
  std::swap(record.doc, hn.doc);
  // Labels stay attached to roles.
  record.relevance = 1.0;
  hn.relevance = 0.0;
}

std::vector<GradedRecord> inject_label_noise(std::vector<GradedRecord> records,
                                             double flip_probability,
                                             std::uint64_t seed) {
  if (flip_probability < 0.0 || flip_probability > 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "flip probability outside [0,1]");
  }
  auto is_binary = [](double z) { return z == 0.0 || z == 1.0; };
  for (const auto& rec : records) {
    if (rec.hard_negatives.size() != 1) {
      throw Error(ErrorCode::NeedsOneNegative,
                  "noise injection needs exactly one hard negative per record");
    }
    if (!is_binary(rec.relevance) ||
        !is_binary(rec.hard_negatives.front().relevance)) {
      throw Error(ErrorCode::NeedsBinary,
                  "noise injection needs binary labels");
    }
  }
  Rng rng(mix_seed(seed, 0xf11b));
  for (auto& rec : records) {
    if (rng.uniform() < flip_probability) swap_positive_with_negative(rec);
  }
  return records;
}

std::vector<GradedRecord> filter_by_cutoff(const std::vector<GradedRecord>& records,
                                           double cutoff, CutoffMode mode) {
  if (cutoff < 0.0 || cutoff > 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "cutoff outside [0,1]");
  }
  std::vector<GradedRecord> out;
  for (const auto& rec : records) {
    if (rec.relevance < cutoff) continue;
    out.push_back(rec);
    if (mode == CutoffMode::Binarize) out.back().relevance = 1.0;
  }
  return out;
}

std::vector<std::vector<GradedRecord>> subsample_to_match(
    const std::vector<std::vector<GradedRecord>>& sets, std::uint64_t seed) {
  if (sets.empty()) return {};
  std::size_t target = sets.front().size();
  for (const auto& set : sets) target = std::min(target, set.size());

  std::vector<std::vector<GradedRecord>> out;
  out.reserve(sets.size());
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto& set = sets[s];
    if (set.size() == target) {
      out.push_back(set);
      continue;
    }
    std::vector<std::size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, 0x5ab5 + s));
    rng.shuffle(idx);
    idx.resize(target);
    std::sort(idx.begin(), idx.end());  // keep original record order
    std::vector<GradedRecord> picked;
    picked.reserve(target);
    for (std::size_t i : idx) picked.push_back(set[i]);
    out.push_back(std::move(picked));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<GradedRecord>& records,
                                int batch_size, int hard_negatives,
                                std::uint64_t seed, bool task_conditioned) {
  if (batch_size < 1) {
    throw Error(ErrorCode::ConfigInvalid, "batch size must be >= 1");
  }
  if (hard_negatives < 0) {
    throw Error(ErrorCode::ConfigInvalid, "hard negatives must be >= 0");
  }
  for (const auto& rec : records) {
    if (static_cast<int>(rec.hard_negatives.size()) < hard_negatives) {
      throw Error(ErrorCode::NotEnoughNegatives,
                  "record '" + rec.query_id + "' has " +
                      std::to_string(rec.hard_negatives.size()) +
                      " hard negatives, need " + std::to_string(hard_negatives));
    }
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0xba7c4));
  rng.shuffle(order);

  // Groups in order of first appearance after the shuffle.
  std::vector<std::vector<std::size_t>> groups;
  if (task_conditioned) {
    std::map<std::string, std::size_t> group_of;
    for (std::size_t i : order) {
      const std::string& task = records[i].task;
      auto it = group_of.find(task);
      if (it == group_of.end()) {
        group_of.emplace(task, groups.size());
        groups.push_back({i});
      } else {
        groups[it->second].push_back(i);
      }
    }
  } else {
    groups.push_back(order);
  }

  std::vector<Batch> batches;
  for (const auto& group : groups) {
    const std::size_t full = group.size() / static_cast<std::size_t>(batch_size);
    for (std::size_t bi = 0; bi < full; ++bi) {
      Batch batch;
      batch.hard_negatives = hard_negatives;
      batch.records.reserve(static_cast<std::size_t>(batch_size));
      for (int j = 0; j < batch_size; ++j) {
        GradedRecord rec = records[group[bi * batch_size + j]];
        rec.hard_negatives.resize(static_cast<std::size_t>(hard_negatives));
        batch.records.push_back(std::move(rec));
      }
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

void validate_config(const SynthConfig& cfg) {
  if (cfg.topics < 2) {
    throw Error(ErrorCode::ConfigInvalid, "need at least 2 topics");
  }
  if (cfg.subtopics < 1) {
    throw Error(ErrorCode::ConfigInvalid, "need at least 1 subtopic per topic");
  }
  const int blocks = cfg.topics * cfg.subtopics;
  if (cfg.vocab < blocks || cfg.vocab % blocks != 0) {
    throw Error(ErrorCode::ConfigInvalid,
                "vocab must be divisible by topics * subtopics");
  }
  if (cfg.vocab / blocks < 2) {
    throw Error(ErrorCode::ConfigInvalid,
                "micro-blocks need at least 2 tokens each");
  }
  if (blocks < 2) {
    throw Error(ErrorCode::ConfigInvalid, "need at least 2 micro-blocks");
  }
  if (cfg.doc_len < 1 || cfg.query_len < 1) {
    throw Error(ErrorCode::ConfigInvalid, "lengths must be >= 1");
  }
  if (cfg.corpus_size < 1 || cfg.queries < 2 || cfg.records < 1) {
    throw Error(ErrorCode::ConfigInvalid, "corpus/queries/records too small");
  }
  if (cfg.hard_negs < 0) {
    throw Error(ErrorCode::ConfigInvalid, "hard_negs must be >= 0");
  }
  if (cfg.levels.size() < 2 || !std::is_sorted(cfg.levels.begin(), cfg.levels.end())) {
    throw Error(ErrorCode::ConfigInvalid, "levels must be >= 2 sorted values");
  }
  if (cfg.levels.front() != 0.0 || cfg.levels.back() != 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "levels must contain 0 and 1");
  }
  for (double l : cfg.levels) {
    if (l < 0.0 || l > 1.0) {
      throw Error(ErrorCode::ConfigInvalid, "levels must lie in [0,1]");
    }
  }
  if (cfg.level_cap < cfg.levels.front() || cfg.level_cap > 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "level_cap outside [min level, 1]");
  }
  if (cfg.eval_query_fraction < 0.0 || cfg.eval_query_fraction >= 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "eval_query_fraction outside [0,1)");
  }
}

double snap_to_level(double x, const std::vector<double>& levels) {
  double best = levels.front();
  double best_dist = std::abs(x - best);
  for (double l : levels) {
    const double dist = std::abs(x - l);
    if (dist < best_dist) {  // ties keep the lower level
      best = l;
      best_dist = dist;
    }
  }
  return best;
}

namespace {

// Global token ids map to scrambled fixed-width letter strings so token
// surfaces share no systematic trigrams; topic structure lives only in the
// id ranges. 48271 is coprime with 26^4, so the map is a bijection.
std::string synth_token(int global_id) {
  std::uint32_t enc =
      (static_cast<std::uint32_t>(global_id) * 48271u + 11u) % 456976u;
  std::string s(4, 'a');
  for (int i = 0; i < 4; ++i) {
    s[static_cast<std::size_t>(i)] = static_cast<char>('a' + enc % 26);
    enc /= 26;
  }
  return s;
}

int micro_blocks(const SynthConfig& cfg) { return cfg.topics * cfg.subtopics; }
int tokens_per_micro(const SynthConfig& cfg) {
  return cfg.vocab / micro_blocks(cfg);
}
int query_tokens_per_micro(const SynthConfig& cfg) {
  return std::max(1, tokens_per_micro(cfg) / 4);
}

// doc_len tokens from the block-weighted categorical: the designated
// micro-block with probability weight, the other micro-blocks uniformly
// sharing the remainder. Documents draw from the doc-side portion of a
// micro-block.
std::string sample_doc_text(Rng& rng, const SynthConfig& cfg, int micro,
                            double weight) {
  const int n_micro = micro_blocks(cfg);
  const int per_micro = tokens_per_micro(cfg);
  const int doc_tokens = per_micro - query_tokens_per_micro(cfg);
  std::ostringstream os;
  for (int t = 0; t < cfg.doc_len; ++t) {
    if (t > 0) os << ' ';
    int block;
    if (rng.uniform() < weight) {
      block = micro;
    } else {
      int other = static_cast<int>(rng.uniform_int(
          static_cast<std::uint64_t>(n_micro - 1)));
      block = other >= micro ? other + 1 : other;
    }
    const int within = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(doc_tokens)));
    os << synth_token(block * per_micro + within);
  }
  return os.str();
}

std::string sample_query_text(Rng& rng, const SynthConfig& cfg, int micro) {
  const int per_micro = tokens_per_micro(cfg);
  const int doc_tokens = per_micro - query_tokens_per_micro(cfg);
  std::ostringstream os;
  for (int t = 0; t < cfg.query_len; ++t) {
    if (t > 0) os << ' ';
    const int within =
        doc_tokens + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(
                         query_tokens_per_micro(cfg))));
    os << synth_token(micro * per_micro + within);
  }
  return os.str();
}

std::string zero_pad(int value, int width) {
  std::ostringstream os;
  os << value;
  std::string s = os.str();
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

bool micro_is_capped(const SynthConfig& cfg, int micro) {
  return cfg.subtopics > 1 && cfg.level_cap < 1.0 &&
         micro % cfg.subtopics == cfg.subtopics - 1;
}

// Uniform over the micro-block's available levels (all of them, or those
// under the cap for capped micros).
double sample_level(Rng& rng, const SynthConfig& cfg, int micro) {
  std::size_t n = cfg.levels.size();
  if (micro_is_capped(cfg, micro)) {
    n = 0;
    while (n < cfg.levels.size() && cfg.levels[n] <= cfg.level_cap) ++n;
  }
  return cfg.levels[rng.uniform_int(static_cast<std::uint64_t>(n))];
}

}  // namespace

SynthOutput synth_generate(const SynthConfig& cfg) {
  validate_config(cfg);
  SynthOutput out;
  const int n_levels = static_cast<int>(cfg.levels.size());

  auto level_grade = [&](double level) {
    for (int g = 0; g < n_levels; ++g) {
      if (cfg.levels[static_cast<std::size_t>(g)] == level) return g;
    }
    return 0;
  };

  // doc id -> (designated micro-block, level) for qrels assembly
  std::vector<int> doc_micro;
  std::vector<double> doc_level;
  const int n_micro = micro_blocks(cfg);
  auto task_of = [&](int micro) {
    return "topic" + std::to_string(micro / cfg.subtopics);
  };

  Rng rng(mix_seed(cfg.seed, 0x5e9d));

  // Background corpus.
  for (int i = 0; i < cfg.corpus_size; ++i) {
    const int micro = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(n_micro)));
    const double level = sample_level(rng, cfg, micro);
    TextItem doc;
    doc.id = "d_bg" + zero_pad(i, 6);
    doc.text = sample_doc_text(rng, cfg, micro, level);
    doc.task = task_of(micro);
    out.corpus.push_back(std::move(doc));
    doc_micro.push_back(micro);
    doc_level.push_back(level);
  }

  // Queries: single-micro-block samples. The last eval_query_fraction of
  // them are held out of the records.
  std::vector<int> query_micro;
  for (int i = 0; i < cfg.queries; ++i) {
    const int micro = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(n_micro)));
    TextItem q;
    q.id = "q" + zero_pad(i, 5);
    q.text = sample_query_text(rng, cfg, micro);
    q.task = task_of(micro);
    out.queries.push_back(std::move(q));
    query_micro.push_back(micro);
  }
  const int train_queries = std::max(
      1, cfg.queries - static_cast<int>(std::floor(
             cfg.eval_query_fraction * static_cast<double>(cfg.queries))));
  for (int i = train_queries; i < cfg.queries; ++i) {
    out.eval_queries.push_back(out.queries[static_cast<std::size_t>(i)]);
  }

  // Records: the positive document's designated block is the query's block
  // and its weight is the sampled level, so the pair's relevance equals the
  // level (snap is the identity on the level set). Hard negatives carry zero
  // mass on the query's block.
  for (int r = 0; r < cfg.records; ++r) {
    const int qi = r % train_queries;
    const int micro = query_micro[static_cast<std::size_t>(qi)];
    const double level = sample_level(rng, cfg, micro);

    TextItem doc;
    doc.id = "d_rec" + zero_pad(r, 6);
    doc.text = sample_doc_text(rng, cfg, micro, level);
    doc.task = task_of(micro);

    GradedRecord rec;
    rec.query_id = out.queries[static_cast<std::size_t>(qi)].id;
    rec.query = out.queries[static_cast<std::size_t>(qi)].text;
    rec.doc_id = doc.id;
    rec.doc = doc.text;
    rec.task = doc.task;
    rec.relevance = snap_to_level(level, cfg.levels);
    rec.origin = RecordOrigin::Synthetic;

    out.corpus.push_back(std::move(doc));
    doc_micro.push_back(micro);
    doc_level.push_back(level);

    for (int h = 0; h < cfg.hard_negs; ++h) {
      HardNegative hn;
      hn.doc_id = "d_neg" + zero_pad(r, 6) + "_" + std::to_string(h);
      hn.doc = sample_doc_text(rng, cfg, micro, 0.0);
      hn.relevance = 0.0;
      rec.hard_negatives.push_back(std::move(hn));
    }
    out.records.push_back(std::move(rec));
  }

  // Complete same-block judgments: every corpus document designated to the
  // query's micro-block is judged with its level grade.
  out.qrels.max_grade = n_levels - 1;
  for (int qi = 0; qi < cfg.queries; ++qi) {
    const std::string& query_id = out.queries[static_cast<std::size_t>(qi)].id;
    auto& judged = out.qrels.grades[query_id];
    for (std::size_t di = 0; di < out.corpus.size(); ++di) {
      if (doc_micro[di] != query_micro[static_cast<std::size_t>(qi)]) continue;
      judged[out.corpus[di].id] = level_grade(doc_level[di]);
    }
  }
  return out;
}

}  // namespace bixse
