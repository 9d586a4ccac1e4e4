#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "bixse/data.hpp"
#include "bixse/errors.hpp"
#include "bixse/rng.hpp"

using namespace bixse;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : lines) out << line << '\n';
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

GradedRecord binary_record(int i) {
  GradedRecord rec;
  rec.query_id = "q" + std::to_string(i);
  rec.doc_id = "pos" + std::to_string(i);
  rec.query = "query";
  rec.doc = "positive doc";
  rec.task = "t";
  rec.relevance = 1.0;
  rec.hard_negatives.push_back({"neg" + std::to_string(i), "negative doc", 0.0});
  return rec;
}

}  // namespace

TEST_CASE("llm_scores_to_relevance: all mass on the top score") {
  ScoreDistribution d;
  d.probs = {{1, 0.0}, {2, 0.0}, {3, 0.0}, {4, 0.0}, {5, 1.0}};
  CHECK(llm_scores_to_relevance(d) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("llm_scores_to_relevance: uniform over 1..5 gives exactly 0.5") {
  ScoreDistribution d;
  d.probs = {{1, 0.2}, {2, 0.2}, {3, 0.2}, {4, 0.2}, {5, 0.2}};
  CHECK(llm_scores_to_relevance(d) == 0.5);
}

TEST_CASE("llm_scores_to_relevance: direct expectation example") {
  ScoreDistribution d;
  d.probs = {{1, 0.1}, {2, 0.2}, {3, 0.4}, {4, 0.2}, {5, 0.1}};
  CHECK(llm_scores_to_relevance(d) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("llm_scores_to_relevance: rejects bad distributions") {
  ScoreDistribution gap;
  gap.probs = {{1, 0.5}, {3, 0.5}};
  CHECK(code_of([&] { llm_scores_to_relevance(gap); }) ==
        ErrorCode::BadDistribution);

  ScoreDistribution sum;
  sum.probs = {{1, 0.6}, {2, 0.6}};
  CHECK(code_of([&] { llm_scores_to_relevance(sum); }) ==
        ErrorCode::BadDistribution);

  ScoreDistribution negative;
  negative.probs = {{1, 1.2}, {2, -0.2}};
  CHECK(code_of([&] { llm_scores_to_relevance(negative); }) ==
        ErrorCode::BadDistribution);
}

TEST_CASE("llm_scores_to_relevance: monotone under mass transfers") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    ScoreDistribution d;
    double total = 0.0;
    for (int s = 1; s <= 5; ++s) {
      d.probs[s] = rng.uniform() + 1e-3;
      total += d.probs[s];
    }
    for (int s = 1; s <= 5; ++s) d.probs[s] /= total;
    const double before = llm_scores_to_relevance(d);

    // Move mass from a lower to a strictly higher score.
    const int lo = 1 + static_cast<int>(rng.uniform_int(4));
    const int hi = lo + 1 + static_cast<int>(rng.uniform_int(
                                static_cast<std::uint64_t>(5 - lo)));
    const double delta = d.probs[lo] * rng.uniform();
    d.probs[lo] -= delta;
    d.probs[hi] += delta;
    CHECK(llm_scores_to_relevance(d) >= before - 1e-12);
  }
}

TEST_CASE("load_records_jsonl: relevance passthrough and conversion") {
  const std::string path = temp_path("bixse_records_ok.jsonl");
  write_lines(path,
              {R"({"query_id":"q1","doc_id":"d1","query":"a","doc":"b","task":"t","relevance":0.7})",
               R"({"query_id":"q2","doc_id":"d2","query":"a","doc":"b","task":"t","score_probs":{"1":0.2,"2":0.2,"3":0.2,"4":0.2,"5":0.2}})",
               R"({"query_id":"q3","doc_id":"d3","query":"a","doc":"b","task":"t","relevance":1.0,"hard_negatives":[{"doc_id":"n1","doc":"x","relevance":0.25}]})"});
  const auto records = load_records_jsonl(path);
  REQUIRE(records.size() == 3);
  CHECK(records[0].relevance == 0.7);
  CHECK(records[0].origin == RecordOrigin::Labeled);
  CHECK(records[1].relevance == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(records[1].origin == RecordOrigin::Converted);
  REQUIRE(records[2].hard_negatives.size() == 1);
  CHECK(records[2].hard_negatives[0].relevance == 0.25);
}

TEST_CASE("load_records_jsonl: parse error carries the line number") {
  const std::string path = temp_path("bixse_records_bad.jsonl");
  std::vector<std::string> lines;
  for (int i = 1; i <= 16; ++i) {
    lines.push_back(
        R"({"query_id":"q","doc_id":"d","query":"a","doc":"b","task":"t","relevance":0.5})");
  }
  lines.push_back("{not json");
  write_lines(path, lines);
  try {
    load_records_jsonl(path);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("load_records_jsonl: mixed schema and label range are errors") {
  const std::string mixed = temp_path("bixse_records_mixed.jsonl");
  write_lines(mixed,
              {R"({"query_id":"q","doc_id":"d","query":"a","doc":"b","task":"t","relevance":0.5,"score_probs":{"1":1.0,"2":0.0}})"});
  CHECK(code_of([&] { load_records_jsonl(mixed); }) == ErrorCode::MixedSchema);

  const std::string range = temp_path("bixse_records_range.jsonl");
  write_lines(range,
              {R"({"query_id":"q","doc_id":"d","query":"a","doc":"b","task":"t","relevance":1.5})"});
  CHECK(code_of([&] { load_records_jsonl(range); }) == ErrorCode::LabelRange);

  CHECK(code_of([&] { load_records_jsonl(temp_path("missing_file.jsonl")); }) ==
        ErrorCode::IoError);
}

TEST_CASE("records jsonl round trip") {
  std::vector<GradedRecord> records = {binary_record(0), binary_record(1)};
  records[1].relevance = 0.75;
  const std::string path = temp_path("bixse_records_rt.jsonl");
  save_records_jsonl(records, path);
  const auto loaded = load_records_jsonl(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].relevance == 0.75);
  CHECK(loaded[0].hard_negatives[0].doc_id == "neg0");
}

TEST_CASE("inject_label_noise: p=0 is the identity") {
  std::vector<GradedRecord> records = {binary_record(0), binary_record(1)};
  const auto out = inject_label_noise(records, 0.0, 9);
  CHECK(out[0].doc_id == "pos0");
  CHECK(out[1].doc_id == "pos1");
}

TEST_CASE("inject_label_noise: p=1 swaps every record") {
  std::vector<GradedRecord> records = {binary_record(0), binary_record(1)};
  const auto out = inject_label_noise(records, 1.0, 9);
  for (const auto& rec : out) {
    CHECK(rec.doc_id.substr(0, 3) == "neg");
    CHECK(rec.relevance == 1.0);
    CHECK(rec.hard_negatives[0].relevance == 0.0);
  }
}

TEST_CASE("inject_label_noise: seeded flip count within 3 sigma") {
  std::vector<GradedRecord> records;
  for (int i = 0; i < 10000; ++i) records.push_back(binary_record(i));
  const auto out = inject_label_noise(records, 0.3, 1234);
  int flips = 0;
  for (const auto& rec : out) {
    if (rec.doc_id.substr(0, 3) == "neg") ++flips;
  }
  const double sigma = std::sqrt(10000 * 0.3 * 0.7);  // ~45.8
  CHECK(std::abs(flips - 3000) <= 3.0 * sigma);
}

TEST_CASE("inject_label_noise: swap is an involution") {
  GradedRecord rec = binary_record(0);
  const GradedRecord original = rec;
  swap_positive_with_negative(rec);
  CHECK(rec.doc_id == "neg0");
  swap_positive_with_negative(rec);
  CHECK(rec.doc_id == original.doc_id);
  CHECK(rec.doc == original.doc);
  CHECK(rec.relevance == original.relevance);
}

TEST_CASE("inject_label_noise: preconditions") {
  GradedRecord graded = binary_record(0);
  graded.relevance = 0.7;
  CHECK(code_of([&] { inject_label_noise({graded}, 0.5, 1); }) ==
        ErrorCode::NeedsBinary);

  GradedRecord no_neg = binary_record(0);
  no_neg.hard_negatives.clear();
  CHECK(code_of([&] { inject_label_noise({no_neg}, 0.5, 1); }) ==
        ErrorCode::NeedsOneNegative);
}

TEST_CASE("filter_by_cutoff: zero cutoff keeps everything") {
  std::vector<GradedRecord> records = {binary_record(0)};
  records[0].relevance = 0.0;
  CHECK(filter_by_cutoff(records, 0.0, CutoffMode::KeepGraded).size() == 1);
}

TEST_CASE("filter_by_cutoff: drops below the threshold, binarize rewrites") {
  std::vector<GradedRecord> records;
  for (double z : {0.3, 0.7, 0.95}) {
    records.push_back(binary_record(static_cast<int>(records.size())));
    records.back().relevance = z;
  }
  const auto graded = filter_by_cutoff(records, 0.7, CutoffMode::KeepGraded);
  REQUIRE(graded.size() == 2);
  CHECK(graded[0].relevance == 0.7);
  const auto binary = filter_by_cutoff(records, 0.7, CutoffMode::Binarize);
  REQUIRE(binary.size() == 2);
  for (const auto& rec : binary) CHECK(rec.relevance == 1.0);
  // Hard negatives untouched.
  CHECK(binary[0].hard_negatives[0].relevance == 0.0);
  CHECK(filter_by_cutoff(records, 0.99, CutoffMode::Binarize).empty());
}

TEST_CASE("subsample_to_match: equal sizes pass through unchanged") {
  std::vector<GradedRecord> a, b;
  for (int i = 0; i < 5; ++i) {
    a.push_back(binary_record(i));
    b.push_back(binary_record(i + 10));
  }
  const auto out = subsample_to_match({a, b}, 3);
  REQUIRE(out.size() == 2);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(out[0][i].query_id == a[i].query_id);
    CHECK(out[1][i].query_id == b[i].query_id);
  }
}

TEST_CASE("subsample_to_match: sizes {100, 50} both become 50") {
  std::vector<GradedRecord> big, small;
  for (int i = 0; i < 100; ++i) big.push_back(binary_record(i));
  for (int i = 0; i < 50; ++i) small.push_back(binary_record(1000 + i));
  const auto out = subsample_to_match({big, small}, 11);
  CHECK(out[0].size() == 50);
  CHECK(out[1].size() == 50);
  // Original relative order preserved.
  for (std::size_t i = 1; i < out[0].size(); ++i) {
    CHECK(std::stoi(out[0][i - 1].query_id.substr(1)) <
          std::stoi(out[0][i].query_id.substr(1)));
  }
  // Same seed, same selection.
  const auto again = subsample_to_match({big, small}, 11);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(again[0][i].query_id == out[0][i].query_id);
  }
}

TEST_CASE("make_batches: floor division drops the trailing partial batch") {
  std::vector<GradedRecord> records;
  for (int i = 0; i < 10; ++i) records.push_back(binary_record(i));
  const auto batches = make_batches(records, 4, 1, 3, false);
  CHECK(batches.size() == 2);
  for (const auto& batch : batches) CHECK(batch.records.size() == 4);
}

TEST_CASE("make_batches: task-conditioned batches are single-task") {
  std::vector<GradedRecord> records;
  for (int i = 0; i < 12; ++i) {
    records.push_back(binary_record(i));
    records.back().task = i < 6 ? "A" : "B";
  }
  const auto batches = make_batches(records, 4, 1, 5, true);
  CHECK(batches.size() == 2);  // floor(6/4) per task
  for (const auto& batch : batches) {
    std::set<std::string> tasks;
    for (const auto& rec : batch.records) tasks.insert(rec.task);
    CHECK(tasks.size() == 1);
  }
}

TEST_CASE("make_batches: deterministic under a fixed seed") {
  std::vector<GradedRecord> records;
  for (int i = 0; i < 20; ++i) records.push_back(binary_record(i));
  const auto a = make_batches(records, 4, 1, 17, false);
  const auto b = make_batches(records, 4, 1, 17, false);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].records.size(); ++j) {
      CHECK(a[i].records[j].query_id == b[i].records[j].query_id);
    }
  }
  // Hard negatives truncated to K uniformly.
  GradedRecord rich = binary_record(99);
  rich.hard_negatives.push_back({"extra", "extra doc", 0.0});
  const auto one = make_batches({rich}, 1, 1, 1, false);
  CHECK(one[0].records[0].hard_negatives.size() == 1);
}

TEST_CASE("make_batches: not enough negatives is an error") {
  std::vector<GradedRecord> records = {binary_record(0)};
  CHECK(code_of([&] { make_batches(records, 1, 2, 1, false); }) ==
        ErrorCode::NotEnoughNegatives);
}

TEST_CASE("snap_to_level: nearest level, ties toward the lower one") {
  const std::vector<double> levels = {0.0, 0.25, 0.5, 0.75, 1.0};
  CHECK(snap_to_level(0.1, levels) == 0.0);
  CHECK(snap_to_level(0.2, levels) == 0.25);
  CHECK(snap_to_level(0.125, levels) == 0.0);
  CHECK(snap_to_level(1.0, levels) == 1.0);
}

TEST_CASE("synth_generate: endpoints of the relevance scale") {
  SynthConfig cfg;
  cfg.records = 400;
  cfg.corpus_size = 100;
  cfg.queries = 40;
  cfg.seed = 3;
  const auto out = synth_generate(cfg);
  bool saw_zero = false, saw_one = false;
  for (const auto& rec : out.records) {
    CHECK(rec.relevance >= 0.0);
    CHECK(rec.relevance <= 1.0);
    if (rec.relevance == 0.0) saw_zero = true;
    if (rec.relevance == 1.0) saw_one = true;
    for (const auto& hn : rec.hard_negatives) CHECK(hn.relevance == 0.0);
  }
  CHECK(saw_zero);
  CHECK(saw_one);
}

TEST_CASE("synth_generate: level histogram matches the sampler within 3 sigma") {
  SynthConfig cfg;
  cfg.records = 10000;
  cfg.corpus_size = 64;
  cfg.queries = 64;
  cfg.eval_query_fraction = 0.0;
  cfg.seed = 21;
  const auto out = synth_generate(cfg);

  // The generator samples uniformly over each query's available levels:
  // capped micro-blocks expose only levels <= level_cap. Expected per-level
  // probability mixes the two cases by the queries' capped fraction, which
  // is inferred from the records (a capped query never emits a level above
  // the cap; with ~156 records per query misclassification is negligible).
  int capped_queries = 0;
  std::map<double, int> hist;
  for (const auto& rec : out.records) ++hist[rec.relevance];
  int train_queries = cfg.queries;
  std::map<std::string, int> per_query_max;
  for (const auto& rec : out.records) {
    auto& best = per_query_max[rec.query_id];
    best = std::max(best, static_cast<int>(std::lround(rec.relevance * 4)));
  }
  for (const auto& [qid, best] : per_query_max) {
    if (best <= 2) ++capped_queries;  // level_cap 0.5 -> grades 0..2
  }
  const double frac_capped =
      static_cast<double>(capped_queries) / static_cast<double>(train_queries);
  // Sanity: roughly 1/8 of micro-blocks are capped.
  CHECK(frac_capped > 0.02);
  CHECK(frac_capped < 0.35);

  const double n = static_cast<double>(cfg.records);
  for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
    const double level = cfg.levels[li];
    double p = (1.0 - frac_capped) / 5.0;
    if (level <= cfg.level_cap) p += frac_capped / 3.0;
    const double expect = n * p;
    const double sigma = std::sqrt(n * p * (1.0 - p));
    CHECK(std::abs(hist[level] - expect) <= 3.0 * sigma);
  }
}

TEST_CASE("synth_generate: deterministic under a fixed seed") {
  SynthConfig cfg;
  cfg.records = 100;
  cfg.corpus_size = 50;
  cfg.queries = 20;
  cfg.seed = 5;
  const auto a = synth_generate(cfg);
  const auto b = synth_generate(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].doc == b.records[i].doc);
    CHECK(a.records[i].relevance == b.records[i].relevance);
  }
  REQUIRE(a.corpus.size() == b.corpus.size());
  for (std::size_t i = 0; i < a.corpus.size(); ++i) {
    CHECK(a.corpus[i].text == b.corpus[i].text);
  }
}

TEST_CASE("synth_generate: relevance correlates with query-block overlap") {
  SynthConfig cfg;
  cfg.records = 1000;
  cfg.corpus_size = 64;
  cfg.queries = 50;
  cfg.seed = 13;
  const auto out = synth_generate(cfg);

  // Spearman-style check: mean token overlap with the query's micro-block,
  // grouped by relevance, must increase with the level.
  auto tokens_of = [](const std::string& text) {
    std::set<std::string> toks;
    std::size_t start = 0;
    while (start < text.size()) {
      auto space = text.find(' ', start);
      if (space == std::string::npos) space = text.size();
      toks.insert(text.substr(start, space - start));
      start = space + 1;
    }
    return toks;
  };

  // Use each query's judged grade-4 documents to approximate its block
  // vocabulary, then measure doc overlap with that vocabulary.
  std::map<double, std::pair<double, int>> by_level;
  for (const auto& rec : out.records) {
    std::set<std::string> block_vocab;
    auto it = out.qrels.grades.find(rec.query_id);
    REQUIRE(it != out.qrels.grades.end());
    for (const auto& corpus_doc : out.corpus) {
      auto jt = it->second.find(corpus_doc.id);
      if (jt != it->second.end() && jt->second == 4) {
        for (const auto& tok : tokens_of(corpus_doc.text)) {
          block_vocab.insert(tok);
        }
      }
    }
    if (block_vocab.empty()) continue;
    int overlap = 0;
    int total = 0;
    for (const auto& tok : tokens_of(rec.doc)) {
      ++total;
      if (block_vocab.count(tok) > 0) ++overlap;
    }
    auto& [sum, count] = by_level[rec.relevance];
    sum += static_cast<double>(overlap) / std::max(1, total);
    ++count;
  }
  REQUIRE(by_level.size() >= 3);
  double prev = -1.0;
  for (const auto& [level, acc] : by_level) {
    const double mean = acc.first / acc.second;
    CHECK(mean > prev);
    prev = mean;
  }
}

TEST_CASE("synth_generate: invalid configs are rejected") {
  SynthConfig bad;
  bad.levels = {0.0, 0.5};  // missing 1.0? no: must contain 0 and 1
  bad.levels = {0.25, 1.0};
  CHECK(code_of([&] { synth_generate(bad); }) == ErrorCode::ConfigInvalid);
  SynthConfig vocab;
  vocab.vocab = 500;  // not divisible by topics * subtopics
  CHECK(code_of([&] { synth_generate(vocab); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("qrels: queries judge only same-block documents with level grades") {
  SynthConfig cfg;
  cfg.records = 200;
  cfg.corpus_size = 200;
  cfg.queries = 30;
  cfg.seed = 9;
  const auto out = synth_generate(cfg);
  CHECK(out.qrels.max_grade == 4);
  for (const auto& [qid, judged] : out.qrels.grades) {
    CHECK(!judged.empty());
    for (const auto& [doc_id, grade] : judged) {
      CHECK(grade >= 0);
      CHECK(grade <= 4);
    }
  }
  // Held-out queries are judged too.
  for (const auto& q : out.eval_queries) {
    CHECK(out.qrels.grades.count(q.id) == 1);
  }
}
