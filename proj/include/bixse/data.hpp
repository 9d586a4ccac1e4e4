#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bixse/embed.hpp"
#include "bixse/qrels.hpp"

namespace bixse {

struct HardNegative {
  std::string doc_id;
  std::string doc;
  double relevance = 0.0;
};

enum class RecordOrigin { Labeled, Converted, Synthetic };

/// One query-document pair with continuous relevance in [0,1]; the training
/// atom. Hard negatives ride along with their own graded relevance.
struct GradedRecord {
  std::string query_id;
  std::string doc_id;
  std::string query;
  std::string doc;
  std::string task;
  double relevance = 0.0;
  std::vector<HardNegative> hard_negatives;
  RecordOrigin origin = RecordOrigin::Labeled;
};

/// Probabilities over a contiguous integer score range, e.g. an LLM ranker's
/// token distribution over "1".."5".
struct ScoreDistribution {
  std::map<int, double> probs;
};

/// Expected score mapped affinely onto [0,1]:
/// z_raw = sum s*p(s), returns (z_raw - s_min) / (s_max - s_min).
double llm_scores_to_relevance(const ScoreDistribution& dist);

/// One JSON object per line. A line carries either "relevance" or
/// "score_probs" (converted on load), never both.
std::vector<GradedRecord> load_records_jsonl(const std::string& path);
void save_records_jsonl(const std::vector<GradedRecord>& records,
                        const std::string& path);

std::vector<TextItem> load_text_items_jsonl(const std::string& path);
void save_text_items_jsonl(const std::vector<TextItem>& items,
                           const std::string& path);

/// Swaps the positive document with the (single) hard negative, keeping
/// labels attached to roles: the new positive gets z=1, the new negative
/// z=0. Applying it twice restores the record.
void swap_positive_with_negative(GradedRecord& record);

/// Independently per record, with probability flip_probability, swap the
/// positive and hard-negative roles. Requires binary labels and exactly one
/// hard negative per record.
std::vector<GradedRecord> inject_label_noise(std::vector<GradedRecord> records,
                                             double flip_probability,
                                             std::uint64_t seed);

enum class CutoffMode { Binarize, KeepGraded };

/// Drops records with relevance < cutoff. Binarize sets survivors' relevance
/// to 1.0; hard negatives are untouched either way. An empty result is a
/// signal, not an error.
std::vector<GradedRecord> filter_by_cutoff(const std::vector<GradedRecord>& records,
                                           double cutoff, CutoffMode mode);

/// Uniformly subsamples every set down to the smallest cardinality, keeping
/// the surviving records in their original order.
std::vector<std::vector<GradedRecord>> subsample_to_match(
    const std::vector<std::vector<GradedRecord>>& sets, std::uint64_t seed);

struct Batch {
  std::vector<GradedRecord> records;
  int hard_negatives = 0;
};

/// Seeded shuffle, optional grouping by task tag, trailing partial batches
/// dropped. Each emitted record carries exactly hard_negatives negatives
/// (extra ones truncated).
std::vector<Batch> make_batches(const std::vector<GradedRecord>& records,
                                int batch_size, int hard_negatives,
                                std::uint64_t seed, bool task_conditioned);

/// Synthetic graded-relevance corpus. The vocabulary splits into topic
/// blocks (the task tag) and each block into sub-topic micro-blocks, the
/// granularity at which relevance is defined. Micro-blocks further separate
/// query-side from document-side tokens, so queries and documents never
/// share tokens and retrieval is an association the encoder must learn.
struct SynthConfig {
  int topics = 8;     // task-level blocks
  int subtopics = 8;  // relevance-level micro-blocks per topic
  int vocab = 512;    // must be divisible by topics * subtopics
  int doc_len = 32;
  int query_len = 8;
  int corpus_size = 1000;  // background documents (record docs are added on top)
  int queries = 200;
  int records = 2000;
  int hard_negs = 1;  // zero-relevance negatives generated per record
  std::vector<double> levels = {0.0, 0.25, 0.5, 0.75, 1.0};
  /// The last sub-topic of every topic samples levels <= level_cap: some
  /// queries simply lack high-relevance matches. 1.0 disables the cap.
  double level_cap = 0.5;
  double eval_query_fraction = 0.2;  // held-out queries never used in records
  std::uint64_t seed = 7;
};

void validate_config(const SynthConfig& cfg);

double snap_to_level(double x, const std::vector<double>& levels);

struct SynthOutput {
  std::vector<TextItem> corpus;
  std::vector<TextItem> queries;       // train + eval
  std::vector<TextItem> eval_queries;  // held-out split
  std::vector<GradedRecord> records;
  Qrels qrels;
};

SynthOutput synth_generate(const SynthConfig& cfg);

}  // namespace bixse
