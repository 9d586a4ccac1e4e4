#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bixse/embed.hpp"
#include "bixse/qrels.hpp"

namespace bixse {

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
};

/// Per-query ranked output, descending score, ties broken by doc_id
/// ascending.
struct QueryRanking {
  std::string query_id;
  std::vector<ScoredDoc> docs;
};

struct RunRanking {
  std::vector<QueryRanking> queries;
};

/// Exhaustive cosine retrieval of the top-k corpus items per query. Scale
/// and bias are irrelevant to the ordering and omitted.
RunRanking retrieve_topk(const std::vector<TextItem>& queries,
                         const std::vector<TextItem>& corpus,
                         const EncoderParams& params, int k);

struct NdcgResult {
  double mean = 0.0;
  std::vector<std::pair<std::string, double>> per_query;
  int evaluated = 0;
  int skipped_zero_ideal = 0;  // judged queries with IDCG == 0
  int missing_qrels = 0;       // ranked queries absent from qrels
};

/// Gain 2^grade - 1, discount 1/log2(1+rank); IDCG from the ideal ordering
/// of all judged docs. Unjudged retrieved docs count grade 0.
NdcgResult ndcg_at_k(const RunRanking& run, const Qrels& qrels, int k);

struct MetricsRow {
  double ndcg = 0.0;
  double judged_coverage = 0.0;  // mean fraction of top-k docs that are judged
  int query_count = 0;           // queries entering the nDCG mean
};

MetricsRow evaluate_run(const EncoderParams& params,
                        const std::vector<TextItem>& queries,
                        const std::vector<TextItem>& corpus, const Qrels& qrels,
                        int k);

/// 6-column TREC run format "query_id Q0 doc_id rank score tag".
void save_run_trec(const RunRanking& run, const std::string& path,
                   const std::string& tag);

}  // namespace bixse
