#include "bixse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bixse/errors.hpp"
#include "bixse/io.hpp"

namespace bixse {

Qrels load_qrels_trec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  Qrels qrels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string query_id, iteration, doc_id;
    int grade = 0;
    if (!(is >> query_id >> iteration >> doc_id >> grade)) {
      throw Error(ErrorCode::ParseError,
                  "qrels line " + std::to_string(line_no) + " malformed");
    }
    if (grade < 0) {
      throw Error(ErrorCode::ParseError,
                  "qrels line " + std::to_string(line_no) + ": negative grade");
    }
    qrels.grades[query_id][doc_id] = grade;
    qrels.max_grade = std::max(qrels.max_grade, grade);
  }
  return qrels;
}

void save_qrels_trec(const Qrels& qrels, const std::string& path) {
  std::ostringstream out;
  for (const auto& [query_id, judged] : qrels.grades) {
    for (const auto& [doc_id, grade] : judged) {
      out << query_id << " 0 " << doc_id << ' ' << grade << '\n';
    }
  }
  write_file_atomic(path, out.str());
}

RunRanking retrieve_topk(const std::vector<TextItem>& queries,
                         const std::vector<TextItem>& corpus,
                         const EncoderParams& params, int k) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "empty corpus");
  if (k < 1) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");

  const EmbeddingMatrix q = encode_batch(queries, params);
  const EmbeddingMatrix d = encode_batch(corpus, params);
  const Matrix sims = q.rows * d.rows.transpose();

  const std::size_t keep =
      std::min<std::size_t>(static_cast<std::size_t>(k), corpus.size());
  RunRanking run;
  run.queries.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    std::vector<ScoredDoc> docs;
    docs.reserve(corpus.size());
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      docs.push_back({corpus[j].id, sims(static_cast<Index>(i),
                                         static_cast<Index>(j))});
    }
    auto better = [](const ScoredDoc& a, const ScoredDoc& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    };
    std::partial_sort(docs.begin(), docs.begin() + static_cast<long>(keep),
                      docs.end(), better);
    docs.resize(keep);
    run.queries.push_back({queries[i].id, std::move(docs)});
  }
  return run;
}

namespace {

inline double grade_gain(int grade) { return std::exp2(grade) - 1.0; }
inline double rank_discount(std::size_t rank) {
  return 1.0 / std::log2(1.0 + static_cast<double>(rank));
}

}  // namespace

NdcgResult ndcg_at_k(const RunRanking& run, const Qrels& qrels, int k) {
  if (k < 1) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
  NdcgResult res;
  double sum = 0.0;
  for (const auto& ranking : run.queries) {
    auto it = qrels.grades.find(ranking.query_id);
    if (it == qrels.grades.end()) {
      ++res.missing_qrels;
      continue;
    }
    const auto& judged = it->second;

    double idcg = 0.0;
    {
      std::vector<int> grades;
      grades.reserve(judged.size());
      for (const auto& [doc_id, grade] : judged) grades.push_back(grade);
      std::sort(grades.begin(), grades.end(), std::greater<>());
      const std::size_t limit =
          std::min<std::size_t>(static_cast<std::size_t>(k), grades.size());
      for (std::size_t r = 0; r < limit; ++r) {
        idcg += grade_gain(grades[r]) * rank_discount(r + 1);
      }
    }
    if (idcg == 0.0) {
      ++res.skipped_zero_ideal;
      continue;
    }

    double dcg = 0.0;
    const std::size_t limit = std::min<std::size_t>(
        static_cast<std::size_t>(k), ranking.docs.size());
    for (std::size_t r = 0; r < limit; ++r) {
      auto jt = judged.find(ranking.docs[r].doc_id);
      const int grade = jt == judged.end() ? 0 : jt->second;
      dcg += grade_gain(grade) * rank_discount(r + 1);
    }

    const double value = dcg / idcg;
    res.per_query.emplace_back(ranking.query_id, value);
    sum += value;
    ++res.evaluated;
  }
  res.mean = res.evaluated > 0 ? sum / static_cast<double>(res.evaluated) : 0.0;
  return res;
}

MetricsRow evaluate_run(const EncoderParams& params,
                        const std::vector<TextItem>& queries,
                        const std::vector<TextItem>& corpus, const Qrels& qrels,
                        int k) {
  const RunRanking run = retrieve_topk(queries, corpus, params, k);
  const NdcgResult ndcg = ndcg_at_k(run, qrels, k);

  double judged_sum = 0.0;
  int judged_queries = 0;
  for (const auto& ranking : run.queries) {
    auto it = qrels.grades.find(ranking.query_id);
    if (it == qrels.grades.end() || ranking.docs.empty()) continue;
    int judged = 0;
    for (const auto& doc : ranking.docs) {
      if (it->second.count(doc.doc_id) > 0) ++judged;
    }
    judged_sum += static_cast<double>(judged) /
                  static_cast<double>(ranking.docs.size());
    ++judged_queries;
  }

  MetricsRow row;
  row.ndcg = ndcg.mean;
  row.judged_coverage =
      judged_queries > 0 ? judged_sum / static_cast<double>(judged_queries) : 0.0;
  row.query_count = ndcg.evaluated;
  return row;
}

void save_run_trec(const RunRanking& run, const std::string& path,
                   const std::string& tag) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  for (const auto& ranking : run.queries) {
    for (std::size_t r = 0; r < ranking.docs.size(); ++r) {
      out << ranking.query_id << " Q0 " << ranking.docs[r].doc_id << ' '
          << (r + 1) << ' ' << ranking.docs[r].score << ' ' << tag << '\n';
    }
  }
  write_file_atomic(path, out.str());
}

}  // namespace bixse
