#pragma once

#include <map>
#include <string>

namespace bixse {

/// Graded relevance judgments, TREC style: query_id -> doc_id -> grade >= 0.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> grades;
  int max_grade = 0;

  bool has_query(const std::string& query_id) const {
    return grades.find(query_id) != grades.end();
  }
};

/// 4-column whitespace format "query_id 0 doc_id grade".
Qrels load_qrels_trec(const std::string& path);
void save_qrels_trec(const Qrels& qrels, const std::string& path);

}  // namespace bixse
