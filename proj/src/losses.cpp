#include "bixse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bixse/errors.hpp"

namespace bixse {

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::InfoNCE: return "infonce";
    case LossKind::BiXSE: return "bixse";
    case LossKind::SoftInfoNCE: return "soft_infonce";
    case LossKind::MarginMSE: return "margin_mse";
    case LossKind::PairwiseBCE: return "pairwise_bce";
    case LossKind::LambdaNDCG1: return "lambda_ndcg1";
    case LossKind::LambdaNDCG2: return "lambda_ndcg2";
  }
  return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
  for (LossKind kind : all_loss_kinds()) {
    if (name == loss_kind_name(kind)) return kind;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown loss '" + name + "'");
}

std::vector<LossKind> all_loss_kinds() {
  return {LossKind::InfoNCE,     LossKind::BiXSE,      LossKind::SoftInfoNCE,
          LossKind::MarginMSE,   LossKind::PairwiseBCE, LossKind::LambdaNDCG1,
          LossKind::LambdaNDCG2};
}

bool loss_uses_bias(LossKind kind) { return kind == LossKind::BiXSE; }

LabelMatrix build_label_matrix(const std::vector<GradedRecord>& batch,
                               int hard_negatives) {
  const Index b = static_cast<Index>(batch.size());
  if (b == 0) throw Error(ErrorCode::EmptyDataset, "empty batch");
  const Index k = hard_negatives;
  for (const auto& rec : batch) {
    if (static_cast<Index>(rec.hard_negatives.size()) != k) {
      throw Error(ErrorCode::InconsistentK,
                  "record '" + rec.query_id + "' has " +
                      std::to_string(rec.hard_negatives.size()) +
                      " hard negatives, expected " + std::to_string(k));
    }
  }
  LabelMatrix labels;
  labels.hard_negatives = hard_negatives;
  labels.z = Matrix::Zero(b, b * (1 + k));
  for (Index i = 0; i < b; ++i) {
    const auto& rec = batch[static_cast<std::size_t>(i)];
    if (rec.relevance < 0.0 || rec.relevance > 1.0) {
      throw Error(ErrorCode::LabelRange,
                  "relevance " + std::to_string(rec.relevance) + " outside [0,1]");
    }
    labels.z(i, i) = rec.relevance;
    for (Index n = 0; n < k; ++n) {
      const double z = rec.hard_negatives[static_cast<std::size_t>(n)].relevance;
      if (z < 0.0 || z > 1.0) {
        throw Error(ErrorCode::LabelRange,
                    "hard-negative relevance " + std::to_string(z) +
                        " outside [0,1]");
      }
      labels.z(i, b + i * k + n) = z;
    }
  }
  return labels;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  return -std::log1p(std::exp(-std::abs(x))) - std::max(-x, 0.0);
}

namespace {

void check_shapes(const Matrix& scores, const LabelMatrix& labels) {
  if (scores.rows() != labels.z.rows() || scores.cols() != labels.z.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "scores and labels differ in shape");
  }
  const Index b = labels.batch();
  if (labels.candidates() != b * (1 + labels.hard_negatives)) {
    throw Error(ErrorCode::ShapeMismatch, "label layout is not B x B(1+K)");
  }
}

// Row softmax probabilities and log-sum-exp, max-shifted.
void row_softmax(const Matrix& scores, Index i, Vector& probs, double& lse) {
  const Index m = scores.cols();
  const double mx = scores.row(i).maxCoeff();
  double sum = 0.0;
  probs.resize(m);
  for (Index j = 0; j < m; ++j) {
    probs(j) = std::exp(scores(i, j) - mx);
    sum += probs(j);
  }
  probs /= sum;
  lse = mx + std::log(sum);
}

}  // namespace

LossResult infonce_loss(const Matrix& scores,
                        const std::vector<Index>& positive_col) {
  const Index b = scores.rows();
  const Index m = scores.cols();
  if (static_cast<Index>(positive_col.size()) != b) {
    throw Error(ErrorCode::ShapeMismatch, "one positive column per row required");
  }
  LossResult res;
  res.score_grad = Matrix::Zero(b, m);
  Vector probs;
  double lse = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (Index i = 0; i < b; ++i) {
    const Index pos = positive_col[static_cast<std::size_t>(i)];
    if (pos < 0 || pos >= m) {
      throw Error(ErrorCode::NoPositive,
                  "row " + std::to_string(i) + " lacks a positive column");
    }
    row_softmax(scores, i, probs, lse);
    res.value += (lse - scores(i, pos)) * inv_b;
    res.score_grad.row(i) = inv_b * probs.transpose();
    res.score_grad(i, pos) -= inv_b;
  }
  res.bias_grad = 0.0;
  res.score_reads = static_cast<std::uint64_t>(b) * static_cast<std::uint64_t>(m);
  return res;
}

LossResult bixse_loss(const Matrix& scores, const LabelMatrix& labels) {
  check_shapes(scores, labels);
  const Index b = scores.rows();
  const Index m = scores.cols();
  LossResult res;
  res.score_grad = Matrix::Zero(b, m);
  const double inv_b = 1.0 / static_cast<double>(b);
  // Fixed row-major accumulation for bit-reproducibility.
  for (Index i = 0; i < b; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double s = scores(i, j);
      const double z = labels.z(i, j);
      res.value -= (z * log_sigmoid(s) + (1.0 - z) * log_sigmoid(-s)) * inv_b;
      res.score_grad(i, j) = (sigmoid(s) - z) * inv_b;
      res.bias_grad += res.score_grad(i, j);
    }
  }
  res.score_reads = static_cast<std::uint64_t>(b) * static_cast<std::uint64_t>(m);
  return res;
}

LossResult soft_infonce_loss(const Matrix& scores, const LabelMatrix& labels,
                             bool include_hard_negatives) {
  check_shapes(scores, labels);
  const Index b = scores.rows();
  const Index m = scores.cols();
  const Index k = labels.hard_negatives;
  LossResult res;
  res.score_grad = Matrix::Zero(b, m);
  const double inv_b = 1.0 / static_cast<double>(b);
  Vector probs;
  double lse = 0.0;
  for (Index i = 0; i < b; ++i) {
    std::vector<Index> labeled{i};
    if (include_hard_negatives) {
      for (Index n = 0; n < k; ++n) labeled.push_back(b + i * k + n);
    }
    double mass = 0.0;
    for (Index j : labeled) mass += labels.z(i, j);
    if (mass <= 0.0) {
      throw Error(ErrorCode::AllZeroRow,
                  "row " + std::to_string(i) + " has no label mass");
    }
    row_softmax(scores, i, probs, lse);
    res.score_grad.row(i) = inv_b * probs.transpose();
    for (Index j : labeled) {
      const double t = labels.z(i, j) / mass;
      if (t > 0.0) res.value += t * (lse - scores(i, j)) * inv_b;
      res.score_grad(i, j) -= inv_b * t;
    }
  }
  res.score_reads = static_cast<std::uint64_t>(b) * static_cast<std::uint64_t>(m);
  return res;
}

LossResult margin_mse_loss(const Matrix& scores, const LabelMatrix& labels,
                           double teacher_scale) {
  check_shapes(scores, labels);
  const Index b = scores.rows();
  const Index k = labels.hard_negatives;
  if (k < 1) {
    throw Error(ErrorCode::NeedsHardNegatives,
                "margin_mse requires at least one hard negative per query");
  }
  LossResult res;
  res.score_grad = Matrix::Zero(b, scores.cols());
  const double scale = 1.0 / (static_cast<double>(b) * static_cast<double>(k));
  for (Index i = 0; i < b; ++i) {
    for (Index n = 0; n < k; ++n) {
      const Index col = b + i * k + n;
      const double student = scores(i, i) - scores(i, col);
      const double teacher = teacher_scale * (labels.z(i, i) - labels.z(i, col));
      const double r = student - teacher;
      res.value += r * r * scale;
      const double g = 2.0 * r * scale;
      res.score_grad(i, i) += g;
      res.score_grad(i, col) -= g;
      res.score_reads += 2;
    }
  }
  res.bias_grad = 0.0;  // beta cancels in the margins
  return res;
}

LossResult pairwise_bce_loss(const Matrix& scores, const LabelMatrix& labels) {
  check_shapes(scores, labels);
  const Index b = scores.rows();
  const Index m = scores.cols();
  LossResult res;
  res.score_grad = Matrix::Zero(b, m);

  std::uint64_t contributing = 0;
  for (Index i = 0; i < b; ++i) {
    for (Index a = 0; a < m; ++a) {
      for (Index c = a + 1; c < m; ++c) {
        ++res.pair_evals;
        if (labels.z(i, a) != labels.z(i, c)) ++contributing;
      }
    }
  }
  if (contributing == 0) {
    throw Error(ErrorCode::NoOrderedPairs, "no candidate pair has distinct labels");
  }
  const double inv_p = 1.0 / static_cast<double>(contributing);
  for (Index i = 0; i < b; ++i) {
    for (Index a = 0; a < m; ++a) {
      for (Index c = a + 1; c < m; ++c) {
        if (labels.z(i, a) == labels.z(i, c)) continue;
        const Index hi = labels.z(i, a) > labels.z(i, c) ? a : c;
        const Index lo = hi == a ? c : a;
        const double delta = scores(i, hi) - scores(i, lo);
        res.value -= log_sigmoid(delta) * inv_p;
        const double g = (sigmoid(delta) - 1.0) * inv_p;
        res.score_grad(i, hi) += g;
        res.score_grad(i, lo) -= g;
      }
    }
  }
  res.bias_grad = 0.0;
  return res;
}

namespace {

inline double ndcg_gain(double z) { return std::exp2(4.0 * z) - 1.0; }
inline double rank_discount(Index rank) {
  return 1.0 / std::log2(1.0 + static_cast<double>(rank));
}

// 1-based ranks by descending score, ties broken by column index.
std::vector<Index> row_ranks(const Matrix& scores, Index i) {
  const Index m = scores.cols();
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index c) {
    if (scores(i, a) != scores(i, c)) return scores(i, a) > scores(i, c);
    return a < c;
  });
  std::vector<Index> ranks(static_cast<std::size_t>(m));
  for (Index r = 0; r < m; ++r) {
    ranks[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;
  }
  return ranks;
}

double row_ideal_dcg(const LabelMatrix& labels, Index i) {
  const Index m = labels.candidates();
  std::vector<double> gains(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    gains[static_cast<std::size_t>(j)] = ndcg_gain(labels.z(i, j));
  }
  std::sort(gains.begin(), gains.end(), std::greater<>());
  double idcg = 0.0;
  for (Index r = 0; r < m; ++r) {
    idcg += gains[static_cast<std::size_t>(r)] * rank_discount(r + 1);
  }
  return idcg;
}

}  // namespace

LossResult lambda_ndcg_loss(const Matrix& scores, const LabelMatrix& labels,
                            LambdaVariant variant) {
  check_shapes(scores, labels);
  const Index b = scores.rows();
  const Index m = scores.cols();
  LossResult res;
  res.score_grad = Matrix::Zero(b, m);

  std::uint64_t contributing = 0;
  for (Index i = 0; i < b; ++i) {
    for (Index a = 0; a < m; ++a) {
      for (Index c = a + 1; c < m; ++c) {
        ++res.pair_evals;
        if (labels.z(i, a) != labels.z(i, c)) ++contributing;
      }
    }
  }
  if (contributing == 0) {
    throw Error(ErrorCode::NoOrderedPairs, "no candidate pair has distinct labels");
  }
  const double inv_p = 1.0 / static_cast<double>(contributing);

  for (Index i = 0; i < b; ++i) {
    bool row_has_pair = false;
    for (Index a = 0; a < m && !row_has_pair; ++a) {
      for (Index c = a + 1; c < m; ++c) {
        if (labels.z(i, a) != labels.z(i, c)) {
          row_has_pair = true;
          break;
        }
      }
    }
    if (!row_has_pair) continue;

    const std::vector<Index> ranks = row_ranks(scores, i);
    const double idcg = row_ideal_dcg(labels, i);
    // A row with a label-distinct pair has some z > 0, so idcg > 0.
    for (Index a = 0; a < m; ++a) {
      for (Index c = a + 1; c < m; ++c) {
        if (labels.z(i, a) == labels.z(i, c)) continue;
        const Index hi = labels.z(i, a) > labels.z(i, c) ? a : c;
        const Index lo = hi == a ? c : a;
        const double gain_diff =
            std::abs(ndcg_gain(labels.z(i, hi)) - ndcg_gain(labels.z(i, lo)));
        const Index ra = ranks[static_cast<std::size_t>(a)];
        const Index rc = ranks[static_cast<std::size_t>(c)];
        double weight;
        if (variant == LambdaVariant::V1) {
          weight = gain_diff * rank_discount(std::min(ra, rc));
        } else {
          weight = gain_diff * std::abs(rank_discount(ra) - rank_discount(rc));
        }
        const double w = weight / idcg * inv_p;
        const double delta = scores(i, hi) - scores(i, lo);
        res.value -= log_sigmoid(delta) * w;
        const double g = (sigmoid(delta) - 1.0) * w;
        res.score_grad(i, hi) += g;
        res.score_grad(i, lo) -= g;
      }
    }
  }
  res.bias_grad = 0.0;
  return res;
}

LossResult evaluate_loss(const Matrix& scores, const LabelMatrix& labels,
                         const LossOptions& options) {
  switch (options.kind) {
    case LossKind::InfoNCE: {
      const Index b = labels.batch();
      std::vector<Index> positive;
      positive.reserve(static_cast<std::size_t>(b));
      for (Index i = 0; i < b; ++i) {
        if (labels.z(i, i) < options.binarize_threshold) {
          throw Error(ErrorCode::NoPositive,
                      "row " + std::to_string(i) + " has relevance below the "
                      "binarization threshold");
        }
        positive.push_back(i);
      }
      return infonce_loss(scores, positive);
    }
    case LossKind::BiXSE:
      return bixse_loss(scores, labels);
    case LossKind::SoftInfoNCE:
      return soft_infonce_loss(scores, labels,
                               options.soft_include_hard_negatives);
    case LossKind::MarginMSE:
      return margin_mse_loss(scores, labels, options.teacher_scale);
    case LossKind::PairwiseBCE:
      return pairwise_bce_loss(scores, labels);
    case LossKind::LambdaNDCG1:
      return lambda_ndcg_loss(scores, labels, LambdaVariant::V1);
    case LossKind::LambdaNDCG2:
      return lambda_ndcg_loss(scores, labels, LambdaVariant::V2);
  }
  throw Error(ErrorCode::ConfigInvalid, "unreachable loss kind");
}

}  // namespace bixse
