#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bixse/data.hpp"
#include "bixse/types.hpp"

namespace bixse {

enum class LossKind {
  InfoNCE,
  BiXSE,
  SoftInfoNCE,
  MarginMSE,
  PairwiseBCE,
  LambdaNDCG1,
  LambdaNDCG2,
};

const char* loss_kind_name(LossKind kind);
LossKind parse_loss_kind(const std::string& name);
std::vector<LossKind> all_loss_kinds();

/// Only BiXSE scores with the logit bias.
bool loss_uses_bias(LossKind kind);

/// B x B(1+K) label matrix. Column j < B holds query j's labeled document;
/// columns B + i*K + k hold query i's k-th hard negative. Everything
/// unlabeled is 0, including textual duplicates.
struct LabelMatrix {
  Matrix z;
  int hard_negatives = 0;

  Index batch() const { return z.rows(); }
  Index candidates() const { return z.cols(); }
  bool is_labeled(Index row, Index col) const {
    if (col == row) return true;
    const Index start = batch() + row * hard_negatives;
    return col >= start && col < start + hard_negatives;
  }
};

LabelMatrix build_label_matrix(const std::vector<GradedRecord>& batch,
                               int hard_negatives);

/// Scalar loss plus gradients with respect to every score entry and to the
/// logit bias. score_reads / pair_evals instrument the cost contract.
struct LossResult {
  double value = 0.0;
  Matrix score_grad;
  double bias_grad = 0.0;
  std::uint64_t score_reads = 0;
  std::uint64_t pair_evals = 0;
};

/// log(sigmoid(x)) as -log1p(exp(-|x|)) - max(-x, 0); safe at |x| up to the
/// score bound alpha + |beta|.
double log_sigmoid(double x);
double sigmoid(double x);

/// Multi-class NLL over each row's candidates; positive_col[i] names row i's
/// target column. Scores must be computed without the bias.
LossResult infonce_loss(const Matrix& scores,
                        const std::vector<Index>& positive_col);

/// Binary cross-entropy over every (query, candidate) cell against the
/// graded labels; bias_grad is the exact sum of score_grad.
LossResult bixse_loss(const Matrix& scores, const LabelMatrix& labels);

/// Cross-entropy against per-row soft targets: labeled z mass normalized to
/// sum 1. include_hard_negatives controls whether hard-negative columns
/// enter the target.
LossResult soft_infonce_loss(const Matrix& scores, const LabelMatrix& labels,
                             bool include_hard_negatives = true);

/// MSE between student margins and teacher_scale-scaled label margins,
/// positive vs each hard negative. In-batch columns are excluded; the bias
/// cancels in the margins.
LossResult margin_mse_loss(const Matrix& scores, const LabelMatrix& labels,
                           double teacher_scale);

/// RankNet-style: -log sigmoid(S_a - S_b) over every ordered candidate pair
/// with z_a > z_b, averaged over contributing pairs.
LossResult pairwise_bce_loss(const Matrix& scores, const LabelMatrix& labels);

enum class LambdaVariant { V1, V2 };

/// pairwise_bce weighted per pair with gain G(z) = 2^(4z) - 1 and
/// rank-based discounts (ranks by descending score, ties by column index):
///   v1: |G_a - G_b| / log2(1 + min(r_a, r_b))
///   v2: |G_a - G_b| * |1/log2(1+r_a) - 1/log2(1+r_b)|
/// Each row's terms are divided by its ideal DCG; weights and ranks are
/// constants in the gradient.
LossResult lambda_ndcg_loss(const Matrix& scores, const LabelMatrix& labels,
                            LambdaVariant variant);

struct LossOptions {
  LossKind kind = LossKind::BiXSE;
  double binarize_threshold = 0.5;  // InfoNCE positive rule
  double teacher_scale = 20.0;      // MarginMSE; defaults to alpha upstream
  bool soft_include_hard_negatives = true;
};

LossResult evaluate_loss(const Matrix& scores, const LabelMatrix& labels,
                         const LossOptions& options);

}  // namespace bixse
