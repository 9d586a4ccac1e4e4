#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bixse/types.hpp"

namespace bixse {

struct TextItem {
  std::string id;
  std::string text;
  /// Prepended to text (separated by a single space) before tokenization.
  std::optional<std::string> instruction;
  std::string task;
};

/// Hashed character-trigram bi-encoder parameters. One table is shared by
/// queries and documents; alpha/beta are the logit scale and bias of the
/// scoring function s(q, d) = alpha * q.d + beta.
struct EncoderParams {
  Matrix table;  // H x d feature embeddings
  double alpha = 20.0;
  double beta = 0.0;
  std::uint64_t hash_seed = 0;

  Index buckets() const { return table.rows(); }
  Index dim() const { return table.cols(); }
};

EncoderParams init_params(Index hash_buckets, Index dim, std::uint64_t seed,
                          double alpha = 20.0, double beta = 0.0);

std::uint32_t hash_trigram(std::string_view trigram, std::uint64_t seed,
                           std::uint32_t buckets);

/// Lowercased character trigrams over "^" + text + "$", hashed into
/// [0, buckets). A text of n >= 1 bytes yields exactly n trigrams; empty
/// text yields none.
std::vector<std::uint32_t> tokenize(std::string_view text, std::uint64_t seed,
                                    std::uint32_t buckets);

/// v / |v|. Throws ZeroVector when |v| < 1e-12.
Vector l2_normalize(const Vector& v);

/// Encoded batch: unit-norm rows plus the pre-normalization cache needed by
/// encoder_backward.
struct EmbeddingMatrix {
  Matrix rows;   // n x d, each row unit norm
  Matrix raw;    // n x d mean-pooled vectors before normalization
  Vector norms;  // n, |raw| per row
  std::vector<std::vector<std::uint32_t>> features;

  Index count() const { return rows.rows(); }
  bool has_cache() const {
    return raw.rows() == rows.rows() && norms.size() == rows.rows() &&
           static_cast<Index>(features.size()) == rows.rows();
  }
};

EmbeddingMatrix encode_batch(const std::vector<TextItem>& items,
                             const EncoderParams& params);

/// S[i][j] = alpha * (Q_i . D_j) + (beta if use_bias else 0).
Matrix score_matrix(const EmbeddingMatrix& queries, const EmbeddingMatrix& docs,
                    const EncoderParams& params, bool use_bias);

struct Gradients {
  Matrix table;
  double alpha = 0.0;
  double beta = 0.0;
};

/// Chain rule from dL/dS back to the table, alpha and beta. Applies the
/// normalization Jacobian (I - xx^T)/|raw| per row and scatter-adds into the
/// table with mean weighting, in fixed item order.
Gradients encoder_backward(const Matrix& score_grad,
                           const EmbeddingMatrix& queries,
                           const EmbeddingMatrix& docs,
                           const EncoderParams& params, bool use_bias);

}  // namespace bixse
