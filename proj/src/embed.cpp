#include "bixse/embed.hpp"

#include <cmath>

#include "bixse/errors.hpp"
#include "bixse/rng.hpp"

namespace bixse {

EncoderParams init_params(Index hash_buckets, Index dim, std::uint64_t seed,
                          double alpha, double beta) {
  if (hash_buckets < 1 || dim < 1) {
    throw Error(ErrorCode::ConfigInvalid, "hash_buckets and dim must be >= 1");
  }
  if (!(alpha > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "alpha must be positive");
  }
  EncoderParams params;
  params.table.resize(hash_buckets, dim);
  Rng rng(mix_seed(seed, 0x7ab1e));
  for (Index r = 0; r < hash_buckets; ++r) {
    for (Index c = 0; c < dim; ++c) {
      params.table(r, c) = 0.1 * rng.normal();
    }
  }
  params.alpha = alpha;
  params.beta = beta;
  params.hash_seed = seed;
  return params;
}

namespace {

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// Seeded FNV-1a over the trigram bytes.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ splitmix64(seed);
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

bool is_blank(std::string_view text) {
  for (char c : text) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') return false;
  }
  return true;
}

}  // namespace

std::uint32_t hash_trigram(std::string_view trigram, std::uint64_t seed,
                           std::uint32_t buckets) {
  return static_cast<std::uint32_t>(fnv1a(trigram, seed) % buckets);
}

std::vector<std::uint32_t> tokenize(std::string_view text, std::uint64_t seed,
                                    std::uint32_t buckets) {
  std::vector<std::uint32_t> ids;
  if (text.empty()) return ids;
  std::string padded;
  padded.reserve(text.size() + 2);
  padded.push_back('^');
  for (char c : text) padded.push_back(ascii_lower(c));
  padded.push_back('$');
  ids.reserve(padded.size() - 2);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    ids.push_back(hash_trigram(std::string_view(padded).substr(i, 3), seed, buckets));
  }
  return ids;
}

Vector l2_normalize(const Vector& v) {
  const double norm = v.norm();
  if (norm < 1e-12) {
    throw Error(ErrorCode::ZeroVector, "vector norm below 1e-12");
  }
  return v / norm;
}

EmbeddingMatrix encode_batch(const std::vector<TextItem>& items,
                             const EncoderParams& params) {
  const Index n = static_cast<Index>(items.size());
  const Index d = params.dim();
  EmbeddingMatrix out;
  out.rows.resize(n, d);
  out.raw.resize(n, d);
  out.norms.resize(n);
  out.features.resize(items.size());

  const auto buckets = static_cast<std::uint32_t>(params.buckets());
  for (Index i = 0; i < n; ++i) {
    const TextItem& item = items[static_cast<std::size_t>(i)];
    if (is_blank(item.text)) {
      throw Error(ErrorCode::EmptyText, "item '" + item.id + "' has empty text");
    }
    std::string text = item.instruction ? *item.instruction + " " + item.text
                                        : item.text;
    auto ids = tokenize(text, params.hash_seed, buckets);
    if (ids.empty()) {
      throw Error(ErrorCode::EmptyText, "item '" + item.id + "' has no features");
    }
    Vector mean = Vector::Zero(d);
    for (auto id : ids) mean += params.table.row(static_cast<Index>(id));
    mean /= static_cast<double>(ids.size());
    const double norm = mean.norm();
    if (norm < 1e-12) {
      throw Error(ErrorCode::ZeroVector,
                  "item '" + item.id + "' pooled to a zero vector");
    }
    out.raw.row(i) = mean;
    out.norms(i) = norm;
    out.rows.row(i) = mean / norm;
    out.features[static_cast<std::size_t>(i)] = std::move(ids);
  }
  return out;
}

Matrix score_matrix(const EmbeddingMatrix& queries, const EmbeddingMatrix& docs,
                    const EncoderParams& params, bool use_bias) {
  if (queries.rows.cols() != docs.rows.cols()) {
    throw Error(ErrorCode::DimMismatch, "embedding dimensions differ");
  }
  Matrix scores = params.alpha * (queries.rows * docs.rows.transpose());
  if (use_bias) scores.array() += params.beta;
  return scores;
}

namespace {

// dL/draw = (dL/dxhat - xhat (xhat . dL/dxhat)) / |raw|, then mean-weighted
// scatter-add over the row's feature ids.
void accumulate_rows(const EmbeddingMatrix& emb, const Matrix& grad_unit,
                     Matrix& table_grad) {
  const Index n = emb.count();
  for (Index i = 0; i < n; ++i) {
    const auto& ids = emb.features[static_cast<std::size_t>(i)];
    const Vector xhat = emb.rows.row(i).transpose();
    const Vector g = grad_unit.row(i).transpose();
    const Vector graw = (g - xhat * xhat.dot(g)) / emb.norms(i);
    const double w = 1.0 / static_cast<double>(ids.size());
    for (auto id : ids) {
      table_grad.row(static_cast<Index>(id)) += w * graw.transpose();
    }
  }
}

}  // namespace

Gradients encoder_backward(const Matrix& score_grad,
                           const EmbeddingMatrix& queries,
                           const EmbeddingMatrix& docs,
                           const EncoderParams& params, bool use_bias) {
  if (!queries.has_cache() || !docs.has_cache()) {
    throw Error(ErrorCode::StaleCache, "forward caches missing");
  }
  if (score_grad.rows() != queries.count() || score_grad.cols() != docs.count()) {
    throw Error(ErrorCode::ShapeMismatch, "score gradient shape mismatch");
  }

  Gradients grads;
  grads.table = Matrix::Zero(params.buckets(), params.dim());

  const Matrix grad_q = params.alpha * (score_grad * docs.rows);
  const Matrix grad_d = params.alpha * (score_grad.transpose() * queries.rows);
  accumulate_rows(queries, grad_q, grads.table);
  accumulate_rows(docs, grad_d, grads.table);

  grads.alpha =
      score_grad.cwiseProduct(queries.rows * docs.rows.transpose()).sum();
  grads.beta = use_bias ? score_grad.sum() : 0.0;
  return grads;
}

}  // namespace bixse
