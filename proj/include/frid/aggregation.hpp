#ifndef FRID_AGGREGATION_HPP_
#define FRID_AGGREGATION_HPP_

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "frid/backbone.hpp"
#include "frid/ops.hpp"

namespace frid {

enum class ReferenceMode {
  kElementwiseMax,  // element-wise temporal maximum
  kArgmaxFrame,     // frame with the highest mean activation
};

// FC D -> D/4 with ReLU applied before the cosine scoring; one per stream.
template <typename S>
struct TinyEmbedding {
  LinearLayer<S> fc;

  static TinyEmbedding make(int dim, std::mt19937_64& rng) {
    TinyEmbedding e;
    e.fc = LinearLayer<S>::make(dim / 4, dim, rng);
    return e;
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return relu(fc(x)); }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fc.visit(prefix + ".fc", fn);
  }
};

// Reference feature of a T x D sequence.
template <typename S>
Tensor<S> reference_feature(const Tensor<S>& features,
                            ReferenceMode mode = ReferenceMode::kElementwiseMax) {
  if (features.rank() != 2 || features.dim(0) < 1)
    throw ShapeError("reference_feature: need a nonempty TxD sequence, got " +
                     shape_str(features.shape()));
  if (mode == ReferenceMode::kElementwiseMax)
    return reduce_max(features, {0});
  // argmax-frame alternative: whole frame with the highest mean activation
  const Eigen::Index t = features.dim(0), d = features.dim(1);
  Eigen::Index best = 0;
  S best_mean = -std::numeric_limits<S>::infinity();
  for (Eigen::Index i = 0; i < t; ++i) {
    const S m = features.values().segment(i * d, d).mean();
    if (m > best_mean) {
      best_mean = m;
      best = i;
    }
  }
  return select_row(features, best);
}

struct WeightDiagnostics {
  int degenerate_embeddings = 0;  // embedded vectors with norm < 1e-12
};

// Per-frame aggregation weights: exp(cos(eps(feature_t), eps(reference))),
// optionally normalized to sum 1 so descriptor scale is independent of T.
// A degenerate embedding (norm < 1e-12) scores cosine 0 and is recorded.
template <typename S>
Tensor<S> aggregation_weights(const Tensor<S>& features,
                              const Tensor<S>& reference,
                              const TinyEmbedding<S>& embed,
                              bool normalize = true,
                              WeightDiagnostics* diag = nullptr) {
  if (features.rank() != 2 || reference.rank() != 1 ||
      reference.dim(0) != features.dim(1))
    throw ShapeError("aggregation_weights: features " +
                     shape_str(features.shape()) + " vs reference " +
                     shape_str(reference.shape()));
  const Eigen::Index t = features.dim(0);
  const S tiny = static_cast<S>(1e-12);

  Tensor<S> emb = embed(features);                       // T x D/4
  Tensor<S> emb_ref = embed(reshape(reference, {1, reference.dim(0)}));
  Tensor<S> ref_vec = reshape(emb_ref, {emb_ref.dim(1)});
  Tensor<S> ref_norm = sqrt(sum_all(mul(ref_vec, ref_vec)));
  const bool ref_ok = ref_norm.values()[0] >= tiny;

  std::vector<Tensor<S>> raw;
  raw.reserve(static_cast<std::size_t>(t));
  for (Eigen::Index i = 0; i < t; ++i) {
    Tensor<S> row = select_row(emb, i);
    Tensor<S> row_norm = sqrt(sum_all(mul(row, row)));
    Tensor<S> cosine;
    if (!ref_ok || row_norm.values()[0] < tiny) {
      cosine = Tensor<S>::zeros({});
      if (diag) ++diag->degenerate_embeddings;
    } else {
      Tensor<S> dot = sum_all(mul(row, ref_vec));
      cosine = div(dot, mul(row_norm, ref_norm));
    }
    raw.push_back(exp(cosine));
  }
  Tensor<S> w = stack_scalars(raw);
  if (!normalize) return w;
  Tensor<S> total = reduce_sum(w, {0});
  return scalar_div(w, total);
}

// Weighted feature addition over frames. Normalized weights are expected to
// sum to one; callers using raw exp-cosine weights pass
// require_normalized=false.
template <typename S>
Tensor<S> weighted_addition(const Tensor<S>& features, const Tensor<S>& weights,
                            bool require_normalized = true) {
  if (features.rank() != 2 || weights.rank() != 1 ||
      weights.dim(0) != features.dim(0))
    throw ShapeError("weighted_addition: " + std::to_string(features.dim(0)) +
                     " frames vs " + shape_str(weights.shape()) + " weights");
  if (require_normalized) {
    const S sum = weights.values().sum();
    if (std::abs(static_cast<double>(sum) - 1.0) > 1e-9)
      throw NumericError("weighted_addition: weights sum to " +
                         std::to_string(static_cast<double>(sum)) +
                         ", expected 1");
  }
  return weighted_rowsum(features, weights);
}

// Average pooling is weighted addition with uniform weights; sharing the
// accumulation path keeps the two bit-for-bit identical.
template <typename S>
Tensor<S> average_pool(const Tensor<S>& features) {
  if (features.rank() != 2 || features.dim(0) < 1)
    throw ShapeError("average_pool: need a nonempty TxD sequence");
  const S w = S(1) / static_cast<S>(features.dim(0));
  Tensor<S> uniform = Tensor<S>::full({features.dim(0)}, w);
  return weighted_rowsum(features, uniform);
}

// Softmax-scored temporal attention baseline.
template <typename S>
Tensor<S> temporal_attention_pool(const Tensor<S>& features,
                                  const LinearLayer<S>& scorer) {
  if (features.rank() != 2)
    throw ShapeError("temporal_attention_pool: need TxD features");
  Tensor<S> scores = scorer(features);  // T x 1
  Tensor<S> w = softmax(reshape(scores, {features.dim(0)}));
  return weighted_rowsum(features, w);
}

// Concatenation of the two stream descriptors followed by the fusion head
// (FC 2D -> D). The result serves both classification and matching.
template <typename S>
Tensor<S> fuse_and_project(const Tensor<S>& phi_c, const Tensor<S>& f_c,
                           const LinearLayer<S>& head) {
  if (phi_c.rank() != 1 || f_c.rank() != 1 || phi_c.dim(0) != f_c.dim(0))
    throw ShapeError("fuse_and_project: descriptors " +
                     shape_str(phi_c.shape()) + " and " +
                     shape_str(f_c.shape()) + " must be equal-length vectors");
  const Eigen::Index d = phi_c.dim(0);
  Tensor<S> cat = concat_cols(reshape(phi_c, {1, d}), reshape(f_c, {1, d}));
  return reshape(head(cat), {head.weight.dim(0)});
}

}  // namespace frid

#endif  // FRID_AGGREGATION_HPP_
