#ifndef FRID_LOSS_HPP_
#define FRID_LOSS_HPP_

#include <algorithm>
#include <limits>
#include <vector>

#include "frid/ops.hpp"

namespace frid {

// Logistic identity loss: mean softmax cross-entropy over the batch.
template <typename S>
Tensor<S> id_loss(const Tensor<S>& logits, const std::vector<int>& labels) {
  return softmax_cross_entropy(logits, labels);
}

// Batch-hard triplet loss with Euclidean distances. For every anchor the
// farthest positive and nearest negative are mined on forward values; the
// gradient flows through the selected pairs only. A tiny epsilon inside the
// square root keeps the gradient finite for coincident descriptors.
template <typename S>
Tensor<S> triplet_loss(const Tensor<S>& descriptors,
                       const std::vector<int>& labels, S margin) {
  if (descriptors.rank() != 2)
    throw ShapeError("triplet_loss: descriptors must be BxD, got " +
                     shape_str(descriptors.shape()));
  const Eigen::Index b = descriptors.dim(0), d = descriptors.dim(1);
  if (static_cast<Eigen::Index>(labels.size()) != b)
    throw ShapeError("triplet_loss: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(b) + " descriptors");
  if (!descriptors.values().allFinite())
    throw NumericError(
        "triplet_loss: non-finite descriptor values; mining is undefined");

  // Squared distances on raw values for mining (monotone in the distance).
  Eigen::ArrayXXd d2(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < b; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = static_cast<double>(descriptors.values()[i * d + k]) -
                            static_cast<double>(descriptors.values()[j * d + k]);
        acc += diff * diff;
      }
      d2(i, j) = d2(j, i) = acc;
    }
  }

  const S eps = static_cast<S>(1e-12);
  auto pair_distance = [&](Eigen::Index i, Eigen::Index j) {
    Tensor<S> diff =
        sub(select_row(descriptors, i), select_row(descriptors, j));
    return sqrt(add_scalar(sum_all(mul(diff, diff)), eps));
  };

  std::vector<Tensor<S>> terms;
  terms.reserve(static_cast<std::size_t>(b));
  for (Eigen::Index a = 0; a < b; ++a) {
    Eigen::Index hardest_pos = -1, hardest_neg = -1;
    double worst_pos = -1.0, best_neg = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (d2(a, j) > worst_pos) {
          worst_pos = d2(a, j);
          hardest_pos = j;
        }
      } else if (d2(a, j) < best_neg) {
        best_neg = d2(a, j);
        hardest_neg = j;
      }
    }
    if (hardest_pos < 0)
      throw UsageError("triplet_loss: anchor " + std::to_string(a) +
                       " has no positive pair; batches need K >= 2 clips "
                       "per identity");
    if (hardest_neg < 0)
      throw UsageError("triplet_loss: anchor " + std::to_string(a) +
                       " has no negative; batches need P >= 2 identities");
    Tensor<S> gap = add_scalar(
        sub(pair_distance(a, hardest_pos), pair_distance(a, hardest_neg)),
        margin);
    terms.push_back(relu(gap));
  }
  return reduce_mean(stack_scalars(terms), {0});
}

}  // namespace frid

#endif  // FRID_LOSS_HPP_
