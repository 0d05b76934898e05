#ifndef FRID_TESTS_TESTING_UTIL_HPP_
#define FRID_TESTS_TESTING_UTIL_HPP_

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "frid/tensor.hpp"

// Test-side oracles. Everything here is written directly from definitions
// (nested loops, exhaustive scans, central differences) and must stay
// independent of the op implementations it checks.
namespace frid::testing {

// Max relative error between analytic gradients and central finite
// differences, over every element of every leaf. make_loss() must rebuild
// the graph from the leaves' current values.
template <typename MakeLoss>
double max_grad_error(std::vector<Tensor<double>*> leaves, MakeLoss make_loss,
                      double h = 1e-5) {
  for (auto* l : leaves) l->zero_grad();
  Tensor<double> loss = make_loss();
  backward(loss);
  std::vector<Eigen::ArrayXd> analytic;
  analytic.reserve(leaves.size());
  for (auto* l : leaves)
    analytic.push_back(l->has_grad() ? Eigen::ArrayXd(l->grad())
                                     : Eigen::ArrayXd::Zero(l->size()));

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& leaf = *leaves[li];
    for (Eigen::Index i = 0; i < leaf.size(); ++i) {
      const double orig = leaf.values()[i];
      leaf.mutable_values()[i] = orig + h;
      const double fp = make_loss().values()[0];
      leaf.mutable_values()[i] = orig - h;
      const double fm = make_loss().values()[0];
      leaf.mutable_values()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[li][i];
      const double err =
          std::abs(a - numeric) /
          std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Scalarize an op output against fixed random coefficients so every output
// element contributes to the checked gradient.
inline Tensor<double> random_probe(const Shape& shape, std::mt19937_64& rng) {
  return Tensor<double>::uniform(shape, rng, -1.0, 1.0);
}

// --- naive oracles -----------------------------------------------------

inline std::vector<double> naive_conv2d(
    const std::vector<double>& in, Eigen::Index T, Eigen::Index C,
    Eigen::Index H, Eigen::Index W, const std::vector<double>& w,
    Eigen::Index O, Eigen::Index kh, Eigen::Index kw,
    const std::vector<double>& bias, Eigen::Index stride, Eigen::Index pad) {
  const Eigen::Index OH = (H + 2 * pad - kh) / stride + 1;
  const Eigen::Index OW = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(T * O * OH * OW, 0.0);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index o = 0; o < O; ++o)
      for (Eigen::Index oh = 0; oh < OH; ++oh)
        for (Eigen::Index ow = 0; ow < OW; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (Eigen::Index c = 0; c < C; ++c)
            for (Eigen::Index ki = 0; ki < kh; ++ki)
              for (Eigen::Index kj = 0; kj < kw; ++kj) {
                const Eigen::Index ih = oh * stride + ki - pad;
                const Eigen::Index iw = ow * stride + kj - pad;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += in[((t * C + c) * H + ih) * W + iw] *
                       w[((o * C + c) * kh + ki) * kw + kj];
              }
          out[((t * O + o) * OH + oh) * OW + ow] = acc;
        }
  return out;
}

inline std::vector<double> naive_fc(const std::vector<double>& in,
                                    Eigen::Index rows, Eigen::Index din,
                                    const std::vector<double>& w,
                                    Eigen::Index dout,
                                    const std::vector<double>& bias) {
  std::vector<double> out(rows * dout, 0.0);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index o = 0; o < dout; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (Eigen::Index i = 0; i < din; ++i)
        acc += in[r * din + i] * w[o * din + i];
      out[r * dout + o] = acc;
    }
  return out;
}

struct NaiveDist {
  // plain Euclidean distance matrix by scalar loops
  static std::vector<double> matrix(const std::vector<std::vector<double>>& q,
                                    const std::vector<std::vector<double>>& g) {
    std::vector<double> d(q.size() * g.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < q[i].size(); ++k) {
          const double diff = q[i][k] - g[j][k];
          acc += diff * diff;
        }
        d[i * g.size() + j] = std::sqrt(acc);
      }
    return d;
  }
};

// Exhaustive CMC/mAP oracle, written straight from the protocol definition:
// drop same-identity same-camera gallery entries, rank the rest by distance
// (gallery index breaks ties), then scan every rank position.
struct OracleEvalInput {
  std::vector<std::vector<double>> q_vals, g_vals;
  std::vector<int> q_id, q_cam, g_id, g_cam;
};

struct OracleEvalResult {
  std::vector<double> cmc;  // k = 1..max_rank
  double map = 0.0;
  int valid_queries = 0;
  int excluded = 0;
};

inline OracleEvalResult oracle_evaluate(const OracleEvalInput& in,
                                        int max_rank) {
  OracleEvalResult res;
  res.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  double ap_sum = 0.0;
  for (std::size_t qi = 0; qi < in.q_vals.size(); ++qi) {
    struct Entry {
      double dist;
      int index;
      bool correct;
    };
    std::vector<Entry> entries;
    for (std::size_t gi = 0; gi < in.g_vals.size(); ++gi) {
      if (in.g_id[gi] == in.q_id[qi] && in.g_cam[gi] == in.q_cam[qi])
        continue;
      double acc = 0.0;
      for (std::size_t k = 0; k < in.q_vals[qi].size(); ++k) {
        const double diff = in.q_vals[qi][k] - in.g_vals[gi][k];
        acc += diff * diff;
      }
      entries.push_back({std::sqrt(acc), static_cast<int>(gi),
                         in.g_id[gi] == in.q_id[qi]});
    }
    bool any = false;
    for (const Entry& e : entries) any = any || e.correct;
    if (!any) {
      ++res.excluded;
      continue;
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a,
                                                 const Entry& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      return a.index < b.index;
    });
    ++res.valid_queries;
    int correct_seen = 0, first = -1;
    double ap = 0.0;
    for (std::size_t r = 0; r < entries.size(); ++r) {
      if (!entries[r].correct) continue;
      ++correct_seen;
      ap += static_cast<double>(correct_seen) / static_cast<double>(r + 1);
      if (first < 0) first = static_cast<int>(r) + 1;
    }
    ap /= correct_seen;
    ap_sum += ap;
    for (int k = first; k <= max_rank; ++k)
      res.cmc[static_cast<std::size_t>(k - 1)] += 1.0;
  }
  if (res.valid_queries > 0) {
    for (double& v : res.cmc) v /= res.valid_queries;
    res.map = ap_sum / res.valid_queries;
  }
  return res;
}

// Batch-hard triplet oracle by exhaustive scan over all pairs.
inline double oracle_batch_hard_triplet(
    const std::vector<std::vector<double>>& desc, const std::vector<int>& labels,
    double margin) {
  const std::size_t b = desc.size();
  double total = 0.0;
  for (std::size_t a = 0; a < b; ++a) {
    double dp = -1.0, dn = 1e300;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == a) continue;
      double acc = 0.0;
      for (std::size_t k = 0; k < desc[a].size(); ++k) {
        const double diff = desc[a][k] - desc[j][k];
        acc += diff * diff;
      }
      const double dist = std::sqrt(acc);
      if (labels[j] == labels[a])
        dp = std::max(dp, dist);
      else
        dn = std::min(dn, dist);
    }
    total += std::max(0.0, dp - dn + margin);
  }
  return total / static_cast<double>(b);
}

}  // namespace frid::testing

#endif  // FRID_TESTS_TESTING_UTIL_HPP_
