#ifndef FRID_EVALUATION_HPP_
#define FRID_EVALUATION_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "frid/common.hpp"

namespace frid {

// One clip-level descriptor with its labels.
struct DescriptorRecord {
  std::string clip_id;
  std::uint32_t identity = 0;
  std::uint32_t camera = 0;
  Eigen::VectorXd values;
};

struct EvalProtocol {
  std::vector<int> ranks{1, 5, 10, 20};
  bool cosine = false;  // default Euclidean on unnormalized descriptors
};

struct EvalReport {
  std::vector<double> cmc;  // rank-k match rate, k = 1..cmc.size()
  double map = 0.0;
  int num_queries = 0;       // queries with at least one valid match
  int excluded_queries = 0;  // queries with no valid gallery match
  std::vector<int> ranks;    // sorted, deduplicated requested ranks

  double cmc_at(int k) const {
    if (cmc.empty()) return 0.0;
    const int idx = std::min<int>(k, static_cast<int>(cmc.size())) - 1;
    return idx >= 0 ? cmc[static_cast<std::size_t>(idx)] : 0.0;
  }
};

// Pairwise distances, queries along rows. Euclidean by default, 1 - cosine
// similarity behind the flag.
Eigen::MatrixXd distance_matrix(const std::vector<DescriptorRecord>& queries,
                                const std::vector<DescriptorRecord>& gallery,
                                bool cosine = false);

// Cross-camera protocol: per query, gallery entries with the same identity
// AND the same camera are excluded from ranking (this removes self-matches
// when gallery == query). Distance ties break by gallery index ascending.
// CMC@k is the fraction of valid queries whose first correct match ranks
// <= k; AP averages precision at each correct match's rank; mAP averages AP
// over queries with at least one valid match.
EvalReport evaluate(const std::vector<DescriptorRecord>& queries,
                    const std::vector<DescriptorRecord>& gallery,
                    const EvalProtocol& protocol = {});

// "rank,k,value" rows for the requested ranks, then "mAP,<value>".
std::string report_csv(const EvalReport& report);
// human-readable table
std::string report_table(const EvalReport& report);

}  // namespace frid

#endif  // FRID_EVALUATION_HPP_
