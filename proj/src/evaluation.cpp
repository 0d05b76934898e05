#include "frid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace frid {

Eigen::MatrixXd distance_matrix(const std::vector<DescriptorRecord>& queries,
                                const std::vector<DescriptorRecord>& gallery,
                                bool cosine) {
  const Eigen::Index q = static_cast<Eigen::Index>(queries.size());
  const Eigen::Index g = static_cast<Eigen::Index>(gallery.size());
  Eigen::MatrixXd d(q, g);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Eigen::VectorXd& a = queries[static_cast<std::size_t>(i)].values;
    for (Eigen::Index j = 0; j < g; ++j) {
      const Eigen::VectorXd& b = gallery[static_cast<std::size_t>(j)].values;
      if (a.size() != b.size())
        throw ShapeError("distance_matrix: descriptor dims differ: " +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
      if (cosine) {
        const double na = a.norm(), nb = b.norm();
        const double sim = (na < 1e-12 || nb < 1e-12)
                               ? 0.0
                               : a.dot(b) / (na * nb);
        d(i, j) = 1.0 - sim;
      } else {
        d(i, j) = (a - b).norm();
      }
    }
  }
  return d;
}

EvalReport evaluate(const std::vector<DescriptorRecord>& queries,
                    const std::vector<DescriptorRecord>& gallery,
                    const EvalProtocol& protocol) {
  EvalReport report;
  {
    std::set<int> uniq(protocol.ranks.begin(), protocol.ranks.end());
    for (int k : uniq)
      if (k >= 1) report.ranks.push_back(k);
    if (report.ranks.empty()) report.ranks = {1};
  }
  const int max_rank =
      std::max(report.ranks.back(),
               std::max(1, static_cast<int>(gallery.size())));
  report.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);

  const Eigen::MatrixXd dist = distance_matrix(queries, gallery,
                                               protocol.cosine);
  double ap_sum = 0.0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const DescriptorRecord& q = queries[qi];
    // rank all gallery entries except same-identity same-camera ones
    std::vector<std::pair<double, int>> order;
    bool any_correct = false;
    for (std::size_t gi = 0; gi < gallery.size(); ++gi) {
      const DescriptorRecord& g = gallery[gi];
      if (g.identity == q.identity && g.camera == q.camera) continue;
      order.emplace_back(dist(static_cast<Eigen::Index>(qi),
                              static_cast<Eigen::Index>(gi)),
                         static_cast<int>(gi));
      any_correct = any_correct || g.identity == q.identity;
    }
    if (order.empty() || !any_correct) {
      ++report.excluded_queries;
      continue;
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first < b.first;
                return a.second < b.second;
              });
    ++report.num_queries;

    int first_correct = -1;
    int num_correct = 0;
    double ap = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const DescriptorRecord& g =
          gallery[static_cast<std::size_t>(order[r].second)];
      if (g.identity == q.identity) {
        ++num_correct;
        ap += static_cast<double>(num_correct) / static_cast<double>(r + 1);
        if (first_correct < 0) first_correct = static_cast<int>(r) + 1;
      }
    }
    ap /= num_correct;
    ap_sum += ap;
    for (int k = first_correct; k <= max_rank; ++k)
      report.cmc[static_cast<std::size_t>(k - 1)] += 1.0;
  }

  if (report.num_queries > 0) {
    for (double& v : report.cmc) v /= report.num_queries;
    report.map = ap_sum / report.num_queries;
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  for (int k : report.ranks) os << "rank," << k << "," << report.cmc_at(k)
                                << "\n";
  os << "mAP," << report.map << "\n";
  return os.str();
}

std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed;
  os << "queries: " << report.num_queries
     << "  excluded: " << report.excluded_queries << "\n";
  for (int k : report.ranks)
    os << "  rank-" << k << "  " << 100.0 * report.cmc_at(k) << "%\n";
  os << "  mAP     " << 100.0 * report.map << "%\n";
  return os.str();
}

}  // namespace frid
