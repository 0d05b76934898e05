#ifndef FRID_OPTIM_HPP_
#define FRID_OPTIM_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "frid/tensor.hpp"

namespace frid {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// ADAM with bias correction. Moment buffers follow parameter registration
// order; steps are single-writer.
template <typename S>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long step_count() const { return t_; }

  void step(std::vector<std::pair<std::string, Tensor<S>>>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = Storage::Zero(params[i].second.size());
        v_[i] = Storage::Zero(params[i].second.size());
      }
    }
    if (m_.size() != params.size())
      throw UsageError("adam: parameter set changed between steps");
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S corr1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, t_));
    const S corr2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<S>& p = params[i].second;
      const Storage g = p.has_grad() ? p.grad() : Storage::Zero(p.size());
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g * g;
      const Storage mhat = m_[i] / corr1;
      const Storage vhat = v_[i] / corr2;
      p.mutable_values() -=
          static_cast<S>(cfg_.lr) * mhat /
          (vhat.sqrt() + static_cast<S>(cfg_.eps));
    }
  }

 private:
  using Storage = typename Tensor<S>::Storage;
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Storage> m_, v_;
};

}  // namespace frid

#endif  // FRID_OPTIM_HPP_
