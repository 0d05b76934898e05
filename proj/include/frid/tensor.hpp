#ifndef FRID_TENSOR_HPP_
#define FRID_TENSOR_HPP_

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "frid/common.hpp"

namespace frid {

// Row-major dense shape. Rank 0 (empty shape, one element) is a scalar.
using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_numel(const Shape& s) {
  Eigen::Index n = 1;
  for (Eigen::Index e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

inline std::vector<Eigen::Index> row_major_strides(const Shape& s) {
  std::vector<Eigen::Index> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Thread-local switch controlling whether ops record the backward graph.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool v) { flag() = v; }

 private:
  static bool& flag() {
    thread_local bool f = true;
    return f;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense tensor with reverse-mode autodiff. Values are immutable once an op
// has consumed the tensor; only grad buffers (and leaf parameter values,
// between steps) are written afterwards. Gradients always accumulate.
template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  struct Node {
    Shape shape;
    Storage value;
    Storage grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from_storage(std::move(shape), Storage(), requires_grad, true);
  }

  static Tensor full(Shape shape, Scalar v, bool requires_grad = false) {
    Storage data = Storage::Constant(shape_numel(shape), v);
    return from_storage(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor from_values(Shape shape, const std::vector<Scalar>& v,
                            bool requires_grad = false) {
    if (static_cast<Eigen::Index>(v.size()) != shape_numel(shape))
      throw ShapeError("tensor: " + std::to_string(v.size()) +
                       " values do not fill shape " + shape_str(shape));
    Storage data(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) data[i] = v[i];
    return from_storage(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor from_storage(Shape shape, Storage data,
                             bool requires_grad = false, bool zero = false) {
    const Eigen::Index n = shape_numel(shape);
    if (zero) data = Storage::Zero(n);
    if (data.size() != n)
      throw ShapeError("tensor: storage size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  static Tensor randn(Shape shape, std::mt19937_64& rng, Scalar stddev,
                      bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Storage data(shape_numel(shape));
    for (Eigen::Index i = 0; i < data.size(); ++i)
      data[i] = static_cast<Scalar>(dist(rng)) * stddev;
    return from_storage(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor uniform(Shape shape, std::mt19937_64& rng, Scalar lo,
                        Scalar hi, bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                static_cast<double>(hi));
    Storage data(shape_numel(shape));
    for (Eigen::Index i = 0; i < data.size(); ++i)
      data[i] = static_cast<Scalar>(dist(rng));
    return from_storage(std::move(shape), std::move(data), requires_grad);
  }

  // Graph-building constructor used by every op. Parents and the backprop
  // closure are kept only when some parent wants gradients and grad mode is
  // on; otherwise the result is a plain constant.
  static Tensor make(Shape shape, Storage value,
                     std::vector<Tensor> parents,
                     std::function<void(Node&)> backprop) {
    Tensor t = from_storage(std::move(shape), std::move(value));
    bool needs = false;
    if (GradMode::enabled()) {
      for (const Tensor& p : parents)
        if (p.requires_grad()) {
          needs = true;
          break;
        }
    }
    if (needs) {
      t.node_->requires_grad = true;
      t.node_->parents.reserve(parents.size());
      for (Tensor& p : parents) t.node_->parents.push_back(p.node_);
      t.node_->backprop = std::move(backprop);
    }
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Eigen::Index dim(int axis) const { return node_->shape.at(axis); }
  Eigen::Index size() const { return node_->value.size(); }

  const Storage& values() const { return node_->value; }
  // Leaf parameter updates only (optimizer step / checkpoint load).
  Storage& mutable_values() { return node_->value; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const {
    return node_ && node_->grad.size() == node_->value.size();
  }
  const Storage& grad() const {
    ensure_grad(*node_);
    return node_->grad;
  }
  Storage& mutable_grad() {
    ensure_grad(*node_);
    return node_->grad;
  }
  void zero_grad() {
    if (node_) node_->grad.resize(0);
  }

  Eigen::Index offset_of(const std::vector<Eigen::Index>& idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size())
      throw ShapeError("index rank " + std::to_string(idx.size()) +
                       " does not match tensor " + shape_str(s));
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= s[i])
        throw ShapeError("index out of range in " + shape_str(s));
      off = off * s[i] + idx[i];
    }
    return off;
  }

  Scalar at(const std::vector<Eigen::Index>& idx) const {
    return node_->value[offset_of(idx)];
  }
  void set_at(const std::vector<Eigen::Index>& idx, Scalar v) {
    node_->value[offset_of(idx)] = v;
  }

  std::shared_ptr<Node> node() const { return node_; }

  static Storage& ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size()) n.grad = Storage::Zero(n.value.size());
    return n.grad;
  }

 private:
  std::shared_ptr<Node> node_;
};

// Reverse-mode pass from a scalar loss. Gradients accumulate into every
// tracked node reachable from the loss; leaf grads are never overwritten.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  using Node = typename Tensor<Scalar>::Node;
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward: loss must be a defined scalar, got " +
                     (loss.defined() ? shape_str(loss.shape())
                                     : std::string("<empty>")));
  if (!loss.requires_grad()) return;

  // Iterative postorder DFS; reversing it yields a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  Tensor<Scalar>::ensure_grad(*loss.node())[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
  }
}

}  // namespace frid

#endif  // FRID_TENSOR_HPP_
