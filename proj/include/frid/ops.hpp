#ifndef FRID_OPS_HPP_
#define FRID_OPS_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "frid/tensor.hpp"

// Differentiable primitives. Free functions building the reverse-mode graph;
// shapes are validated eagerly so mismatches fail at the call site. The only
// implicit broadcast anywhere is the channel axis (attention maps); all other
// shape changes go through explicit ops.
namespace frid {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

namespace detail {

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": operand shapes differ, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops (equal shapes only).

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("add", a, b);
  return Tensor<S>::make(
      a.shape(), a.values() + b.values(), {a, b},
      [a, b](typename Tensor<S>::Node& n) {
        if (a.requires_grad()) Tensor<S>::ensure_grad(*a.node()) += n.grad;
        if (b.requires_grad()) Tensor<S>::ensure_grad(*b.node()) += n.grad;
      });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("sub", a, b);
  return Tensor<S>::make(
      a.shape(), a.values() - b.values(), {a, b},
      [a, b](typename Tensor<S>::Node& n) {
        if (a.requires_grad()) Tensor<S>::ensure_grad(*a.node()) += n.grad;
        if (b.requires_grad()) Tensor<S>::ensure_grad(*b.node()) -= n.grad;
      });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("mul", a, b);
  return Tensor<S>::make(
      a.shape(), a.values() * b.values(), {a, b},
      [a, b](typename Tensor<S>::Node& n) {
        if (a.requires_grad())
          Tensor<S>::ensure_grad(*a.node()) += n.grad * b.values();
        if (b.requires_grad())
          Tensor<S>::ensure_grad(*b.node()) += n.grad * a.values();
      });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("div", a, b);
  return Tensor<S>::make(
      a.shape(), a.values() / b.values(), {a, b},
      [a, b](typename Tensor<S>::Node& n) {
        if (a.requires_grad())
          Tensor<S>::ensure_grad(*a.node()) += n.grad / b.values();
        if (b.requires_grad())
          Tensor<S>::ensure_grad(*b.node()) -=
              n.grad * a.values() / (b.values() * b.values());
      });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops and affine-by-constant helpers.

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return Tensor<S>::make(x.shape(), -x.values(), {x},
                         [x](typename Tensor<S>::Node& n) {
                           if (x.requires_grad())
                             Tensor<S>::ensure_grad(*x.node()) -= n.grad;
                         });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  return Tensor<S>::make(x.shape(), x.values() + c, {x},
                         [x](typename Tensor<S>::Node& n) {
                           if (x.requires_grad())
                             Tensor<S>::ensure_grad(*x.node()) += n.grad;
                         });
}

template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& x, S c) {
  return Tensor<S>::make(x.shape(), x.values() * c, {x},
                         [x, c](typename Tensor<S>::Node& n) {
                           if (x.requires_grad())
                             Tensor<S>::ensure_grad(*x.node()) += n.grad * c;
                         });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return Tensor<S>::make(
      x.shape(), x.values().max(S(0)), {x},
      [x](typename Tensor<S>::Node& n) {
        if (!x.requires_grad()) return;
        Tensor<S>::ensure_grad(*x.node()) +=
            n.grad * (x.values() > S(0)).template cast<S>();
      });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  typename Tensor<S>::Storage out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S v = x.values()[i];
    out[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                       : std::exp(v) / (S(1) + std::exp(v));
  }
  Tensor<S> r = Tensor<S>::make(
      x.shape(), std::move(out), {x}, nullptr);
  if (r.requires_grad()) {
    typename Tensor<S>::Storage saved = r.values();
    r.node()->backprop = [x, saved](typename Tensor<S>::Node& n) {
      Tensor<S>::ensure_grad(*x.node()) +=
          n.grad * saved * (S(1) - saved);
    };
  }
  return r;
}

// sigmoid whose output is clamped to the largest representable values
// strictly inside (0,1); saturation at +-inf rounds to 1.0 / 0.0 under IEEE
// arithmetic, which would break the attention-map and gate contracts.
template <typename S>
Tensor<S> sigmoid_open(const Tensor<S>& x) {
  const S lo = std::numeric_limits<S>::min();
  const S hi = S(1) - std::numeric_limits<S>::epsilon() / S(2);
  typename Tensor<S>::Storage out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const S v = x.values()[i];
    const S s = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                          : std::exp(v) / (S(1) + std::exp(v));
    out[i] = std::min(hi, std::max(lo, s));
  }
  Tensor<S> r = Tensor<S>::make(x.shape(), std::move(out), {x}, nullptr);
  if (r.requires_grad()) {
    typename Tensor<S>::Storage saved = r.values();
    r.node()->backprop = [x, saved](typename Tensor<S>::Node& n) {
      Tensor<S>::ensure_grad(*x.node()) += n.grad * saved * (S(1) - saved);
    };
  }
  return r;
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  typename Tensor<S>::Storage out = x.values().exp();
  Tensor<S> r = Tensor<S>::make(x.shape(), std::move(out), {x}, nullptr);
  if (r.requires_grad()) {
    typename Tensor<S>::Storage saved = r.values();
    r.node()->backprop = [x, saved](typename Tensor<S>::Node& n) {
      Tensor<S>::ensure_grad(*x.node()) += n.grad * saved;
    };
  }
  return r;
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  return Tensor<S>::make(x.shape(), x.values().log(), {x},
                         [x](typename Tensor<S>::Node& n) {
                           if (x.requires_grad())
                             Tensor<S>::ensure_grad(*x.node()) +=
                                 n.grad / x.values();
                         });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  typename Tensor<S>::Storage out = x.values().sqrt();
  Tensor<S> r = Tensor<S>::make(x.shape(), std::move(out), {x}, nullptr);
  if (r.requires_grad()) {
    typename Tensor<S>::Storage saved = r.values();
    r.node()->backprop = [x, saved](typename Tensor<S>::Node& n) {
      Tensor<S>::ensure_grad(*x.node()) += n.grad * S(0.5) / saved;
    };
  }
  return r;
}

// Constant copy; cuts the graph.
template <typename S>
Tensor<S> detach(const Tensor<S>& x) {
  return Tensor<S>::from_storage(x.shape(), x.values());
}

// ---------------------------------------------------------------------------
// Broadcast ops. channel_scale is the one sanctioned broadcast: a T x 1 x I x J
// map applied across the channel axis of T x C x I x J features.

template <typename S>
Tensor<S> channel_scale(const Tensor<S>& features, const Tensor<S>& map) {
  if (features.rank() != 4 || map.rank() != 4 || map.dim(1) != 1 ||
      features.dim(0) != map.dim(0) || features.dim(2) != map.dim(2) ||
      features.dim(3) != map.dim(3))
    throw ShapeError("channel_scale: cannot broadcast " +
                     shape_str(map.shape()) + " over " +
                     shape_str(features.shape()));
  const Eigen::Index T = features.dim(0), C = features.dim(1);
  const Eigen::Index hw = features.dim(2) * features.dim(3);
  typename Tensor<S>::Storage out(features.size());
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index c = 0; c < C; ++c)
      out.segment((t * C + c) * hw, hw) =
          features.values().segment((t * C + c) * hw, hw) *
          map.values().segment(t * hw, hw);
  return Tensor<S>::make(
      features.shape(), std::move(out), {features, map},
      [features, map, T, C, hw](typename Tensor<S>::Node& n) {
        if (features.requires_grad()) {
          auto& g = Tensor<S>::ensure_grad(*features.node());
          for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index c = 0; c < C; ++c)
              g.segment((t * C + c) * hw, hw) +=
                  n.grad.segment((t * C + c) * hw, hw) *
                  map.values().segment(t * hw, hw);
        }
        if (map.requires_grad()) {
          auto& g = Tensor<S>::ensure_grad(*map.node());
          for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index c = 0; c < C; ++c)
              g.segment(t * hw, hw) +=
                  n.grad.segment((t * C + c) * hw, hw) *
                  features.values().segment((t * C + c) * hw, hw);
        }
      });
}

// Per-channel gates g[t,c] applied over space (squeeze-excitation).
template <typename S>
Tensor<S> spatial_scale(const Tensor<S>& features, const Tensor<S>& gates) {
  if (features.rank() != 4 || gates.rank() != 2 ||
      gates.dim(0) != features.dim(0) || gates.dim(1) != features.dim(1))
    throw ShapeError("spatial_scale: gates " + shape_str(gates.shape()) +
                     " do not match features " + shape_str(features.shape()));
  const Eigen::Index TC = features.dim(0) * features.dim(1);
  const Eigen::Index hw = features.dim(2) * features.dim(3);
  typename Tensor<S>::Storage out(features.size());
  for (Eigen::Index tc = 0; tc < TC; ++tc)
    out.segment(tc * hw, hw) =
        features.values().segment(tc * hw, hw) * gates.values()[tc];
  return Tensor<S>::make(
      features.shape(), std::move(out), {features, gates},
      [features, gates, TC, hw](typename Tensor<S>::Node& n) {
        if (features.requires_grad()) {
          auto& g = Tensor<S>::ensure_grad(*features.node());
          for (Eigen::Index tc = 0; tc < TC; ++tc)
            g.segment(tc * hw, hw) +=
                n.grad.segment(tc * hw, hw) * gates.values()[tc];
        }
        if (gates.requires_grad()) {
          auto& g = Tensor<S>::ensure_grad(*gates.node());
          for (Eigen::Index tc = 0; tc < TC; ++tc)
            g[tc] += (n.grad.segment(tc * hw, hw) *
                      features.values().segment(tc * hw, hw))
                         .sum();
        }
      });
}

// Divide by a one-element tensor (gradient flows to both operands).
template <typename S>
Tensor<S> scalar_div(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.size() != 1)
    throw ShapeError("scalar_div: divisor must have one element, got " +
                     shape_str(s.shape()));
  const S sv = s.values()[0];
  return Tensor<S>::make(
      x.shape(), x.values() / sv, {x, s},
      [x, s, sv](typename Tensor<S>::Node& n) {
        if (x.requires_grad())
          Tensor<S>::ensure_grad(*x.node()) += n.grad / sv;
        if (s.requires_grad())
          Tensor<S>::ensure_grad(*s.node())[0] -=
              (n.grad * x.values()).sum() / (sv * sv);
      });
}

// Multiply by a one-element tensor (gradient flows to both operands).
template <typename S>
Tensor<S> scalar_scale(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.size() != 1)
    throw ShapeError("scalar_scale: scale must have one element, got " +
                     shape_str(s.shape()));
  const S sv = s.values()[0];
  return Tensor<S>::make(
      x.shape(), x.values() * sv, {x, s},
      [x, s, sv](typename Tensor<S>::Node& n) {
        if (x.requires_grad())
          Tensor<S>::ensure_grad(*x.node()) += n.grad * sv;
        if (s.requires_grad())
          Tensor<S>::ensure_grad(*s.node())[0] += (n.grad * x.values()).sum();
      });
}

// ---------------------------------------------------------------------------
// Shape ops.

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  return Tensor<S>::make(std::move(shape), x.values(), {x},
                         [x](typename Tensor<S>::Node& n) {
                           if (x.requires_grad())
                             Tensor<S>::ensure_grad(*x.node()) += n.grad;
                         });
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ShapeError("concat_cols: incompatible " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  const Eigen::Index n = a.dim(0), da = a.dim(1), db = b.dim(1);
  typename Tensor<S>::Storage out(n * (da + db));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.segment(i * (da + db), da) = a.values().segment(i * da, da);
    out.segment(i * (da + db) + da, db) = b.values().segment(i * db, db);
  }
  return Tensor<S>::make(
      {n, da + db}, std::move(out), {a, b},
      [a, b, n, da, db](typename Tensor<S>::Node& g) {
        if (a.requires_grad()) {
          auto& ga = Tensor<S>::ensure_grad(*a.node());
          for (Eigen::Index i = 0; i < n; ++i)
            ga.segment(i * da, da) += g.grad.segment(i * (da + db), da);
        }
        if (b.requires_grad()) {
          auto& gb = Tensor<S>::ensure_grad(*b.node());
          for (Eigen::Index i = 0; i < n; ++i)
            gb.segment(i * db, db) += g.grad.segment(i * (da + db) + da, db);
        }
      });
}

// Rows [begin, begin+count) of a rank-2 tensor.
template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, Eigen::Index begin,
                     Eigen::Index count) {
  if (x.rank() != 2 || begin < 0 || count < 1 || begin + count > x.dim(0))
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") invalid for " +
                     shape_str(x.shape()));
  const Eigen::Index d = x.dim(1);
  typename Tensor<S>::Storage out = x.values().segment(begin * d, count * d);
  return Tensor<S>::make(
      {count, d}, std::move(out), {x},
      [x, begin, count, d](typename Tensor<S>::Node& n) {
        if (x.requires_grad())
          Tensor<S>::ensure_grad(*x.node()).segment(begin * d, count * d) +=
              n.grad;
      });
}

template <typename S>
Tensor<S> select_row(const Tensor<S>& x, Eigen::Index row) {
  Tensor<S> r = slice_rows(x, row, 1);
  return reshape(r, Shape{x.dim(1)});
}

// Stack one-element tensors into a rank-1 vector.
template <typename S>
Tensor<S> stack_scalars(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("stack_scalars: empty input");
  typename Tensor<S>::Storage out(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].size() != 1)
      throw ShapeError("stack_scalars: element " + std::to_string(i) +
                       " is not scalar: " + shape_str(parts[i].shape()));
    out[static_cast<Eigen::Index>(i)] = parts[i].values()[0];
  }
  std::vector<Tensor<S>> parents = parts;
  return Tensor<S>::make(
      {static_cast<Eigen::Index>(parts.size())}, std::move(out),
      std::move(parents), [parts](typename Tensor<S>::Node& n) {
        for (std::size_t i = 0; i < parts.size(); ++i)
          if (parts[i].requires_grad())
            Tensor<S>::ensure_grad(*parts[i].node())[0] +=
                n.grad[static_cast<Eigen::Index>(i)];
      });
}

// Stack equal-length rank-1 tensors into the rows of a rank-2 tensor.
template <typename S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  const Eigen::Index d = rows[0].size();
  typename Tensor<S>::Storage out(static_cast<Eigen::Index>(rows.size()) * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].rank() != 1 || rows[i].size() != d)
      throw ShapeError("stack_rows: row " + std::to_string(i) +
                       " has shape " + shape_str(rows[i].shape()));
    out.segment(static_cast<Eigen::Index>(i) * d, d) = rows[i].values();
  }
  std::vector<Tensor<S>> parents = rows;
  return Tensor<S>::make(
      {static_cast<Eigen::Index>(rows.size()), d}, std::move(out),
      std::move(parents), [rows, d](typename Tensor<S>::Node& n) {
        for (std::size_t i = 0; i < rows.size(); ++i)
          if (rows[i].requires_grad())
            Tensor<S>::ensure_grad(*rows[i].node()) +=
                n.grad.segment(static_cast<Eigen::Index>(i) * d, d);
      });
}

// Nearest-neighbour spatial resize of T x C x h x w features.
template <typename S>
Tensor<S> resize_nearest(const Tensor<S>& x, Eigen::Index out_h,
                         Eigen::Index out_w) {
  if (x.rank() != 4 || out_h < 1 || out_w < 1)
    throw ShapeError("resize_nearest: bad target " + std::to_string(out_h) +
                     "x" + std::to_string(out_w) + " for " +
                     shape_str(x.shape()));
  const Eigen::Index tc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<Eigen::Index> src_r(out_h), src_c(out_w);
  for (Eigen::Index i = 0; i < out_h; ++i)
    src_r[i] = std::min<Eigen::Index>(h - 1, i * h / out_h);
  for (Eigen::Index j = 0; j < out_w; ++j)
    src_c[j] = std::min<Eigen::Index>(w - 1, j * w / out_w);
  typename Tensor<S>::Storage out(tc * out_h * out_w);
  for (Eigen::Index p = 0; p < tc; ++p)
    for (Eigen::Index i = 0; i < out_h; ++i)
      for (Eigen::Index j = 0; j < out_w; ++j)
        out[(p * out_h + i) * out_w + j] =
            x.values()[(p * h + src_r[i]) * w + src_c[j]];
  return Tensor<S>::make(
      {x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x},
      [x, tc, h, w, out_h, out_w, src_r, src_c](typename Tensor<S>::Node& n) {
        if (!x.requires_grad()) return;
        auto& g = Tensor<S>::ensure_grad(*x.node());
        for (Eigen::Index p = 0; p < tc; ++p)
          for (Eigen::Index i = 0; i < out_h; ++i)
            for (Eigen::Index j = 0; j < out_w; ++j)
              g[(p * h + src_r[i]) * w + src_c[j]] +=
                  n.grad[(p * out_h + i) * out_w + j];
      });
}

// ---------------------------------------------------------------------------
// Reductions. Axes are removed from the shape; reducing every axis yields a
// rank-0 scalar. max records argmax positions, ties going to the lowest
// linear index, and routes the gradient there.

enum class ReduceOp { Sum, Mean, Max };

template <typename S>
Tensor<S> reduce(ReduceOp op, const Tensor<S>& x, std::vector<int> axes) {
  const Shape& in_shape = x.shape();
  const int rank = x.rank();
  if (axes.empty()) throw ShapeError("reduce: no axes given");
  std::vector<bool> reduced(rank, false);
  for (int a : axes) {
    if (a < 0 || a >= rank)
      throw ShapeError("reduce: axis " + std::to_string(a) +
                       " out of range for " + shape_str(in_shape));
    if (reduced[a]) throw ShapeError("reduce: duplicate axis");
    if (in_shape[a] == 0) throw ShapeError("reduce: empty reduction axis");
    reduced[a] = true;
  }
  Shape out_shape;
  for (int i = 0; i < rank; ++i)
    if (!reduced[i]) out_shape.push_back(in_shape[i]);

  const Eigen::Index out_n = shape_numel(out_shape);
  const Eigen::Index in_n = x.size();
  Eigen::Index count = in_n / out_n;

  // Map every input linear index to its output linear index.
  const std::vector<Eigen::Index> in_strides = row_major_strides(in_shape);
  std::vector<Eigen::Index> out_stride_of_axis(rank, 0);
  {
    std::vector<Eigen::Index> out_strides = row_major_strides(out_shape);
    int k = 0;
    for (int i = 0; i < rank; ++i)
      if (!reduced[i]) out_stride_of_axis[i] = out_strides[k++];
  }
  auto out_index = [rank, in_strides, in_shape,
                    out_stride_of_axis](Eigen::Index lin) {
    Eigen::Index o = 0;
    for (int i = 0; i < rank; ++i) {
      const Eigen::Index idx = (lin / in_strides[i]) % in_shape[i];
      o += idx * out_stride_of_axis[i];
    }
    return o;
  };

  typename Tensor<S>::Storage out;
  std::vector<Eigen::Index> argmax;
  if (op == ReduceOp::Max) {
    out = Tensor<S>::Storage::Constant(out_n,
                                       -std::numeric_limits<S>::infinity());
    argmax.assign(out_n, -1);
    for (Eigen::Index i = 0; i < in_n; ++i) {
      const Eigen::Index o = out_index(i);
      if (x.values()[i] > out[o]) {
        out[o] = x.values()[i];
        argmax[o] = i;
      }
    }
  } else {
    out = Tensor<S>::Storage::Zero(out_n);
    for (Eigen::Index i = 0; i < in_n; ++i) out[out_index(i)] += x.values()[i];
    if (op == ReduceOp::Mean) out /= static_cast<S>(count);
  }

  return Tensor<S>::make(
      std::move(out_shape), std::move(out), {x},
      [x, op, count, in_n, out_index, argmax](typename Tensor<S>::Node& n) {
        if (!x.requires_grad()) return;
        auto& g = Tensor<S>::ensure_grad(*x.node());
        if (op == ReduceOp::Max) {
          for (std::size_t o = 0; o < argmax.size(); ++o)
            g[argmax[o]] += n.grad[static_cast<Eigen::Index>(o)];
        } else {
          const S scale = op == ReduceOp::Mean ? S(1) / static_cast<S>(count)
                                               : S(1);
          for (Eigen::Index i = 0; i < in_n; ++i)
            g[i] += n.grad[out_index(i)] * scale;
        }
      });
}

template <typename S>
Tensor<S> reduce_sum(const Tensor<S>& x, std::vector<int> axes) {
  return reduce(ReduceOp::Sum, x, std::move(axes));
}
template <typename S>
Tensor<S> reduce_mean(const Tensor<S>& x, std::vector<int> axes) {
  return reduce(ReduceOp::Mean, x, std::move(axes));
}
template <typename S>
Tensor<S> reduce_max(const Tensor<S>& x, std::vector<int> axes) {
  return reduce(ReduceOp::Max, x, std::move(axes));
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  std::vector<int> axes(x.rank());
  for (int i = 0; i < x.rank(); ++i) axes[i] = i;
  if (axes.empty()) return x;
  return reduce_sum(x, std::move(axes));
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation over T x C x H x W with an O x C x kh x kw kernel.
// Output spatial size floor((H + 2p - k) / s) + 1. im2col + GEMM; the column
// matrix is rebuilt in the backward pass instead of being stored.

namespace detail {

template <typename S>
void im2col(const S* in, Eigen::Index C, Eigen::Index H, Eigen::Index W,
            Eigen::Index kh, Eigen::Index kw, Eigen::Index stride,
            Eigen::Index pad, Eigen::Index OH, Eigen::Index OW,
            MatX<S>& col) {
  for (Eigen::Index oh = 0; oh < OH; ++oh)
    for (Eigen::Index ow = 0; ow < OW; ++ow) {
      S* dst = col.data() + (oh * OW + ow) * col.rows();
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index ki = 0; ki < kh; ++ki) {
          const Eigen::Index ih = oh * stride + ki - pad;
          for (Eigen::Index kj = 0; kj < kw; ++kj) {
            const Eigen::Index iw = ow * stride + kj - pad;
            *dst++ = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                         ? in[(c * H + ih) * W + iw]
                         : S(0);
          }
        }
    }
}

template <typename S>
void col2im_acc(const MatX<S>& col, S* grad, Eigen::Index C, Eigen::Index H,
                Eigen::Index W, Eigen::Index kh, Eigen::Index kw,
                Eigen::Index stride, Eigen::Index pad, Eigen::Index OH,
                Eigen::Index OW) {
  for (Eigen::Index oh = 0; oh < OH; ++oh)
    for (Eigen::Index ow = 0; ow < OW; ++ow) {
      const S* src = col.data() + (oh * OW + ow) * col.rows();
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index ki = 0; ki < kh; ++ki) {
          const Eigen::Index ih = oh * stride + ki - pad;
          for (Eigen::Index kj = 0; kj < kw; ++kj, ++src) {
            const Eigen::Index iw = ow * stride + kj - pad;
            if (ih >= 0 && ih < H && iw >= 0 && iw < W)
              grad[(c * H + ih) * W + iw] += *src;
          }
        }
    }
}

}  // namespace detail

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight,
                 const Tensor<S>& bias, int stride = 1, int padding = 0) {
  if (input.rank() != 4 || weight.rank() != 4)
    throw ShapeError("conv2d: need rank-4 input and weight, got " +
                     shape_str(input.shape()) + " and " +
                     shape_str(weight.shape()));
  const Eigen::Index T = input.dim(0), C = input.dim(1), H = input.dim(2),
                     W = input.dim(3);
  const Eigen::Index O = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != C)
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(C));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O))
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) +
                     " does not match " + std::to_string(O) + " filters");
  if (stride < 1 || padding < 0)
    throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  if (H + 2 * padding < kh || W + 2 * padding < kw)
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " exceeds padded input " +
                     shape_str(input.shape()));
  const Eigen::Index OH = (H + 2 * padding - kh) / stride + 1;
  const Eigen::Index OW = (W + 2 * padding - kw) / stride + 1;
  const Eigen::Index ckk = C * kh * kw;

  Eigen::Map<const RowMatX<S>> wmat(weight.values().data(), O, ckk);
  typename Tensor<S>::Storage out(T * O * OH * OW);
  {
    MatX<S> col(ckk, OH * OW);
    for (Eigen::Index t = 0; t < T; ++t) {
      detail::im2col(input.values().data() + t * C * H * W, C, H, W, kh, kw,
                     stride, padding, OH, OW, col);
      Eigen::Map<RowMatX<S>> y(out.data() + t * O * OH * OW, O, OH * OW);
      y.noalias() = wmat * col;
      if (bias.defined())
        y.colwise() += Eigen::Map<const VecX<S>>(bias.values().data(), O);
    }
  }

  std::vector<Tensor<S>> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor<S>::make(
      {T, O, OH, OW}, std::move(out), std::move(parents),
      [input, weight, bias, T, C, H, W, O, kh, kw, stride, padding, OH, OW,
       ckk](typename Tensor<S>::Node& n) {
        Eigen::Map<const RowMatX<S>> wmat(weight.values().data(), O, ckk);
        MatX<S> col(ckk, OH * OW);
        for (Eigen::Index t = 0; t < T; ++t) {
          Eigen::Map<const RowMatX<S>> g(n.grad.data() + t * O * OH * OW, O,
                                         OH * OW);
          if (weight.requires_grad() || input.requires_grad())
            detail::im2col(input.values().data() + t * C * H * W, C, H, W, kh,
                           kw, stride, padding, OH, OW, col);
          if (weight.requires_grad()) {
            auto& wg = Tensor<S>::ensure_grad(*weight.node());
            Eigen::Map<RowMatX<S>> wgm(wg.data(), O, ckk);
            wgm.noalias() += g * col.transpose();
          }
          if (bias.defined() && bias.requires_grad()) {
            auto& bg = Tensor<S>::ensure_grad(*bias.node());
            Eigen::Map<VecX<S>>(bg.data(), O).noalias() += g.rowwise().sum();
          }
          if (input.requires_grad()) {
            auto& ig = Tensor<S>::ensure_grad(*input.node());
            MatX<S> dcol = wmat.transpose() * g;
            detail::col2im_acc(dcol, ig.data() + t * C * H * W, C, H, W, kh,
                               kw, stride, padding, OH, OW);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// fully_connected: affine map along the last axis; leading axes are treated
// as rows. weight is Dout x Din.

template <typename S>
Tensor<S> fully_connected(const Tensor<S>& input, const Tensor<S>& weight,
                          const Tensor<S>& bias) {
  if (weight.rank() != 2)
    throw ShapeError("fully_connected: weight must be rank 2, got " +
                     shape_str(weight.shape()));
  if (input.rank() < 1)
    throw ShapeError("fully_connected: input must have at least rank 1");
  const Eigen::Index din = weight.dim(1), dout = weight.dim(0);
  if (input.shape().back() != din)
    throw ShapeError("fully_connected: input " + shape_str(input.shape()) +
                     " does not end in Din=" + std::to_string(din));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != dout))
    throw ShapeError("fully_connected: bias shape " +
                     shape_str(bias.shape()) + " does not match Dout=" +
                     std::to_string(dout));
  const Eigen::Index rows = input.size() / din;

  Eigen::Map<const RowMatX<S>> in(input.values().data(), rows, din);
  Eigen::Map<const RowMatX<S>> w(weight.values().data(), dout, din);
  typename Tensor<S>::Storage out(rows * dout);
  Eigen::Map<RowMatX<S>> y(out.data(), rows, dout);
  y.noalias() = in * w.transpose();
  if (bias.defined())
    y.rowwise() +=
        Eigen::Map<const VecX<S>>(bias.values().data(), dout).transpose();

  Shape out_shape(input.shape());
  out_shape.back() = dout;
  std::vector<Tensor<S>> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor<S>::make(
      std::move(out_shape), std::move(out), std::move(parents),
      [input, weight, bias, rows, din, dout](typename Tensor<S>::Node& n) {
        Eigen::Map<const RowMatX<S>> g(n.grad.data(), rows, dout);
        Eigen::Map<const RowMatX<S>> in(input.values().data(), rows, din);
        Eigen::Map<const RowMatX<S>> w(weight.values().data(), dout, din);
        if (input.requires_grad()) {
          auto& ig = Tensor<S>::ensure_grad(*input.node());
          Eigen::Map<RowMatX<S>>(ig.data(), rows, din).noalias() += g * w;
        }
        if (weight.requires_grad()) {
          auto& wg = Tensor<S>::ensure_grad(*weight.node());
          Eigen::Map<RowMatX<S>>(wg.data(), dout, din).noalias() +=
              g.transpose() * in;
        }
        if (bias.defined() && bias.requires_grad()) {
          auto& bg = Tensor<S>::ensure_grad(*bias.node());
          Eigen::Map<VecX<S>>(bg.data(), dout).noalias() +=
              g.colwise().sum().transpose();
        }
      });
}

// Sum of rows of a T x D matrix weighted by a length-T vector. Average
// pooling and weighted feature addition both route through this op so the
// uniform-weight case matches average pooling bit for bit.
template <typename S>
Tensor<S> weighted_rowsum(const Tensor<S>& features, const Tensor<S>& weights) {
  if (features.rank() != 2 || weights.rank() != 1 ||
      weights.dim(0) != features.dim(0))
    throw ShapeError("weighted_rowsum: " + shape_str(weights.shape()) +
                     " weights do not match features " +
                     shape_str(features.shape()));
  const Eigen::Index t = features.dim(0), d = features.dim(1);
  Eigen::Map<const RowMatX<S>> f(features.values().data(), t, d);
  Eigen::Map<const VecX<S>> w(weights.values().data(), t);
  typename Tensor<S>::Storage out(d);
  Eigen::Map<VecX<S>>(out.data(), d).noalias() = f.transpose() * w;
  return Tensor<S>::make(
      {d}, std::move(out), {features, weights},
      [features, weights, t, d](typename Tensor<S>::Node& n) {
        Eigen::Map<const VecX<S>> g(n.grad.data(), d);
        if (features.requires_grad()) {
          auto& fg = Tensor<S>::ensure_grad(*features.node());
          Eigen::Map<const VecX<S>> w(weights.values().data(), t);
          Eigen::Map<RowMatX<S>>(fg.data(), t, d).noalias() +=
              w * g.transpose();
        }
        if (weights.requires_grad()) {
          auto& wg = Tensor<S>::ensure_grad(*weights.node());
          Eigen::Map<const RowMatX<S>> f(features.values().data(), t, d);
          Eigen::Map<VecX<S>>(wg.data(), t).noalias() += f * g;
        }
      });
}

// ---------------------------------------------------------------------------
// softmax over a rank-1 tensor (max-shifted for stability; the shift is a
// constant, which leaves both value and gradient exact).

template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
  if (x.rank() != 1)
    throw ShapeError("softmax: expected rank-1 input, got " +
                     shape_str(x.shape()));
  const S m = x.values().maxCoeff();
  typename Tensor<S>::Storage e = (x.values() - m).exp();
  typename Tensor<S>::Storage out = e / e.sum();
  Tensor<S> r = Tensor<S>::make(x.shape(), std::move(out), {x}, nullptr);
  if (r.requires_grad()) {
    typename Tensor<S>::Storage saved = r.values();
    r.node()->backprop = [x, saved](typename Tensor<S>::Node& n) {
      const S dot = (n.grad * saved).sum();
      Tensor<S>::ensure_grad(*x.node()) += saved * (n.grad - dot);
    };
  }
  return r;
}

// Mean over rows of -log softmax(logits)[label]; the logistic identity loss.
template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits,
                                const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ShapeError("softmax_cross_entropy: logits must be rank 2, got " +
                     shape_str(logits.shape()));
  const Eigen::Index b = logits.dim(0), k = logits.dim(1);
  if (static_cast<Eigen::Index>(labels.size()) != b)
    throw ShapeError("softmax_cross_entropy: " +
                     std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  for (int l : labels)
    if (l < 0 || l >= k)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(l) +
                       " out of range [0," + std::to_string(k) + ")");
  S loss = S(0);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto row = logits.values().segment(i * k, k);
    const S m = row.maxCoeff();
    const S lse = std::log((row - m).exp().sum()) + m;
    loss += lse - row[labels[i]];
  }
  loss /= static_cast<S>(b);
  typename Tensor<S>::Storage out(1);
  out[0] = loss;
  return Tensor<S>::make(
      Shape{}, std::move(out), {logits},
      [logits, labels, b, k](typename Tensor<S>::Node& n) {
        if (!logits.requires_grad()) return;
        auto& g = Tensor<S>::ensure_grad(*logits.node());
        const S go = n.grad[0] / static_cast<S>(b);
        for (Eigen::Index i = 0; i < b; ++i) {
          const auto row = logits.values().segment(i * k, k);
          const S m = row.maxCoeff();
          typename Tensor<S>::Storage e = (row - m).exp();
          e /= e.sum();
          g.segment(i * k, k) += e * go;
          g[i * k + labels[i]] -= go;
        }
      });
}

}  // namespace frid

#endif  // FRID_OPS_HPP_
