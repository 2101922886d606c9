#pragma once

#include "tensor.hpp"

#include <deque>
#include <functional>
#include <vector>

namespace unrollkit::nn {

struct Var
{
  int id = -1;
};

/* Tape of tensor-valued nodes. Nodes are appended in evaluation order, so
 * reverse creation order is a valid topological order for backpropagation.
 * Gradients are allocated lazily and only flow into nodes that require them.
 */
template <typename Scalar>
class Graph
{
public:
  using T = Tensor<Scalar>;
  using Backward = std::function<void(Graph &, Var)>;

  Var constant(T value) { return push(std::move(value), false, nullptr); }
  Var parameter(T value) { return push(std::move(value), true, nullptr); }

  // Output of an op: requires grad iff any input does.
  Var record(T value, std::initializer_list<Var> inputs, Backward backward)
  {
    bool any = false;
    for (auto const v : inputs) {
      any = any || requires_grad(v);
    }
    return push(std::move(value), any, any ? std::move(backward) : nullptr);
  }
  Var record(T value, std::vector<Var> const &inputs, Backward backward)
  {
    bool any = false;
    for (auto const v : inputs) {
      any = any || requires_grad(v);
    }
    return push(std::move(value), any, any ? std::move(backward) : nullptr);
  }

  T const &value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return nodes_.at(v.id).grad.size() > 0; }

  T &grad(Var v)
  {
    Node &n = nodes_.at(v.id);
    if (n.grad.size() == 0) {
      n.grad = T(n.value.shape());
    }
    return n.grad;
  }

  void backward(Var root)
  {
    if (value(root).size() != 1) {
      throw Error("backward: root must be a scalar");
    }
    if (!requires_grad(root)) {
      return;
    }
    grad(root)[0] = Scalar(1);
    for (int id = root.id; id >= 0; id--) {
      Node &n = nodes_[id];
      if (n.backward && n.grad.size() > 0) {
        n.backward(*this, Var{id});
      }
    }
  }

  Index size() const { return static_cast<Index>(nodes_.size()); }

private:
  struct Node
  {
    T value;
    T grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(T value, bool requires_grad, Backward backward)
  {
    nodes_.push_back(Node{std::move(value), T(), requires_grad, std::move(backward)});
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  std::deque<Node> nodes_;
};

// Elementwise, equal shapes.
template <typename S> Var add(Graph<S> &g, Var a, Var b);
template <typename S> Var sub(Graph<S> &g, Var a, Var b);
template <typename S> Var mul(Graph<S> &g, Var a, Var b);
template <typename S> Var div(Graph<S> &g, Var a, Var b);
template <typename S> Var scale(Graph<S> &g, Var a, S c);
template <typename S> Var add_scalar(Graph<S> &g, Var a, S c);
template <typename S> Var square(Graph<S> &g, Var a);
template <typename S> Var exp(Graph<S> &g, Var a);
template <typename S> Var relu(Graph<S> &g, Var a);
template <typename S> Var sum(Graph<S> &g, Var a);
template <typename S> Var mean(Graph<S> &g, Var a);

// Axis-0 (channel) bookkeeping; all inputs share the trailing extents.
template <typename S> Var concat_channels(Graph<S> &g, std::vector<Var> const &xs);
template <typename S> Var slice_channels(Graph<S> &g, Var x, Index begin, Index count);
template <typename S> Var reshape(Graph<S> &g, Var x, Shape shape);

/* Spatial cross-correlation per frame: x [Ci, T, X, Y], w [Co, Ci, kh, kw],
 * b [Co], zero padding. Lowered to im2col + GEMM.
 */
template <typename S> Var conv2d(Graph<S> &g, Var x, Var w, Var b, Index stride = 1, Index pad = 0);

/* Temporal cross-correlation with circular padding: x [Ci, T, X, Y],
 * w [Co, Ci, k], b [Co]; tap j reads frame (t + j - k/2) mod T.
 */
template <typename S> Var conv1d_t(Graph<S> &g, Var x, Var w, Var b);

// 2x2 average pool / nearest-neighbour upsampling over the last two axes.
template <typename S> Var downsample2x(Graph<S> &g, Var x);
template <typename S> Var upsample2x(Graph<S> &g, Var x);

// Circular shift of the last two axes by (dx, dy).
template <typename S> Var circ_shift2d(Graph<S> &g, Var x, Index dx, Index dy);

// Prompt machinery.
template <typename S> Var matvec(Graph<S> &g, Var w, Var v);
template <typename S> Var softmax(Graph<S> &g, Var v);
template <typename S> Var weighted_sum(Graph<S> &g, Var bank, Var weights);
template <typename S> Var resize_bilinear(Graph<S> &g, Var p, Index nx, Index ny);
template <typename S> Var broadcast_t(Graph<S> &g, Var p, Index nt);
template <typename S> Var table_row(Graph<S> &g, Var table, Index row);

// sqrt(re^2 + im^2 + eps) of a two-channel tensor [2, ...] -> [...].
template <typename S> Var complex_abs(Graph<S> &g, Var x, S eps);

/* Boundary-normalised Gaussian filter over the last two axes: each output is
 * the weighted mean of the in-bounds neighbours within `radius`.
 */
template <typename S> Var gaussian_blur(Graph<S> &g, Var x, double sigma, Index radius);

template <typename S>
void blur_planes(S const *in, S *out, Index planes, Index nx, Index ny, double sigma, Index radius, bool transpose);

} // namespace unrollkit::nn
