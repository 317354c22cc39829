#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "msrpb/conv.hpp"
#include "msrpb/tensor.hpp"

namespace msrpb::autodiff {

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Single-use reverse-mode tape. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted; backward() walks it in reverse.
///
/// Parameter leaves carry a pointer to a gradient sink that backward() adds
/// into, which lets one parameter struct collect gradients from many tapes.
class Graph {
public:
  using Backward = std::function<void(Graph &, const Tensor &grad_out)>;

  Var constant(Tensor value);
  Var leaf(const Tensor &value, Tensor *grad_sink);
  Var record(Tensor value, const std::vector<Var> &parents, Backward backward);

  const Tensor &value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient reaching `v` during the last backward(); empty when none did.
  const Tensor &grad(Var v) const { return nodes_.at(v.id).grad; }

  void accumulate(Var v, const Tensor &g);
  void accumulate(Var v, Tensor &&g);

  void backward(Var output, const Tensor &seed);
  /// Joint reverse pass from several outputs with one seed each.
  void backward(const std::vector<Var> &outputs, const std::vector<Tensor> &seeds);
  /// Seeds a scalar output with 1.
  void backward(Var scalar_output);

  std::size_t size() const noexcept { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Tensor *sink = nullptr;
    Backward backward;
  };
  std::deque<Node> nodes_; // stable references to values while recording
};

/// Weight and bias leaves of one ConvKernel; the kernel supplies geometry.
struct KernelVars {
  Var weights;
  Var bias;
  const ConvKernel *kernel = nullptr;
};

/// `grad` may be null, in which case the kernel is treated as constant.
KernelVars bind(Graph &g, const ConvKernel &k, ConvKernel *grad);
Var bind(Graph &g, const Tensor &t, Tensor *grad);

Var add(Graph &g, Var a, Var b);
Var sub(Graph &g, Var a, Var b);
Var mul(Graph &g, Var a, Var b);
Var scale(Graph &g, Var a, double s);
Var sigmoid(Graph &g, Var a);
Var tanh(Graph &g, Var a);
Var softplus(Graph &g, Var a);

Var conv3(Graph &g, Var x, const KernelVars &k);
Var deconv3(Graph &g, Var x, const KernelVars &k);
Var avg_pool(Graph &g, Var x, std::size_t factor);

/// Scales channel c of a (C,T,H,W) tensor by v[c].
Var channel_scale(Graph &g, Var x, Var v);
/// (C,T,H,W) -> (C,1,H,W) slice at frame t.
Var frame(Graph &g, Var x, std::size_t t);
/// Inverse of frame(): stacks (C,1,H,W) slices along the frame axis.
Var stack_frames(Graph &g, const std::vector<Var> &frames);
Var concat_channels(Graph &g, const std::vector<Var> &parts);

/// SVT on the (H*W) x T matrix view of a (1,T,H,W) tensor; tau is a scalar var.
Var svt(Graph &g, Var x, Var tau, bool *degenerate = nullptr);
/// Row-group shrinkage on the same matrix view.
Var row_group_shrink(Graph &g, Var x, Var tau);

/// Mean squared error, returned as a shape-{1} tensor.
Var mse(Graph &g, Var pred, Var target);

} // namespace msrpb::autodiff
