#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "msrpb/autodiff.hpp"
#include "msrpb/conv.hpp"
#include "msrpb/tensor.hpp"

namespace msrpb::unroll {

/// One learned iteration. Kernel p[i] is P_{i+1}:
///   L+ = svt(P5*L + P3*S + P1*D, softplus(lam1_raw))
///   S+ = row_group_shrink(P6*S + P4*L + P2*D, softplus(lam2_raw))
/// All kernels are single-channel, stride 1, shape preserving.
struct LayerParams {
  std::array<ConvKernel, 6> p;
  Tensor lam1_raw{1};
  Tensor lam2_raw{1};

  double lambda1() const;
  double lambda2() const;
};

struct StackParams {
  std::vector<LayerParams> layers;
};

/// Zero-valued copy with identical shapes (gradient accumulators).
LayerParams zeros_like(const LayerParams &p);
StackParams zeros_like(const StackParams &p);

/// Inverse of softplus, for setting thresholds directly.
double softplus_inverse(double y);

/// Kernels that make the layer one exact ISTA step with step 1/lipschitz and
/// thresholds lambda/lipschitz.
LayerParams ista_equivalent_layer(Extent3 size, double lambda1, double lambda2, double lipschitz);

struct StackInit {
  std::vector<Extent3> kernel_sizes{{5, 5, 5}, {5, 5, 5}, {3, 3, 3}, {3, 3, 3}};
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  double lipschitz = 2.0;
  double perturbation = 1e-2; ///< std of the Gaussian added to every weight
  std::uint64_t seed = 1;
};

StackParams init_stack(const StackInit &init);

/// Calls f(name, tensor) for every learnable tensor in a fixed order.
template <class Layer, class F> void visit(Layer &layer, const std::string &prefix, F &&f) {
  for (std::size_t i = 0; i < layer.p.size(); ++i) {
    const std::string k = prefix + "p" + std::to_string(i + 1) + ".";
    f(k + "weights", layer.p[i].weights);
    f(k + "bias", layer.p[i].bias);
  }
  f(prefix + "lam1_raw", layer.lam1_raw);
  f(prefix + "lam2_raw", layer.lam2_raw);
}

template <class Stack, class F> void visit_stack(Stack &stack, const std::string &prefix, F &&f) {
  for (std::size_t k = 0; k < stack.layers.size(); ++k)
    visit(stack.layers[k], prefix + "layer" + std::to_string(k) + ".", f);
}

struct Pair {
  autodiff::Var L;
  autodiff::Var S;
};

/// Records one layer on the tape. With `grad` null the parameters are
/// constants. `degenerate` is set when the SVT meets a near-repeated
/// singular value.
Pair layer(autodiff::Graph &g, Pair in, autodiff::Var D, const LayerParams &p, LayerParams *grad,
           bool *degenerate = nullptr);

/// K layers from L = S = 0. Returns every iterate, the last being the output;
/// an empty stack yields a single zero pair.
std::vector<Pair> forward(autodiff::Graph &g, autodiff::Var D, const StackParams &p, StackParams *grad,
                          bool *degenerate = nullptr);

struct Decomposition {
  Tensor L;
  Tensor S;
  std::vector<Tensor> L_iterates; ///< after each layer
  std::vector<Tensor> S_iterates;
  bool degenerate = false;
};

/// Inference-only convenience wrapper around forward().
Decomposition unrolled_forward(const Tensor &D, const StackParams &p);

/// Forward state retained for the reverse pass.
struct Cache {
  autodiff::Graph graph;
  autodiff::Var D;
  Tensor grad_D;
  Pair out;
  StackParams grads;
  bool degenerate = false;
};

Decomposition unrolled_forward(const Tensor &D, const StackParams &p, Cache &cache);

struct Gradients {
  Tensor D;
  StackParams params;
  bool degenerate = false;
};

/// Vector-Jacobian product of the cached forward pass for upstream gradients
/// on the final (L, S).
Gradients unrolled_backward(Cache &cache, const Tensor &grad_L, const Tensor &grad_S);

} // namespace msrpb::unroll
