#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "msrpb/autodiff.hpp"
#include "msrpb/conv.hpp"
#include "msrpb/tensor.hpp"

namespace msrpb::clstm {

/// Convolutional LSTM cell with Hadamard peepholes:
///   f = sigmoid(W_f*x + U_f*h + V_f.c + b_f)     (likewise i, o)
///   c = f.c_prev + i.tanh(W_c*x + U_c*h + b_c)
///   h = o.tanh(c)
/// b_x is the bias of W_x; the U kernels carry no bias. Peephole weights are
/// one scalar per channel so the cell does not depend on the patch size.
struct CLSTMParams {
  ConvKernel W_f, W_i, W_o, W_c;
  ConvKernel U_f, U_i, U_o, U_c;
  Tensor V_f, V_i, V_o;

  std::size_t channels() const { return W_f.out_channels(); }
  std::size_t input_channels() const { return W_f.in_channels(); }
};

/// Feature maps are per-frame (C, 1, H, W) tensors.
struct CLSTMState {
  Tensor h;
  Tensor c;
};

struct Gates {
  Tensor f, i, o, g; ///< g is the candidate tanh(W_c*x + U_c*h + b_c)
};

/// Zero-initialised parameters with `size` kernels (odd spatial extents).
CLSTMParams make_clstm(std::size_t input_channels, std::size_t channels, Extent3 size = {1, 3, 3});
CLSTMState zero_state(std::size_t channels, std::size_t height, std::size_t width);

/// Up-projection p, down-projection g and residual up-projection q:
///   H0 = p^T(h), e = g(H0) - h, H = H0 + q^T(e)
struct BPParams {
  ConvKernel p; ///< transposed, stride `scale`
  ConvKernel g; ///< ordinary, stride `scale`
  ConvKernel q; ///< transposed, stride `scale`
  std::size_t scale = 2;
};

/// kernel = 3*scale, padding = scale so the output is exactly scale x larger.
BPParams make_bp(std::size_t channels, std::size_t scale = 2);

/// Refinement head applied frame by frame to a (1,T,h,w) sparse layer:
/// feature conv -> CLSTM -> backprojection stages -> output conv.
struct HeadParams {
  ConvKernel feature;
  CLSTMParams clstm;
  std::vector<BPParams> bp;
  ConvKernel output;

  std::size_t upscale() const;
};

struct HeadInit {
  std::size_t channels = 8;
  std::size_t bp_stages = 1;
  double perturbation = 1e-2;
  std::uint64_t seed = 1;
};

/// Near pass-through initialisation: channel 0 carries the input through the
/// feature conv, the cell (forget gate mostly closed, input and output gates
/// mostly open), bilinear iterative back-projection and the output conv; every weight
/// then receives N(0, perturbation^2) noise.
HeadParams init_head(const HeadInit &init);

HeadParams zeros_like(const HeadParams &p);

template <class Cell, class F> void visit(Cell &c, const std::string &prefix, F &&f) {
  auto kernel = [&](const std::string &name, auto &k) {
    f(prefix + name + ".weights", k.weights);
    if (!k.bias.empty())
      f(prefix + name + ".bias", k.bias);
  };
  kernel("W_f", c.W_f);
  kernel("W_i", c.W_i);
  kernel("W_o", c.W_o);
  kernel("W_c", c.W_c);
  kernel("U_f", c.U_f);
  kernel("U_i", c.U_i);
  kernel("U_o", c.U_o);
  kernel("U_c", c.U_c);
  f(prefix + "V_f", c.V_f);
  f(prefix + "V_i", c.V_i);
  f(prefix + "V_o", c.V_o);
}

template <class BP, class F> void visit_bp(BP &b, const std::string &prefix, F &&f) {
  f(prefix + "p.weights", b.p.weights);
  f(prefix + "p.bias", b.p.bias);
  f(prefix + "g.weights", b.g.weights);
  f(prefix + "g.bias", b.g.bias);
  f(prefix + "q.weights", b.q.weights);
  f(prefix + "q.bias", b.q.bias);
}

template <class Head, class F> void visit_head(Head &h, const std::string &prefix, F &&f) {
  f(prefix + "feature.weights", h.feature.weights);
  f(prefix + "feature.bias", h.feature.bias);
  visit(h.clstm, prefix + "clstm.", f);
  for (std::size_t k = 0; k < h.bp.size(); ++k)
    visit_bp(h.bp[k], prefix + "bp" + std::to_string(k) + ".", f);
  f(prefix + "output.weights", h.output.weights);
  f(prefix + "output.bias", h.output.bias);
}

// Tape-level building blocks. Parameters are bound once per sequence so the
// same leaves collect gradients from every frame.

struct BoundCLSTM {
  std::array<autodiff::KernelVars, 4> W; ///< f, i, o, c
  std::array<autodiff::KernelVars, 4> U;
  std::array<autodiff::Var, 3> V;        ///< f, i, o
};

struct BoundBP {
  autodiff::KernelVars p, g, q;
};

struct BoundHead {
  autodiff::KernelVars feature;
  BoundCLSTM clstm;
  std::vector<BoundBP> bp;
  autodiff::KernelVars output;
};

BoundCLSTM bind(autodiff::Graph &g, const CLSTMParams &p, CLSTMParams *grad);
BoundBP bind(autodiff::Graph &g, const BPParams &p, BPParams *grad);
BoundHead bind(autodiff::Graph &g, const HeadParams &p, HeadParams *grad);

struct StateVars {
  autodiff::Var h;
  autodiff::Var c;
};

struct GateVars {
  autodiff::Var f, i, o, g;
};

StateVars step(autodiff::Graph &g, autodiff::Var x, StateVars prev, const BoundCLSTM &p, GateVars *gates = nullptr);
autodiff::Var backproject(autodiff::Graph &g, autodiff::Var h, const BoundBP &p);
/// (1,T,h,w) -> (1,T,h*u,w*u) with u = upscale(); state starts at zero.
autodiff::Var sr_head(autodiff::Graph &g, autodiff::Var sequence, const BoundHead &p);

// Plain-tensor wrappers.

struct StepResult {
  Tensor h;
  CLSTMState state;
  Gates gates;
};

StepResult clstm_step(const Tensor &x, const CLSTMState &state, const CLSTMParams &p);
Tensor backproject(const Tensor &h, const BPParams &p);
Tensor sr_head(const Tensor &sequence, const HeadParams &p);

} // namespace msrpb::clstm
