#include "msrpb/unroll.hpp"

#include <cmath>
#include <random>

#include "msrpb/errors.hpp"

namespace msrpb::unroll {

namespace ad = autodiff;

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

ConvKernel scaled_impulse(Extent3 size, double gain) {
  ConvKernel k = ConvKernel::same(1, 1, size);
  k.weights[(size.t / 2 * size.h + size.h / 2) * size.w + size.w / 2] = gain;
  return k;
}

ConvKernel zeros_like(const ConvKernel &k) {
  ConvKernel z = k;
  z.weights.fill(0.0);
  z.bias.fill(0.0);
  return z;
}

} // namespace

double LayerParams::lambda1() const { return softplus(lam1_raw[0]); }
double LayerParams::lambda2() const { return softplus(lam2_raw[0]); }

LayerParams zeros_like(const LayerParams &p) {
  LayerParams z;
  for (std::size_t i = 0; i < p.p.size(); ++i)
    z.p[i] = zeros_like(p.p[i]);
  return z;
}

StackParams zeros_like(const StackParams &p) {
  StackParams z;
  for (const auto &l : p.layers)
    z.layers.push_back(zeros_like(l));
  return z;
}

double softplus_inverse(double y) {
  if (!(y > 0.0))
    throw ContractError("softplus_inverse needs a positive value");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

LayerParams ista_equivalent_layer(Extent3 size, double lambda1, double lambda2, double lipschitz) {
  if (size.t % 2 == 0 || size.h % 2 == 0 || size.w % 2 == 0)
    throw ConfigError("unrolled kernels need odd extents");
  const double step = 1.0 / lipschitz;
  LayerParams p;
  p.p[0] = scaled_impulse(size, step);        // P1: D -> L
  p.p[1] = scaled_impulse(size, step);        // P2: D -> S
  p.p[2] = scaled_impulse(size, -step);       // P3: S -> L
  p.p[3] = scaled_impulse(size, -step);       // P4: L -> S
  p.p[4] = scaled_impulse(size, 1.0 - step);  // P5: L -> L
  p.p[5] = scaled_impulse(size, 1.0 - step);  // P6: S -> S
  p.lam1_raw[0] = softplus_inverse(lambda1 * step);
  p.lam2_raw[0] = softplus_inverse(lambda2 * step);
  return p;
}

StackParams init_stack(const StackInit &init) {
  StackParams s;
  std::mt19937_64 rng(init.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Extent3 size : init.kernel_sizes) {
    LayerParams layer = ista_equivalent_layer(size, init.lambda1, init.lambda2, init.lipschitz);
    if (init.perturbation > 0.0)
      for (auto &k : layer.p)
        for (double &w : k.weights.values())
          w += init.perturbation * noise(rng);
    s.layers.push_back(std::move(layer));
  }
  return s;
}

Pair layer(ad::Graph &g, Pair in, ad::Var D, const LayerParams &p, LayerParams *grad, bool *degenerate) {
  std::array<ad::KernelVars, 6> k;
  for (std::size_t i = 0; i < 6; ++i)
    k[i] = ad::bind(g, p.p[i], grad ? &grad->p[i] : nullptr);
  const ad::Var lam1 = ad::softplus(g, ad::bind(g, p.lam1_raw, grad ? &grad->lam1_raw : nullptr));
  const ad::Var lam2 = ad::softplus(g, ad::bind(g, p.lam2_raw, grad ? &grad->lam2_raw : nullptr));

  const ad::Var pre_L =
      ad::add(g, ad::add(g, ad::conv3(g, in.L, k[4]), ad::conv3(g, in.S, k[2])), ad::conv3(g, D, k[0]));
  const ad::Var pre_S =
      ad::add(g, ad::add(g, ad::conv3(g, in.S, k[5]), ad::conv3(g, in.L, k[3])), ad::conv3(g, D, k[1]));
  return {ad::svt(g, pre_L, lam1, degenerate), ad::row_group_shrink(g, pre_S, lam2)};
}

std::vector<Pair> forward(ad::Graph &g, ad::Var D, const StackParams &p, StackParams *grad, bool *degenerate) {
  const Tensor &d = g.value(D);
  if (d.rank() != 4 || d.dim(0) != 1)
    throw ContractError("unrolled forward expects a (1,T,H,W) patch, got " + shape_string(d.shape()));
  if (grad && grad->layers.size() != p.layers.size())
    throw ContractError("gradient stack does not match parameter stack");
  const auto shape = d.shape();
  std::vector<Pair> iterates;
  Pair state{g.constant(Tensor(shape)), g.constant(Tensor(shape))};
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    state = layer(g, state, D, p.layers[k], grad ? &grad->layers[k] : nullptr, degenerate);
    iterates.push_back(state);
  }
  if (iterates.empty())
    iterates.push_back(state);
  return iterates;
}

namespace {

Decomposition collect(const ad::Graph &g, const std::vector<Pair> &iterates, bool degenerate, bool empty_stack) {
  Decomposition out;
  out.L = g.value(iterates.back().L);
  out.S = g.value(iterates.back().S);
  if (!empty_stack)
    for (const Pair &it : iterates) {
      out.L_iterates.push_back(g.value(it.L));
      out.S_iterates.push_back(g.value(it.S));
    }
  out.degenerate = degenerate;
  return out;
}

} // namespace

Decomposition unrolled_forward(const Tensor &D, const StackParams &p) {
  ad::Graph g;
  bool degenerate = false;
  const ad::Var d = g.constant(D);
  const auto iterates = forward(g, d, p, nullptr, &degenerate);
  return collect(g, iterates, degenerate, p.layers.empty());
}

Decomposition unrolled_forward(const Tensor &D, const StackParams &p, Cache &cache) {
  cache.graph = ad::Graph();
  cache.grads = zeros_like(p);
  cache.degenerate = false;
  cache.grad_D = Tensor();
  cache.D = cache.graph.leaf(D, &cache.grad_D);
  const auto iterates = forward(cache.graph, cache.D, p, &cache.grads, &cache.degenerate);
  cache.out = iterates.back();
  return collect(cache.graph, iterates, cache.degenerate, p.layers.empty());
}

Gradients unrolled_backward(Cache &cache, const Tensor &grad_L, const Tensor &grad_S) {
  Gradients out;
  // Zero in place: the tape holds pointers into these tensors.
  visit_stack(cache.grads, "", [](const std::string &, Tensor &t) { t.fill(0.0); });
  std::vector<ad::Var> outs;
  std::vector<Tensor> seeds;
  if (cache.graph.requires_grad(cache.out.L)) {
    outs.push_back(cache.out.L);
    seeds.push_back(grad_L);
  }
  if (cache.graph.requires_grad(cache.out.S)) {
    outs.push_back(cache.out.S);
    seeds.push_back(grad_S);
  }
  cache.grad_D = Tensor::like(cache.graph.value(cache.D));
  if (!outs.empty())
    cache.graph.backward(outs, seeds);
  out.D = cache.grad_D;
  out.params = cache.grads;
  out.degenerate = cache.degenerate;
  return out;
}

} // namespace msrpb::unroll
