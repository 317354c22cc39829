#include "msrpb/clstm.hpp"

#include <algorithm>
#include <random>

#include "msrpb/errors.hpp"

namespace msrpb::clstm {

namespace ad = autodiff;

CLSTMParams make_clstm(std::size_t input_channels, std::size_t channels, Extent3 size) {
  if (channels == 0 || input_channels == 0)
    throw ConfigError("CLSTM channel counts must be positive");
  CLSTMParams p;
  for (ConvKernel *k : {&p.W_f, &p.W_i, &p.W_o, &p.W_c})
    *k = ConvKernel::same(channels, input_channels, size);
  for (ConvKernel *k : {&p.U_f, &p.U_i, &p.U_o, &p.U_c}) {
    *k = ConvKernel::same(channels, channels, size);
    k->bias = Tensor();
  }
  p.V_f = Tensor({channels});
  p.V_i = Tensor({channels});
  p.V_o = Tensor({channels});
  return p;
}

CLSTMState zero_state(std::size_t channels, std::size_t height, std::size_t width) {
  return {Tensor({channels, 1, height, width}), Tensor({channels, 1, height, width})};
}

BPParams make_bp(std::size_t channels, std::size_t scale) {
  if (scale < 2)
    throw ConfigError("backprojection scale must be at least 2");
  const Extent3 size{1, 3 * scale, 3 * scale};
  const Extent3 stride{1, scale, scale};
  const Extent3 pad{0, scale, scale};
  BPParams b;
  b.p = ConvKernel::make_transposed(channels, channels, size, stride, pad);
  b.g = ConvKernel::make(channels, channels, size, stride, pad);
  b.q = ConvKernel::make_transposed(channels, channels, size, stride, pad);
  b.scale = scale;
  return b;
}

std::size_t HeadParams::upscale() const {
  std::size_t u = 1;
  for (const auto &b : bp)
    u *= b.scale;
  return u;
}

namespace {

void set_tap(ConvKernel &k, std::size_t a, std::size_t b, std::size_t h, std::size_t w, double v) {
  const Extent3 s = k.size();
  const std::size_t B = k.weights.dim(1);
  k.weights[((a * B + b) * s.t * s.h + h) * s.w + w] = v;
}

void centre_tap(ConvKernel &k, double v) { set_tap(k, 0, 0, k.size().h / 2, k.size().w / 2, v); }

// Separable linear-interpolation kernel for stride 2: taps [0, .25, .75, .75, .25, 0].
void bilinear(ConvKernel &k, double gain) {
  static const double taps[6] = {0.0, 0.25, 0.75, 0.75, 0.25, 0.0};
  if (k.size().h != 6 || k.size().w != 6)
    return;
  for (std::size_t h = 0; h < 6; ++h)
    for (std::size_t w = 0; w < 6; ++w)
      set_tap(k, 0, 0, h, w, gain * taps[h] * taps[w]);
}

} // namespace

HeadParams init_head(const HeadInit &init) {
  const std::size_t C = init.channels;
  HeadParams p;
  p.feature = ConvKernel::same(C, 1, {1, 3, 3});
  p.clstm = make_clstm(C, C);
  for (std::size_t s = 0; s < init.bp_stages; ++s)
    p.bp.push_back(make_bp(C, 2));
  p.output = ConvKernel::same(1, C, {1, 3, 3});

  std::mt19937_64 rng(init.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  visit_head(p, "", [&](const std::string &, Tensor &t) {
    for (double &v : t.values())
      v = init.perturbation * noise(rng);
  });

  centre_tap(p.feature, 1.0);
  centre_tap(p.clstm.W_c, 1.0);
  for (std::size_t c = 0; c < C; ++c) {
    p.clstm.W_f.bias[c] = -3.0;
    p.clstm.W_i.bias[c] = 3.0;
    p.clstm.W_o.bias[c] = 3.0;
  }
  for (auto &b : p.bp) {
    bilinear(b.p, 1.0);
    bilinear(b.g, 0.25);
    bilinear(b.q, -1.0); // classical back-projection: H0 + up(h - down(H0))
  }
  centre_tap(p.output, 1.0);
  return p;
}

HeadParams zeros_like(const HeadParams &p) {
  HeadParams z = p;
  visit_head(z, "", [](const std::string &, Tensor &t) { t.fill(0.0); });
  return z;
}

namespace {

ad::KernelVars bind_unbiased(ad::Graph &g, const ConvKernel &k, ConvKernel *grad) {
  ad::KernelVars kv;
  kv.kernel = &k;
  kv.weights = g.leaf(k.weights, grad ? &grad->weights : nullptr);
  kv.bias = g.constant(Tensor());
  return kv;
}

} // namespace

BoundCLSTM bind(ad::Graph &g, const CLSTMParams &p, CLSTMParams *grad) {
  BoundCLSTM b;
  const ConvKernel *W[4] = {&p.W_f, &p.W_i, &p.W_o, &p.W_c};
  const ConvKernel *U[4] = {&p.U_f, &p.U_i, &p.U_o, &p.U_c};
  ConvKernel *gW[4] = {nullptr, nullptr, nullptr, nullptr};
  ConvKernel *gU[4] = {nullptr, nullptr, nullptr, nullptr};
  if (grad) {
    ConvKernel *w[4] = {&grad->W_f, &grad->W_i, &grad->W_o, &grad->W_c};
    ConvKernel *u[4] = {&grad->U_f, &grad->U_i, &grad->U_o, &grad->U_c};
    std::copy(w, w + 4, gW);
    std::copy(u, u + 4, gU);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    b.W[k] = ad::bind(g, *W[k], gW[k]);
    b.U[k] = bind_unbiased(g, *U[k], gU[k]);
  }
  b.V[0] = ad::bind(g, p.V_f, grad ? &grad->V_f : nullptr);
  b.V[1] = ad::bind(g, p.V_i, grad ? &grad->V_i : nullptr);
  b.V[2] = ad::bind(g, p.V_o, grad ? &grad->V_o : nullptr);
  return b;
}

BoundBP bind(ad::Graph &g, const BPParams &p, BPParams *grad) {
  return {ad::bind(g, p.p, grad ? &grad->p : nullptr), ad::bind(g, p.g, grad ? &grad->g : nullptr),
          ad::bind(g, p.q, grad ? &grad->q : nullptr)};
}

BoundHead bind(ad::Graph &g, const HeadParams &p, HeadParams *grad) {
  if (grad && grad->bp.size() != p.bp.size())
    throw ContractError("gradient head does not match parameter head");
  BoundHead b;
  b.feature = ad::bind(g, p.feature, grad ? &grad->feature : nullptr);
  b.clstm = bind(g, p.clstm, grad ? &grad->clstm : nullptr);
  for (std::size_t k = 0; k < p.bp.size(); ++k)
    b.bp.push_back(bind(g, p.bp[k], grad ? &grad->bp[k] : nullptr));
  b.output = ad::bind(g, p.output, grad ? &grad->output : nullptr);
  return b;
}

StateVars step(ad::Graph &g, ad::Var x, StateVars prev, const BoundCLSTM &p, GateVars *gates) {
  const Tensor &xv = g.value(x), &hv = g.value(prev.h), &cv = g.value(prev.c);
  if (xv.rank() != 4 || hv.rank() != 4 || xv.dim(2) != hv.dim(2) || xv.dim(3) != hv.dim(3) || xv.dim(1) != 1)
    throw ContractError("clstm step: input " + shape_string(xv.shape()) + " incompatible with state " +
                        shape_string(hv.shape()));
  if (!cv.same_shape(hv) || hv.dim(0) != p.W[0].kernel->out_channels())
    throw ContractError("clstm step: state shape does not match the cell");

  auto pre = [&](std::size_t k) { return ad::add(g, ad::conv3(g, x, p.W[k]), ad::conv3(g, prev.h, p.U[k])); };
  const ad::Var f = ad::sigmoid(g, ad::add(g, pre(0), ad::channel_scale(g, prev.c, p.V[0])));
  const ad::Var i = ad::sigmoid(g, ad::add(g, pre(1), ad::channel_scale(g, prev.c, p.V[1])));
  const ad::Var o = ad::sigmoid(g, ad::add(g, pre(2), ad::channel_scale(g, prev.c, p.V[2])));
  const ad::Var cand = ad::tanh(g, pre(3));
  const ad::Var c = ad::add(g, ad::mul(g, f, prev.c), ad::mul(g, i, cand));
  const ad::Var h = ad::mul(g, o, ad::tanh(g, c));
  if (gates)
    *gates = {f, i, o, cand};
  return {h, c};
}

ad::Var backproject(ad::Graph &g, ad::Var h, const BoundBP &p) {
  const ad::Var up = ad::deconv3(g, h, p.p);
  const ad::Var down = ad::conv3(g, up, p.g);
  if (!g.value(down).same_shape(g.value(h)))
    throw ContractError("backproject: down-projection does not return to the input shape");
  const ad::Var err = ad::sub(g, down, h);
  return ad::add(g, up, ad::deconv3(g, err, p.q));
}

ad::Var sr_head(ad::Graph &g, ad::Var sequence, const BoundHead &p) {
  const Tensor &s = g.value(sequence);
  if (s.rank() != 4 || s.dim(0) != 1)
    throw ContractError("sr_head expects a (1,T,h,w) sequence, got " + shape_string(s.shape()));
  const std::size_t T = s.dim(1), H = s.dim(2), W = s.dim(3);
  const std::size_t C = p.clstm.W[0].kernel->out_channels();
  StateVars state{g.constant(Tensor({C, 1, H, W})), g.constant(Tensor({C, 1, H, W}))};
  std::vector<ad::Var> frames;
  frames.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const ad::Var x = ad::conv3(g, ad::frame(g, sequence, t), p.feature);
    state = step(g, x, state, p.clstm);
    ad::Var up = state.h;
    for (const auto &bp : p.bp)
      up = backproject(g, up, bp);
    frames.push_back(ad::conv3(g, up, p.output));
  }
  return ad::stack_frames(g, frames);
}

StepResult clstm_step(const Tensor &x, const CLSTMState &state, const CLSTMParams &p) {
  ad::Graph g;
  const BoundCLSTM b = bind(g, p, nullptr);
  GateVars gv;
  const StateVars next = step(g, g.constant(x), {g.constant(state.h), g.constant(state.c)}, b, &gv);
  StepResult r;
  r.h = g.value(next.h);
  r.state = {g.value(next.h), g.value(next.c)};
  r.gates = {g.value(gv.f), g.value(gv.i), g.value(gv.o), g.value(gv.g)};
  return r;
}

Tensor backproject(const Tensor &h, const BPParams &p) {
  ad::Graph g;
  const BoundBP b = bind(g, p, nullptr);
  return g.value(backproject(g, g.constant(h), b));
}

Tensor sr_head(const Tensor &sequence, const HeadParams &p) {
  ad::Graph g;
  const BoundHead b = bind(g, p, nullptr);
  return g.value(sr_head(g, g.constant(sequence), b));
}

} // namespace msrpb::clstm
