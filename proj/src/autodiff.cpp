#include "msrpb/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "msrpb/errors.hpp"
#include "msrpb/linalg.hpp"

namespace msrpb::autodiff {

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::leaf(const Tensor &value, Tensor *grad_sink) {
  nodes_.push_back(Node{value, {}, grad_sink != nullptr, grad_sink, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, const std::vector<Var> &parents, Backward backward) {
  bool needs = false;
  for (Var p : parents)
    needs = needs || nodes_.at(p.id).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : Backward{}});
  return Var{nodes_.size() - 1};
}

void Graph::accumulate(Var v, const Tensor &g) {
  Node &n = nodes_.at(v.id);
  if (!n.requires_grad)
    return;
  if (n.grad.empty())
    n.grad = g;
  else
    n.grad += g;
}

void Graph::accumulate(Var v, Tensor &&g) {
  Node &n = nodes_.at(v.id);
  if (!n.requires_grad)
    return;
  if (n.grad.empty())
    n.grad = std::move(g);
  else
    n.grad += g;
}

void Graph::backward(Var output, const Tensor &seed) { backward(std::vector<Var>{output}, {seed}); }

void Graph::backward(const std::vector<Var> &outputs, const std::vector<Tensor> &seeds) {
  if (outputs.size() != seeds.size())
    throw ContractError("backward: one seed per output expected");
  for (auto &n : nodes_)
    n.grad = Tensor();
  std::size_t last = 0;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    require_same_shape(value(outputs[k]), seeds[k], "backward seed");
    accumulate(outputs[k], seeds[k]);
    last = std::max(last, outputs[k].id);
  }
  for (std::size_t i = last + 1; i-- > 0;) {
    Node &n = nodes_[i];
    if (n.grad.empty())
      continue;
    if (n.backward)
      n.backward(*this, n.grad);
    if (n.sink) {
      if (n.sink->empty())
        *n.sink = Tensor::like(n.grad);
      *n.sink += n.grad;
    }
  }
}

void Graph::backward(Var scalar_output) {
  if (value(scalar_output).size() != 1)
    throw ContractError("backward() without a seed needs a scalar output");
  backward(scalar_output, Tensor(value(scalar_output).shape(), 1.0));
}

KernelVars bind(Graph &g, const ConvKernel &k, ConvKernel *grad) {
  KernelVars kv;
  kv.kernel = &k;
  kv.weights = g.leaf(k.weights, grad ? &grad->weights : nullptr);
  kv.bias = g.leaf(k.bias, grad ? &grad->bias : nullptr);
  return kv;
}

Var bind(Graph &g, const Tensor &t, Tensor *grad) { return g.leaf(t, grad); }

Var add(Graph &g, Var a, Var b) {
  Tensor out = g.value(a) + g.value(b);
  return g.record(std::move(out), {a, b}, [a, b](Graph &gr, const Tensor &go) {
    gr.accumulate(a, go);
    gr.accumulate(b, go);
  });
}

Var sub(Graph &g, Var a, Var b) {
  Tensor out = g.value(a) - g.value(b);
  return g.record(std::move(out), {a, b}, [a, b](Graph &gr, const Tensor &go) {
    gr.accumulate(a, go);
    if (gr.requires_grad(b))
      gr.accumulate(b, go * -1.0);
  });
}

Var mul(Graph &g, Var a, Var b) {
  const Tensor &va = g.value(a), &vb = g.value(b);
  require_same_shape(va, vb, "mul");
  Tensor out = Tensor::like(va);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = va[i] * vb[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph &gr, const Tensor &go) {
    const Tensor &xa = gr.value(a), &xb = gr.value(b);
    if (gr.requires_grad(a)) {
      Tensor ga = Tensor::like(go);
      for (std::size_t i = 0; i < go.size(); ++i)
        ga[i] = go[i] * xb[i];
      gr.accumulate(a, std::move(ga));
    }
    if (gr.requires_grad(b)) {
      Tensor gb = Tensor::like(go);
      for (std::size_t i = 0; i < go.size(); ++i)
        gb[i] = go[i] * xa[i];
      gr.accumulate(b, std::move(gb));
    }
  });
}

Var scale(Graph &g, Var a, double s) {
  return g.record(g.value(a) * s, {a}, [a, s](Graph &gr, const Tensor &go) { gr.accumulate(a, go * s); });
}

Var sigmoid(Graph &g, Var a) {
  const Tensor &x = g.value(a);
  Tensor out = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  auto y = std::make_shared<Tensor>(out);
  return g.record(std::move(out), {a}, [a, y](Graph &gr, const Tensor &go) {
    Tensor gx = Tensor::like(go);
    for (std::size_t i = 0; i < go.size(); ++i)
      gx[i] = go[i] * (*y)[i] * (1.0 - (*y)[i]);
    gr.accumulate(a, std::move(gx));
  });
}

Var tanh(Graph &g, Var a) {
  const Tensor &x = g.value(a);
  Tensor out = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::tanh(x[i]);
  auto y = std::make_shared<Tensor>(out);
  return g.record(std::move(out), {a}, [a, y](Graph &gr, const Tensor &go) {
    Tensor gx = Tensor::like(go);
    for (std::size_t i = 0; i < go.size(); ++i)
      gx[i] = go[i] * (1.0 - (*y)[i] * (*y)[i]);
    gr.accumulate(a, std::move(gx));
  });
}

Var softplus(Graph &g, Var a) {
  const Tensor &x = g.value(a);
  Tensor out = Tensor::like(x);
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] > 30.0 ? x[i] : std::log1p(std::exp(x[i]));
  return g.record(std::move(out), {a}, [a](Graph &gr, const Tensor &go) {
    const Tensor &xv = gr.value(a);
    Tensor gx = Tensor::like(go);
    for (std::size_t i = 0; i < go.size(); ++i)
      gx[i] = go[i] / (1.0 + std::exp(-xv[i]));
    gr.accumulate(a, std::move(gx));
  });
}

Var conv3(Graph &g, Var x, const KernelVars &k) {
  ConvKernel kern = *k.kernel;
  kern.weights = g.value(k.weights);
  kern.bias = g.value(k.bias);
  Tensor out = msrpb::conv3(g.value(x), kern);
  const ConvKernel *geometry = k.kernel;
  return g.record(std::move(out), {x, k.weights, k.bias}, [x, k, geometry](Graph &gr, const Tensor &go) {
    const Tensor &xv = gr.value(x);
    const Tensor &w = gr.value(k.weights);
    if (gr.requires_grad(x))
      gr.accumulate(x, kernels::scatter(go, w, geometry->stride, geometry->padding, xv.shape()));
    if (gr.requires_grad(k.weights))
      gr.accumulate(k.weights, kernels::weight_grad(xv, go, geometry->stride, geometry->padding, geometry->size()));
    if (gr.requires_grad(k.bias)) {
      Tensor gb({go.dim(0)});
      const std::size_t per = go.size() / go.dim(0);
      for (std::size_t c = 0; c < go.dim(0); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i)
          acc += go[c * per + i];
        gb[c] = acc;
      }
      gr.accumulate(k.bias, std::move(gb));
    }
  });
}

Var deconv3(Graph &g, Var x, const KernelVars &k) {
  ConvKernel kern = *k.kernel;
  kern.weights = g.value(k.weights);
  kern.bias = g.value(k.bias);
  Tensor out = msrpb::deconv3(g.value(x), kern);
  const ConvKernel *geometry = k.kernel;
  return g.record(std::move(out), {x, k.weights, k.bias}, [x, k, geometry](Graph &gr, const Tensor &go) {
    const Tensor &xv = gr.value(x);
    const Tensor &w = gr.value(k.weights);
    if (gr.requires_grad(x))
      gr.accumulate(x, kernels::correlate(go, w, geometry->stride, geometry->padding, xv.shape()));
    if (gr.requires_grad(k.weights))
      gr.accumulate(k.weights, kernels::weight_grad(go, xv, geometry->stride, geometry->padding, geometry->size()));
    if (gr.requires_grad(k.bias)) {
      Tensor gb({go.dim(0)});
      const std::size_t per = go.size() / go.dim(0);
      for (std::size_t c = 0; c < go.dim(0); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i)
          acc += go[c * per + i];
        gb[c] = acc;
      }
      gr.accumulate(k.bias, std::move(gb));
    }
  });
}

Var avg_pool(Graph &g, Var x, std::size_t factor) {
  return g.record(msrpb::avg_pool(g.value(x), factor), {x}, [x, factor](Graph &gr, const Tensor &go) {
    gr.accumulate(x, avg_pool_backward(go, factor));
  });
}

Var channel_scale(Graph &g, Var x, Var v) {
  const Tensor &xv = g.value(x), &vv = g.value(v);
  if (vv.size() != xv.dim(0))
    throw ContractError("channel_scale: one weight per channel expected");
  const std::size_t per = xv.size() / xv.dim(0);
  Tensor out = Tensor::like(xv);
  for (std::size_t c = 0; c < xv.dim(0); ++c)
    for (std::size_t i = 0; i < per; ++i)
      out[c * per + i] = vv[c] * xv[c * per + i];
  return g.record(std::move(out), {x, v}, [x, v, per](Graph &gr, const Tensor &go) {
    const Tensor &xv = gr.value(x), &vv = gr.value(v);
    if (gr.requires_grad(x)) {
      Tensor gx = Tensor::like(go);
      for (std::size_t c = 0; c < vv.size(); ++c)
        for (std::size_t i = 0; i < per; ++i)
          gx[c * per + i] = vv[c] * go[c * per + i];
      gr.accumulate(x, std::move(gx));
    }
    if (gr.requires_grad(v)) {
      Tensor gv = Tensor::like(vv);
      for (std::size_t c = 0; c < vv.size(); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i)
          acc += go[c * per + i] * xv[c * per + i];
        gv[c] = acc;
      }
      gr.accumulate(v, std::move(gv));
    }
  });
}

Var frame(Graph &g, Var x, std::size_t t) {
  const Tensor &xv = g.value(x);
  const std::size_t C = xv.dim(0), T = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  if (t >= T)
    throw ContractError("frame index out of range");
  Tensor out({C, 1, xv.dim(2), xv.dim(3)});
  for (std::size_t c = 0; c < C; ++c)
    std::copy_n(xv.data() + (c * T + t) * HW, HW, out.data() + c * HW);
  auto shape = xv.shape();
  return g.record(std::move(out), {x}, [x, t, shape, C, T, HW](Graph &gr, const Tensor &go) {
    Tensor gx(shape);
    for (std::size_t c = 0; c < C; ++c)
      std::copy_n(go.data() + c * HW, HW, gx.data() + (c * T + t) * HW);
    gr.accumulate(x, std::move(gx));
  });
}

Var stack_frames(Graph &g, const std::vector<Var> &frames) {
  if (frames.empty())
    throw ContractError("stack_frames: nothing to stack");
  const Tensor &f0 = g.value(frames.front());
  const std::size_t C = f0.dim(0), H = f0.dim(2), W = f0.dim(3), HW = H * W, T = frames.size();
  Tensor out({C, T, H, W});
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor &ft = g.value(frames[t]);
    if (ft.shape() != f0.shape())
      throw ContractError("stack_frames: inconsistent frame shapes");
    for (std::size_t c = 0; c < C; ++c)
      std::copy_n(ft.data() + c * HW, HW, out.data() + (c * T + t) * HW);
  }
  return g.record(std::move(out), frames, [frames, C, T, H, W, HW](Graph &gr, const Tensor &go) {
    for (std::size_t t = 0; t < T; ++t) {
      if (!gr.requires_grad(frames[t]))
        continue;
      Tensor gf({C, 1, H, W});
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(go.data() + (c * T + t) * HW, HW, gf.data() + c * HW);
      gr.accumulate(frames[t], std::move(gf));
    }
  });
}

Var concat_channels(Graph &g, const std::vector<Var> &parts) {
  if (parts.empty())
    throw ContractError("concat_channels: nothing to concatenate");
  const Tensor &p0 = g.value(parts.front());
  std::size_t C = 0;
  for (Var p : parts) {
    const Tensor &v = g.value(p);
    if (v.dim(1) != p0.dim(1) || v.dim(2) != p0.dim(2) || v.dim(3) != p0.dim(3))
      throw ContractError("concat_channels: inconsistent extents");
    C += v.dim(0);
  }
  Tensor out({C, p0.dim(1), p0.dim(2), p0.dim(3)});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor &v = g.value(p);
    std::copy_n(v.data(), v.size(), out.data() + offset);
    offset += v.size();
  }
  return g.record(std::move(out), parts, [parts](Graph &gr, const Tensor &go) {
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor &v = gr.value(p);
      if (gr.requires_grad(p)) {
        Tensor gp = Tensor::like(v);
        std::copy_n(go.data() + off, v.size(), gp.data());
        gr.accumulate(p, std::move(gp));
      }
      off += v.size();
    }
  });
}

Var svt(Graph &g, Var x, Var tau, bool *degenerate) {
  const Tensor &xv = g.value(x);
  const double t = g.value(tau)[0];
  auto cache = std::make_shared<SvtCache>();
  const MatrixView out = msrpb::svt(matrix_view(xv), t, cache.get());
  const auto shape = xv.shape();
  if (degenerate) {
    // Flag is computed eagerly so inference-only callers see it too.
    const auto &s = cache->sigma;
    const double eps = 1e-6 * (s.size() ? s.maxCoeff() : 0.0);
    for (Eigen::Index i = 0; i + 1 < s.size(); ++i)
      if (s[i] - s[i + 1] < eps && s[i] > t)
        *degenerate = true;
  }
  return g.record(from_matrix_view(out, shape), {x, tau}, [x, tau, cache, shape](Graph &gr, const Tensor &go) {
    const SvtGrad sg = svt_backward(*cache, matrix_view(go));
    gr.accumulate(x, from_matrix_view(sg.input, shape));
    if (gr.requires_grad(tau)) {
      Tensor gt({1});
      gt[0] = sg.tau;
      gr.accumulate(tau, std::move(gt));
    }
  });
}

Var row_group_shrink(Graph &g, Var x, Var tau) {
  const Tensor &xv = g.value(x);
  const double t = g.value(tau)[0];
  const auto shape = xv.shape();
  const MatrixView out = msrpb::row_group_shrink(matrix_view(xv), t);
  return g.record(from_matrix_view(out, shape), {x, tau}, [x, tau, shape](Graph &gr, const Tensor &go) {
    const double tv = gr.value(tau)[0];
    const ShrinkGrad sg = row_group_shrink_backward(matrix_view(gr.value(x)), tv, matrix_view(go));
    gr.accumulate(x, from_matrix_view(sg.input, shape));
    if (gr.requires_grad(tau)) {
      Tensor gt({1});
      gt[0] = sg.tau;
      gr.accumulate(tau, std::move(gt));
    }
  });
}

Var mse(Graph &g, Var pred, Var target) {
  const Tensor &p = g.value(pred), &q = g.value(target);
  require_same_shape(p, q, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    acc += (p[i] - q[i]) * (p[i] - q[i]);
  Tensor out({1});
  out[0] = acc / static_cast<double>(p.size());
  return g.record(std::move(out), {pred, target}, [pred, target](Graph &gr, const Tensor &go) {
    const Tensor &pv = gr.value(pred), &qv = gr.value(target);
    const double s = 2.0 * go[0] / static_cast<double>(pv.size());
    Tensor gp = Tensor::like(pv);
    for (std::size_t i = 0; i < pv.size(); ++i)
      gp[i] = s * (pv[i] - qv[i]);
    if (gr.requires_grad(target))
      gr.accumulate(target, gp * -1.0);
    gr.accumulate(pred, std::move(gp));
  });
}

} // namespace msrpb::autodiff
