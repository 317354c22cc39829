#include "msrpb/conv.hpp"

#include <algorithm>

#include "msrpb/errors.hpp"

namespace msrpb {

namespace {

using Index = long;

struct Range {
  Index lo = 0, hi = 0;
};

// Positions p in [0, n_src) for which p*stride + k - pad lands in [0, n_dst).
Range valid_range(Index n_src, Index n_dst, Index stride, Index k, Index pad) {
  const Index off = k - pad;
  Index lo = off < 0 ? (-off + stride - 1) / stride : 0;
  const Index top = n_dst - 1 - off;
  Index hi = top < 0 ? 0 : top / stride + 1;
  hi = std::min(hi, n_src);
  lo = std::min(lo, hi);
  return {lo, hi};
}

void require_4d(const Tensor &x, const char *what) {
  if (x.rank() != 4)
    throw ContractError(std::string(what) + ": expected (C,T,H,W) tensor, got " + shape_string(x.shape()));
}

void require_weights(const Tensor &w) {
  if (w.rank() != 5)
    throw ContractError("kernel weights must be 5-d, got " + shape_string(w.shape()));
}

void add_bias(Tensor &out, const Tensor &bias) {
  if (bias.empty())
    return;
  const std::size_t per = out.size() / out.dim(0);
  if (bias.size() != out.dim(0))
    throw ContractError("bias length does not match output channels");
  for (std::size_t c = 0; c < out.dim(0); ++c) {
    double *p = out.data() + c * per;
    for (std::size_t i = 0; i < per; ++i)
      p[i] += bias[c];
  }
}

Tensor bias_grad(const Tensor &grad_out) {
  Tensor g({grad_out.dim(0)});
  const std::size_t per = grad_out.size() / grad_out.dim(0);
  for (std::size_t c = 0; c < grad_out.dim(0); ++c) {
    const double *p = grad_out.data() + c * per;
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i)
      acc += p[i];
    g[c] = acc;
  }
  return g;
}

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (in + 2 * p < k)
    throw ContractError("kernel larger than padded input");
  return (in + 2 * p - k) / s + 1;
}

std::size_t deconv_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  const long n = static_cast<long>(in - 1) * static_cast<long>(s) - 2 * static_cast<long>(p) + static_cast<long>(k);
  if (n <= 0)
    throw ContractError("transposed convolution produces an empty output");
  return static_cast<std::size_t>(n);
}

} // namespace

ConvKernel ConvKernel::make(std::size_t out_channels, std::size_t in_channels, Extent3 size, Extent3 stride,
                            Extent3 padding) {
  if (stride.t == 0 || stride.h == 0 || stride.w == 0)
    throw ConfigError("kernel stride must be positive");
  ConvKernel k;
  k.weights = Tensor({out_channels, in_channels, size.t, size.h, size.w});
  k.bias = Tensor({out_channels});
  k.stride = stride;
  k.padding = padding;
  return k;
}

ConvKernel ConvKernel::make_transposed(std::size_t in_channels, std::size_t out_channels, Extent3 size,
                                       Extent3 stride, Extent3 padding) {
  ConvKernel k = make(in_channels, out_channels, size, stride, padding);
  k.bias = Tensor({out_channels});
  k.transposed = true;
  return k;
}

ConvKernel ConvKernel::same(std::size_t out_channels, std::size_t in_channels, Extent3 size) {
  if (size.t % 2 == 0 || size.h % 2 == 0 || size.w % 2 == 0)
    throw ConfigError("shape-preserving kernels need odd extents");
  return make(out_channels, in_channels, size, {}, {size.t / 2, size.h / 2, size.w / 2});
}

std::vector<std::size_t> ConvKernel::output_shape(const std::vector<std::size_t> &in) const {
  if (in.size() != 4)
    throw ContractError("expected (C,T,H,W) input shape, got " + shape_string(in));
  if (in[0] != in_channels())
    throw ContractError("channel mismatch: input has " + std::to_string(in[0]) + ", kernel expects " +
                        std::to_string(in_channels()));
  const Extent3 k = size();
  if (transposed)
    return {out_channels(), deconv_extent(in[1], k.t, stride.t, padding.t),
            deconv_extent(in[2], k.h, stride.h, padding.h), deconv_extent(in[3], k.w, stride.w, padding.w)};
  return {out_channels(), conv_extent(in[1], k.t, stride.t, padding.t), conv_extent(in[2], k.h, stride.h, padding.h),
          conv_extent(in[3], k.w, stride.w, padding.w)};
}

namespace kernels {

Tensor correlate(const Tensor &x, const Tensor &w, Extent3 stride, Extent3 pad,
                 const std::vector<std::size_t> &out_shape) {
  require_4d(x, "correlate");
  require_weights(w);
  const Index A = static_cast<Index>(w.dim(0)), B = static_cast<Index>(w.dim(1));
  const Index KT = w.dim(2), KH = w.dim(3), KW = w.dim(4);
  const Index T = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index TO = out_shape[1], HO = out_shape[2], WO = out_shape[3];
  const Index st = stride.t, sh = stride.h, sw = stride.w;
  const Index pt = pad.t, ph = pad.h, pw = pad.w;
  if (static_cast<Index>(x.dim(0)) != B || static_cast<Index>(out_shape[0]) != A)
    throw ContractError("correlate: channel mismatch");
  Tensor out(out_shape);

#pragma omp parallel for schedule(static)
  for (Index a = 0; a < A; ++a) {
    for (Index b = 0; b < B; ++b) {
      for (Index kt = 0; kt < KT; ++kt) {
        const Range rt = valid_range(TO, T, st, kt, pt);
        for (Index kh = 0; kh < KH; ++kh) {
          const Range rh = valid_range(HO, H, sh, kh, ph);
          for (Index kw = 0; kw < KW; ++kw) {
            const Range rw = valid_range(WO, W, sw, kw, pw);
            const double wv = w[(((a * B + b) * KT + kt) * KH + kh) * KW + kw];
            for (Index t = rt.lo; t < rt.hi; ++t) {
              const Index ti = t * st + kt - pt;
              for (Index h = rh.lo; h < rh.hi; ++h) {
                const Index hi = h * sh + kh - ph;
                double *o = out.data() + ((a * TO + t) * HO + h) * WO;
                const double *in = x.data() + ((b * T + ti) * H + hi) * W;
                const Index off = kw - pw;
                if (sw == 1) {
                  for (Index c = rw.lo; c < rw.hi; ++c)
                    o[c] += wv * in[c + off];
                } else {
                  for (Index c = rw.lo; c < rw.hi; ++c)
                    o[c] += wv * in[c * sw + off];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor scatter(const Tensor &y, const Tensor &w, Extent3 stride, Extent3 pad,
               const std::vector<std::size_t> &out_shape) {
  require_4d(y, "scatter");
  require_weights(w);
  const Index A = w.dim(0), B = w.dim(1);
  const Index KT = w.dim(2), KH = w.dim(3), KW = w.dim(4);
  const Index TS = y.dim(1), HS = y.dim(2), WS = y.dim(3);
  const Index T = out_shape[1], H = out_shape[2], W = out_shape[3];
  const Index st = stride.t, sh = stride.h, sw = stride.w;
  const Index pt = pad.t, ph = pad.h, pw = pad.w;
  if (static_cast<Index>(y.dim(0)) != A || static_cast<Index>(out_shape[0]) != B)
    throw ContractError("scatter: channel mismatch");
  Tensor out(out_shape);

#pragma omp parallel for schedule(static)
  for (Index b = 0; b < B; ++b) {
    for (Index a = 0; a < A; ++a) {
      for (Index kt = 0; kt < KT; ++kt) {
        const Range rt = valid_range(TS, T, st, kt, pt);
        for (Index kh = 0; kh < KH; ++kh) {
          const Range rh = valid_range(HS, H, sh, kh, ph);
          for (Index kw = 0; kw < KW; ++kw) {
            const Range rw = valid_range(WS, W, sw, kw, pw);
            const double wv = w[(((a * B + b) * KT + kt) * KH + kh) * KW + kw];
            for (Index t = rt.lo; t < rt.hi; ++t) {
              const Index td = t * st + kt - pt;
              for (Index h = rh.lo; h < rh.hi; ++h) {
                const Index hd = h * sh + kh - ph;
                const double *src = y.data() + ((a * TS + t) * HS + h) * WS;
                double *dst = out.data() + ((b * T + td) * H + hd) * W;
                const Index off = kw - pw;
                if (sw == 1) {
                  for (Index c = rw.lo; c < rw.hi; ++c)
                    dst[c + off] += wv * src[c];
                } else {
                  for (Index c = rw.lo; c < rw.hi; ++c)
                    dst[c * sw + off] += wv * src[c];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor weight_grad(const Tensor &x, const Tensor &y, Extent3 stride, Extent3 pad, Extent3 size) {
  require_4d(x, "weight_grad");
  require_4d(y, "weight_grad");
  const Index A = y.dim(0), B = x.dim(0);
  const Index KT = size.t, KH = size.h, KW = size.w;
  const Index T = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index TS = y.dim(1), HS = y.dim(2), WS = y.dim(3);
  const Index st = stride.t, sh = stride.h, sw = stride.w;
  const Index pt = pad.t, ph = pad.h, pw = pad.w;
  Tensor gw({static_cast<std::size_t>(A), static_cast<std::size_t>(B), size.t, size.h, size.w});

#pragma omp parallel for schedule(static)
  for (Index a = 0; a < A; ++a) {
    for (Index b = 0; b < B; ++b) {
      for (Index kt = 0; kt < KT; ++kt) {
        const Range rt = valid_range(TS, T, st, kt, pt);
        for (Index kh = 0; kh < KH; ++kh) {
          const Range rh = valid_range(HS, H, sh, kh, ph);
          for (Index kw = 0; kw < KW; ++kw) {
            const Range rw = valid_range(WS, W, sw, kw, pw);
            double acc = 0.0;
            for (Index t = rt.lo; t < rt.hi; ++t) {
              const Index ti = t * st + kt - pt;
              for (Index h = rh.lo; h < rh.hi; ++h) {
                const Index hi = h * sh + kh - ph;
                const double *src = y.data() + ((a * TS + t) * HS + h) * WS;
                const double *in = x.data() + ((b * T + ti) * H + hi) * W;
                const Index off = kw - pw;
                if (sw == 1) {
                  for (Index c = rw.lo; c < rw.hi; ++c)
                    acc += src[c] * in[c + off];
                } else {
                  for (Index c = rw.lo; c < rw.hi; ++c)
                    acc += src[c] * in[c * sw + off];
                }
              }
            }
            gw[(((a * B + b) * KT + kt) * KH + kh) * KW + kw] = acc;
          }
        }
      }
    }
  }
  return gw;
}

} // namespace kernels

Tensor conv3(const Tensor &x, const ConvKernel &k) {
  if (k.transposed)
    throw ContractError("conv3 called with a transposed kernel");
  require_4d(x, "conv3");
  Tensor out = kernels::correlate(x, k.weights, k.stride, k.padding, k.output_shape(x.shape()));
  add_bias(out, k.bias);
  return out;
}

Tensor deconv3(const Tensor &x, const ConvKernel &k) {
  if (!k.transposed)
    throw ContractError("deconv3 called with an ordinary kernel");
  require_4d(x, "deconv3");
  Tensor out = kernels::scatter(x, k.weights, k.stride, k.padding, k.output_shape(x.shape()));
  add_bias(out, k.bias);
  return out;
}

ConvGrads conv3_backward(const Tensor &x, const Tensor &grad_out, const ConvKernel &k) {
  ConvGrads g;
  g.input = kernels::scatter(grad_out, k.weights, k.stride, k.padding, x.shape());
  g.weights = kernels::weight_grad(x, grad_out, k.stride, k.padding, k.size());
  g.bias = bias_grad(grad_out);
  return g;
}

ConvGrads deconv3_backward(const Tensor &x, const Tensor &grad_out, const ConvKernel &k) {
  ConvGrads g;
  g.input = kernels::correlate(grad_out, k.weights, k.stride, k.padding, x.shape());
  g.weights = kernels::weight_grad(grad_out, x, k.stride, k.padding, k.size());
  g.bias = bias_grad(grad_out);
  return g;
}

Tensor avg_pool(const Tensor &x, std::size_t f) {
  require_4d(x, "avg_pool");
  if (f == 0)
    throw ConfigError("pooling factor must be positive");
  const std::size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % f || W % f)
    throw ContractError("avg_pool: spatial extent " + shape_string(x.shape()) + " not divisible by " +
                        std::to_string(f));
  if (f == 1)
    return x;
  const std::size_t HO = H / f, WO = W / f;
  Tensor out({C, T, HO, WO});
  const double inv = 1.0 / static_cast<double>(f * f);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < HO; ++h)
        for (std::size_t w = 0; w < WO; ++w) {
          double acc = 0.0;
          for (std::size_t i = 0; i < f; ++i)
            for (std::size_t j = 0; j < f; ++j)
              acc += x.at(c, t, h * f + i, w * f + j);
          out.at(c, t, h, w) = acc * inv;
        }
  return out;
}

Tensor avg_pool_backward(const Tensor &g, std::size_t f) {
  if (f == 1)
    return g;
  const std::size_t C = g.dim(0), T = g.dim(1), HO = g.dim(2), WO = g.dim(3);
  Tensor out({C, T, HO * f, WO * f});
  const double inv = 1.0 / static_cast<double>(f * f);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < HO * f; ++h)
        for (std::size_t w = 0; w < WO * f; ++w)
          out.at(c, t, h, w) = g.at(c, t, h / f, w / f) * inv;
  return out;
}

namespace reference {

namespace {

double weight_at(const Tensor &w, Index a, Index b, Index kt, Index kh, Index kw) {
  return w[(((a * static_cast<Index>(w.dim(1)) + b) * static_cast<Index>(w.dim(2)) + kt) *
                static_cast<Index>(w.dim(3)) +
            kh) *
               static_cast<Index>(w.dim(4)) +
           kw];
}

bool inside(Index v, Index n) { return v >= 0 && v < n; }

} // namespace

Tensor correlate(const Tensor &x, const Tensor &w, Extent3 s, Extent3 p, const std::vector<std::size_t> &out_shape) {
  Tensor out(out_shape);
  const Index A = w.dim(0), B = w.dim(1), KT = w.dim(2), KH = w.dim(3), KW = w.dim(4);
  const Index T = x.dim(1), H = x.dim(2), W = x.dim(3);
  for (Index a = 0; a < A; ++a)
    for (Index t = 0; t < static_cast<Index>(out_shape[1]); ++t)
      for (Index h = 0; h < static_cast<Index>(out_shape[2]); ++h)
        for (Index c = 0; c < static_cast<Index>(out_shape[3]); ++c) {
          double acc = 0.0;
          for (Index b = 0; b < B; ++b)
            for (Index kt = 0; kt < KT; ++kt)
              for (Index kh = 0; kh < KH; ++kh)
                for (Index kw = 0; kw < KW; ++kw) {
                  const Index ti = t * static_cast<Index>(s.t) + kt - static_cast<Index>(p.t);
                  const Index hi = h * static_cast<Index>(s.h) + kh - static_cast<Index>(p.h);
                  const Index wi = c * static_cast<Index>(s.w) + kw - static_cast<Index>(p.w);
                  if (inside(ti, T) && inside(hi, H) && inside(wi, W))
                    acc += weight_at(w, a, b, kt, kh, kw) * x.at(b, ti, hi, wi);
                }
          out.at(a, t, h, c) = acc;
        }
  return out;
}

// Gather formulation of the transposed convolution: every destination element
// collects the source positions that map onto it.
Tensor scatter(const Tensor &y, const Tensor &w, Extent3 s, Extent3 p, const std::vector<std::size_t> &out_shape) {
  Tensor out(out_shape);
  const Index A = w.dim(0), B = w.dim(1), KT = w.dim(2), KH = w.dim(3), KW = w.dim(4);
  const Index TS = y.dim(1), HS = y.dim(2), WS = y.dim(3);
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < static_cast<Index>(out_shape[1]); ++t)
      for (Index h = 0; h < static_cast<Index>(out_shape[2]); ++h)
        for (Index c = 0; c < static_cast<Index>(out_shape[3]); ++c) {
          double acc = 0.0;
          for (Index a = 0; a < A; ++a)
            for (Index kt = 0; kt < KT; ++kt)
              for (Index kh = 0; kh < KH; ++kh)
                for (Index kw = 0; kw < KW; ++kw) {
                  const Index nt = t + static_cast<Index>(p.t) - kt;
                  const Index nh = h + static_cast<Index>(p.h) - kh;
                  const Index nw = c + static_cast<Index>(p.w) - kw;
                  if (nt < 0 || nh < 0 || nw < 0)
                    continue;
                  if (nt % static_cast<Index>(s.t) || nh % static_cast<Index>(s.h) || nw % static_cast<Index>(s.w))
                    continue;
                  const Index ts = nt / static_cast<Index>(s.t), hs = nh / static_cast<Index>(s.h),
                              ws = nw / static_cast<Index>(s.w);
                  if (inside(ts, TS) && inside(hs, HS) && inside(ws, WS))
                    acc += weight_at(w, a, b, kt, kh, kw) * y.at(a, ts, hs, ws);
                }
          out.at(b, t, h, c) = acc;
        }
  return out;
}

Tensor weight_grad(const Tensor &x, const Tensor &y, Extent3 s, Extent3 p, Extent3 size) {
  const Index A = y.dim(0), B = x.dim(0);
  Tensor gw({static_cast<std::size_t>(A), static_cast<std::size_t>(B), size.t, size.h, size.w});
  const Index T = x.dim(1), H = x.dim(2), W = x.dim(3);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < B; ++b)
      for (Index kt = 0; kt < static_cast<Index>(size.t); ++kt)
        for (Index kh = 0; kh < static_cast<Index>(size.h); ++kh)
          for (Index kw = 0; kw < static_cast<Index>(size.w); ++kw) {
            double acc = 0.0;
            for (Index t = 0; t < static_cast<Index>(y.dim(1)); ++t)
              for (Index h = 0; h < static_cast<Index>(y.dim(2)); ++h)
                for (Index c = 0; c < static_cast<Index>(y.dim(3)); ++c) {
                  const Index ti = t * static_cast<Index>(s.t) + kt - static_cast<Index>(p.t);
                  const Index hi = h * static_cast<Index>(s.h) + kh - static_cast<Index>(p.h);
                  const Index wi = c * static_cast<Index>(s.w) + kw - static_cast<Index>(p.w);
                  if (inside(ti, T) && inside(hi, H) && inside(wi, W))
                    acc += y.at(a, t, h, c) * x.at(b, ti, hi, wi);
                }
            gw[(((a * B + b) * static_cast<Index>(size.t) + kt) * static_cast<Index>(size.h) + kh) *
                   static_cast<Index>(size.w) +
               kw] = acc;
          }
  return gw;
}

Tensor conv3(const Tensor &x, const ConvKernel &k) {
  Tensor out = correlate(x, k.weights, k.stride, k.padding, k.output_shape(x.shape()));
  add_bias(out, k.bias);
  return out;
}

Tensor deconv3(const Tensor &x, const ConvKernel &k) {
  Tensor out = scatter(x, k.weights, k.stride, k.padding, k.output_shape(x.shape()));
  add_bias(out, k.bias);
  return out;
}

} // namespace reference

} // namespace msrpb
