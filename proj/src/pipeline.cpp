#include "msrpb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "msrpb/errors.hpp"

namespace msrpb::pipeline {

namespace ad = autodiff;

namespace {

std::size_t axis_stride(std::size_t patch, double overlap, const char *axis) {
  const double s = static_cast<double>(patch) * (1.0 - overlap);
  const double r = std::round(s);
  if (r < 1.0 || std::abs(s - r) > 1e-9)
    throw ConfigError(std::string("patch stride along ") + axis + " must be a positive integer, got " +
                      std::to_string(s));
  return static_cast<std::size_t>(r);
}

std::size_t padded_axis(std::size_t n, std::size_t patch, std::size_t stride) {
  if (n <= patch)
    return patch;
  const std::size_t k = (n - patch + stride - 1) / stride;
  return patch + k * stride;
}

std::size_t mirror(std::size_t i, std::size_t n) {
  if (n == 1)
    return 0;
  const std::size_t period = 2 * n - 2;
  i %= period;
  return i < n ? i : period - i;
}

Extent3 video_extent(const Tensor &video) {
  if (video.rank() != 4 || video.dim(0) != 1)
    throw ContractError("expected a (1,T,H,W) video, got " + shape_string(video.shape()));
  return {video.dim(1), video.dim(2), video.dim(3)};
}

bool power_of_two(std::size_t f) { return f != 0 && (f & (f - 1)) == 0; }

std::size_t log2_exact(std::size_t f) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < f)
    ++k;
  return k;
}

} // namespace

void PatchSpec::validate() const {
  if (patch_h == 0 || patch_w == 0 || patch_t == 0)
    throw ConfigError("patch extents must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0))
    throw ConfigError("patch overlap must lie in [0, 1)");
  (void)stride();
}

Extent3 PatchSpec::stride() const {
  return {axis_stride(patch_t, overlap, "t"), axis_stride(patch_h, overlap, "h"), axis_stride(patch_w, overlap, "w")};
}

Extent3 padded_extent(Extent3 video, const PatchSpec &spec) {
  spec.validate();
  const Extent3 s = spec.stride();
  return {padded_axis(video.t, spec.patch_t, s.t), padded_axis(video.h, spec.patch_h, s.h),
          padded_axis(video.w, spec.patch_w, s.w)};
}

Tensor reflect_pad(const Tensor &video, Extent3 e) {
  const Extent3 v = video_extent(video);
  if (e.t < v.t || e.h < v.h || e.w < v.w)
    throw ContractError("reflect_pad cannot shrink a video");
  Tensor out({1, e.t, e.h, e.w});
  for (std::size_t t = 0; t < e.t; ++t)
    for (std::size_t h = 0; h < e.h; ++h)
      for (std::size_t w = 0; w < e.w; ++w)
        out.at(0, t, h, w) = video.at(0, mirror(t, v.t), mirror(h, v.h), mirror(w, v.w));
  return out;
}

PatchSet patchify(const Tensor &video, const PatchSpec &spec) {
  PatchSet set;
  set.source = video_extent(video);
  set.padded = padded_extent(set.source, spec);
  const Tensor padded = reflect_pad(video, set.padded);
  const Extent3 s = spec.stride();
  for (std::size_t t0 = 0; t0 + spec.patch_t <= set.padded.t; t0 += s.t)
    for (std::size_t h0 = 0; h0 + spec.patch_h <= set.padded.h; h0 += s.h)
      for (std::size_t w0 = 0; w0 + spec.patch_w <= set.padded.w; w0 += s.w) {
        Tensor p({1, spec.patch_t, spec.patch_h, spec.patch_w});
        for (std::size_t t = 0; t < spec.patch_t; ++t)
          for (std::size_t h = 0; h < spec.patch_h; ++h)
            std::copy_n(padded.data() + ((t0 + t) * set.padded.h + h0 + h) * set.padded.w + w0, spec.patch_w,
                        &p.at(0, t, h, 0));
        set.patches.push_back(std::move(p));
        set.origins.push_back({t0, h0, w0});
      }
  return set;
}

Tensor depatchify(const PatchSet &set) {
  if (set.patches.size() != set.origins.size())
    throw ContractError("depatchify: patch and origin counts differ");
  const Extent3 e = set.padded;
  Tensor sum({1, e.t, e.h, e.w});
  Tensor count({1, e.t, e.h, e.w});
  for (std::size_t k = 0; k < set.patches.size(); ++k) {
    const Tensor &p = set.patches[k];
    const Extent3 o = set.origins[k];
    if (p.rank() != 4 || p.dim(0) != 1 || o.t + p.dim(1) > e.t || o.h + p.dim(2) > e.h || o.w + p.dim(3) > e.w)
      throw ContractError("depatchify: patch " + std::to_string(k) + " lies outside the padded volume");
    for (std::size_t t = 0; t < p.dim(1); ++t)
      for (std::size_t h = 0; h < p.dim(2); ++h)
        for (std::size_t w = 0; w < p.dim(3); ++w) {
          sum.at(0, o.t + t, o.h + h, o.w + w) += p.at(0, t, h, w);
          count.at(0, o.t + t, o.h + h, o.w + w) += 1.0;
        }
  }
  for (std::size_t i = 0; i < count.size(); ++i)
    if (count[i] == 0.0)
      throw ContractError("depatchify: coverage gap at flat index " + std::to_string(i));
  const Extent3 s = set.source;
  Tensor out({1, s.t, s.h, s.w});
  for (std::size_t t = 0; t < s.t; ++t)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w)
        out.at(0, t, h, w) = sum.at(0, t, h, w) / count.at(0, t, h, w);
  return out;
}

void NetworkConfig::validate() const {
  if (scales.empty())
    throw ConfigError("network.scales must not be empty");
  for (std::size_t f : scales)
    if (!power_of_two(f))
      throw ConfigError("network.scales entries must be powers of two, got " + std::to_string(f));
  if (channels == 0)
    throw ConfigError("network.channels must be positive");
  for (const Extent3 &k : kernel_sizes)
    if (k.t % 2 == 0 || k.h % 2 == 0 || k.w % 2 == 0)
      throw ConfigError("network kernel sizes must be odd");
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0))
    throw ConfigError("network.lambda1 and network.lambda2 must be positive");
  if (!(lipschitz >= 2.0))
    throw ConfigError("network.lipschitz must be at least 2");
  if (perturbation < 0.0)
    throw ConfigError("network.perturbation must be nonnegative");
}

void NetworkConfig::check_patch(const PatchSpec &spec) const {
  spec.validate();
  const std::size_t f = *std::max_element(scales.begin(), scales.end()) * 2;
  if (spec.patch_h % f != 0 || spec.patch_w % f != 0)
    throw ConfigError("patch height and width must be multiples of " + std::to_string(f) +
                      " (largest scale times the branch pooling)");
}

NetworkParams init_network(const NetworkConfig &cfg) {
  cfg.validate();
  NetworkParams net;
  for (std::size_t b = 0; b < cfg.scales.size(); ++b) {
    Branch br;
    br.factor = cfg.scales[b];
    unroll::StackInit si;
    si.kernel_sizes = cfg.kernel_sizes;
    si.lambda1 = cfg.lambda1;
    si.lambda2 = cfg.lambda2;
    si.lipschitz = cfg.lipschitz;
    si.perturbation = cfg.perturbation;
    si.seed = cfg.seed * 1000 + 2 * b;
    br.stack = unroll::init_stack(si);
    clstm::HeadInit hi;
    hi.channels = cfg.channels;
    hi.bp_stages = 1 + log2_exact(br.factor);
    hi.perturbation = cfg.perturbation;
    hi.seed = cfg.seed * 1000 + 2 * b + 1;
    br.head = clstm::init_head(hi);
    net.branches.push_back(std::move(br));
  }
  const std::size_t n = cfg.scales.size();
  net.fusion = ConvKernel::same(1, n, {1, 1, 1});
  net.fusion.weights.fill(1.0 / static_cast<double>(n));
  visit(net, [](const std::string &, Tensor &t) { round_to_float(t); });
  return net;
}

NetworkParams zeros_like(const NetworkParams &p) {
  NetworkParams z = p;
  visit(z, [](const std::string &, Tensor &t) { t.fill(0.0); });
  return z;
}

std::size_t parameter_count(const NetworkParams &p) {
  std::size_t n = 0;
  visit(p, [&](const std::string &, const Tensor &t) { n += t.size(); });
  return n;
}

ad::Var forward(ad::Graph &g, ad::Var patch, const NetworkParams &p, NetworkParams *grad, bool *degenerate) {
  const Tensor &x = g.value(patch);
  if (x.rank() != 4 || x.dim(0) != 1)
    throw ContractError("network forward expects a (1,T,H,W) patch, got " + shape_string(x.shape()));
  if (grad && grad->branches.size() != p.branches.size())
    throw ContractError("gradient network does not match parameter network");
  const auto in_shape = x.shape();
  std::vector<ad::Var> outputs;
  for (std::size_t b = 0; b < p.branches.size(); ++b) {
    const Branch &br = p.branches[b];
    Branch *gb = grad ? &grad->branches[b] : nullptr;
    ad::Var v = patch;
    if (br.factor > 1)
      v = ad::avg_pool(g, v, br.factor);
    v = ad::avg_pool(g, v, 2);
    const auto iterates = unroll::forward(g, v, br.stack, gb ? &gb->stack : nullptr, degenerate);
    const clstm::BoundHead head = clstm::bind(g, br.head, gb ? &gb->head : nullptr);
    const ad::Var out = clstm::sr_head(g, iterates.back().S, head);
    if (g.value(out).shape() != in_shape)
      throw ConfigError("branch " + std::to_string(b) + " returns " + shape_string(g.value(out).shape()) +
                        " for a " + shape_string(in_shape) + " patch");
    outputs.push_back(out);
  }
  const ad::Var cat = ad::concat_channels(g, outputs);
  return ad::conv3(g, cat, ad::bind(g, p.fusion, grad ? &grad->fusion : nullptr));
}

Tensor forward(const Tensor &patch, const NetworkParams &p) {
  ad::Graph g;
  return g.value(forward(g, g.constant(patch), p, nullptr));
}

SequenceDecomposition decompose_sequence(const Tensor &video, const NetworkParams &p, const PatchSpec &spec) {
  PatchSet set = patchify(video, spec);
  const long n = static_cast<long>(set.patches.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) {
    try {
      set.patches[static_cast<std::size_t>(k)] = forward(set.patches[static_cast<std::size_t>(k)], p);
    } catch (...) {
#pragma omp critical
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
  SequenceDecomposition out;
  out.vessel = depatchify(set);
  // Background on a 2^-47 grid: for videos on that grid (every float32 value
  // in [2^-24, 32) and zero) vessel = video - background is then exact, so
  // vessel + background reproduces the video bit for bit.
  constexpr double grid = 140737488355328.0; // 2^47
  out.background = Tensor::like(video);
  for (std::size_t i = 0; i < video.size(); ++i) {
    out.background[i] = std::nearbyint((video[i] - out.vessel[i]) * grid) / grid;
    out.vessel[i] = video[i] - out.background[i];
  }
  return out;
}

Profile profile(const std::string &name) {
  Profile p;
  p.name = name;
  if (name == "desk")
    return p;
  if (name == "paper") {
    p.patch = {64, 64, 20, 0.5};
    p.network.scales = {1, 2, 4};
    p.network.kernel_sizes = {{5, 5, 5}, {5, 5, 5}, {3, 3, 3}, {3, 3, 3}};
    p.network.channels = 64;
    return p;
  }
  throw ConfigError("unknown scale profile '" + name + "' (expected desk or paper)");
}

} // namespace msrpb::pipeline
