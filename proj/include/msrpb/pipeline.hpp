#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msrpb/autodiff.hpp"
#include "msrpb/clstm.hpp"
#include "msrpb/conv.hpp"
#include "msrpb/tensor.hpp"
#include "msrpb/unroll.hpp"

namespace msrpb::pipeline {

/// Patch geometry. Strides are patch * (1 - overlap) per axis and must be
/// positive integers.
struct PatchSpec {
  std::size_t patch_h = 32;
  std::size_t patch_w = 32;
  std::size_t patch_t = 8;
  double overlap = 0.5;

  void validate() const;
  Extent3 stride() const;
  Extent3 patch() const { return {patch_t, patch_h, patch_w}; }
};

/// Video extent after end-padding so that patches tile it exactly.
Extent3 padded_extent(Extent3 video, const PatchSpec &spec);

/// Mirror padding at the far end of each axis, e.g. [a b c] -> [a b c b a].
Tensor reflect_pad(const Tensor &video, Extent3 extent);

struct PatchSet {
  std::vector<Tensor> patches; ///< (1, patch_t, patch_h, patch_w) each
  std::vector<Extent3> origins; ///< in padded coordinates
  Extent3 padded{};
  Extent3 source{};
};

/// Sorted by (t, h, w) origin.
PatchSet patchify(const Tensor &video, const PatchSpec &spec);

/// Uniform average of all patches covering each voxel, cropped to `source`.
/// Throws ContractError when a voxel of the padded volume is uncovered.
Tensor depatchify(const PatchSet &set);

struct NetworkConfig {
  std::vector<std::size_t> scales{1, 2};
  std::vector<Extent3> kernel_sizes{{5, 5, 5}, {5, 5, 5}};
  std::size_t channels = 8;
  double lambda1 = 1.0; ///< ISTA-equivalent init thresholds (before / lipschitz)
  double lambda2 = 0.1;
  double lipschitz = 2.0;
  double perturbation = 1e-2;
  std::uint64_t seed = 1;

  void validate() const;
  /// Throws ConfigError when the patch cannot pass through every branch.
  void check_patch(const PatchSpec &spec) const;
};

struct Branch {
  std::size_t factor = 1;
  unroll::StackParams stack;
  clstm::HeadParams head;
};

struct NetworkParams {
  std::vector<Branch> branches;
  ConvKernel fusion; ///< 1x1x1, branches -> 1
};

/// Values are rounded to float32 so checkpoints reproduce them exactly.
NetworkParams init_network(const NetworkConfig &cfg);
NetworkParams zeros_like(const NetworkParams &p);

template <class Net, class F> void visit(Net &net, F &&f) {
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    const std::string prefix = "branch" + std::to_string(b) + ".";
    unroll::visit_stack(net.branches[b].stack, prefix + "unroll.", f);
    clstm::visit_head(net.branches[b].head, prefix + "head.", f);
  }
  f(std::string("fusion.weights"), net.fusion.weights);
  f(std::string("fusion.bias"), net.fusion.bias);
}

std::size_t parameter_count(const NetworkParams &p);

/// Records the network on the tape: per branch avg_pool(factor) -> avg_pool(2)
/// -> unrolled stack -> sparse layer -> refinement head back to patch
/// resolution; branch outputs are concatenated and fused by a 1x1x1 conv.
autodiff::Var forward(autodiff::Graph &g, autodiff::Var patch, const NetworkParams &p, NetworkParams *grad,
                      bool *degenerate = nullptr);

Tensor forward(const Tensor &patch, const NetworkParams &p);

struct SequenceDecomposition {
  Tensor vessel;
  Tensor background; ///< video - vessel
};

SequenceDecomposition decompose_sequence(const Tensor &video, const NetworkParams &p, const PatchSpec &spec);

struct Profile {
  std::string name;
  PatchSpec patch;
  NetworkConfig network;
};

/// "desk": 32x32x8 patches, scales {1,2}, two 5^3 layers, 8 channels.
/// "paper": 64x64x20 patches, scales {1,2,4}, 5^3,5^3,3^3,3^3 layers, 64 channels.
Profile profile(const std::string &name);

} // namespace msrpb::pipeline
