#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msrpb/pipeline.hpp"
#include "msrpb/rpca.hpp"
#include "msrpb/synth.hpp"
#include "msrpb/train.hpp"

namespace msrpb::config {

/// Every tunable of a run. The master seed drives the scenes (sequence i uses
/// seed * 1000 + i), the network initialisation and the training shuffle.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::size_t sequences = 8;
  synth::SceneSpec scene;
  pipeline::PatchSpec patch;
  pipeline::NetworkConfig network;
  rpca::SolverConfig solver;
  std::vector<double> lambda2_grid; ///< empty: use solver.lambda2 as given
  train::TrainConfig train;

  /// Copies the master seed into the component configs and validates them.
  void finalize();
  synth::SceneSpec scene_for(std::size_t sequence) const;
};

/// Defaults of a scale profile ("desk" or "paper").
RunConfig defaults(const std::string &profile);

/// Sets one dotted key from its text form. Throws ConfigError for unknown
/// keys and malformed values.
void set(RunConfig &cfg, const std::string &key, const std::string &value);

/// Applies "key = value" lines; '#' starts a comment. The line number is part
/// of every error message.
void apply(RunConfig &cfg, const std::string &text);

/// Profile defaults, then the file (if any), then finalize().
RunConfig load(const std::string &profile, const std::string &path);

/// Every key in fixed order, one "key = value" line each; values print with
/// round-trip precision, so parsing the text reproduces the config.
std::string canonical(const RunConfig &cfg);

/// First 16 hex digits of SHA-256 over canonical(cfg).
std::string hash(const RunConfig &cfg);

std::vector<std::string> keys();

} // namespace msrpb::config
