#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "msrpb/pipeline.hpp"
#include "msrpb/tensor.hpp"

namespace msrpb::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::array<double, 3> split{0.6, 0.2, 0.2}; ///< train, validation, test
  std::uint64_t seed = 1;

  void validate() const;
};

struct DatasetSplit {
  std::vector<std::size_t> train, val, test; ///< sequence ids, ascending
};

/// Seeded assignment of whole sequences to the three parts. Counts follow the
/// largest-remainder rounding of the fractions; every part with a positive
/// fraction receives at least one sequence. Throws ConfigError for fewer than
/// three sequences.
DatasetSplit split_dataset(std::size_t sequences, const TrainConfig &cfg);

struct Sample {
  Tensor input;  ///< (1, patch_t, patch_h, patch_w)
  Tensor target; ///< same shape
  std::size_t sequence = 0;
  Extent3 origin{};
};

/// Patch pairs from the listed sequences, in (sequence, origin) order.
std::vector<Sample> make_samples(const std::vector<Tensor> &videos, const std::vector<Tensor> &targets,
                                 const std::vector<std::size_t> &ids, const pipeline::PatchSpec &spec);

double mse_loss(const Tensor &pred, const Tensor &target);

/// First and second moment estimates, one pair per parameter tensor.
struct AdamState {
  pipeline::NetworkParams m, v;
  std::size_t step = 0;
};

AdamState make_adam(const pipeline::NetworkParams &p);

/// One bias-corrected update of a single tensor; `step` counts from 1.
/// Parameter and moments are kept at float32 precision.
void adam_update(Tensor &param, const Tensor &grad, Tensor &m, Tensor &v, std::size_t step, const TrainConfig &cfg);

/// Increments state.step and updates every parameter tensor.
void adam_step(pipeline::NetworkParams &p, const pipeline::NetworkParams &grad, AdamState &state,
               const TrainConfig &cfg);

/// Mean MSE and its gradient over a batch. Samples run in parallel; the
/// gradient sum is reduced in sample order so the result does not depend on
/// the thread count.
struct BatchResult {
  double loss = 0.0;
  pipeline::NetworkParams grad;
};

BatchResult batch_gradient(const std::vector<const Sample *> &batch, const pipeline::NetworkParams &p);

/// Mean per-sample MSE of the network output against the targets.
double evaluate_mse(const std::vector<Sample> &samples, const pipeline::NetworkParams &p);

struct EpochRecord {
  std::size_t epoch = 0; ///< 1-based
  double train_loss = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  pipeline::NetworkParams params; ///< best validation epoch (initial parameters when none improved)
  AdamState adam;
  std::vector<double> loss_curve;  ///< mean training batch loss per epoch
  std::vector<double> val_curve;   ///< entry 0 is the initial validation MSE
  std::size_t best_epoch = 0;      ///< 0 means the initial parameters
  std::size_t epochs_run = 0;
};

/// Adam on the MSE against the targets with seeded per-epoch shuffling.
/// Throws DivergenceError naming the epoch and batch on a non-finite loss.
TrainResult train(const std::vector<Sample> &train_set, const std::vector<Sample> &val_set,
                  const pipeline::NetworkParams &init, const TrainConfig &cfg,
                  const std::function<void(const EpochRecord &)> &on_epoch = {});

struct MetricsReport {
  double cnr_global = 0.0;
  double cnr_local = 0.0;
  double dr = 0.0;
  double precision = 0.0;
  double f_measure = 0.0;
  double mse = 0.0;
  std::vector<double> loss_curve;
};

/// Binary vessel mask: Otsu threshold on |layer|.
Tensor segment(const Tensor &vessel_layer);

/// Scores a predicted (1,T,H,W) vessel layer against the planted mask and a
/// reference layer. CNR is averaged over frames on the predicted layer with
/// the planted mask; DR/P/F use segment(predicted).
MetricsReport evaluate(const Tensor &predicted, const Tensor &truth_mask, const Tensor &reference);

} // namespace msrpb::train
