#include "msrpb/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "msrpb/errors.hpp"
#include "msrpb/metrics.hpp"

namespace msrpb::train {

namespace ad = autodiff;
using pipeline::NetworkParams;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw ConfigError("train.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0))
    throw ConfigError("train.epsilon must be positive");
  if (batch_size == 0)
    throw ConfigError("train.batch_size must be positive");
  double sum = 0.0;
  for (double f : split) {
    if (!(f >= 0.0))
      throw ConfigError("split fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
}

DatasetSplit split_dataset(std::size_t sequences, const TrainConfig &cfg) {
  cfg.validate();
  if (sequences < 3)
    throw ConfigError("splitting needs at least 3 sequences, got " + std::to_string(sequences));

  std::array<std::size_t, 3> count{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = cfg.split[k] * static_cast<double>(sequences);
    count[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(count[k]);
    assigned += count[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < sequences; k = (k + 1) % 3, ++assigned)
    ++count[order[k]];
  for (std::size_t k = 0; k < 3; ++k)
    if (cfg.split[k] > 0.0 && count[k] == 0) {
      const std::size_t donor =
          static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
      --count[donor];
      ++count[k];
    }

  std::vector<std::size_t> ids(sequences);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  DatasetSplit out;
  auto take = [&](std::vector<std::size_t> &dst, std::size_t from, std::size_t n) {
    dst.assign(ids.begin() + static_cast<long>(from), ids.begin() + static_cast<long>(from + n));
    std::sort(dst.begin(), dst.end());
  };
  take(out.train, 0, count[0]);
  take(out.val, count[0], count[1]);
  take(out.test, count[0] + count[1], count[2]);
  return out;
}

std::vector<Sample> make_samples(const std::vector<Tensor> &videos, const std::vector<Tensor> &targets,
                                 const std::vector<std::size_t> &ids, const pipeline::PatchSpec &spec) {
  if (videos.size() != targets.size())
    throw ContractError("make_samples: video and target counts differ");
  std::vector<Sample> out;
  for (std::size_t id : ids) {
    if (id >= videos.size())
      throw ContractError("make_samples: sequence id " + std::to_string(id) + " out of range");
    if (!videos[id].same_shape(targets[id]))
      throw ContractError("make_samples: target of sequence " + std::to_string(id) + " has a different shape");
    pipeline::PatchSet in = pipeline::patchify(videos[id], spec);
    pipeline::PatchSet tg = pipeline::patchify(targets[id], spec);
    for (std::size_t k = 0; k < in.patches.size(); ++k)
      out.push_back({std::move(in.patches[k]), std::move(tg.patches[k]), id, in.origins[k]});
  }
  return out;
}

double mse_loss(const Tensor &pred, const Tensor &target) {
  if (!pred.same_shape(target))
    throw ContractError("mse_loss: shapes " + shape_string(pred.shape()) + " and " + shape_string(target.shape()) +
                        " differ");
  if (pred.size() == 0)
    return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

AdamState make_adam(const NetworkParams &p) { return {pipeline::zeros_like(p), pipeline::zeros_like(p), 0}; }

void adam_update(Tensor &param, const Tensor &grad, Tensor &m, Tensor &v, std::size_t step, const TrainConfig &cfg) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v))
    throw ContractError("adam_update: parameter, gradient and moment shapes differ");
  if (step == 0)
    throw ContractError("adam_update: step counts from 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    param[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
  }
  round_to_float(param);
  round_to_float(m);
  round_to_float(v);
}

namespace {

std::vector<Tensor *> tensors(NetworkParams &p) {
  std::vector<Tensor *> out;
  pipeline::visit(p, [&](const std::string &, Tensor &t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor *> tensors(const NetworkParams &p) {
  std::vector<const Tensor *> out;
  pipeline::visit(p, [&](const std::string &, const Tensor &t) { out.push_back(&t); });
  return out;
}

} // namespace

void adam_step(NetworkParams &p, const NetworkParams &grad, AdamState &state, const TrainConfig &cfg) {
  const auto P = tensors(p);
  const auto G = tensors(grad);
  const auto M = tensors(state.m);
  const auto V = tensors(state.v);
  if (G.size() != P.size() || M.size() != P.size() || V.size() != P.size())
    throw ContractError("adam_step: gradient or moments do not match the parameters");
  ++state.step;
  for (std::size_t k = 0; k < P.size(); ++k)
    adam_update(*P[k], *G[k], *M[k], *V[k], state.step, cfg);
}

BatchResult batch_gradient(const std::vector<const Sample *> &batch, const NetworkParams &p) {
  const long n = static_cast<long>(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<NetworkParams> grads(batch.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) {
    try {
      const Sample &s = *batch[static_cast<std::size_t>(k)];
      NetworkParams &grad = grads[static_cast<std::size_t>(k)];
      grad = pipeline::zeros_like(p);
      ad::Graph g;
      const ad::Var out = pipeline::forward(g, g.constant(s.input), p, &grad);
      const ad::Var loss = ad::mse(g, out, g.constant(s.target));
      losses[static_cast<std::size_t>(k)] = g.value(loss)[0];
      g.backward(loss);
    } catch (...) {
#pragma omp critical
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);

  BatchResult r;
  r.grad = pipeline::zeros_like(p);
  const auto total = tensors(r.grad);
  const double w = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    r.loss += w * losses[k];
    const auto part = tensors(std::as_const(grads[k]));
    for (std::size_t j = 0; j < total.size(); ++j)
      for (std::size_t i = 0; i < total[j]->size(); ++i)
        (*total[j])[i] += w * (*part[j])[i];
  }
  return r;
}

double evaluate_mse(const std::vector<Sample> &samples, const NetworkParams &p) {
  if (samples.empty())
    throw ContractError("evaluate_mse: no samples");
  const long n = static_cast<long>(samples.size());
  std::vector<double> losses(samples.size(), 0.0);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) {
    try {
      const Sample &s = samples[static_cast<std::size_t>(k)];
      losses[static_cast<std::size_t>(k)] = mse_loss(pipeline::forward(s.input, p), s.target);
    } catch (...) {
#pragma omp critical
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
  double sum = 0.0;
  for (double l : losses)
    sum += l;
  return sum / static_cast<double>(samples.size());
}

TrainResult train(const std::vector<Sample> &train_set, const std::vector<Sample> &val_set, const NetworkParams &init,
                  const TrainConfig &cfg, const std::function<void(const EpochRecord &)> &on_epoch) {
  cfg.validate();
  for (const auto *set : {&train_set, &val_set})
    for (const Sample &smp : *set)
      if (!all_finite(smp.input) || !all_finite(smp.target))
        throw InputError("non-finite sample data in sequence " + std::to_string(smp.sequence));
  TrainResult r;
  r.params = init;
  r.adam = make_adam(init);
  NetworkParams current = init;
  double best = 0.0;
  if (!val_set.empty()) {
    best = evaluate_mse(val_set, current);
    r.val_curve.push_back(best);
  }
  if (cfg.epochs > 0 && train_set.empty())
    throw ConfigError("training set is empty");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batches) {
      std::vector<const Sample *> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
        batch.push_back(&train_set[order[k]]);
      // Sample data is finite, so a non-finite value inside the network comes
      // from the parameters.
      BatchResult br;
      try {
        br = batch_gradient(batch, current);
      } catch (const InputError &) {
        br.loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(br.loss)) {
        std::string ids;
        for (const Sample *s : batch)
          ids += (ids.empty() ? "" : ",") + std::to_string(s->sequence) + "@(" + std::to_string(s->origin.t) + "," +
                 std::to_string(s->origin.h) + "," + std::to_string(s->origin.w) + ")";
        throw DivergenceError("non-finite training loss in epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batches) + " (samples " + ids + ")");
      }
      adam_step(current, br.grad, r.adam, cfg);
      epoch_loss += br.loss;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
    r.loss_curve.push_back(rec.train_loss);
    if (!val_set.empty()) {
      try {
        rec.val_mse = evaluate_mse(val_set, current);
      } catch (const InputError &) {
        rec.val_mse = std::numeric_limits<double>::quiet_NaN();
      }
      r.val_curve.push_back(rec.val_mse);
      if (!std::isfinite(rec.val_mse))
        throw DivergenceError("non-finite validation MSE after epoch " + std::to_string(epoch));
      if (rec.val_mse < best) {
        best = rec.val_mse;
        r.params = current;
        r.best_epoch = epoch;
      }
    } else {
      r.params = current;
      r.best_epoch = epoch;
    }
    r.epochs_run = epoch;
    if (on_epoch)
      on_epoch(rec);
  }
  return r;
}

Tensor segment(const Tensor &vessel_layer) {
  Tensor mag = Tensor::like(vessel_layer);
  for (std::size_t i = 0; i < mag.size(); ++i)
    mag[i] = std::abs(vessel_layer[i]);
  bool constant = true;
  for (std::size_t i = 1; i < mag.size() && constant; ++i)
    constant = mag[i] == mag[0];
  if (constant)
    return Tensor::like(vessel_layer);
  return metrics::otsu(mag);
}

MetricsReport evaluate(const Tensor &predicted, const Tensor &truth_mask, const Tensor &reference) {
  if (!predicted.same_shape(truth_mask) || !predicted.same_shape(reference))
    throw ContractError("evaluate: predicted, mask and reference shapes differ");
  MetricsReport r;
  const metrics::BackgroundRegions regions = metrics::background_regions(truth_mask);
  r.cnr_global = metrics::cnr_sequence(predicted, truth_mask, regions.global);
  r.cnr_local = metrics::cnr_sequence(predicted, truth_mask, regions.local);
  const metrics::DetectionScores s = metrics::dr_p_f(metrics::confusion(segment(predicted), truth_mask));
  r.dr = s.dr;
  r.precision = s.precision;
  r.f_measure = s.f_measure;
  r.mse = mse_loss(predicted, reference);
  return r;
}

} // namespace msrpb::train
