#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msrpb/config.hpp"
#include "msrpb/train.hpp"

namespace msrpb::app {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kDivergence = 4 };

/// Maps the current exception (inside a catch block) to an exit code.
int exit_code_for(const std::exception &e);

/// Sets the OpenMP thread count; 0 keeps the runtime default.
void set_threads(std::size_t threads);

/// UTC time as YYYY-MM-DDTHH:MM:SSZ. SOURCE_DATE_EPOCH, when set, replaces
/// the clock so records can be reproduced byte for byte.
std::string timestamp();

/// File names inside a dataset, label or prediction directory.
std::string sequence_file(const std::string &dir, std::size_t id, const std::string &layer = "");

struct SynthSummary {
  std::size_t sequences = 0;
  double max_clipped_fraction = 0.0;
};

/// Writes seq_NNN.vseq (observed) plus .background/.vessel/.mask/.noise
/// layers, manifest.json and config.txt into `out_dir`.
SynthSummary cmd_synth(const config::RunConfig &cfg, const std::string &out_dir);

struct WeakLabelSummary {
  double lambda2 = 0.0;
  double validation_f = 0.0;
};

/// RPCA weak labels for every sequence: .vessel (S inside the Otsu mask),
/// .mask, .sparse (S) and .background (L) layers plus labels.json. lambda2 is
/// tuned on the validation split when a grid is configured.
WeakLabelSummary cmd_weak_label(const config::RunConfig &cfg, const std::string &data_dir,
                                const std::string &out_dir);

/// Trains on the training split against the weak labels, validates on the
/// validation split and writes the best checkpoint. Appends one record per
/// epoch and a summary record.
train::TrainResult cmd_train(const config::RunConfig &cfg, const std::string &data_dir, const std::string &labels_dir,
                             const std::string &checkpoint, const std::string &records,
                             const std::function<void(const train::EpochRecord &)> &on_epoch = {});

/// Decomposes each input video; writes <stem>.vessel.vseq and
/// <stem>.background.vseq into out_dir. The two layers sum to the input
/// exactly.
void cmd_decompose(const config::RunConfig &cfg, const std::string &checkpoint, const std::vector<std::string> &inputs,
                   const std::string &out_dir);

/// Observed files of the given split ("train", "val", "test" or "all").
std::vector<std::string> split_inputs(const config::RunConfig &cfg, const std::string &data_dir,
                                      const std::string &split);

struct EvalSummary {
  std::vector<std::size_t> sequences;
  std::vector<train::MetricsReport> per_sequence;
  train::MetricsReport mean;
};

/// Scores <pred_dir>/seq_NNN.<layer>.vseq for the test split against the
/// planted masks and layers; appends per-sequence and mean records.
EvalSummary cmd_eval(const config::RunConfig &cfg, const std::string &data_dir, const std::string &pred_dir,
                     const std::string &layer, const std::string &method, const std::string &records);

/// metrics.csv, loss_curve.png and cnr.png from the records; example_frames.png
/// when data_dir and pred_dir are given.
void cmd_report(const std::string &records, const std::string &out_dir, const std::string &data_dir = "",
                const std::string &pred_dir = "", const std::string &hash = "");

} // namespace msrpb::app
