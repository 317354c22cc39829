#include "msrpb/app.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "msrpb/errors.hpp"
#include "msrpb/io.hpp"
#include "msrpb/metrics.hpp"
#include "msrpb/report.hpp"
#include "msrpb/rpca.hpp"
#include "msrpb/synth.hpp"

namespace msrpb::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create directory '" + dir + "'");
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out)
    throw IoError("write to '" + path + "' failed");
}

json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void require_hash(const json &doc, const std::string &path, const std::string &hash) {
  if (!doc.contains("config_hash") || doc["config_hash"] != hash)
    throw ConfigError("'" + path + "' was produced under a different config (current " + hash + ")");
}

void append_record(const std::string &path, json record, const std::string &hash) {
  if (path.empty())
    return;
  record["config_hash"] = hash;
  record["timestamp"] = timestamp();
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty())
    ensure_dir(parent.string());
  std::ofstream out(path, std::ios::app);
  if (!out)
    throw IoError("cannot append to '" + path + "'");
  out << record.dump() << '\n';
  if (!out)
    throw IoError("append to '" + path + "' failed");
}

json report_json(const train::MetricsReport &r) {
  return {{"cnr_global", r.cnr_global}, {"cnr_local", r.cnr_local}, {"dr", r.dr},
          {"precision", r.precision},   {"f_measure", r.f_measure}, {"mse", r.mse}};
}

std::vector<std::size_t> split_ids(const config::RunConfig &cfg, const std::string &which) {
  if (which == "all") {
    std::vector<std::size_t> ids(cfg.sequences);
    for (std::size_t i = 0; i < ids.size(); ++i)
      ids[i] = i;
    return ids;
  }
  const train::DatasetSplit s = train::split_dataset(cfg.sequences, cfg.train);
  if (which == "train")
    return s.train;
  if (which == "val")
    return s.val;
  if (which == "test")
    return s.test;
  throw ConfigError("unknown split '" + which + "' (expected train, val, test or all)");
}

void check_manifest(const config::RunConfig &cfg, const std::string &data_dir, const std::string &hash) {
  const std::string path = (fs::path(data_dir) / "manifest.json").string();
  const json m = read_json(path);
  require_hash(m, path, hash);
  if (m.value("sequences", json::array()).size() != cfg.sequences)
    throw ConfigError("'" + path + "' lists a different number of sequences than the config");
}

std::vector<Tensor> load_layer(const std::string &dir, const std::vector<std::size_t> &ids, const std::string &layer,
                               const std::string &hash, std::size_t total) {
  std::vector<Tensor> out(total);
  for (std::size_t id : ids)
    out[id] = io::read_video(sequence_file(dir, id, layer), hash);
  return out;
}

} // namespace

int exit_code_for(const std::exception &e) {
  if (dynamic_cast<const ConfigError *>(&e))
    return kConfig;
  if (dynamic_cast<const IoError *>(&e))
    return kIo;
  if (dynamic_cast<const DivergenceError *>(&e))
    return kDivergence;
  return kFailure;
}

void set_threads(std::size_t threads) {
  if (threads > 0)
    omp_set_num_threads(static_cast<int>(threads));
}

std::string timestamp() {
  std::time_t now = std::time(nullptr);
  if (const char *sde = std::getenv("SOURCE_DATE_EPOCH")) {
    char *end = nullptr;
    const long long v = std::strtoll(sde, &end, 10);
    if (end != sde && *end == '\0')
      now = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sequence_file(const std::string &dir, std::size_t id, const std::string &layer) {
  char name[64];
  std::snprintf(name, sizeof name, "seq_%03zu%s%s.vseq", id, layer.empty() ? "" : ".", layer.c_str());
  return (fs::path(dir) / name).string();
}

SynthSummary cmd_synth(const config::RunConfig &cfg, const std::string &out_dir) {
  ensure_dir(out_dir);
  const std::string hash = config::hash(cfg);
  SynthSummary summary;
  json seqs = json::array();
  for (std::size_t i = 0; i < cfg.sequences; ++i) {
    const synth::SceneSpec spec = cfg.scene_for(i);
    const synth::Scene scene = synth::make_scene(spec);
    io::write_video(sequence_file(out_dir, i), scene.observed, hash);
    io::write_video(sequence_file(out_dir, i, "background"), scene.truth.background, hash);
    io::write_video(sequence_file(out_dir, i, "vessel"), scene.truth.vessel_layer, hash);
    io::write_video(sequence_file(out_dir, i, "mask"), scene.truth.vessel_mask, hash);
    io::write_video(sequence_file(out_dir, i, "noise"), scene.truth.noise, hash);
    seqs.push_back({{"id", i},
                    {"seed", spec.seed},
                    {"file", fs::path(sequence_file(out_dir, i)).filename().string()},
                    {"clipped_fraction", scene.clipped_fraction}});
    summary.max_clipped_fraction = std::max(summary.max_clipped_fraction, scene.clipped_fraction);
  }
  summary.sequences = cfg.sequences;
  const train::DatasetSplit split = train::split_dataset(cfg.sequences, cfg.train);
  const json manifest = {{"format", "msrpb-dataset-1"},
                         {"config_hash", hash},
                         {"profile", cfg.profile},
                         {"sequences", seqs},
                         {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}}}};
  write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  write_text((fs::path(out_dir) / "config.txt").string(), config::canonical(cfg));
  return summary;
}

WeakLabelSummary cmd_weak_label(const config::RunConfig &cfg, const std::string &data_dir, const std::string &out_dir) {
  const std::string hash = config::hash(cfg);
  check_manifest(cfg, data_dir, hash);
  ensure_dir(out_dir);
  const auto all = split_ids(cfg, "all");
  const auto val = split_ids(cfg, "val");
  const std::vector<Tensor> videos = load_layer(data_dir, all, "", hash, cfg.sequences);

  rpca::SolverConfig solver = cfg.solver;
  WeakLabelSummary summary;
  summary.lambda2 = solver.lambda2;
  json scores = json::array();
  if (!cfg.lambda2_grid.empty() && !val.empty()) {
    std::vector<Tensor> vv, vm;
    for (std::size_t id : val) {
      vv.push_back(videos[id]);
      vm.push_back(io::read_video(sequence_file(data_dir, id, "mask"), hash));
    }
    const rpca::Lambda2Choice choice = rpca::tune_lambda2(vv, vm, solver, cfg.lambda2_grid);
    solver.lambda2 = choice.lambda2;
    summary.lambda2 = choice.lambda2;
    summary.validation_f = choice.f_measure;
    scores = choice.scores;
  }

  std::vector<rpca::WeakLabel> labels(cfg.sequences);
  const long n = static_cast<long>(cfg.sequences);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      labels[static_cast<std::size_t>(i)] = rpca::weak_label(videos[static_cast<std::size_t>(i)], solver);
    } catch (...) {
#pragma omp critical
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
  for (std::size_t i = 0; i < cfg.sequences; ++i) {
    io::write_video(sequence_file(out_dir, i, "vessel"), labels[i].vessel_layer, hash);
    io::write_video(sequence_file(out_dir, i, "mask"), labels[i].vessel_mask, hash);
    io::write_video(sequence_file(out_dir, i, "sparse"), labels[i].sparse, hash);
    io::write_video(sequence_file(out_dir, i, "background"), labels[i].background, hash);
  }
  const json doc = {{"format", "msrpb-labels-1"},      {"config_hash", hash},
                    {"lambda1", solver.lambda1},       {"lambda2", summary.lambda2},
                    {"lambda2_grid", cfg.lambda2_grid}, {"lambda2_scores", scores},
                    {"validation_f", summary.validation_f}};
  write_text((fs::path(out_dir) / "labels.json").string(), doc.dump(2) + "\n");
  return summary;
}

train::TrainResult cmd_train(const config::RunConfig &cfg, const std::string &data_dir, const std::string &labels_dir,
                             const std::string &checkpoint, const std::string &records,
                             const std::function<void(const train::EpochRecord &)> &on_epoch) {
  const std::string hash = config::hash(cfg);
  check_manifest(cfg, data_dir, hash);
  require_hash(read_json((fs::path(labels_dir) / "labels.json").string()), labels_dir, hash);
  const train::DatasetSplit split = train::split_dataset(cfg.sequences, cfg.train);
  std::vector<std::size_t> used = split.train;
  used.insert(used.end(), split.val.begin(), split.val.end());
  const std::vector<Tensor> videos = load_layer(data_dir, used, "", hash, cfg.sequences);
  const std::vector<Tensor> targets = load_layer(labels_dir, used, "vessel", hash, cfg.sequences);
  const auto train_set = train::make_samples(videos, targets, split.train, cfg.patch);
  const auto val_set = train::make_samples(videos, targets, split.val, cfg.patch);

  const pipeline::NetworkParams init = pipeline::init_network(cfg.network);
  train::TrainResult result = train::train(train_set, val_set, init, cfg.train, [&](const train::EpochRecord &r) {
    append_record(records, {{"kind", "epoch"}, {"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_mse", r.val_mse}},
                  hash);
    if (on_epoch)
      on_epoch(r);
  });
  if (!checkpoint.empty()) {
    const fs::path parent = fs::path(checkpoint).parent_path();
    if (!parent.empty())
      ensure_dir(parent.string());
    io::write_checkpoint(checkpoint, io::make_checkpoint(result.params, result.adam,
                                                         static_cast<std::uint32_t>(result.best_epoch), hash));
  }
  append_record(records,
                {{"kind", "train"},
                 {"epochs", result.epochs_run},
                 {"best_epoch", result.best_epoch},
                 {"loss_curve", result.loss_curve},
                 {"val_curve", result.val_curve},
                 {"train_samples", train_set.size()},
                 {"val_samples", val_set.size()}},
                hash);
  return result;
}

std::vector<std::string> split_inputs(const config::RunConfig &cfg, const std::string &data_dir,
                                      const std::string &split) {
  std::vector<std::string> out;
  for (std::size_t id : split_ids(cfg, split))
    out.push_back(sequence_file(data_dir, id));
  return out;
}

void cmd_decompose(const config::RunConfig &cfg, const std::string &checkpoint, const std::vector<std::string> &inputs,
                   const std::string &out_dir) {
  const std::string hash = config::hash(cfg);
  pipeline::NetworkParams net = pipeline::init_network(cfg.network);
  io::restore(io::read_checkpoint(checkpoint, hash), net);
  ensure_dir(out_dir);
  for (const std::string &input : inputs) {
    const Tensor video = io::read_video(input, hash);
    const pipeline::SequenceDecomposition d = pipeline::decompose_sequence(video, net, cfg.patch);
    const io::Layers layers = io::split_float32(video, d.vessel);
    const std::string stem = fs::path(input).stem().string();
    io::write_video((fs::path(out_dir) / (stem + ".vessel.vseq")).string(), layers.vessel, hash);
    io::write_video((fs::path(out_dir) / (stem + ".background.vseq")).string(), layers.background, hash);
  }
}

EvalSummary cmd_eval(const config::RunConfig &cfg, const std::string &data_dir, const std::string &pred_dir,
                     const std::string &layer, const std::string &method, const std::string &records) {
  const std::string hash = config::hash(cfg);
  check_manifest(cfg, data_dir, hash);
  EvalSummary out;
  out.sequences = split_ids(cfg, "test");
  for (std::size_t id : out.sequences) {
    const Tensor pred = io::read_video(sequence_file(pred_dir, id, layer), hash);
    const Tensor mask = io::read_video(sequence_file(data_dir, id, "mask"), hash);
    const Tensor truth = io::read_video(sequence_file(data_dir, id, "vessel"), hash);
    const train::MetricsReport r = train::evaluate(pred, mask, truth);
    out.per_sequence.push_back(r);
    json rec = report_json(r);
    rec["kind"] = "eval";
    rec["method"] = method;
    rec["sequence"] = id;
    append_record(records, rec, hash);
  }
  const double n = static_cast<double>(out.per_sequence.size());
  for (const auto &r : out.per_sequence) {
    out.mean.cnr_global += r.cnr_global / n;
    out.mean.cnr_local += r.cnr_local / n;
    out.mean.dr += r.dr / n;
    out.mean.precision += r.precision / n;
    out.mean.f_measure += r.f_measure / n;
    out.mean.mse += r.mse / n;
  }
  json rec = report_json(out.mean);
  rec["kind"] = "eval_mean";
  rec["method"] = method;
  rec["sequences"] = out.sequences;
  append_record(records, rec, hash);
  return out;
}

void cmd_report(const std::string &records, const std::string &out_dir, const std::string &data_dir,
                const std::string &pred_dir, const std::string &hash) {
  std::ifstream in(records);
  if (!in)
    throw IoError("cannot open records '" + records + "'");
  ensure_dir(out_dir);
  std::vector<json> recs;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty())
      continue;
    try {
      recs.push_back(json::parse(line));
    } catch (const json::exception &) {
      throw IoError("'" + records + "' line " + std::to_string(n) + " is not a JSON record");
    }
  }

  std::ostringstream csv;
  csv << "kind,method,sequence,cnr_global,cnr_local,dr,precision,f_measure,mse,config_hash,timestamp\n";
  std::map<std::string, std::pair<double, double>> cnr;
  std::vector<std::string> methods;
  const json *last_train = nullptr;
  for (const json &r : recs) {
    const std::string kind = r.value("kind", "");
    if (kind == "train")
      last_train = &r;
    if (kind != "eval" && kind != "eval_mean")
      continue;
    const std::string method = r.value("method", "");
    csv << kind << ',' << method << ',' << (kind == "eval" ? std::to_string(r.value("sequence", 0)) : "mean");
    for (const char *k : {"cnr_global", "cnr_local", "dr", "precision", "f_measure", "mse"}) {
      char buf[40];
      std::snprintf(buf, sizeof buf, ",%.9g", r.value(k, std::nan("")));
      csv << buf;
    }
    csv << ',' << r.value("config_hash", "") << ',' << r.value("timestamp", "") << '\n';
    if (kind == "eval_mean") {
      if (!cnr.count(method))
        methods.push_back(method);
      cnr[method] = {r.value("cnr_global", 0.0), r.value("cnr_local", 0.0)};
    }
  }
  write_text((fs::path(out_dir) / "metrics.csv").string(), csv.str());

  if (last_train) {
    std::vector<double> loss = (*last_train)["loss_curve"].get<std::vector<double>>();
    std::vector<double> val = (*last_train)["val_curve"].get<std::vector<double>>();
    loss.insert(loss.begin(), std::nan("")); // align epoch k with the validation entry after it
    report::write_png((fs::path(out_dir) / "loss_curve.png").string(), report::line_plot({loss, val}));
  }
  if (!methods.empty()) {
    std::vector<std::vector<double>> groups;
    for (const auto &m : methods)
      groups.push_back({cnr[m].first, cnr[m].second});
    report::write_png((fs::path(out_dir) / "cnr.png").string(), report::bar_chart(groups));
  }
  if (!data_dir.empty() && !pred_dir.empty()) {
    std::size_t id = 0;
    for (const json &r : recs)
      if (r.value("kind", "") == "eval") {
        id = r.value("sequence", std::size_t{0});
        break;
      }
    auto load = [&](const std::string &path) {
      return hash.empty() ? io::read_video(path).data : io::read_video(path, hash);
    };
    const Tensor observed = load(sequence_file(data_dir, id));
    const Tensor truth = load(sequence_file(data_dir, id, "vessel"));
    const Tensor pred = load(sequence_file(pred_dir, id, "vessel"));
    const std::size_t t = observed.dim(1) - 1;
    report::write_png((fs::path(out_dir) / "example_frames.png").string(),
                      report::frame_strip({report::frame_of(observed, t), report::frame_of(pred, t),
                                           report::frame_of(train::segment(pred), t), report::frame_of(truth, t)}));
  }
}

} // namespace msrpb::app
