#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msrpb/app.hpp"
#include "msrpb/config.hpp"
#include "msrpb/errors.hpp"

namespace fs = std::filesystem;
using namespace msrpb;

namespace {

struct Options {
  std::string config_path;
  std::string profile = "desk";
  std::string out;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t threads = 0;
};

config::RunConfig build_config(const Options &o) {
  config::RunConfig cfg = o.config_path.empty() ? config::defaults(o.profile) : config::load(o.profile, o.config_path);
  for (const std::string &kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    config::set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed_given)
    cfg.seed = o.seed;
  cfg.finalize();
  return cfg;
}

std::size_t thread_count(const Options &o) {
  if (o.threads > 0)
    return o.threads;
  if (const char *env = std::getenv("MSRPB_THREADS")) {
    char *end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0')
      throw ConfigError(std::string("MSRPB_THREADS must be a positive integer, got '") + env + "'");
    return v;
  }
  return 0;
}

std::string or_default(const std::string &v, const std::string &fallback) { return v.empty() ? fallback : v; }

std::string require(const std::string &v, const char *flag) {
  if (v.empty())
    throw ConfigError(std::string(flag) + " is required");
  return v;
}

std::string join(const fs::path &dir, const char *name) { return (dir / name).string(); }

} // namespace

int main(int argc, char **argv) {
  CLI::App cli{"Multiscale unrolled RPCA with CLSTM back-projection: synthetic data, training and evaluation"};
  cli.require_subcommand(1);
  cli.fallthrough();
  Options o;
  cli.add_option("--config", o.config_path, "Config file with 'key = value' lines");
  cli.add_option("--scale-profile", o.profile, "Default hyper-shape")->check(CLI::IsMember({"desk", "paper"}));
  cli.add_option("--out", o.out, "Output directory or file (per command)");
  cli.add_option("--set", o.overrides, "Override one config key: key=value (repeatable)");
  auto *seed_opt = cli.add_option("--seed", o.seed, "Master seed override");
  cli.add_option("--threads", o.threads, "OpenMP threads (fallback: MSRPB_THREADS)");

  std::string data, labels, pred, checkpoint, records, layer = "vessel", method = "network", split = "test";
  std::vector<std::string> inputs;

  auto *show = cli.add_subcommand("config", "Print the resolved config and its hash");
  auto *synth = cli.add_subcommand("synth", "Generate synthetic sequences with ground truth (--out DIR)");
  auto *weak = cli.add_subcommand("weak-label", "RPCA weak labels for a dataset (--out DIR, default DATA/labels)");
  weak->add_option("--data", data, "Dataset directory")->required();
  auto *trn = cli.add_subcommand("train", "Train on weak labels (--out CHECKPOINT, default DATA/model.ckpt)");
  trn->add_option("--data", data, "Dataset directory")->required();
  trn->add_option("--labels", labels, "Label directory (default DATA/labels)");
  trn->add_option("--records", records, "Metric records (default DATA/metrics.jsonl)");
  auto *dec = cli.add_subcommand("decompose", "Vessel/background layers of videos (--out DIR)");
  dec->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  dec->add_option("--input", inputs, "Video containers");
  dec->add_option("--data", data, "Dataset directory (instead of --input)");
  dec->add_option("--split", split, "Split of --data to decompose")->check(CLI::IsMember({"train", "val", "test", "all"}));
  auto *ev = cli.add_subcommand("eval", "Score predictions on the test split");
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--pred", pred, "Prediction directory")->required();
  ev->add_option("--layer", layer, "Layer name of the prediction files");
  ev->add_option("--method", method, "Method name stored in the records");
  ev->add_option("--records", records, "Metric records (default DATA/metrics.jsonl)");
  auto *rep = cli.add_subcommand("report", "CSV table and plots from metric records (--out DIR)");
  rep->add_option("--records", records, "Metric records")->required();
  rep->add_option("--data", data, "Dataset directory for example frames");
  rep->add_option("--pred", pred, "Prediction directory for example frames");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kConfig;
  }
  o.seed_given = seed_opt->count() > 0;

  try {
    app::set_threads(thread_count(o));
    if (rep->parsed()) {
      app::cmd_report(records, require(o.out, "--out"), data, pred);
      std::cout << "report written to " << o.out << "\n";
      return app::kOk;
    }
    const config::RunConfig cfg = build_config(o);
    const std::string hash = config::hash(cfg);
    if (show->parsed()) {
      std::cout << config::canonical(cfg) << "# hash " << hash << "\n";
    } else if (synth->parsed()) {
      const auto s = app::cmd_synth(cfg, require(o.out, "--out"));
      std::printf("%zu sequences written to %s (config %s, max clipped fraction %.4g)\n", s.sequences, o.out.c_str(),
                  hash.c_str(), s.max_clipped_fraction);
    } else if (weak->parsed()) {
      const std::string out = or_default(o.out, join(data, "labels"));
      const auto s = app::cmd_weak_label(cfg, data, out);
      std::printf("weak labels written to %s (lambda2 %.4g, validation F %.4f)\n", out.c_str(), s.lambda2,
                  s.validation_f);
    } else if (trn->parsed()) {
      const std::string ckpt = or_default(o.out, join(data, "model.ckpt"));
      const auto r = app::cmd_train(cfg, data, or_default(labels, join(data, "labels")), ckpt,
                                    or_default(records, join(data, "metrics.jsonl")), [](const train::EpochRecord &e) {
                                      std::printf("epoch %zu  train loss %.6g  val mse %.6g\n", e.epoch, e.train_loss,
                                                  e.val_mse);
                                      std::fflush(stdout);
                                    });
      std::printf("checkpoint %s (best epoch %zu)\n", ckpt.c_str(), r.best_epoch);
    } else if (dec->parsed()) {
      if (inputs.empty() && data.empty())
        throw ConfigError("decompose needs --input or --data");
      if (!data.empty())
        for (const auto &f : app::split_inputs(cfg, data, split))
          inputs.push_back(f);
      app::cmd_decompose(cfg, checkpoint, inputs, require(o.out, "--out"));
      std::printf("%zu videos decomposed into %s\n", inputs.size(), o.out.c_str());
    } else if (ev->parsed()) {
      const auto s = app::cmd_eval(cfg, data, pred, layer, method, or_default(records, join(data, "metrics.jsonl")));
      std::printf("%s on %zu test sequences: DR %.4f  P %.4f  F %.4f  CNR global %.4f  local %.4f  MSE %.6g\n",
                  method.c_str(), s.sequences.size(), s.mean.dr, s.mean.precision, s.mean.f_measure, s.mean.cnr_global,
                  s.mean.cnr_local, s.mean.mse);
    }
    return app::kOk;
  } catch (const std::exception &e) {
    std::cerr << "msrpb: " << e.what() << "\n";
    return app::exit_code_for(e);
  }
}
