#include "msrpb/config.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "msrpb/errors.hpp"

namespace msrpb::config {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    out.push_back(trim(item));
  if (!s.empty() && s.back() == sep)
    out.push_back("");
  return out;
}

[[noreturn]] void bad(const std::string &key, const std::string &value, const char *expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

double parse_real(const std::string &key, const std::string &v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size())
      return d;
  } catch (const std::exception &) {
  }
  bad(key, v, "a real number");
}

std::uint64_t parse_uint(const std::string &key, const std::string &v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    bad(key, v, "a nonnegative integer");
  return out;
}

bool parse_bool(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1")
    return true;
  if (v == "false" || v == "0")
    return false;
  bad(key, v, "true or false");
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string extent(Extent3 e) {
  return std::to_string(e.t) + "x" + std::to_string(e.h) + "x" + std::to_string(e.w);
}

Extent3 parse_extent(const std::string &key, const std::string &v) {
  const auto parts = split(v, 'x');
  if (parts.size() != 3)
    bad(key, v, "TxHxW extents");
  return {parse_uint(key, parts[0]), parse_uint(key, parts[1]), parse_uint(key, parts[2])};
}

template <class T, class F> std::string join(const std::vector<T> &xs, F &&f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i)
    out += (i ? "," : "") + f(xs[i]);
  return out;
}

struct Field {
  const char *key;
  std::function<std::string(const RunConfig &)> get;
  std::function<void(RunConfig &, const std::string &, const std::string &)> set;
};

#define REAL(NAME, MEMBER)                                                                                     \
  Field {                                                                                                      \
    NAME, [](const RunConfig &c) { return real(c.MEMBER); },                                                  \
        [](RunConfig &c, const std::string &k, const std::string &v) { c.MEMBER = parse_real(k, v); }         \
  }
#define UINT(NAME, MEMBER)                                                                                     \
  Field {                                                                                                      \
    NAME, [](const RunConfig &c) { return std::to_string(c.MEMBER); },                                        \
        [](RunConfig &c, const std::string &k, const std::string &v) {                                        \
          c.MEMBER = static_cast<decltype(c.MEMBER)>(parse_uint(k, v));                                        \
        }                                                                                                      \
  }

const std::vector<Field> &fields() {
  static const std::vector<Field> table = {
      UINT("seed", seed),
      UINT("sequences", sequences),
      UINT("scene.height", scene.height),
      UINT("scene.width", scene.width),
      UINT("scene.frames", scene.frames),
      UINT("scene.bg_rank", scene.bg_rank),
      REAL("scene.bg_drift", scene.bg_drift),
      UINT("scene.vessel_count", scene.vessel_count),
      REAL("scene.vessel_width_px", scene.vessel_width_px),
      REAL("scene.vessel_peak_intensity", scene.vessel_peak_intensity),
      REAL("scene.vessel_motion_px", scene.vessel_motion_px),
      REAL("scene.noise_a", scene.noise_a),
      REAL("scene.noise_b", scene.noise_b),
      Field{"scene.static_edges", [](const RunConfig &c) { return std::string(c.scene.static_edges ? "true" : "false"); },
            [](RunConfig &c, const std::string &k, const std::string &v) { c.scene.static_edges = parse_bool(k, v); }},
      UINT("patch.h", patch.patch_h),
      UINT("patch.w", patch.patch_w),
      UINT("patch.t", patch.patch_t),
      REAL("patch.overlap", patch.overlap),
      Field{"network.scales",
            [](const RunConfig &c) { return join(c.network.scales, [](std::size_t f) { return std::to_string(f); }); },
            [](RunConfig &c, const std::string &k, const std::string &v) {
              c.network.scales.clear();
              for (const auto &p : split(v, ','))
                c.network.scales.push_back(parse_uint(k, p));
            }},
      Field{"network.kernel_sizes", [](const RunConfig &c) { return join(c.network.kernel_sizes, extent); },
            [](RunConfig &c, const std::string &k, const std::string &v) {
              c.network.kernel_sizes.clear();
              if (!v.empty())
                for (const auto &p : split(v, ','))
                  c.network.kernel_sizes.push_back(parse_extent(k, p));
            }},
      UINT("network.channels", network.channels),
      REAL("network.lambda1", network.lambda1),
      REAL("network.lambda2", network.lambda2),
      REAL("network.lipschitz", network.lipschitz),
      REAL("network.perturbation", network.perturbation),
      REAL("solver.lambda1", solver.lambda1),
      REAL("solver.lambda2", solver.lambda2),
      Field{"solver.lambda2_grid", [](const RunConfig &c) { return join(c.lambda2_grid, real); },
            [](RunConfig &c, const std::string &k, const std::string &v) {
              c.lambda2_grid.clear();
              if (!v.empty())
                for (const auto &p : split(v, ','))
                  c.lambda2_grid.push_back(parse_real(k, p));
            }},
      REAL("solver.lipschitz", solver.lipschitz),
      UINT("solver.max_iters", solver.max_iters),
      REAL("solver.tol", solver.tol),
      REAL("train.learning_rate", train.learning_rate),
      REAL("train.beta1", train.beta1),
      REAL("train.beta2", train.beta2),
      REAL("train.epsilon", train.epsilon),
      UINT("train.epochs", train.epochs),
      UINT("train.batch_size", train.batch_size),
      Field{"train.split", [](const RunConfig &c) { return real(c.train.split[0]) + "," + real(c.train.split[1]) + "," + real(c.train.split[2]); },
            [](RunConfig &c, const std::string &k, const std::string &v) {
              const auto parts = split(v, ',');
              if (parts.size() != 3)
                bad(k, v, "three fractions train,val,test");
              for (std::size_t i = 0; i < 3; ++i)
                c.train.split[i] = parse_real(k, parts[i]);
            }},
  };
  return table;
}

#undef REAL
#undef UINT

} // namespace

void RunConfig::finalize() {
  scene.seed = seed;
  network.seed = seed;
  train.seed = seed;
  if (sequences == 0)
    throw ConfigError("sequences must be positive");
  scene.validate();
  network.validate();
  network.check_patch(patch);
  solver.validate();
  for (double l : lambda2_grid)
    if (!(l > 0.0))
      throw ConfigError("solver.lambda2_grid entries must be positive");
  train.validate();
}

synth::SceneSpec RunConfig::scene_for(std::size_t sequence) const {
  synth::SceneSpec s = scene;
  s.seed = seed * 1000 + sequence;
  return s;
}

RunConfig defaults(const std::string &profile) {
  const pipeline::Profile p = pipeline::profile(profile);
  RunConfig c;
  c.profile = profile;
  c.patch = p.patch;
  c.network = p.network;
  c.solver.lambda1 = 6.0;
  c.solver.lambda2 = 0.15;
  c.lambda2_grid = {0.05, 0.1, 0.15, 0.2, 0.3, 0.4};
  c.train.learning_rate = profile == "desk" ? 1e-3 : 1e-4;
  return c;
}

void set(RunConfig &cfg, const std::string &key, const std::string &value) {
  for (const Field &f : fields())
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply(RunConfig &cfg, const std::string &text) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos)
      line.resize(hash_pos);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(n) + ": expected 'key = value'");
    try {
      const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      // The profile selects the defaults, so a file can only confirm it.
      if (key == "profile") {
        if (value != cfg.profile)
          throw ConfigError("profile '" + value + "' differs from the selected profile '" + cfg.profile +
                            "' (use --scale-profile)");
        continue;
      }
      set(cfg, key, value);
    } catch (const ConfigError &e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
}

RunConfig load(const std::string &profile, const std::string &path) {
  RunConfig cfg = defaults(profile);
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in)
      throw IoError("cannot read config file '" + path + "'");
    std::stringstream text;
    text << in.rdbuf();
    config::apply(cfg, text.str());
  }
  cfg.finalize();
  return cfg;
}

std::string canonical(const RunConfig &cfg) {
  std::string out = "profile = " + cfg.profile + "\n";
  for (const Field &f : fields())
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::string hash(const RunConfig &cfg) {
  const std::string text = canonical(cfg);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < 8; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const Field &f : fields())
    out.emplace_back(f.key);
  return out;
}

} // namespace msrpb::config
