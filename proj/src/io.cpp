#include "msrpb/io.hpp"

#include <bit>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "msrpb/errors.hpp"

namespace msrpb::io {

namespace {

constexpr char kVideoMagic[5] = {'V', 'S', 'E', 'Q', '1'};
constexpr char kCheckpointMagic[6] = {'M', 'S', 'R', 'P', 'B', '1'};
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxName = 4096;

class Writer {
public:
  void bytes(const char *p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void hash(const std::string &h) {
    if (h.size() != kHashLength)
      throw ContractError("config hash must have " + std::to_string(kHashLength) + " characters");
    bytes(h.data(), h.size());
  }
  void save(const std::string &path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out)
      throw IoError("write to '" + path + "' failed");
  }

private:
  std::vector<char> buf_;
};

class Reader {
public:
  Reader(std::vector<char> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}
  const char *take(std::size_t n) {
    if (data_.size() - pos_ < n)
      throw IoError("'" + path_ + "' is truncated");
    const char *p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto *p = reinterpret_cast<const unsigned char *>(take(4));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto *p = reinterpret_cast<const unsigned char *>(take(8));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::string text(std::size_t n) { return std::string(take(n), n); }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string &path() const { return path_; }

private:
  std::vector<char> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

void require_magic(Reader &r, const char *magic, std::size_t n) {
  if (r.remaining() < n || r.text(n) != std::string(magic, n))
    throw IoError("'" + r.path() + "' is not a " + std::string(magic, n) + " file");
}

std::uint32_t checked_u32(std::size_t v, const char *what) {
  if (v > 0xffffffffu)
    throw ContractError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::vector<std::pair<std::string, const Tensor *>> named(const pipeline::NetworkParams &p) {
  std::vector<std::pair<std::string, const Tensor *>> out;
  pipeline::visit(p, [&](const std::string &name, const Tensor &t) { out.emplace_back(name, &t); });
  return out;
}

std::vector<Tensor *> mutable_tensors(pipeline::NetworkParams &p) {
  std::vector<Tensor *> out;
  pipeline::visit(p, [&](const std::string &, Tensor &t) { out.push_back(&t); });
  return out;
}

} // namespace

std::vector<char> read_bytes(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad())
    throw IoError("read of '" + path + "' failed");
  return data;
}

std::size_t video_file_size(std::size_t height, std::size_t width, std::size_t frames) {
  return kVideoHeader + 4 * height * width * frames;
}

void write_video(const std::string &path, const Tensor &video, const std::string &hash) {
  if (video.rank() != 4 || video.dim(0) != 1)
    throw ContractError("write_video expects a (1,T,H,W) tensor, got " + shape_string(video.shape()));
  if (!all_finite(video))
    throw IoError("refusing to write non-finite pixels to '" + path + "'");
  Writer w;
  w.bytes(kVideoMagic, sizeof kVideoMagic);
  w.u32(checked_u32(video.dim(2), "height"));
  w.u32(checked_u32(video.dim(3), "width"));
  w.u32(checked_u32(video.dim(1), "frames"));
  w.hash(hash);
  for (double v : video.values())
    w.f32(v);
  w.save(path);
}

Video read_video(const std::string &path) {
  Reader r(read_bytes(path), path);
  require_magic(r, kVideoMagic, sizeof kVideoMagic);
  const std::size_t h = r.u32(), w = r.u32(), f = r.u32();
  Video out;
  out.hash = r.text(kHashLength);
  if (r.remaining() != 4 * h * w * f)
    throw IoError("'" + path + "' has " + std::to_string(r.remaining()) + " pixel bytes, header declares " +
                  std::to_string(4 * h * w * f));
  out.data = Tensor({1, f, h, w});
  for (double &v : out.data.values())
    v = r.f32();
  if (!all_finite(out.data))
    throw IoError("'" + path + "' contains non-finite pixels");
  return out;
}

Tensor read_video(const std::string &path, const std::string &expected_hash) {
  Video v = read_video(path);
  if (v.hash != expected_hash)
    throw ConfigError("'" + path + "' was produced under config " + v.hash + ", current config is " + expected_hash);
  return std::move(v.data);
}

Checkpoint make_checkpoint(const pipeline::NetworkParams &p, const train::AdamState &adam, std::uint32_t epoch,
                           const std::string &hash) {
  Checkpoint c;
  c.hash = hash;
  c.epoch = epoch;
  c.step = adam.step;
  for (const auto &[name, t] : named(p)) {
    c.names.push_back(name);
    c.params.push_back(*t);
  }
  for (const auto &[name, t] : named(adam.m))
    c.m.push_back(*t);
  for (const auto &[name, t] : named(adam.v))
    c.v.push_back(*t);
  if (c.m.size() != c.params.size() || c.v.size() != c.params.size())
    throw ContractError("optimizer moments do not match the parameters");
  return c;
}

void restore(const Checkpoint &c, pipeline::NetworkParams &p, train::AdamState *adam) {
  const auto names = named(p);
  if (names.size() != c.names.size())
    throw ConfigError("checkpoint holds " + std::to_string(c.names.size()) + " tensors, the network has " +
                      std::to_string(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k].first != c.names[k] || !names[k].second->same_shape(c.params[k]))
      throw ConfigError("checkpoint tensor '" + c.names[k] + "' " + shape_string(c.params[k].shape()) +
                        " does not match network tensor '" + names[k].first + "' " +
                        shape_string(names[k].second->shape()));
  const auto P = mutable_tensors(p);
  for (std::size_t k = 0; k < P.size(); ++k)
    *P[k] = c.params[k];
  if (adam) {
    adam->m = p;
    adam->v = p;
    const auto M = mutable_tensors(adam->m), V = mutable_tensors(adam->v);
    for (std::size_t k = 0; k < P.size(); ++k) {
      *M[k] = c.m[k];
      *V[k] = c.v[k];
    }
    adam->step = c.step;
  }
}

void write_checkpoint(const std::string &path, const Checkpoint &c) {
  if (c.names.size() != c.params.size() || c.m.size() != c.params.size() || c.v.size() != c.params.size())
    throw ContractError("inconsistent checkpoint");
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.hash(c.hash);
  w.u32(c.epoch);
  w.u64(c.step);
  w.u32(checked_u32(c.params.size(), "tensor count"));
  for (std::size_t k = 0; k < c.params.size(); ++k) {
    const Tensor &t = c.params[k];
    if (!t.same_shape(c.m[k]) || !t.same_shape(c.v[k]))
      throw ContractError("moment shapes differ for '" + c.names[k] + "'");
    w.u32(checked_u32(c.names[k].size(), "name length"));
    w.bytes(c.names[k].data(), c.names[k].size());
    w.u32(checked_u32(t.rank(), "rank"));
    for (std::size_t d : t.shape())
      w.u32(checked_u32(d, "dimension"));
    for (const Tensor *src : {&t, &c.m[k], &c.v[k]}) {
      if (!all_finite(*src))
        throw IoError("refusing to write non-finite values for '" + c.names[k] + "'");
      for (double v : src->values())
        w.f32(v);
    }
  }
  w.save(path);
}

Checkpoint read_checkpoint(const std::string &path) {
  Reader r(read_bytes(path), path);
  require_magic(r, kCheckpointMagic, sizeof kCheckpointMagic);
  Checkpoint c;
  c.hash = r.text(kHashLength);
  c.epoch = r.u32();
  c.step = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = r.u32();
    if (len > kMaxName)
      throw IoError("'" + path + "': implausible tensor name length");
    c.names.push_back(r.text(len));
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank)
      throw IoError("'" + path + "': implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    for (auto &d : shape)
      d = r.u32();
    if (rank > 0 && 12 * element_count(shape) > r.remaining())
      throw IoError("'" + path + "' is truncated");
    for (auto *dst : {&c.params, &c.m, &c.v}) {
      Tensor t(rank ? shape : std::vector<std::size_t>{});
      for (double &v : t.values())
        v = r.f32();
      dst->push_back(std::move(t));
    }
  }
  if (r.remaining() != 0)
    throw IoError("'" + path + "' has trailing bytes");
  return c;
}

Checkpoint read_checkpoint(const std::string &path, const std::string &expected_hash) {
  Checkpoint c = read_checkpoint(path);
  if (c.hash != expected_hash)
    throw ConfigError("checkpoint '" + path + "' was produced under config " + c.hash + ", current config is " +
                      expected_hash);
  return c;
}

Layers split_float32(const Tensor &video, const Tensor &vessel) {
  require_same_shape(video, vessel, "split_float32");
  Layers out{Tensor::like(video), Tensor::like(video)};
  for (std::size_t i = 0; i < video.size(); ++i) {
    const double a = video[i];
    if (static_cast<double>(static_cast<float>(a)) != a)
      throw ContractError("split_float32: video value is not float32-representable");
    // Vessel and background must both be float32 values on the spacing q of
    // the video value. One of them must stay below 2^24 q, so try the target
    // clamped into either window, then coarser spacings.
    int e = 0;
    std::frexp(a == 0.0 ? 0x1p-126 : a, &e);
    const double q = std::ldexp(1.0, std::max(e - 24, -149));
    const double reach = std::ldexp(1.0, 24) * q - q;
    auto exact = [&](double v) {
      const double b = a - v;
      return static_cast<double>(static_cast<float>(v)) == v && static_cast<double>(static_cast<float>(b)) == b;
    };
    auto on_grid = [&](double v, double step) { return std::nearbyint(v / step) * step; };
    double best = 0.0;
    bool found = false;
    // A layer above 2^24 q needs a coarser spacing, so neighbours on the
    // grid fix the parity.
    auto consider = [&](double c) {
      for (int k = -3; k <= 3; ++k) {
        const double v = c + k * q;
        if (exact(v) && (!found || std::abs(v - vessel[i]) < std::abs(best - vessel[i]))) {
          best = v;
          found = true;
        }
      }
    };
    consider(on_grid(std::clamp(vessel[i], a - reach, a + reach), q));
    consider(on_grid(std::clamp(vessel[i], -reach, reach), q));
    double step = q;
    for (int tries = 0; tries <= 300 && !exact(on_grid(vessel[i], step)); ++tries)
      step *= 2.0;
    consider(on_grid(vessel[i], step));
    if (!found)
      throw ContractError("split_float32: no exact float32 split");
    out.vessel[i] = best;
    out.background[i] = a - best;
  }
  return out;
}

} // namespace msrpb::io
