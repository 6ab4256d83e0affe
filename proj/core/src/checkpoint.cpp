#include "mstx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mstx/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes a little-endian host");

namespace mstx {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'X'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("checkpoint: cannot write " + path.string());
  }
  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void tensor(const std::string& name, const Shape& shape, std::span<const float> data) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) u64(d);
    bytes(data.data(), data.size() * sizeof(float));
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("checkpoint: cannot open " + path.string());
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw DataError("checkpoint: truncated file");
    }
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  // Reads one tensor record into `dst`; name and shape must match.
  void tensor_into(const std::string& expect_name, const Shape& expect_shape,
                   std::span<float> dst) {
    const std::string name = str(u32());
    if (name != expect_name) {
      throw DataError("checkpoint: expected tensor '" + expect_name + "', found '" + name + "'");
    }
    Shape shape(u32());
    for (auto& d : shape) d = u64();
    if (shape != expect_shape) {
      throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                      ", model expects " + shape_str(expect_shape));
    }
    bytes(dst.data(), dst.size() * sizeof(float));
  }

 private:
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor<float>> params, const AdamState& adam,
                     const std::string& rng_state, std::int64_t step) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);

  w.u64(params.size());
  for (const auto& [name, t] : params) w.tensor(name, t.shape(), t.value());

  const auto m = adam.first_moments();
  const auto v = adam.second_moments();
  w.u64(2 * params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.tensor("adam.m:" + params[i].first, params[i].second.shape(), m[i]);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.tensor("adam.v:" + params[i].first, params[i].second.shape(), v[i]);
  }

  w.u64(rng_state.size());
  w.bytes(rng_state.data(), rng_state.size());
  w.u64(static_cast<std::uint64_t>(step));
}

LoadedCheckpointMeta load_checkpoint(const std::filesystem::path& path,
                                     std::span<NamedTensor<float>> params, AdamState& adam) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("checkpoint: bad magic bytes, not an MSTX version-" +
                    std::to_string(kCheckpointVersion) + " file");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  }

  const std::uint64_t count = r.u64();
  if (count != params.size()) {
    throw DataError("checkpoint: holds " + std::to_string(count) + " tensors, model has " +
                    std::to_string(params.size()));
  }
  for (auto& [name, t] : params) r.tensor_into(name, t.shape(), t.mutable_value());

  const std::uint64_t opt_count = r.u64();
  if (opt_count != 2 * params.size()) {
    throw DataError("checkpoint: optimizer section holds " + std::to_string(opt_count) +
                    " tensors, expected " + std::to_string(2 * params.size()));
  }
  auto m = adam.first_moments();
  auto v = adam.second_moments();
  if (m.size() != params.size()) {
    throw DataError("checkpoint: optimizer state not sized for this model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    r.tensor_into("adam.m:" + params[i].first, params[i].second.shape(), m[i]);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    r.tensor_into("adam.v:" + params[i].first, params[i].second.shape(), v[i]);
  }

  LoadedCheckpointMeta meta;
  meta.rng_state = r.str(r.u64());
  meta.step = static_cast<std::int64_t>(r.u64());
  adam.set_step(meta.step);
  return meta;
}

}  // namespace mstx
