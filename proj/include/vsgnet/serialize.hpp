#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vsgnet/config.hpp"
#include "vsgnet/params.hpp"
#include "vsgnet/tensor.hpp"

namespace vsg {

// Binary tensor file: magic "VSGT", u8 dtype tag (0=f32, 1=f64), u8 ndim,
// little-endian u32 dims, row-major little-endian payload.
enum class Dtype : std::uint8_t { kF32 = 0, kF64 = 1 };

template <typename Real>
constexpr Dtype dtype_of() {
  return sizeof(Real) == 4 ? Dtype::kF32 : Dtype::kF64;
}

namespace detail {

inline void put_u32le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF),
                     static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

inline std::uint32_t get_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32le(std::ostream& out, float v) {
  put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64le(std::ostream& out, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  put_u32le(out, static_cast<std::uint32_t>(u & 0xFFFFFFFFULL));
  put_u32le(out, static_cast<std::uint32_t>(u >> 32));
}

inline float get_f32le(std::istream& in) {
  return std::bit_cast<float>(get_u32le(in));
}

inline double get_f64le(std::istream& in) {
  const std::uint64_t lo = get_u32le(in);
  const std::uint64_t hi = get_u32le(in);
  return std::bit_cast<double>(lo | (hi << 32));
}

}  // namespace detail

template <typename Real>
void write_tensor(std::ostream& out, const Tensor<Real>& t,
                  Dtype dtype = dtype_of<Real>()) {
  out.write("VSGT", 4);
  const std::uint8_t tag = static_cast<std::uint8_t>(dtype);
  out.write(reinterpret_cast<const char*>(&tag), 1);
  const std::uint8_t ndim = static_cast<std::uint8_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&ndim), 1);
  for (int i = 0; i < t.rank(); ++i)
    detail::put_u32le(out, static_cast<std::uint32_t>(t.dim(i)));
  for (const Real v : t.values()) {
    if (dtype == Dtype::kF32)
      detail::put_f32le(out, static_cast<float>(v));
    else
      detail::put_f64le(out, static_cast<double>(v));
  }
  if (!out) throw DataError("tensor write failed");
}

template <typename Real>
Tensor<Real> read_tensor(std::istream& in, const std::string& what = "tensor") {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "VSGT", 4) != 0)
    throw DataError(what + ": bad magic (not a VSGT tensor)");
  std::uint8_t tag = 0, ndim = 0;
  in.read(reinterpret_cast<char*>(&tag), 1);
  in.read(reinterpret_cast<char*>(&ndim), 1);
  if (!in || tag > 1) throw DataError(what + ": unknown dtype tag");
  Shape shape(ndim);
  for (int i = 0; i < ndim; ++i) {
    const std::uint32_t d = detail::get_u32le(in);
    if (!in || d == 0) throw DataError(what + ": bad dimension");
    shape[static_cast<std::size_t>(i)] = static_cast<int>(d);
  }
  const std::size_t n = shape_numel(shape);
  std::vector<Real> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = tag == 0 ? static_cast<Real>(detail::get_f32le(in))
                       : static_cast<Real>(detail::get_f64le(in));
  }
  if (!in) throw DataError(what + ": truncated payload");
  return Tensor<Real>::from_data(std::move(shape), std::move(data));
}

template <typename Real>
void write_tensor_file(const std::string& path, const Tensor<Real>& t,
                       Dtype dtype = dtype_of<Real>()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_tensor(out, t, dtype);
}

template <typename Real>
Tensor<Real> read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file: " + path);
  return read_tensor<Real>(in, path);
}

// Checkpoint container: an ASCII magic line, one JSON metadata line (epoch,
// seed, config hash, full config, tensor directory), then the parameter
// tensors back to back in registry order.
struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  EngineConfig config;
};

inline constexpr const char* kCheckpointMagic = "VSGNETCKPT 1";

template <typename Real>
void save_checkpoint(const std::string& path, ModelParams<Real>& params,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  auto named = named_params(params);
  Json dir = Json::array();
  for (auto& [name, t] : named)
    dir.push_back(Json{{"name", name}, {"shape", t.shape()}});
  Json j{{"epoch", meta.epoch},
         {"seed", meta.seed},
         {"config_hash", meta.config_hash},
         {"config", to_json(meta.config)},
         {"tensors", dir}};
  out << kCheckpointMagic << "\n" << j.dump() << "\n";
  for (auto& [name, t] : named) write_tensor(out, t);
  if (!out) throw DataError("checkpoint write failed: " + path);
}

template <typename Real>
std::pair<ModelParams<Real>, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string magic, metaline;
  std::getline(in, magic);
  if (magic != kCheckpointMagic)
    throw DataError(path + ": not a checkpoint file");
  std::getline(in, metaline);
  Json j;
  try {
    j = Json::parse(metaline);
  } catch (const Json::exception& e) {
    throw DataError(path + ": bad checkpoint metadata: " + e.what());
  }
  CheckpointMeta meta;
  meta.epoch = j.at("epoch").get<int>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.config_hash = j.at("config_hash").get<std::uint64_t>();
  merge_json(meta.config, j.at("config"));
  validate(meta.config);

  ModelParams<Real> params = make_params<Real>(meta.config.model);
  auto named = named_params(params);
  const auto& dir = j.at("tensors");
  if (dir.size() != named.size())
    throw DataError(path + ": checkpoint has " + std::to_string(dir.size()) +
                    " tensors, model expects " + std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const std::string name = dir[i].at("name").get<std::string>();
    if (name != named[i].first)
      throw DataError(path + ": tensor " + std::to_string(i) + " is '" + name +
                      "', expected '" + named[i].first + "'");
    Tensor<Real> t = read_tensor<Real>(in, path + ":" + name);
    if (t.shape() != named[i].second.shape())
      throw DataError(path + ": shape mismatch for " + name);
    named[i].second.values() = t.values();
    named[i].second.set_requires_grad(true);
  }
  return {std::move(params), std::move(meta)};
}

}  // namespace vsg
