#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "argmine/error.hpp"
#include "argmine/nn/tensor.hpp"

namespace argmine::safetensors {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "safetensors payloads are little-endian");

struct TensorInfo {
  std::string dtype;
  std::vector<std::int64_t> shape;
  std::uint64_t begin = 0, end = 0;

  std::int64_t rows() const { return shape.empty() ? 1 : (shape.size() == 1 ? 1 : shape[0]); }
  std::int64_t cols() const {
    if (shape.empty()) return 1;
    if (shape.size() == 1) return shape[0];
    std::int64_t c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }
};

namespace detail {

inline float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = std::uint32_t(h & 0x8000) << 16;
  std::uint32_t exp = (h >> 10) & 0x1F;
  std::uint32_t mant = h & 0x3FF;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      exp = 127 - 15 + 1;
      while ((mant & 0x400) == 0) {
        mant <<= 1;
        --exp;
      }
      bits = sign | (exp << 23) | ((mant & 0x3FF) << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

inline float bf16_to_float(std::uint16_t b) { return std::bit_cast<float>(std::uint32_t(b) << 16); }

inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "F32") return 4;
  if (dtype == "F64") return 8;
  if (dtype == "F16" || dtype == "BF16") return 2;
  throw LoadError("unsupported safetensors dtype " + dtype);
}

}  // namespace detail

/// Random-access reader; tensors are read on demand.
class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw LoadError("cannot open checkpoint " + path.string());
    std::uint64_t header_len = 0;
    in_.read(reinterpret_cast<char*>(&header_len), 8);
    const auto file_size = fs::file_size(path);
    if (!in_ || header_len == 0 || header_len + 8 > file_size) throw LoadError("corrupt safetensors header in " + path.string());
    std::string header(header_len, '\0');
    in_.read(header.data(), std::streamsize(header_len));
    data_start_ = 8 + header_len;
    try {
      const auto j = nlohmann::json::parse(header);
      for (const auto& [name, v] : j.items()) {
        if (name == "__metadata__") {
          for (const auto& [k, m] : v.items())
            if (m.is_string()) metadata_[k] = m.get<std::string>();
          continue;
        }
        TensorInfo info;
        info.dtype = v.at("dtype").get<std::string>();
        info.shape = v.at("shape").get<std::vector<std::int64_t>>();
        info.begin = v.at("data_offsets").at(0).get<std::uint64_t>();
        info.end = v.at("data_offsets").at(1).get<std::uint64_t>();
        std::int64_t count = 1;
        for (auto s : info.shape) count *= s;
        if (info.end < info.begin || data_start_ + info.end > file_size ||
            info.end - info.begin != std::uint64_t(count) * detail::dtype_size(info.dtype))
          throw LoadError("tensor " + name + " has inconsistent offsets");
        tensors_.emplace(name, std::move(info));
      }
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("corrupt safetensors header in " + path.string() + ": " + e.what());
    }
  }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  const std::map<std::string, TensorInfo>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  const TensorInfo& info(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw LoadError("tensor " + name + " missing from " + path_.string());
    return it->second;
  }

  /// Reads a tensor as a (rows x cols) matrix; 1-D tensors become a single row.
  template <class T>
  nn::Matrix<T> read(const std::string& name) {
    const auto& ti = info(name);
    nn::Matrix<T> out(ti.rows(), ti.cols());
    const std::size_t count = std::size_t(out.size());
    std::vector<char> raw(ti.end - ti.begin);
    in_.clear();
    in_.seekg(std::streamoff(data_start_ + ti.begin));
    in_.read(raw.data(), std::streamsize(raw.size()));
    if (!in_) throw LoadError("short read for tensor " + name);
    for (std::size_t i = 0; i < count; ++i) {
      double v;
      if (ti.dtype == "F32") {
        float f;
        std::memcpy(&f, raw.data() + 4 * i, 4);
        v = f;
      } else if (ti.dtype == "F64") {
        std::memcpy(&v, raw.data() + 8 * i, 8);
      } else {
        std::uint16_t h;
        std::memcpy(&h, raw.data() + 2 * i, 2);
        v = ti.dtype == "F16" ? detail::half_to_float(h) : detail::bf16_to_float(h);
      }
      out.data()[i] = T(v);
    }
    return out;
  }

  /// Reads into an existing matrix, checking the element count.
  template <class T>
  void read_into(const std::string& name, nn::Matrix<T>& dst) {
    auto m = read<T>(name);
    if (m.size() != dst.size())
      throw LoadError("tensor " + name + " has " + std::to_string(m.size()) + " elements, expected " +
                      std::to_string(dst.size()));
    m.resize(dst.rows(), dst.cols());
    dst = m;
  }

 private:
  fs::path path_;
  std::ifstream in_;
  std::uint64_t data_start_ = 0;
  std::map<std::string, TensorInfo> tensors_;
  std::map<std::string, std::string> metadata_;
};

/// Writes parameters as F32 tensors. Single-row parameters are stored 1-D.
template <class T>
void write(const fs::path& path, const nn::ParamList<T>& params, const std::map<std::string, std::string>& metadata = {}) {
  std::map<std::string, const nn::Param<T>*> by_name;
  for (const auto* p : params) by_name[p->name] = p;
  nlohmann::ordered_json header;
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, p] : by_name) {
    const std::uint64_t bytes = std::uint64_t(p->value.size()) * 4;
    std::vector<std::int64_t> shape;
    if (p->value.rows() == 1)
      shape = {p->value.cols()};
    else
      shape = {p->value.rows(), p->value.cols()};
    header[name] = {{"dtype", "F32"}, {"shape", shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string h = header.dump();
  while (h.size() % 8 != 0) h.push_back(' ');
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint64_t len = h.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(h.data(), std::streamsize(h.size()));
  std::vector<float> buf;
  for (const auto& [name, p] : by_name) {
    buf.resize(std::size_t(p->value.size()));
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(p->value.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

/// Loads every parameter by name, optionally under a name prefix.
template <class T>
void load_params(Reader& reader, const nn::ParamList<T>& params, const std::string& prefix = "") {
  for (auto* p : params) reader.read_into(prefix + p->name, p->value);
}

}  // namespace argmine::safetensors
