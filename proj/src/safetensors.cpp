#include "shield/safetensors.hpp"

#include "shield/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace shield {
namespace {

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = (h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3FFu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace

SafeTensors SafeTensors::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EncoderLoadError("cannot open " + path.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || header_len > (100u << 20)) throw EncoderLoadError("bad safetensors header in " + path.string());
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  const auto meta = nlohmann::json::parse(header, nullptr, false);
  if (!in || meta.is_discarded() || !meta.is_object()) {
    throw EncoderLoadError("unreadable safetensors header in " + path.string());
  }
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  SafeTensors out;
  for (const auto& [name, info] : meta.items()) {
    if (name == "__metadata__") continue;
    const auto dtype = info.at("dtype").get<std::string>();
    const auto shape = info.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
    std::int64_t count = 1;
    for (auto d : shape) count *= d;
    const std::size_t width = dtype == "F32" ? 4 : (dtype == "F16" || dtype == "BF16") ? 2 : 0;
    if (width == 0) throw EncoderLoadError("unsupported dtype " + dtype + " for " + name);
    if (offsets.size() != 2 || offsets[1] > data.size() ||
        offsets[1] - offsets[0] != static_cast<std::uint64_t>(count) * width) {
      throw EncoderLoadError("inconsistent offsets for tensor " + name);
    }
    const std::int64_t rows = shape.size() >= 2 ? shape[0] : 1;
    const std::int64_t cols = rows == 0 ? 0 : count / rows;
    RowMatrixF m(rows, cols);
    const char* src = data.data() + offsets[0];
    for (std::int64_t i = 0; i < count; ++i) {
      float v;
      if (width == 4) {
        std::memcpy(&v, src + i * 4, 4);
      } else {
        std::uint16_t h;
        std::memcpy(&h, src + i * 2, 2);
        v = dtype == "F16" ? half_to_float(h)
                           : std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
      }
      m.data()[i] = v;
    }
    out.tensors_.emplace(name, std::move(m));
    out.shapes_.emplace(name, shape);
  }
  return out;
}

const RowMatrixF& SafeTensors::at(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw EncoderLoadError("missing tensor " + name);
  return it->second;
}

const std::vector<std::int64_t>& SafeTensors::shape(const std::string& name) const {
  const auto it = shapes_.find(name);
  if (it == shapes_.end()) throw EncoderLoadError("missing tensor " + name);
  return it->second;
}

std::vector<std::string> SafeTensors::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : tensors_) out.push_back(k);
  return out;
}

}  // namespace shield
