// SPDX-License-Identifier: Apache-2.0
#include "sapd/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace sapd {
namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("tensor: truncated record");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write(kTensorMagic, sizeof(kTensorMagic));
  out.put(static_cast<char>(kTensorVersion));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_le<std::uint64_t>(out, d);
  for (float v : tensor.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw std::runtime_error("tensor: write failed");
}

Tensor read_tensor(std::istream& in) {
  char magic[sizeof(kTensorMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("tensor: bad magic");
  }
  const int version = in.get();
  if (version != kTensorVersion) {
    throw std::runtime_error("tensor: unsupported version " + std::to_string(version));
  }
  const auto rank = get_le<std::uint32_t>(in);
  if (rank > 16) throw std::runtime_error("tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(in));
  std::vector<float> values(shape_numel(shape));
  for (float& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace sapd
