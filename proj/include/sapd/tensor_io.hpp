// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

#include "sapd/tensor.hpp"

namespace sapd {

// Record layout: "SAPDTNSR", version byte, rank (u32 LE), rank x u64 LE dims,
// then the float32 LE payload.
inline constexpr char kTensorMagic[8] = {'S', 'A', 'P', 'D', 'T', 'N', 'S', 'R'};
inline constexpr unsigned char kTensorVersion = 1;

void write_tensor(std::ostream& out, const Tensor& tensor);
/// Throws std::runtime_error on a bad magic, version, or truncated stream.
Tensor read_tensor(std::istream& in);

}  // namespace sapd
