#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "neuroclip/tensor.hpp"

namespace neuroclip {

// Binary tensor encoding, little-endian:
//   u32 rank, u32 dim[rank], f64 payload[product(dims)]
void write_tensor(std::ostream& os, const Tensor& t);

// Decodes one tensor. `offset` is the stream position of the record and is
// advanced past it; failures raise FormatError carrying the failing offset.
Tensor read_tensor(std::istream& is, std::uint64_t& offset);

// A tensor file is a plain concatenation of records.
void save_tensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> load_tensors(const std::filesystem::path& path);

}  // namespace neuroclip
