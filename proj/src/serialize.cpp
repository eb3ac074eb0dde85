#include "neuroclip/serialize.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "neuroclip/errors.hpp"

namespace neuroclip {

namespace {

// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxRank = 16;

template <std::size_t N>
void put_le(std::ostream& os, std::uint64_t v) {
  std::array<char, N> bytes{};
  for (std::size_t i = 0; i < N; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes.data(), N);
}

template <std::size_t N>
std::uint64_t get_le(std::istream& is, std::uint64_t& offset, const char* what) {
  std::array<unsigned char, N> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), N);
  if (is.gcount() != static_cast<std::streamsize>(N)) {
    throw FormatError(std::string("truncated tensor record while reading ") + what, offset);
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < N; ++i) v |= std::uint64_t(bytes[i]) << (8 * i);
  offset += N;
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  put_le<4>(os, t.rank());
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("dimension exceeds u32 range");
    put_le<4>(os, d);
  }
  for (double v : t.data()) put_le<8>(os, std::bit_cast<std::uint64_t>(v));
}

Tensor read_tensor(std::istream& is, std::uint64_t& offset) {
  const std::uint64_t start = offset;
  const auto rank = static_cast<std::uint32_t>(get_le<4>(is, offset, "rank"));
  if (rank > kMaxRank) throw FormatError("implausible tensor rank " + std::to_string(rank), start);
  Shape shape(rank);
  for (auto& d : shape) d = get_le<4>(is, offset, "dimension");
  const auto here = is.tellg();
  if (here != std::streampos(-1)) {
    is.seekg(0, std::ios::end);
    const auto remaining = static_cast<std::uint64_t>(is.tellg() - here);
    is.seekg(here);
    if (remaining < numel(shape) * sizeof(double)) {
      throw FormatError("truncated tensor payload: shape " + to_string(shape) + " needs " +
                            std::to_string(numel(shape) * sizeof(double)) + " bytes, " + std::to_string(remaining) +
                            " available",
                        offset);
    }
  }
  std::vector<double> values(numel(shape));
  for (double& v : values) v = std::bit_cast<double>(get_le<8>(is, offset, "payload"));
  return Tensor(std::move(shape), std::move(values));
}

void save_tensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const Tensor& t : tensors) write_tensor(os, t);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Tensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<Tensor> out;
  std::uint64_t offset = 0;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(is, offset));
  return out;
}

}  // namespace neuroclip
