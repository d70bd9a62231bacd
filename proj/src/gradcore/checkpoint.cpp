#include "srlc/gradcore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "srlc/common/error.hpp"

namespace srlc::grad {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ConfigError("checkpoint: truncated data");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_params(const ParamStore& params) {
  std::string out(kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  for (const auto& e : params) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    const Array& a = e.value;
    out.push_back(static_cast<char>(a.rank()));
    if (a.rank() >= 1) put_u32(out, static_cast<std::uint32_t>(a.rows()));
    if (a.rank() == 2) put_u32(out, static_cast<std::uint32_t>(a.cols()));
    for (double v : a.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamStore decode_params(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw ConfigError("checkpoint: bad magic");
  }
  if (in.uint(1) != kCheckpointVersion) throw ConfigError("checkpoint: unsupported version");
  ParamStore params;
  while (!in.done()) {
    const auto name_len = static_cast<std::size_t>(in.uint(4));
    std::string name(in.take(name_len));
    const int rank = static_cast<int>(in.uint(1));
    if (rank > 2) throw ConfigError("checkpoint: entry '" + name + "' has rank > 2");
    int rows = 1, cols = 1;
    if (rank >= 1) rows = static_cast<int>(in.uint(4));
    if (rank == 2) cols = static_cast<int>(in.uint(4));
    std::vector<double> data(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (double& v : data) v = std::bit_cast<double>(in.uint(8));
    params.add(std::move(name), Array::with_rank(rank, rows, cols, std::move(data)));
  }
  return params;
}

void save_params(const ParamStore& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_params(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_params(bytes);
}

}  // namespace srlc::grad
