#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "srlc/gradcore/param_store.hpp"

namespace srlc::grad {

// Binary checkpoint layout (all integers little-endian):
//   "SRLC" 0x01
//   repeated until EOF:
//     u32 name_length, name bytes (UTF-8), u8 rank, u32 dims[rank],
//     f64 values (row-major, IEEE-754 little-endian)
inline constexpr std::string_view kCheckpointMagic = "SRLC";
inline constexpr unsigned char kCheckpointVersion = 0x01;

std::string encode_params(const ParamStore& params);
ParamStore decode_params(std::string_view bytes);

void save_params(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);

}  // namespace srlc::grad
