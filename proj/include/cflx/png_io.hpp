#pragma once

#include <string>

#include "cflx/image.hpp"

namespace cflx {

// 8-bit gray or RGB PNG. Alpha channels and palette images are rejected.
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);
std::vector<std::uint8_t> encode_png(const Image8& img);

}  // namespace cflx
