#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace intervene::base64 {

std::string encode(std::span<const std::uint8_t> data);
/// Throws ParseError on characters outside the standard alphabet.
std::vector<std::uint8_t> decode(std::string_view text);

}  // namespace intervene::base64
