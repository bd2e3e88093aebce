#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace textlrp {

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

// Fixed-point text with `digits` decimals.
std::string format_fixed(double value, int digits);

// Strict parse of a whole field; throws Error naming `what` on failure.
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

// 64-bit FNV-1a, used for manifest hashes.
std::uint64_t fnv1a64(std::string_view bytes);

std::string html_escape(std::string_view text);

}  // namespace textlrp
